use std::io::{IsTerminal, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use chainsmell::aggregate::{aggregate, render_distribution};
use chainsmell::clock::{Clock, FixedClock, SystemClock, Timestamp};
use chainsmell::gate::{self, evaluate, load_config, GateDecision, EXIT_ERROR, EXIT_FAIL};
use chainsmell::http::Mode;
use chainsmell::pipeline::{make_fetcher, run_analysis, ProjectInput};
use chainsmell::pond::{read_pond, to_canonical_string, write_pond, DirtyPond};
use chainsmell::report::{render_ci_comment, render_report, CommentLimits, ReportOptions};
use chainsmell::{Ecosystem, Severity};

#[derive(Parser)]
#[command(
    name = "chainsmell",
    version,
    about = "Detects software supply chain smells in NPM and Maven dependencies"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    /// Markdown report on stdout (unless --report is given).
    Markdown,
    /// Only the pond, on stdout.
    PondOnly,
}

#[derive(Subcommand)]
enum Command {
    /// Analyze a project and gate on the result.
    Analyze {
        #[arg(long)]
        ecosystem: Ecosystem,
        /// Lockfile, package.json, pom.xml, dependency:tree output, or project directory.
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        mode: Option<Mode>,
        /// Fixture directory for offline and record modes.
        #[arg(long)]
        fixtures: Option<PathBuf>,
        /// Where to write the pond [default: chainsmell-pond.json].
        #[arg(long)]
        pond: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
        /// Where to write the size-bounded report for a PR comment.
        #[arg(long)]
        ci_comment: Option<PathBuf>,
        #[arg(long, default_value_t = 65_000)]
        comment_budget: usize,
        #[arg(long)]
        fail_on: Option<Severity>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long, value_enum, default_value_t = Format::Markdown)]
        format: Format,
        /// Fixed analysis time (RFC 3339), for reproducible runs.
        #[arg(long)]
        analyzed_at: Option<String>,
    },
    /// Render the report of an existing pond.
    Report {
        pond: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        ci_comment: Option<PathBuf>,
        #[arg(long, default_value_t = 65_000)]
        comment_budget: usize,
    },
    /// Smell prevalence over the unique packages of several ponds.
    Aggregate {
        #[arg(required = true)]
        ponds: Vec<PathBuf>,
        /// Directory for distribution.txt and distribution.json.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

struct Failure(String);

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure(e.to_string())
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Analyze {
            ecosystem,
            manifest,
            mode,
            fixtures,
            pond,
            report,
            ci_comment,
            comment_budget,
            fail_on,
            config,
            workers,
            format,
            analyzed_at,
        } => (|| {
            let clock: Box<dyn Clock> = match analyzed_at {
                Some(text) => Box::new(FixedClock(Timestamp::parse(&text)?)),
                None => Box::new(SystemClock),
            };
            let today = clock.now().date();
            let mut cfg = load_config(config.as_deref(), |k| std::env::var(k).ok(), today)?;
            if let Some(m) = mode {
                cfg.mode = m;
            }
            if let Some(f) = fixtures {
                cfg.fixtures = Some(f);
            }
            if let Some(s) = fail_on {
                cfg.fail_on = s;
            }
            if let Some(w) = workers {
                cfg.workers = w;
            }
            gate::validate(&cfg, today)?;

            let fetcher = make_fetcher(&cfg)?;
            let input = ProjectInput { ecosystem, manifest };
            let result = run_analysis(&input, &cfg, &fetcher, clock.as_ref())?;

            let pond_path = pond.unwrap_or_else(|| PathBuf::from("chainsmell-pond.json"));
            write_pond(&result, &pond_path)?;
            log::info!("pond written to {}", pond_path.display());
            let location = pond_path.display().to_string();
            let text = render_report(
                &result,
                &ReportOptions {
                    pond_location: Some(location.clone()),
                },
            );
            match (format, &report) {
                (_, Some(path)) => write_file(path, &text)?,
                (Format::Markdown, None) => print(&text)?,
                (Format::PondOnly, None) => {}
            }
            if let Format::PondOnly = format {
                print(&to_canonical_string(&result))?;
            }
            if let Some(path) = ci_comment {
                let limits = CommentLimits {
                    max_chars: comment_budget,
                    pond_location: Some(location),
                };
                write_file(&path, &render_ci_comment(&result, &limits))?;
            }
            let decision = evaluate(&result, &cfg);
            print_decision(&result, &decision);
            Ok(decision.exit_code)
        })(),
        Command::Report {
            pond,
            output,
            ci_comment,
            comment_budget,
        } => (|| {
            let loaded = read_pond(&pond)?;
            let location = Some(pond.display().to_string());
            let text = render_report(
                &loaded,
                &ReportOptions {
                    pond_location: location.clone(),
                },
            );
            match output {
                Some(path) => write_file(&path, &text)?,
                None => print(&text)?,
            }
            if let Some(path) = ci_comment {
                let limits = CommentLimits {
                    max_chars: comment_budget,
                    pond_location: location,
                };
                write_file(&path, &render_ci_comment(&loaded, &limits))?;
            }
            Ok(0)
        })(),
        Command::Aggregate { ponds, out } => (|| {
            let loaded = ponds
                .iter()
                .map(|p| read_pond(p).map_err(|e| Failure(e.to_string())))
                .collect::<Result<Vec<DirtyPond>, Failure>>()?;
            let result = aggregate(&loaded)?;
            let (text, data) = render_distribution(&result.reports);
            print(&text)?;
            for c in &result.conflicts {
                eprintln!(
                    "conflict: {} kept verdict of {} ({}), {} older verdict(s) discarded",
                    c.coordinate,
                    c.kept.project,
                    c.kept.analyzed_at,
                    c.discarded.len()
                );
            }
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir)?;
                write_file(&dir.join("distribution.txt"), &text)?;
                write_file(&dir.join("distribution.json"), &data)?;
                let mut conflicts = serde_json::to_string_pretty(&result.conflicts)?;
                conflicts.push('\n');
                write_file(&dir.join("conflicts.json"), &conflicts)?;
            }
            Ok(0)
        })(),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(Failure(message)) => {
            eprintln!("{}: {message}", paint("error", "31"));
            ExitCode::from(EXIT_ERROR as u8)
        }
    }
}

fn print(text: &str) -> std::io::Result<()> {
    let mut out = std::io::stdout().lock();
    out.write_all(text.as_bytes())?;
    out.flush()
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure(format!("{}: {e}", path.display())))
}

fn paint(text: &str, code: &str) -> String {
    let color = std::env::var_os("NO_COLOR").is_none_or(|v| v.is_empty()) && std::io::stderr().is_terminal();
    if color {
        format!("\x1b[{code}m{text}\x1b[0m")
    } else {
        text.to_string()
    }
}

fn print_decision(pond: &DirtyPond, decision: &GateDecision) {
    let verdict = match decision.exit_code {
        0 => paint("PASS", "32"),
        EXIT_FAIL => paint("FAIL", "31"),
        _ => paint("ERROR", "33"),
    };
    let total: usize = pond.summary.per_smell.values().sum();
    eprintln!(
        "gate: {verdict} ({total} finding(s) in {} packages, fail-on {})",
        pond.summary.total_packages,
        pond.config.fail_on.label()
    );
    for reason in &decision.reasons {
        eprintln!("  {reason}");
    }
    for (coord, smell, severity) in &decision.triggering {
        eprintln!("  - {coord}: {} ({})", smell.title(), severity.label());
    }
}
