//! Markdown report and the size-bounded variant posted as a CI comment.

use std::fmt::Write as _;

use crate::model::{call_to_action, context, is_supported, Ecosystem, PackageCoordinate, SmellId};
use crate::pond::DirtyPond;
use crate::smells::{Confidence, SmellFinding};

/// Affected-package lists longer than this collapse into a details block.
pub const COLLAPSE_AFTER: usize = 50;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReportOptions {
    /// Where the pond is published, mentioned so readers can find full data.
    pub pond_location: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommentLimits {
    pub max_chars: usize,
    pub pond_location: Option<String>,
}

impl Default for CommentLimits {
    fn default() -> Self {
        CommentLimits {
            max_chars: 65_000,
            pond_location: None,
        }
    }
}

/// Registry page of a package version.
pub fn registry_link(coord: &PackageCoordinate) -> String {
    match coord.ecosystem {
        Ecosystem::Npm => format!("https://www.npmjs.com/package/{}/v/{}", coord.name, coord.version),
        Ecosystem::Maven => {
            let (group, artifact) = coord.name.split_once(':').unwrap_or(("", &coord.name));
            format!(
                "https://central.sonatype.com/artifact/{group}/{artifact}/{}",
                coord.version
            )
        }
    }
}

fn repo_link<'a>(pond: &'a DirtyPond, coord: &PackageCoordinate) -> Option<&'a str> {
    pond.facts
        .binary_search_by(|f| f.coordinate.cmp(coord))
        .ok()
        .and_then(|i| pond.facts[i].registry.normalized_source_url.as_deref())
}

fn findings_for(pond: &DirtyPond, smell: SmellId) -> Vec<&SmellFinding> {
    pond.findings.iter().filter(|f| f.smell == smell).collect()
}

fn heading(pond: &DirtyPond) -> String {
    format!("# Software supply chain smells: `{}`\n\n", pond.project)
}

fn preamble(pond: &DirtyPond, options: &ReportOptions) -> String {
    let mut out = String::new();
    let eco = pond.project.ecosystem.display_name();
    let _ = writeln!(
        out,
        "This report lists the software supply chain smells found in the {} dependencies of \
         `{}`, analyzed on {} ({} mode). A smell is a property of a dependency or of its \
         metadata that points at a potential security or trust problem; it is not proof of \
         compromise. No smells does not mean a package is safe.\n",
        pond.summary.total_packages, pond.project, pond.analyzed_at, pond.mode
    );
    let _ = writeln!(
        out,
        "How to read it: the summary table gives one row per smell with its severity and the \
         number of affected packages. Each smell then has a section explaining why it matters, \
         listing the affected packages with links to the registry and source repository, and \
         the evidence observed. The Call to Action section tells you what to do about each \
         smell that was found. Checks that {eco} does not support are marked as not checked. \
         Findings marked *heuristic* need human judgment; findings marked *ignored* are \
         suppressed by the project's configuration and do not fail the build.\n"
    );
    if let Some(location) = &options.pond_location {
        let _ = writeln!(out, "Full data: `{location}`.\n");
    }
    out
}

fn summary_table(pond: &DirtyPond) -> String {
    let eco = pond.project.ecosystem;
    let mut out = String::from("## Summary\n\n| # | Smell | Severity | Packages | Status |\n|---|---|---|---|---|\n");
    let policy = pond.config.policy();
    for smell in SmellId::ALL {
        let (count, status) = if is_supported(smell, eco) {
            let count = pond.summary.per_smell.get(&smell).copied().unwrap_or(0);
            (count.to_string(), if count == 0 { "clean" } else { "found" })
        } else {
            ("-".to_string(), "not checked (unsupported)")
        };
        let _ = writeln!(
            out,
            "| {} | {} | {} | {count} | {status} |",
            smell.id(),
            smell.title(),
            policy.severity(smell).label()
        );
    }
    let total: usize = pond.summary.per_smell.values().sum();
    let _ = writeln!(
        out,
        "\n{total} smell(s) across {} of {} packages; {} ignored; {} indeterminate check(s).\n",
        pond.findings
            .iter()
            .map(|f| &f.coordinate)
            .collect::<std::collections::BTreeSet<_>>()
            .len(),
        pond.summary.total_packages,
        pond.summary.ignored,
        pond.summary.indeterminate
    );
    out
}

fn package_line(pond: &DirtyPond, f: &SmellFinding) -> String {
    let mut line = format!("- [`{}`]({})", f.coordinate, registry_link(&f.coordinate));
    if let Some(repo) = repo_link(pond, &f.coordinate) {
        let _ = write!(line, " ([repository]({repo}))");
    }
    let _ = write!(line, ": {}", f.evidence);
    if f.confidence == Confidence::Heuristic {
        line.push_str(" *(heuristic)*");
    }
    if let Some(why) = &f.ignored {
        let _ = write!(line, " *(ignored: {why})*");
    }
    line.push('\n');
    line
}

/// `limit` caps the listed packages; `None` lists all of them.
fn smell_section(pond: &DirtyPond, smell: SmellId, limit: Option<usize>, pointer: &str) -> String {
    let eco = pond.project.ecosystem;
    let severity = pond.config.policy().severity(smell);
    let mut out = format!("## {}. {} ({})\n\n", smell.id(), smell.title(), severity.label());
    if !is_supported(smell, eco) {
        let _ = writeln!(
            out,
            "Not checked (unsupported): the {} registry does not expose the data this check needs.\n",
            eco.display_name()
        );
        return out;
    }
    let _ = writeln!(out, "{}\n", context(smell));
    let findings = findings_for(pond, smell);
    if findings.is_empty() {
        out.push_str("No affected packages.\n\n");
        return out;
    }
    let _ = writeln!(out, "Affected packages ({}):\n", findings.len());
    let shown = limit.unwrap_or(findings.len()).min(findings.len());
    let lines: String = findings[..shown].iter().map(|f| package_line(pond, f)).collect();
    if limit.is_none() && findings.len() > COLLAPSE_AFTER {
        let _ = writeln!(
            out,
            "<details>\n<summary>Show all {} packages</summary>\n\n{lines}\n</details>\n",
            findings.len()
        );
    } else {
        out.push_str(&lines);
        if shown < findings.len() {
            let _ = writeln!(out, "- ... and {} more{pointer}", findings.len() - shown);
        }
        out.push('\n');
    }
    out
}

fn call_to_action_section(pond: &DirtyPond) -> String {
    let mut out = String::from("## Call to Action\n\n");
    let found: Vec<SmellId> = SmellId::ALL
        .into_iter()
        .filter(|s| pond.summary.per_smell.get(s).copied().unwrap_or(0) > 0)
        .collect();
    if found.is_empty() {
        out.push_str("No smells were found; no action is required.\n\n");
    }
    for smell in found {
        let _ = writeln!(out, "- **{}**: {}", smell.title(), call_to_action(smell));
    }
    if !out.ends_with("\n\n") {
        out.push('\n');
    }
    out
}

fn indeterminate_section(pond: &DirtyPond, limit: Option<usize>, pointer: &str) -> String {
    if pond.indeterminate.is_empty() {
        return String::new();
    }
    let mut out = format!(
        "## Indeterminate\n\nThese checks could not be completed, so the packages below are not known to be \
         free of the listed smells ({} check(s) on {} package(s)).\n\n| Package | Smell | Reason |\n|---|---|---|\n",
        pond.indeterminate.len(),
        pond.summary.indeterminate_packages
    );
    let shown = limit.unwrap_or(usize::MAX).min(pond.indeterminate.len());
    for m in &pond.indeterminate[..shown] {
        let _ = writeln!(
            out,
            "| `{}` | {} | {} |",
            m.coordinate,
            m.smell.title(),
            m.reason.replace('|', "\\|")
        );
    }
    if shown < pond.indeterminate.len() {
        let _ = writeln!(out, "\n... and {} more{pointer}", pond.indeterminate.len() - shown);
    }
    out.push('\n');
    out
}

fn notes_section(pond: &DirtyPond) -> String {
    if pond.notes.is_empty() {
        return String::new();
    }
    let mut out = String::from("## Notes\n\nObservations that are not smells but may deserve a look.\n\n");
    for n in &pond.notes {
        let _ = writeln!(out, "- `{}` ({}): {}", n.coordinate, n.smell.title(), n.message);
    }
    out.push('\n');
    out
}

pub fn render_report(pond: &DirtyPond, options: &ReportOptions) -> String {
    let mut out = heading(pond);
    out.push_str(&preamble(pond, options));
    out.push_str(&summary_table(pond));
    for smell in SmellId::ALL {
        out.push_str(&smell_section(pond, smell, None, ""));
    }
    out.push_str(&call_to_action_section(pond));
    out.push_str(&indeterminate_section(pond, None, ""));
    out.push_str(&notes_section(pond));
    let trimmed = out.trim_end().len();
    out.truncate(trimmed);
    out.push('\n');
    out
}

/// One line with the totals.
pub fn one_line_summary(pond: &DirtyPond) -> String {
    let total: usize = pond.summary.per_smell.values().sum();
    format!(
        "Supply chain smells for {}: {total} finding(s) in {} packages, {} indeterminate.",
        pond.project, pond.summary.total_packages, pond.summary.indeterminate
    )
}

/// The report if it fits `limits.max_chars`; otherwise the same structure
/// with package lists shortened, then without per-smell sections, and as a
/// last resort the one-line summary.
pub fn render_ci_comment(pond: &DirtyPond, limits: &CommentLimits) -> String {
    let fits = |s: &str| s.chars().count() <= limits.max_chars;
    let summary = one_line_summary(pond);
    if limits.max_chars == 0 {
        return summary;
    }
    let options = ReportOptions {
        pond_location: limits.pond_location.clone(),
    };
    let full = render_report(pond, &options);
    if fits(&full) {
        return full;
    }

    let pointer = match &limits.pond_location {
        Some(loc) => format!(" (full list in the pond artifact `{loc}`)"),
        None => " (full list in the pond artifact)".to_string(),
    };
    let compact = |limit: Option<usize>, sections: bool| {
        let mut out = heading(pond);
        let _ = writeln!(out, "{summary}\n");
        out.push_str(&summary_table(pond));
        if sections {
            for smell in SmellId::ALL {
                out.push_str(&smell_section(pond, smell, limit, &pointer));
            }
        }
        out.push_str(&call_to_action_section(pond));
        if sections {
            out.push_str(&indeterminate_section(pond, limit, &pointer));
        }
        let _ = writeln!(
            out,
            "Package lists were shortened to fit the comment size limit{pointer}."
        );
        out
    };
    for limit in [20, 10, 5, 1, 0] {
        let text = compact(Some(limit), true);
        if fits(&text) {
            return text;
        }
    }
    let text = compact(None, false);
    if fits(&text) {
        return text;
    }
    if fits(&summary) {
        return summary;
    }
    summary.chars().take(limits.max_chars).collect()
}
