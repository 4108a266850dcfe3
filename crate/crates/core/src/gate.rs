//! CI policy: layered configuration, ignore entries and the exit-code
//! decision.
//!
//! Exit codes: 0 pass, 1 gate failed (smells at or above the threshold),
//! 2 operational error (too many undecidable packages, unreadable input).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::http::Mode;
use crate::model::{PackageCoordinate, Severity, SmellId};
use crate::pond::DirtyPond;
use crate::registry::RegistryConfig;
use crate::repo::GitHubConfig;
use crate::smells::{SeverityPolicy, SmellFinding};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_ERROR: i32 = 2;

pub const ENV_FAIL_ON: &str = "CHAINSMELL_FAIL_ON";
pub const ENV_MODE: &str = "CHAINSMELL_MODE";
pub const ENV_FIXTURES: &str = "CHAINSMELL_FIXTURES";
pub const ENV_WORKERS: &str = "CHAINSMELL_WORKERS";
pub const ENV_GITHUB_TOKEN: &str = "GITHUB_TOKEN";
pub const ENV_NPM_TOKEN: &str = "NPM_TOKEN";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IgnoreEntry {
    /// Glob over `name` or `name@version`.
    pub package: String,
    pub smell: SmellId,
    pub expires: NaiveDate,
    pub justification: String,
}

impl IgnoreEntry {
    pub fn matches(&self, finding: &SmellFinding) -> bool {
        if finding.smell != self.smell {
            return false;
        }
        let Ok(pattern) = glob::Pattern::new(&self.package) else {
            return false;
        };
        pattern.matches(&finding.coordinate.name) || pattern.matches(&finding.coordinate.to_string())
    }
}

/// Effective configuration of one run. Tokens are never serialized.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateConfig {
    pub fail_on: Severity,
    /// Fails the gate when more than `n` findings are at or above the
    /// severity.
    pub max_findings: BTreeMap<Severity, usize>,
    pub severity_overrides: BTreeMap<SmellId, Severity>,
    pub ignore: Vec<IgnoreEntry>,
    pub mode: Mode,
    pub fixtures: Option<PathBuf>,
    /// More packages with undecidable smells than this share forces exit 2.
    pub max_indeterminate_percent: u32,
    pub workers: usize,
    pub extra_tag_patterns: Vec<String>,
    pub registry: RegistryConfig,
    pub github: GitHubConfig,
}

impl Default for GateConfig {
    fn default() -> Self {
        GateConfig {
            fail_on: Severity::High,
            max_findings: BTreeMap::new(),
            severity_overrides: BTreeMap::new(),
            ignore: Vec::new(),
            mode: Mode::Live,
            fixtures: None,
            max_indeterminate_percent: 10,
            workers: 8,
            extra_tag_patterns: Vec::new(),
            registry: RegistryConfig::default(),
            github: GitHubConfig::default(),
        }
    }
}

impl GateConfig {
    pub fn policy(&self) -> SeverityPolicy {
        SeverityPolicy {
            overrides: self.severity_overrides.clone(),
        }
    }

    /// The ignore entry suppressing `finding`, if any.
    pub fn ignore_for(&self, finding: &SmellFinding) -> Option<&IgnoreEntry> {
        self.ignore.iter().find(|e| e.matches(finding))
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid value for `{field}`: {message}")]
    Field { field: String, message: String },
    #[error("ignore entry for `{package}` ({smell}) expired on {expires}")]
    ExpiredIgnore {
        package: String,
        smell: SmellId,
        expires: NaiveDate,
    },
}

/// Config file layout; every key optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    fail_on: Option<Severity>,
    #[serde(default)]
    max_findings: BTreeMap<Severity, usize>,
    #[serde(default)]
    severity_overrides: BTreeMap<SmellId, Severity>,
    #[serde(default)]
    ignore: Vec<IgnoreEntry>,
    mode: Option<Mode>,
    fixtures: Option<PathBuf>,
    max_indeterminate_percent: Option<u32>,
    workers: Option<usize>,
    #[serde(default)]
    extra_tag_patterns: Vec<String>,
    registry: Option<RegistrySection>,
    github: Option<GitHubSection>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RegistrySection {
    npm_registry: Option<String>,
    maven_repository: Option<String>,
    keyservers: Option<Vec<String>>,
    keyring_dir: Option<PathBuf>,
    max_parent_depth: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct GitHubSection {
    api_base: Option<String>,
}

/// Resolves defaults, then `path`, then environment variables (read through
/// `env`). Command-line flags are applied by the caller afterwards.
pub fn load_config(
    path: Option<&Path>,
    env: impl Fn(&str) -> Option<String>,
    today: NaiveDate,
) -> Result<GateConfig, ConfigError> {
    let mut config = GateConfig::default();

    if let Some(path) = path {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let file: ConfigFile = toml::from_str(&text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        apply_file(&mut config, file, base);
    }

    if let Some(v) = env(ENV_FAIL_ON) {
        config.fail_on = v.parse().map_err(|message| ConfigError::Field {
            field: ENV_FAIL_ON.into(),
            message,
        })?;
    }
    if let Some(v) = env(ENV_MODE) {
        config.mode = v.parse().map_err(|message| ConfigError::Field {
            field: ENV_MODE.into(),
            message,
        })?;
    }
    if let Some(v) = env(ENV_FIXTURES) {
        config.fixtures = Some(PathBuf::from(v));
    }
    if let Some(v) = env(ENV_WORKERS) {
        config.workers = v.parse().map_err(|e| ConfigError::Field {
            field: ENV_WORKERS.into(),
            message: format!("{e}"),
        })?;
    }
    config.github.token = env(ENV_GITHUB_TOKEN).filter(|t| !t.is_empty());
    config.registry.npm_token = env(ENV_NPM_TOKEN).filter(|t| !t.is_empty());

    validate(&config, today)?;
    Ok(config)
}

fn apply_file(config: &mut GateConfig, file: ConfigFile, base: &Path) {
    let relative = |p: PathBuf| if p.is_relative() { base.join(p) } else { p };
    if let Some(v) = file.fail_on {
        config.fail_on = v;
    }
    config.max_findings.extend(file.max_findings);
    config.severity_overrides.extend(file.severity_overrides);
    config.ignore.extend(file.ignore);
    if let Some(v) = file.mode {
        config.mode = v;
    }
    if let Some(v) = file.fixtures {
        config.fixtures = Some(relative(v));
    }
    if let Some(v) = file.max_indeterminate_percent {
        config.max_indeterminate_percent = v;
    }
    if let Some(v) = file.workers {
        config.workers = v;
    }
    config.extra_tag_patterns.extend(file.extra_tag_patterns);
    if let Some(r) = file.registry {
        if let Some(v) = r.npm_registry {
            config.registry.npm_registry = v;
        }
        if let Some(v) = r.maven_repository {
            config.registry.maven_repository = v;
        }
        if let Some(v) = r.keyservers {
            config.registry.keyservers = v;
        }
        if let Some(v) = r.keyring_dir {
            config.registry.keyring_dir = Some(relative(v));
        }
        if let Some(v) = r.max_parent_depth {
            config.registry.max_parent_depth = v;
        }
    }
    if let Some(g) = file.github {
        if let Some(v) = g.api_base {
            config.github.api_base = v;
        }
    }
}

/// Field-level checks shared by file, environment and flag layers.
pub fn validate(config: &GateConfig, today: NaiveDate) -> Result<(), ConfigError> {
    let field = |field: &str, message: &str| ConfigError::Field {
        field: field.to_string(),
        message: message.to_string(),
    };
    if config.workers == 0 {
        return Err(field("workers", "must be at least 1"));
    }
    if config.max_indeterminate_percent > 100 {
        return Err(field("max_indeterminate_percent", "must be between 0 and 100"));
    }
    for (i, entry) in config.ignore.iter().enumerate() {
        if entry.justification.trim().is_empty() {
            return Err(field(&format!("ignore[{i}].justification"), "must not be empty"));
        }
        if let Err(e) = glob::Pattern::new(&entry.package) {
            return Err(field(&format!("ignore[{i}].package"), &e.to_string()));
        }
        if entry.expires < today {
            return Err(ConfigError::ExpiredIgnore {
                package: entry.package.clone(),
                smell: entry.smell,
                expires: entry.expires,
            });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GateDecision {
    pub exit_code: i32,
    pub reasons: Vec<String>,
    /// Findings that made the gate fail.
    pub triggering: Vec<(PackageCoordinate, SmellId, Severity)>,
}

/// Applies the policy to an analyzed pond. Ignored findings never count.
pub fn evaluate(pond: &DirtyPond, config: &GateConfig) -> GateDecision {
    let fail_on = config.fail_on;
    let max_indeterminate_percent = config.max_indeterminate_percent;
    let mut decision = GateDecision {
        exit_code: EXIT_PASS,
        reasons: Vec::new(),
        triggering: Vec::new(),
    };

    let total = pond.summary.total_packages;
    let undecided = pond.summary.indeterminate_packages;
    if total > 0 && undecided * 100 > max_indeterminate_percent as usize * total {
        decision.exit_code = EXIT_ERROR;
        decision.reasons.push(format!(
            "{undecided} of {total} packages could not be fully analyzed (budget {max_indeterminate_percent}%)"
        ));
        return decision;
    }

    let active: Vec<&SmellFinding> = pond.findings.iter().filter(|f| f.ignored.is_none()).collect();
    for f in &active {
        if f.severity >= fail_on {
            decision.triggering.push((f.coordinate.clone(), f.smell, f.severity));
        }
    }
    if !decision.triggering.is_empty() {
        decision.reasons.push(format!(
            "{} finding(s) at or above {}",
            decision.triggering.len(),
            fail_on.label()
        ));
    }
    for (&severity, &limit) in &config.max_findings {
        let count = active.iter().filter(|f| f.severity >= severity).count();
        if count > limit {
            decision.reasons.push(format!(
                "{count} finding(s) at or above {} exceed the limit of {limit}",
                severity.label()
            ));
        }
    }
    if !decision.reasons.is_empty() {
        decision.exit_code = EXIT_FAIL;
    }
    decision
}
