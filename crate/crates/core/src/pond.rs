//! The pond file: the complete, self-contained result of one analysis.
//!
//! Serialization is canonical (fixed field order, collections sorted by
//! coordinate then smell id, two-space indentation, trailing newline), so a
//! pond that is read and written again is byte-identical.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::clock::Timestamp;
use crate::gate::GateConfig;
use crate::http::Mode;
use crate::model::{is_supported, PackageCoordinate};
use crate::smells::{summarize, Indeterminate, Note, PackageFacts, SmellFinding, SmellSummary};
use crate::tree::DependencyTree;

pub const SCHEMA_VERSION: u64 = 1;

/// How the dependency tree was obtained.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Extraction {
    /// File the tree was read from, relative to the analyzed project.
    pub source: String,
    /// Command run to produce it, empty when the file was read as is.
    pub command: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DirtyPond {
    pub schema_version: u64,
    pub tool_version: String,
    pub project: PackageCoordinate,
    pub analyzed_at: Timestamp,
    pub mode: Mode,
    /// Effective configuration, tokens excluded.
    pub config: GateConfig,
    pub extraction: Extraction,
    pub tree: DependencyTree,
    pub facts: Vec<PackageFacts>,
    pub findings: Vec<SmellFinding>,
    pub indeterminate: Vec<Indeterminate>,
    pub notes: Vec<Note>,
    pub summary: SmellSummary,
}

#[derive(Debug, Error)]
pub enum PondError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("not a pond file: {0}")]
    Parse(String),
    #[error("unsupported pond schema version {found} (this build reads version {SCHEMA_VERSION})")]
    SchemaMismatch { found: String },
    #[error("invalid pond: {invariant} (at {location})")]
    Validation { invariant: String, location: String },
}

fn invalid(invariant: &str, location: impl ToString) -> PondError {
    PondError::Validation {
        invariant: invariant.to_string(),
        location: location.to_string(),
    }
}

fn finding_key(f: &SmellFinding) -> (&PackageCoordinate, u8) {
    (&f.coordinate, f.smell.id())
}

fn strictly_sorted<T, K: Ord>(items: &[T], key: impl Fn(&T) -> K) -> Option<usize> {
    items.windows(2).position(|w| key(&w[0]) >= key(&w[1])).map(|i| i + 1)
}

impl DirtyPond {
    /// Puts every collection in canonical order and recomputes the summary.
    pub fn canonicalize(&mut self) {
        self.facts.sort_by(|a, b| a.coordinate.cmp(&b.coordinate));
        self.findings.sort_by(|a, b| finding_key(a).cmp(&finding_key(b)));
        self.indeterminate
            .sort_by(|a, b| (&a.coordinate, a.smell.id(), &a.reason).cmp(&(&b.coordinate, b.smell.id(), &b.reason)));
        self.notes.sort();
        self.summary = summarize(&self.findings, &self.indeterminate, &self.tree);
    }

    /// Checks every invariant a pond must satisfy.
    pub fn validate(&self) -> Result<(), PondError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(PondError::SchemaMismatch {
                found: self.schema_version.to_string(),
            });
        }
        self.tree.validate().map_err(|e| invalid(&e, "tree"))?;
        if self.project != self.tree.project {
            return Err(invalid("project differs from the tree's project", "project"));
        }
        let analyzed = |coord: &PackageCoordinate, at: String| match self.tree.node(coord) {
            Some(node) if !node.local => Ok(()),
            Some(_) => Err(invalid("local package carries registry data", at)),
            None => Err(invalid("package is not in the tree", at)),
        };

        if let Some(i) = strictly_sorted(&self.facts, |f| f.coordinate.clone()) {
            return Err(invalid(
                "facts not sorted by coordinate or duplicated",
                format!("facts[{i}]"),
            ));
        }
        for (i, f) in self.facts.iter().enumerate() {
            analyzed(&f.coordinate, format!("facts[{i}]"))?;
            f.validate().map_err(|e| invalid(&e, format!("facts[{i}]")))?;
        }

        if let Some(i) = strictly_sorted(&self.findings, |f| (f.coordinate.clone(), f.smell.id())) {
            return Err(invalid(
                "findings not sorted by (coordinate, smell) or duplicated",
                format!("findings[{i}]"),
            ));
        }
        for (i, f) in self.findings.iter().enumerate() {
            analyzed(&f.coordinate, format!("findings[{i}]"))?;
            if !is_supported(f.smell, f.coordinate.ecosystem) {
                return Err(invalid("smell unsupported for the ecosystem", format!("findings[{i}]")));
            }
        }

        if let Some(i) = strictly_sorted(&self.indeterminate, |m| (m.coordinate.clone(), m.smell.id())) {
            return Err(invalid(
                "indeterminate markers not sorted or duplicated",
                format!("indeterminate[{i}]"),
            ));
        }
        for (i, m) in self.indeterminate.iter().enumerate() {
            analyzed(&m.coordinate, format!("indeterminate[{i}]"))?;
            if !is_supported(m.smell, m.coordinate.ecosystem) {
                return Err(invalid(
                    "smell unsupported for the ecosystem",
                    format!("indeterminate[{i}]"),
                ));
            }
            let decided = self
                .findings
                .binary_search_by(|f| finding_key(f).cmp(&(&m.coordinate, m.smell.id())))
                .is_ok();
            if decided {
                return Err(invalid(
                    "pair is both a finding and indeterminate",
                    format!("indeterminate[{i}]"),
                ));
            }
        }

        if let Some(i) = strictly_sorted(&self.notes, |n| n.clone()) {
            return Err(invalid("notes not sorted or duplicated", format!("notes[{i}]")));
        }
        if self.summary != summarize(&self.findings, &self.indeterminate, &self.tree) {
            return Err(invalid("summary does not match findings", "summary"));
        }
        Ok(())
    }
}

/// Canonical text of `pond`.
pub fn to_canonical_string(pond: &DirtyPond) -> String {
    let mut text = serde_json::to_string_pretty(pond).expect("pond serializes");
    text.push('\n');
    text
}

pub fn parse_pond(text: &str) -> Result<DirtyPond, PondError> {
    let value: Value = serde_json::from_str(text).map_err(|e| PondError::Parse(e.to_string()))?;
    match value.get("schema_version") {
        Some(Value::Number(n)) if n.as_u64() == Some(SCHEMA_VERSION) => {}
        Some(other) => {
            return Err(PondError::SchemaMismatch {
                found: other.to_string(),
            })
        }
        None => {
            return Err(PondError::SchemaMismatch {
                found: "(missing)".into(),
            })
        }
    }
    let pond: DirtyPond = serde_json::from_value(value).map_err(|e| PondError::Parse(e.to_string()))?;
    pond.validate()?;
    Ok(pond)
}

pub fn read_pond(path: &Path) -> Result<DirtyPond, PondError> {
    let text = fs::read_to_string(path).map_err(|source| PondError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_pond(&text)
}

/// Writes `pond` via a temporary file in the same directory and a rename,
/// so readers never observe a partial file.
pub fn write_pond(pond: &DirtyPond, path: &Path) -> Result<(), PondError> {
    pond.validate()?;
    let io = |source| PondError::Io {
        path: path.to_path_buf(),
        source,
    };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let file_name = path.file_name().and_then(|n| n.to_str()).unwrap_or("pond");
    let tmp = dir.join(format!(".{file_name}.{}.tmp", std::process::id()));
    let result = (|| {
        let mut file = fs::File::create(&tmp)?;
        file.write_all(to_canonical_string(pond).as_bytes())?;
        file.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result.map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SmellId;

    fn minimal() -> DirtyPond {
        let project = PackageCoordinate::npm("app", "1.0.0").unwrap();
        let mut pond = DirtyPond {
            schema_version: SCHEMA_VERSION,
            tool_version: "0.0.0".into(),
            project: project.clone(),
            analyzed_at: Timestamp::from_unix(1_700_000_000).unwrap(),
            mode: Mode::Offline,
            config: GateConfig::default(),
            extraction: Extraction::default(),
            tree: DependencyTree::empty(project),
            facts: vec![],
            findings: vec![],
            indeterminate: vec![],
            notes: vec![],
            summary: SmellSummary::default(),
        };
        pond.canonicalize();
        pond
    }

    #[test]
    fn minimal_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pond.json");
        let pond = minimal();
        write_pond(&pond, &path).unwrap();
        let first = fs::read(&path).unwrap();
        assert_eq!(read_pond(&path).unwrap(), pond);
        write_pond(&pond, &path).unwrap();
        assert_eq!(fs::read(&path).unwrap(), first);
        assert!(first.ends_with(b"}\n"));
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn unknown_schema_is_rejected() {
        let text = to_canonical_string(&minimal()).replace("\"schema_version\": 1", "\"schema_version\": 999");
        assert!(matches!(parse_pond(&text), Err(PondError::SchemaMismatch { .. })));
    }

    #[test]
    fn duplicate_finding_is_rejected() {
        let mut pond = minimal();
        let coord = PackageCoordinate::npm("a", "1.0.0").unwrap();
        let mut b = crate::tree::TreeBuilder::new(pond.project.clone());
        b.add_node(crate::tree::TreeNode {
            coordinate: coord.clone(),
            scope: None,
            local: false,
        });
        b.add_edge(pond.project.clone(), coord.clone());
        pond.tree = b.build();
        let finding = SmellFinding {
            coordinate: coord,
            smell: SmellId::Fork,
            severity: crate::Severity::Medium,
            evidence: "x".into(),
            confidence: crate::smells::Confidence::Heuristic,
            ignored: None,
        };
        pond.findings = vec![finding.clone(), finding];
        pond.summary = summarize(&pond.findings, &pond.indeterminate, &pond.tree);
        let err = parse_pond(&serde_json::to_string(&pond).unwrap()).unwrap_err();
        assert!(matches!(err, PondError::Validation { .. }), "{err}");
    }
}
