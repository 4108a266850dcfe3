//! The smell predicates: collected facts in, findings out. No I/O.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::http::Mode;
use crate::model::{default_severity, is_supported, PackageCoordinate, Severity, SmellId};
use crate::registry::{
    ProvenanceStatus, RegistryFacts, SignatureStatus, FIELD_DEPRECATED, FIELD_PROVENANCE, FIELD_SIGNATURE,
    FIELD_SOURCE_URL,
};
use crate::repo::{Accessibility, RepoFacts, ShaHintIssue, TagResolution, FIELD_RELEASE, FIELD_REPOSITORY};
use crate::tree::DependencyTree;

/// How the facts of one package were obtained.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FetchProvenance {
    pub mode: Mode,
    /// Digest of the ordered request log (see [`crate::http::RequestLog`]).
    pub request_digest: String,
    pub requests: usize,
}

impl Default for FetchProvenance {
    fn default() -> Self {
        FetchProvenance {
            mode: Mode::Offline,
            request_digest: crate::http::RequestLog::default().digest(),
            requests: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PackageFacts {
    pub coordinate: PackageCoordinate,
    pub registry: RegistryFacts,
    /// Absent when the registry gave no usable source URL.
    pub repo: Option<RepoFacts>,
    pub fetch: FetchProvenance,
}

impl PackageFacts {
    pub fn validate(&self) -> Result<(), String> {
        if self.registry.coordinate != self.coordinate {
            return Err(format!(
                "{}: registry facts describe {}",
                self.coordinate, self.registry.coordinate
            ));
        }
        if let Some(repo) = &self.repo {
            if self.registry.normalized_source_url.as_deref() != Some(repo.url.as_str()) {
                return Err(format!(
                    "{}: repository facts without a matching source URL",
                    self.coordinate
                ));
            }
            repo.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Confidence {
    Definite,
    Heuristic,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SmellFinding {
    pub coordinate: PackageCoordinate,
    pub smell: SmellId,
    pub severity: Severity,
    pub evidence: String,
    pub confidence: Confidence,
    /// Justification of the ignore entry that suppresses this finding.
    pub ignored: Option<String>,
}

/// A (package, smell) pair that could not be decided.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Indeterminate {
    pub coordinate: PackageCoordinate,
    pub smell: SmellId,
    pub reason: String,
}

/// An observation that is not a smell but worth a human look.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Note {
    pub coordinate: PackageCoordinate,
    pub smell: SmellId,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeverityPolicy {
    pub overrides: BTreeMap<SmellId, Severity>,
}

impl SeverityPolicy {
    pub fn severity(&self, smell: SmellId) -> Severity {
        self.overrides
            .get(&smell)
            .copied()
            .unwrap_or_else(|| default_severity(smell))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Detection {
    pub findings: Vec<SmellFinding>,
    pub indeterminate: Vec<Indeterminate>,
    pub notes: Vec<Note>,
}

struct Collector<'a> {
    coord: &'a PackageCoordinate,
    policy: &'a SeverityPolicy,
    out: Detection,
}

impl Collector<'_> {
    fn supported(&self, smell: SmellId) -> bool {
        is_supported(smell, self.coord.ecosystem)
    }

    fn finding(&mut self, smell: SmellId, confidence: Confidence, evidence: String) {
        if self.supported(smell) {
            self.out.findings.push(SmellFinding {
                coordinate: self.coord.clone(),
                smell,
                severity: self.policy.severity(smell),
                evidence,
                confidence,
                ignored: None,
            });
        }
    }

    fn unknown(&mut self, smells: &[SmellId], reason: &str) {
        for &smell in smells {
            if self.supported(smell) {
                self.out.indeterminate.push(Indeterminate {
                    coordinate: self.coord.clone(),
                    smell,
                    reason: reason.to_string(),
                });
            }
        }
    }

    fn note(&mut self, smell: SmellId, message: String) {
        self.out.notes.push(Note {
            coordinate: self.coord.clone(),
            smell,
            message,
        });
    }
}

const REPO_SMELLS: [SmellId; 3] = [SmellId::InvalidSourceCodeUrl, SmellId::InaccessibleTag, SmellId::Fork];

/// Applies the nine predicates to one package.
pub fn detect(facts: &PackageFacts, tree: &DependencyTree, policy: &SeverityPolicy) -> Detection {
    let reg = &facts.registry;
    let mut c = Collector {
        coord: &facts.coordinate,
        policy,
        out: Detection::default(),
    };

    if let Some(err) = reg.error(FIELD_SOURCE_URL) {
        let reason = format!("source URL unknown: {}", err.message);
        c.unknown(&[SmellId::NoSourceCodeUrl], &reason);
        c.unknown(&REPO_SMELLS, &reason);
    } else {
        match &reg.source_url {
            None => c.finding(
                SmellId::NoSourceCodeUrl,
                Confidence::Definite,
                "registry metadata declares no source code repository".into(),
            ),
            Some(raw) => repository_smells(&mut c, raw, reg.normalized_source_url.as_deref(), facts.repo.as_ref()),
        }
    }

    match reg.error(FIELD_DEPRECATED) {
        Some(err) => c.unknown(
            &[SmellId::Deprecated],
            &format!("deprecation status unknown: {}", err.message),
        ),
        None => {
            if reg.deprecated == Some(true) {
                let evidence = match reg.deprecation_message.as_deref() {
                    Some(msg) => format!("deprecated by its maintainers: \"{msg}\""),
                    None => "deprecated by its maintainers".into(),
                };
                c.finding(SmellId::Deprecated, Confidence::Definite, evidence);
            }
        }
    }

    let signature_smells = [SmellId::NoCodeSignature, SmellId::InvalidCodeSignature];
    match reg.error(FIELD_SIGNATURE) {
        Some(err) => c.unknown(&signature_smells, &format!("signature status unknown: {}", err.message)),
        None => {
            let evidence = reg.signature_evidence.clone();
            match reg.signature {
                SignatureStatus::Missing => c.finding(
                    SmellId::NoCodeSignature,
                    Confidence::Definite,
                    evidence.unwrap_or_else(|| "no signature published".into()),
                ),
                SignatureStatus::Invalid => c.finding(
                    SmellId::InvalidCodeSignature,
                    Confidence::Definite,
                    evidence.unwrap_or_else(|| "signature does not verify".into()),
                ),
                SignatureStatus::Present => c.note(
                    SmellId::InvalidCodeSignature,
                    format!(
                        "signature present but not verified: {}",
                        evidence.unwrap_or_else(|| "signing key unavailable".into())
                    ),
                ),
                SignatureStatus::VerifiedValid => {}
            }
        }
    }

    let bindings: Vec<_> = tree.aliases_of(&facts.coordinate).collect();
    if !bindings.is_empty() {
        let listed: Vec<String> = bindings
            .iter()
            .map(|b| format!("installed as `{}` by {}", b.declared_name, b.declared_in))
            .collect();
        c.finding(SmellId::Aliased, Confidence::Definite, listed.join("; "));
    }

    match reg.error(FIELD_PROVENANCE) {
        Some(err) => c.unknown(
            &[SmellId::NoProvenance],
            &format!("provenance unknown: {}", err.message),
        ),
        None => {
            if reg.provenance == Some(ProvenanceStatus::Missing) {
                c.finding(
                    SmellId::NoProvenance,
                    Confidence::Definite,
                    "no build provenance attestation published".into(),
                );
            }
        }
    }

    let mut out = c.out;
    out.findings.sort_by_key(|f| f.smell);
    out.indeterminate.sort();
    out.notes.sort();
    out
}

fn repository_smells(c: &mut Collector<'_>, raw: &str, normalized: Option<&str>, repo: Option<&RepoFacts>) {
    let Some(url) = normalized else {
        c.finding(
            SmellId::InvalidSourceCodeUrl,
            Confidence::Definite,
            format!("source URL `{raw}` does not denote a repository location"),
        );
        return;
    };
    let Some(repo) = repo else {
        c.unknown(&REPO_SMELLS, &format!("repository {url} was not checked"));
        return;
    };
    if let Some(err) = repo.error(FIELD_REPOSITORY) {
        c.unknown(&REPO_SMELLS, &format!("repository {url} unknown: {}", err.message));
        return;
    }
    match repo.accessibility {
        None => c.unknown(&REPO_SMELLS, &format!("repository {url} was not checked")),
        Some(Accessibility::NotFound) => {
            let status = repo
                .http_status
                .map(|s| format!("HTTP {s}"))
                .unwrap_or_else(|| "no repository at this location".into());
            c.finding(
                SmellId::InvalidSourceCodeUrl,
                Confidence::Definite,
                format!("source URL `{raw}` ({url}) not found: {status}"),
            );
        }
        Some(Accessibility::Gone) => c.finding(
            SmellId::InvalidSourceCodeUrl,
            Confidence::Definite,
            format!(
                "source URL `{raw}` ({url}) is gone: HTTP {}",
                repo.http_status.unwrap_or(410)
            ),
        ),
        Some(Accessibility::NonRepoHost) => match &repo.probe {
            Some(probe) if !probe.reachable => {
                let outcome = match (probe.status, &probe.detail) {
                    (Some(s), _) => format!("HTTP {s}"),
                    (None, Some(d)) => d.clone(),
                    (None, None) => "unreachable".into(),
                };
                c.finding(
                    SmellId::InvalidSourceCodeUrl,
                    Confidence::Definite,
                    format!("source URL `{raw}` ({url}) is not on a supported code host and unreachable: {outcome}"),
                );
            }
            Some(probe) => c.note(
                SmellId::InvalidSourceCodeUrl,
                format!(
                    "source URL {url} is reachable (HTTP {}) but not on a supported code host; repository checks skipped",
                    probe.status.unwrap_or(200)
                ),
            ),
            None => c.unknown(&[SmellId::InvalidSourceCodeUrl], &format!("{url} was not probed")),
        },
        Some(Accessibility::Accessible) => {
            if let Some(err) = repo.error(FIELD_RELEASE) {
                c.unknown(
                    &[SmellId::InaccessibleTag],
                    &format!("release lookup in {url} failed: {}", err.message),
                );
            } else if repo.tag_resolution == Some(TagResolution::Unresolved) {
                let mut evidence = String::new();
                if let Some(sha) = &repo.sha_hint {
                    let why = match repo.sha_hint_issue {
                        Some(ShaHintIssue::Malformed) => "is not a commit SHA",
                        _ => "does not exist",
                    };
                    evidence.push_str(&format!("release commit `{sha}` {why} in {url}; "));
                }
                evidence.push_str(&format!(
                    "no release tag found in {url} (checked: {})",
                    repo.checked_candidates.join(", ")
                ));
                c.finding(SmellId::InaccessibleTag, Confidence::Definite, evidence);
            }
            if repo.is_fork == Some(true) {
                let evidence = match &repo.fork_parent {
                    Some(parent) => format!("{url} is a fork of {parent}"),
                    None => format!("{url} is a fork"),
                };
                c.finding(SmellId::Fork, Confidence::Heuristic, evidence);
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SmellSummary {
    /// Non-local packages in the tree.
    pub total_packages: usize,
    pub per_smell: BTreeMap<SmellId, usize>,
    pub per_severity: BTreeMap<Severity, usize>,
    pub affected: BTreeMap<SmellId, Vec<PackageCoordinate>>,
    pub ignored: usize,
    pub indeterminate: usize,
    /// Packages with at least one indeterminate smell.
    pub indeterminate_packages: usize,
}

pub fn summarize(findings: &[SmellFinding], indeterminate: &[Indeterminate], tree: &DependencyTree) -> SmellSummary {
    let mut summary = SmellSummary {
        total_packages: tree.nodes.iter().filter(|n| !n.local).count(),
        indeterminate: indeterminate.len(),
        ..SmellSummary::default()
    };
    for f in findings {
        *summary.per_smell.entry(f.smell).or_default() += 1;
        *summary.per_severity.entry(f.severity).or_default() += 1;
        summary.affected.entry(f.smell).or_default().push(f.coordinate.clone());
        if f.ignored.is_some() {
            summary.ignored += 1;
        }
    }
    for list in summary.affected.values_mut() {
        list.sort();
        list.dedup();
    }
    let mut undecided: Vec<_> = indeterminate.iter().map(|i| &i.coordinate).collect();
    undecided.sort();
    undecided.dedup();
    summary.indeterminate_packages = undecided.len();
    summary
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::Timestamp;
    use crate::model::Ecosystem;
    use crate::tree::{AliasBinding, TreeBuilder, TreeNode};

    fn clean(coord: &PackageCoordinate) -> PackageFacts {
        let mut registry = RegistryFacts::blank(coord.clone(), Timestamp::from_unix(0).unwrap());
        registry.set_source_url(Some("https://github.com/a/b".into()));
        registry.signature = SignatureStatus::VerifiedValid;
        registry.provenance = registry.provenance.map(|_| ProvenanceStatus::Present);
        let mut repo = RepoFacts::new("https://github.com/a/b");
        repo.accessibility = Some(Accessibility::Accessible);
        repo.is_fork = Some(false);
        repo.tag_resolution = Some(TagResolution::ResolvedBySha);
        PackageFacts {
            coordinate: coord.clone(),
            registry,
            repo: Some(repo),
            fetch: FetchProvenance::default(),
        }
    }

    fn tree_with(coord: &PackageCoordinate) -> DependencyTree {
        let project = PackageCoordinate::new(
            coord.ecosystem,
            if coord.ecosystem == Ecosystem::Npm {
                "app"
            } else {
                "org.example:app"
            },
            "1.0.0",
        )
        .unwrap();
        let mut b = TreeBuilder::new(project.clone());
        b.add_node(TreeNode {
            coordinate: coord.clone(),
            scope: None,
            local: false,
        });
        b.add_edge(project, coord.clone());
        b.build()
    }

    #[test]
    fn clean_package_has_no_findings() {
        let coord = PackageCoordinate::npm("a", "1.0.0").unwrap();
        let d = detect(&clean(&coord), &tree_with(&coord), &SeverityPolicy::default());
        assert_eq!(d, Detection::default());
    }

    #[test]
    fn absent_url_is_one_high_finding() {
        let coord = PackageCoordinate::npm("a", "1.0.0").unwrap();
        let mut facts = clean(&coord);
        facts.registry.set_source_url(None);
        facts.repo = None;
        let d = detect(&facts, &tree_with(&coord), &SeverityPolicy::default());
        assert_eq!(d.findings.len(), 1);
        assert_eq!(d.findings[0].smell, SmellId::NoSourceCodeUrl);
        assert_eq!(d.findings[0].severity, Severity::High);
    }

    #[test]
    fn maven_never_reports_unsupported_smells() {
        let coord = PackageCoordinate::maven("g:a", "1").unwrap();
        let mut facts = clean(&coord);
        facts.registry.deprecated = Some(true);
        facts.registry.provenance = Some(ProvenanceStatus::Missing);
        facts.registry.signature = SignatureStatus::Missing;
        let mut tree = tree_with(&coord);
        tree.aliases.push(AliasBinding {
            declared_name: "x".into(),
            actual: coord.clone(),
            declared_in: tree.project.clone(),
        });
        let d = detect(&facts, &tree, &SeverityPolicy::default());
        let smells: Vec<_> = d.findings.iter().map(|f| f.smell).collect();
        assert_eq!(smells, [SmellId::NoCodeSignature]);
    }

    #[test]
    fn fetch_errors_become_indeterminate() {
        let coord = PackageCoordinate::npm("a", "1.0.0").unwrap();
        let mut facts = clean(&coord);
        facts.registry.fail(FIELD_SIGNATURE, "timeout");
        let d = detect(&facts, &tree_with(&coord), &SeverityPolicy::default());
        assert!(d.findings.is_empty());
        let smells: Vec<_> = d.indeterminate.iter().map(|i| i.smell).collect();
        assert_eq!(smells, [SmellId::NoCodeSignature, SmellId::InvalidCodeSignature]);
        assert!(d.indeterminate[0].reason.contains("timeout"));
    }

    #[test]
    fn unverified_signature_is_a_note() {
        let coord = PackageCoordinate::npm("a", "1.0.0").unwrap();
        let mut facts = clean(&coord);
        facts.registry.signature = SignatureStatus::Present;
        let d = detect(&facts, &tree_with(&coord), &SeverityPolicy::default());
        assert!(d.findings.is_empty());
        assert_eq!(d.notes.len(), 1);
    }

    #[test]
    fn override_changes_severity() {
        let coord = PackageCoordinate::npm("a", "1.0.0").unwrap();
        let mut facts = clean(&coord);
        facts.repo.as_mut().unwrap().is_fork = Some(true);
        let policy = SeverityPolicy {
            overrides: [(SmellId::Fork, Severity::High)].into(),
        };
        let d = detect(&facts, &tree_with(&coord), &policy);
        assert_eq!(d.findings[0].severity, Severity::High);
        assert_eq!(d.findings[0].confidence, Confidence::Heuristic);
    }

    #[test]
    fn summary_counts() {
        let tree = DependencyTree::empty(PackageCoordinate::npm("app", "1.0.0").unwrap());
        let mk = |name: &str, severity| SmellFinding {
            coordinate: PackageCoordinate::npm(name, "1.0.0").unwrap(),
            smell: SmellId::NoSourceCodeUrl,
            severity,
            evidence: String::new(),
            confidence: Confidence::Definite,
            ignored: None,
        };
        let findings = [
            mk("a", Severity::High),
            mk("b", Severity::High),
            mk("c", Severity::Critical),
        ];
        let s = summarize(&findings, &[], &tree);
        assert_eq!(s.per_smell[&SmellId::NoSourceCodeUrl], 3);
        assert_eq!(s.per_severity[&Severity::High], 2);
        assert_eq!(s.per_severity[&Severity::Critical], 1);
        assert_eq!(s.total_packages, 0);
    }
}
