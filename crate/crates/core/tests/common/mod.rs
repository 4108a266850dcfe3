//! Shared test scaffolding: a compact description of one package's facet
//! states, the facts it stands for, and generators of valid ponds.

#![allow(dead_code)]

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use proptest::prelude::*;

use chainsmell::clock::{FixedClock, Timestamp};
use chainsmell::gate::{load_config, GateConfig};
use chainsmell::pipeline::{make_fetcher, run_analysis, ProjectInput};
use chainsmell::pond::{DirtyPond, SCHEMA_VERSION};
use chainsmell::registry::{
    FieldError, ProvenanceStatus, RegistryFacts, SignatureStatus, FIELD_DEPRECATED, FIELD_PROVENANCE, FIELD_SIGNATURE,
    FIELD_SOURCE_URL,
};
use chainsmell::repo::{Accessibility, Probe, RepoFacts, TagResolution, FIELD_RELEASE, FIELD_REPOSITORY};
use chainsmell::smells::{detect, FetchProvenance, PackageFacts};
use chainsmell::tree::{AliasBinding, TreeBuilder, TreeNode};
use chainsmell::{Ecosystem, PackageCoordinate, Severity, SmellId};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Absent,
    /// Declared but not a repository location.
    Unusable,
    /// The registry lookup for the source URL failed.
    Error,
    Forge,
    OtherHost,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RepoState {
    Accessible,
    NotFound,
    Gone,
    LookupError,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Facets {
    pub source: Source,
    pub repo: RepoState,
    /// Only for [`Source::OtherHost`].
    pub reachable: bool,
    pub tag: bool,
    pub fork: bool,
    pub release_error: bool,
    pub deprecated: Option<String>,
    pub deprecation_error: bool,
    pub signature: SignatureStatus,
    pub signature_error: bool,
    pub provenance: bool,
    pub provenance_error: bool,
    pub alias: bool,
    pub ignored: Option<String>,
}

impl Facets {
    /// A package with nothing to report.
    pub fn clean() -> Self {
        Facets {
            source: Source::Forge,
            repo: RepoState::Accessible,
            reachable: true,
            tag: true,
            fork: false,
            release_error: false,
            deprecated: None,
            deprecation_error: false,
            signature: SignatureStatus::VerifiedValid,
            signature_error: false,
            provenance: true,
            provenance_error: false,
            alias: false,
            ignored: None,
        }
    }
}

pub fn ts(secs: i64) -> Timestamp {
    Timestamp::from_unix(secs).unwrap()
}

fn slug(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '-' })
        .collect()
}

fn push_error(errors: &mut Vec<FieldError>, field: &str, message: &str) {
    errors.push(FieldError {
        field: field.into(),
        message: message.into(),
    });
    errors.sort();
}

/// The facts a collector would have gathered for a package in state `f`.
pub fn facts_for(coord: &PackageCoordinate, f: &Facets, now: Timestamp) -> PackageFacts {
    let npm = coord.ecosystem == Ecosystem::Npm;
    let mut reg = RegistryFacts::blank(coord.clone(), now);
    let mut repo = None;
    let repo_name = slug(&coord.name);
    match f.source {
        Source::Absent => {}
        Source::Unusable => reg.source_url = Some("not a url !!".into()),
        Source::Error => push_error(&mut reg.fetch_errors, FIELD_SOURCE_URL, "HTTP 503"),
        Source::Forge => {
            let url = format!("https://github.com/owner/{repo_name}");
            reg.source_url = Some(format!("git+{url}.git"));
            reg.normalized_source_url = Some(url.clone());
            let mut r = RepoFacts::new(url);
            match f.repo {
                RepoState::Accessible => {
                    r.accessibility = Some(Accessibility::Accessible);
                    r.http_status = Some(200);
                    r.is_fork = Some(f.fork);
                    if f.fork {
                        r.fork_parent = Some(format!("https://github.com/upstream/{repo_name}"));
                    }
                    if f.release_error {
                        push_error(&mut r.fetch_errors, FIELD_RELEASE, "unexpected HTTP 502");
                    } else {
                        r.checked_candidates = vec![format!("v{}", coord.version)];
                        r.tag_resolution = Some(if f.tag {
                            r.resolved_ref = Some(format!("v{}", coord.version));
                            TagResolution::ResolvedByTag {
                                matched_pattern: "v{version}".into(),
                            }
                        } else {
                            TagResolution::Unresolved
                        });
                    }
                }
                RepoState::NotFound => {
                    r.accessibility = Some(Accessibility::NotFound);
                    r.http_status = Some(404);
                }
                RepoState::Gone => {
                    r.accessibility = Some(Accessibility::Gone);
                    r.http_status = Some(410);
                }
                RepoState::LookupError => push_error(&mut r.fetch_errors, FIELD_REPOSITORY, "connection reset"),
            }
            repo = Some(r);
        }
        Source::OtherHost => {
            let url = format!("https://docs.example.org/{repo_name}");
            reg.source_url = Some(url.clone());
            reg.normalized_source_url = Some(url.clone());
            let mut r = RepoFacts::new(url);
            r.accessibility = Some(Accessibility::NonRepoHost);
            r.probe = Some(Probe {
                status: Some(if f.reachable { 200 } else { 404 }),
                reachable: f.reachable,
                detail: None,
            });
            repo = Some(r);
        }
    }
    if npm {
        if f.deprecation_error {
            reg.deprecated = None;
            push_error(&mut reg.fetch_errors, FIELD_DEPRECATED, "HTTP 503");
        } else {
            reg.deprecated = Some(f.deprecated.is_some());
            reg.deprecation_message = f.deprecated.clone().filter(|m| !m.is_empty());
        }
        if f.provenance_error {
            reg.provenance = None;
            push_error(&mut reg.fetch_errors, FIELD_PROVENANCE, "HTTP 500");
        } else {
            reg.provenance = Some(if f.provenance {
                ProvenanceStatus::Present
            } else {
                ProvenanceStatus::Missing
            });
        }
    }
    if f.signature_error {
        push_error(&mut reg.fetch_errors, FIELD_SIGNATURE, "HTTP 500");
    } else {
        reg.signature = f.signature;
    }
    PackageFacts {
        coordinate: coord.clone(),
        registry: reg,
        repo,
        fetch: FetchProvenance::default(),
    }
}

pub fn project_coord(eco: Ecosystem, name: &str) -> PackageCoordinate {
    match eco {
        Ecosystem::Npm => PackageCoordinate::npm(name, "1.0.0").unwrap(),
        Ecosystem::Maven => PackageCoordinate::maven(&format!("org.projects:{name}"), "1.0.0").unwrap(),
    }
}

pub fn package_coord(eco: Ecosystem, name: &str, version: &str) -> PackageCoordinate {
    match eco {
        Ecosystem::Npm => PackageCoordinate::npm(name, version).unwrap(),
        Ecosystem::Maven => PackageCoordinate::maven(&format!("org.libs:{name}"), version).unwrap(),
    }
}

/// Assembles a canonical pond the way the pipeline does: every package
/// directly under the project, findings from the smell engine, ignore
/// annotations from the facets.
pub fn build_pond(
    eco: Ecosystem,
    project: &str,
    analyzed_at: Timestamp,
    packages: &[(String, String, Facets)],
    config: GateConfig,
) -> DirtyPond {
    let project = project_coord(eco, project);
    let mut builder = TreeBuilder::new(project.clone());
    let mut seen = std::collections::BTreeSet::new();
    let mut facts = Vec::new();
    let mut states = Vec::new();
    for (name, version, f) in packages {
        let coord = package_coord(eco, name, version);
        if coord == project || !seen.insert(coord.clone()) {
            continue;
        }
        builder.add_node(TreeNode {
            coordinate: coord.clone(),
            scope: None,
            local: false,
        });
        builder.add_edge(project.clone(), coord.clone());
        if f.alias && eco == Ecosystem::Npm {
            builder.add_alias(AliasBinding {
                declared_name: format!("alias-of-{name}"),
                actual: coord.clone(),
                declared_in: project.clone(),
            });
        }
        facts.push(facts_for(&coord, f, analyzed_at));
        states.push(f.clone());
    }
    let tree = builder.build();
    let policy = config.policy();
    let mut pond = DirtyPond {
        schema_version: SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        project: project.clone(),
        analyzed_at,
        mode: chainsmell::http::Mode::Offline,
        config,
        extraction: Default::default(),
        tree,
        facts: Vec::new(),
        findings: Vec::new(),
        indeterminate: Vec::new(),
        notes: Vec::new(),
        summary: Default::default(),
    };
    for (pf, f) in facts.iter().zip(&states) {
        let d = detect(pf, &pond.tree, &policy);
        for mut finding in d.findings {
            finding.ignored = f.ignored.clone();
            pond.findings.push(finding);
        }
        pond.indeterminate.extend(d.indeterminate);
        pond.notes.extend(d.notes);
    }
    pond.facts = facts;
    pond.canonicalize();
    pond
}

pub fn arb_signature() -> impl Strategy<Value = SignatureStatus> {
    prop_oneof![
        Just(SignatureStatus::Missing),
        Just(SignatureStatus::Present),
        Just(SignatureStatus::VerifiedValid),
        Just(SignatureStatus::Invalid),
    ]
}

pub fn arb_severity() -> impl Strategy<Value = Severity> {
    prop::sample::select(Severity::ALL.to_vec())
}

/// Facet states, errors included but rare.
pub fn arb_facets() -> impl Strategy<Value = Facets> {
    let source = prop_oneof![
        2 => Just(Source::Absent),
        1 => Just(Source::Unusable),
        1 => Just(Source::Error),
        8 => Just(Source::Forge),
        1 => Just(Source::OtherHost),
    ];
    let repo = prop_oneof![
        8 => Just(RepoState::Accessible),
        2 => Just(RepoState::NotFound),
        1 => Just(RepoState::Gone),
        1 => Just(RepoState::LookupError),
    ];
    let deprecated = prop::option::weighted(0.2, "[ -~é\"\\\\]{0,24}");
    let ignored = prop::option::weighted(0.1, "[a-z ]{1,20}");
    (
        (
            source,
            repo,
            any::<bool>(),
            any::<bool>(),
            prop::bool::weighted(0.2),
            prop::bool::weighted(0.05),
        ),
        (
            deprecated,
            prop::bool::weighted(0.05),
            arb_signature(),
            prop::bool::weighted(0.05),
        ),
        (
            any::<bool>(),
            prop::bool::weighted(0.05),
            prop::bool::weighted(0.1),
            ignored,
        ),
    )
        .prop_map(
            |(
                (source, repo, reachable, tag, fork, release_error),
                (deprecated, deprecation_error, signature, signature_error),
                (provenance, provenance_error, alias, ignored),
            )| Facets {
                source,
                repo,
                reachable,
                tag,
                fork,
                release_error,
                deprecated,
                deprecation_error,
                signature,
                signature_error,
                provenance,
                provenance_error,
                alias,
                ignored,
            },
        )
}

pub fn arb_config() -> impl Strategy<Value = GateConfig> {
    (
        arb_severity(),
        0u32..=100,
        prop::collection::btree_map(prop::sample::select(SmellId::ALL.to_vec()), arb_severity(), 0..3),
        prop::collection::btree_map(arb_severity(), 0usize..5, 0..2),
    )
        .prop_map(|(fail_on, pct, overrides, max_findings)| GateConfig {
            fail_on,
            max_indeterminate_percent: pct,
            severity_overrides: overrides,
            max_findings,
            ..GateConfig::default()
        })
}

const NAMES: [&str; 12] = [
    "left-pad",
    "lodash",
    "chalk",
    "debug",
    "ms",
    "qs",
    "uuid",
    "semver",
    "commander",
    "yargs",
    "glob",
    "rimraf",
];
const VERSIONS: [&str; 3] = ["1.0.0", "1.1.0", "2.0.0"];
const PROJECTS: [&str; 4] = ["web-shop", "api-gateway", "cli-tool", "batch-jobs"];

pub fn arb_package() -> impl Strategy<Value = (String, String, Facets)> {
    (
        prop::sample::select(NAMES.to_vec()),
        prop::sample::select(VERSIONS.to_vec()),
        arb_facets(),
    )
        .prop_map(|(n, v, f)| (n.to_string(), v.to_string(), f))
}

/// Small ponds over a shared package pool, so ponds overlap.
pub fn arb_pond_for(eco: Ecosystem) -> impl Strategy<Value = DirtyPond> {
    (
        prop::sample::select(PROJECTS.to_vec()),
        1_700_000_000i64..1_700_000_000 + 20,
        prop::collection::vec(arb_package(), 0..8),
        arb_config(),
    )
        .prop_map(move |(project, at, packages, config)| build_pond(eco, project, ts(at), &packages, config))
}

pub fn arb_pond() -> impl Strategy<Value = DirtyPond> {
    prop_oneof![arb_pond_for(Ecosystem::Npm), arb_pond_for(Ecosystem::Maven)]
}

// End-to-end fixture projects

pub const E2E_ANALYZED_AT: &str = "2026-01-15T12:00:00Z";

pub fn e2e_dir(eco: Ecosystem) -> PathBuf {
    PathBuf::from("tests/data/e2e").join(eco.as_str())
}

pub fn e2e_manifest(eco: Ecosystem) -> PathBuf {
    e2e_dir(eco).join(match eco {
        Ecosystem::Npm => "package-lock.json",
        Ecosystem::Maven => "dependency-tree.txt",
    })
}

pub fn e2e_config(eco: Ecosystem) -> GateConfig {
    let today = NaiveDate::from_ymd_opt(2026, 1, 15).unwrap();
    load_config(Some(&e2e_dir(eco).join("chainsmell.toml")), |_| None, today).unwrap()
}

/// Analyzes the fixture project of `eco` offline with `workers` threads.
pub fn analyze_e2e(eco: Ecosystem, workers: usize) -> DirtyPond {
    let mut config = e2e_config(eco);
    config.workers = workers;
    let fetcher = make_fetcher(&config).unwrap();
    let clock = FixedClock(Timestamp::parse(E2E_ANALYZED_AT).unwrap());
    let input = ProjectInput {
        ecosystem: eco,
        manifest: e2e_manifest(eco),
    };
    run_analysis(&input, &config, &fetcher, &clock).unwrap()
}

pub fn read_text(path: impl AsRef<Path>) -> String {
    let path = path.as_ref();
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

/// `true` to rewrite golden files instead of comparing against them.
pub fn bless() -> bool {
    std::env::var_os("CHAINSMELL_BLESS").is_some()
}
