//! One analysis end to end: extract the tree, collect facts for every
//! package on a bounded pool of workers, detect smells, assemble the pond.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use thiserror::Error;

use crate::clock::{Clock, Timestamp};
use crate::extract::{capture_maven_tree, extract, ExtractError};
use crate::fixtures::FixtureStore;
use crate::gate::GateConfig;
use crate::http::{Fetcher, Mode, PoliteTransport, RateLimiter, RequestLog, RetryPolicy, UreqTransport};
use crate::model::{Ecosystem, PackageCoordinate};
use crate::pond::{DirtyPond, Extraction, SCHEMA_VERSION};
use crate::registry::{
    RegistryClient, RegistryFacts, FIELD_DEPRECATED, FIELD_PROVENANCE, FIELD_SIGNATURE, FIELD_SOURCE_URL,
};
use crate::repo::{GitHub, RepoChecker, RepoFacts, FIELD_REPOSITORY};
use crate::smells::{detect, FetchProvenance, PackageFacts};
use crate::tree::DependencyTree;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProjectInput {
    pub ecosystem: Ecosystem,
    /// Lockfile, `package.json`, `pom.xml`, captured dependency-tree text,
    /// or the project directory.
    pub manifest: PathBuf,
}

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Extract(#[from] ExtractError),
    #[error("{0}")]
    Setup(String),
}

fn read(path: &Path) -> Result<Vec<u8>, AnalysisError> {
    std::fs::read(path).map_err(|source| AnalysisError::Read {
        path: path.to_path_buf(),
        source,
    })
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// Reads or produces the dependency tree named by `input`.
pub fn load_tree(input: &ProjectInput) -> Result<(DependencyTree, Extraction), AnalysisError> {
    let path = &input.manifest;
    match input.ecosystem {
        Ecosystem::Npm => {
            let lockfile = if path.is_dir() {
                path.join("package-lock.json")
            } else if file_name(path) == "package.json" {
                let dir = path.parent().unwrap_or(Path::new("."));
                let shrinkwrap = dir.join("npm-shrinkwrap.json");
                if shrinkwrap.is_file() {
                    shrinkwrap
                } else {
                    dir.join("package-lock.json")
                }
            } else {
                path.clone()
            };
            let tree = extract(Ecosystem::Npm, &read(&lockfile)?)?;
            Ok((
                tree,
                Extraction {
                    source: file_name(&lockfile),
                    command: Vec::new(),
                },
            ))
        }
        Ecosystem::Maven => {
            let is_pom = path.is_dir() || path.extension().is_some_and(|e| e == "xml");
            if is_pom {
                let dir = if path.is_dir() {
                    path.clone()
                } else {
                    path.parent().unwrap_or(Path::new(".")).to_path_buf()
                };
                let (bytes, command) = capture_maven_tree(&dir)?;
                let tree = extract(Ecosystem::Maven, &bytes)?;
                Ok((
                    tree,
                    Extraction {
                        source: "pom.xml".into(),
                        command,
                    },
                ))
            } else {
                let tree = extract(Ecosystem::Maven, &read(path)?)?;
                Ok((
                    tree,
                    Extraction {
                        source: file_name(path),
                        command: Vec::new(),
                    },
                ))
            }
        }
    }
}

/// Builds the fetcher the configured mode calls for.
pub fn make_fetcher(config: &GateConfig) -> Result<Fetcher, AnalysisError> {
    let store =
        || {
            config.fixtures.as_ref().map(FixtureStore::new).ok_or_else(|| {
                AnalysisError::Setup(format!("{} mode needs a fixture directory (--fixtures)", config.mode))
            })
        };
    let live = || {
        PoliteTransport::new(
            UreqTransport::new(Duration::from_secs(30)),
            RetryPolicy::default(),
            Arc::new(RateLimiter::new(10.0, 20)),
        )
    };
    Ok(match config.mode {
        Mode::Offline => Fetcher::offline(store()?),
        Mode::Record => Fetcher::recording(live(), store()?),
        Mode::Live => Fetcher::live(live()),
    })
}

/// Collects facts for every non-local package of `tree` and assembles the
/// pond. Fetch failures never abort the run; they surface as indeterminate
/// checks.
pub fn analyze_tree(
    tree: DependencyTree,
    extraction: Extraction,
    config: &GateConfig,
    fetcher: &Fetcher,
    clock: &dyn Clock,
) -> DirtyPond {
    let now = clock.now();
    let packages: Vec<PackageCoordinate> = tree
        .nodes
        .iter()
        .filter(|n| !n.local)
        .map(|n| n.coordinate.clone())
        .collect();

    let registry = RegistryClient::new(fetcher, &config.registry);
    let github = GitHub::new(fetcher, config.github.clone());
    let repos = RepoChecker::new(fetcher, vec![Box::new(github)], config.extra_tag_patterns.clone());

    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<PackageFacts>>> = Mutex::new(vec![None; packages.len()]);
    let workers = config.workers.clamp(1, packages.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(coord) = packages.get(i) else { break };
                let facts = collect_package(coord, &registry, &repos, fetcher.mode(), now);
                results.lock().unwrap()[i] = Some(facts);
            });
        }
    });
    let facts: Vec<PackageFacts> = results
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|f| f.expect("every package collected"))
        .collect();

    let policy = config.policy();
    let mut pond = DirtyPond {
        schema_version: SCHEMA_VERSION,
        tool_version: TOOL_VERSION.to_string(),
        project: tree.project.clone(),
        analyzed_at: now,
        mode: fetcher.mode(),
        config: config.clone(),
        extraction,
        tree,
        facts: Vec::new(),
        findings: Vec::new(),
        indeterminate: Vec::new(),
        notes: Vec::new(),
        summary: Default::default(),
    };
    for f in &facts {
        let detection = detect(f, &pond.tree, &policy);
        for mut finding in detection.findings {
            finding.ignored = config.ignore_for(&finding).map(|e| e.justification.clone());
            pond.findings.push(finding);
        }
        pond.indeterminate.extend(detection.indeterminate);
        pond.notes.extend(detection.notes);
    }
    pond.facts = facts;
    pond.canonicalize();
    pond
}

fn collect_package(
    coord: &PackageCoordinate,
    registry: &RegistryClient<'_>,
    repos: &RepoChecker<'_>,
    mode: Mode,
    now: Timestamp,
) -> PackageFacts {
    let mut log = RequestLog::default();
    let registry_facts = match registry.fetch_registry_facts(coord, now, &mut log) {
        Ok(facts) => facts,
        Err(e) => {
            let mut facts = RegistryFacts::blank(coord.clone(), now);
            let fields: &[&str] = match coord.ecosystem {
                Ecosystem::Npm => &[FIELD_SOURCE_URL, FIELD_DEPRECATED, FIELD_SIGNATURE, FIELD_PROVENANCE],
                Ecosystem::Maven => &[FIELD_SOURCE_URL, FIELD_SIGNATURE],
            };
            for field in fields {
                facts.fail(field, e.to_string());
            }
            facts
        }
    };

    let repo = registry_facts.normalized_source_url.as_deref().map(|url| {
        match repos.check(url, coord, registry_facts.release_sha.as_deref(), &mut log) {
            Ok(facts) => facts,
            Err(e) => RepoFacts::failed(url, FIELD_REPOSITORY, &e),
        }
    });

    PackageFacts {
        coordinate: coord.clone(),
        registry: registry_facts,
        repo,
        fetch: FetchProvenance {
            mode,
            request_digest: log.digest(),
            requests: log.requests(),
        },
    }
}

/// Extracts the tree for `input` and analyzes it.
pub fn run_analysis(
    input: &ProjectInput,
    config: &GateConfig,
    fetcher: &Fetcher,
    clock: &dyn Clock,
) -> Result<DirtyPond, AnalysisError> {
    let (tree, extraction) = load_tree(input)?;
    if tree.project.ecosystem != input.ecosystem {
        return Err(AnalysisError::Setup(format!(
            "{} is not a {} project",
            input.manifest.display(),
            input.ecosystem.display_name()
        )));
    }
    Ok(analyze_tree(tree, extraction, config, fetcher, clock))
}
