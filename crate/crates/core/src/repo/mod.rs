//! Source repository checks: accessibility, fork status and whether the
//! released revision can be located by commit SHA or release tag.

mod github;
pub mod tags;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use url::Url;

pub use github::{GitHub, GitHubConfig};

use crate::fixtures::RequestKey;
use crate::http::{fetch_logged, FetchError, Fetcher, RequestLog};
use crate::model::PackageCoordinate;
use crate::registry::FieldError;

pub const FIELD_REPOSITORY: &str = "repository";
pub const FIELD_RELEASE: &str = "release";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Accessibility {
    Accessible,
    NotFound,
    /// Removed, disabled or blocked by the host.
    Gone,
    /// The URL is not on a supported code host; see [`RepoFacts::probe`].
    NonRepoHost,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TagResolution {
    ResolvedBySha,
    ResolvedByTag { matched_pattern: String },
    Unresolved,
}

/// Why a commit SHA from the registry metadata could not be used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShaHintIssue {
    Malformed,
    NotFound,
}

/// Outcome of a plain HTTP request to a URL outside the supported hosts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Probe {
    pub status: Option<u16>,
    pub reachable: bool,
    pub detail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepoFacts {
    pub url: String,
    /// Absent only when the lookup itself failed (see `fetch_errors`).
    pub accessibility: Option<Accessibility>,
    /// Status the host answered for the repository lookup.
    pub http_status: Option<u16>,
    pub is_fork: Option<bool>,
    pub fork_parent: Option<String>,
    /// Absent unless the repository is accessible and resolution finished.
    pub tag_resolution: Option<TagResolution>,
    pub checked_candidates: Vec<String>,
    /// Commit SHA or tag the release was located at.
    pub resolved_ref: Option<String>,
    pub sha_hint: Option<String>,
    pub sha_hint_issue: Option<ShaHintIssue>,
    pub probe: Option<Probe>,
    pub fetch_errors: Vec<FieldError>,
}

impl RepoFacts {
    pub fn new(url: impl Into<String>) -> Self {
        RepoFacts {
            url: url.into(),
            accessibility: None,
            http_status: None,
            is_fork: None,
            fork_parent: None,
            tag_resolution: None,
            checked_candidates: Vec::new(),
            resolved_ref: None,
            sha_hint: None,
            sha_hint_issue: None,
            probe: None,
            fetch_errors: Vec::new(),
        }
    }

    pub fn has_error(&self, field: &str) -> bool {
        self.fetch_errors.iter().any(|e| e.field == field)
    }

    pub fn error(&self, field: &str) -> Option<&FieldError> {
        self.fetch_errors.iter().find(|e| e.field == field)
    }

    /// Facts for a repository whose lookup failed outright.
    pub fn failed(url: &str, field: &str, err: &FetchError) -> Self {
        let mut facts = RepoFacts::new(url);
        facts.fail(field, err);
        facts
    }

    fn fail(&mut self, field: &str, err: &FetchError) {
        if !self.has_error(field) {
            self.fetch_errors.push(FieldError {
                field: field.to_string(),
                message: err.to_string(),
            });
            self.fetch_errors.sort();
        }
    }

    /// Checks the invariants linking the facets.
    pub fn validate(&self) -> Result<(), String> {
        let accessible = self.accessibility == Some(Accessibility::Accessible);
        if self.is_fork.is_some() && !accessible {
            return Err(format!(
                "{}: fork status recorded for an inaccessible repository",
                self.url
            ));
        }
        if self.tag_resolution.is_some() && !accessible {
            return Err(format!("{}: release resolved in an inaccessible repository", self.url));
        }
        if self.accessibility.is_none() && !self.has_error(FIELD_REPOSITORY) {
            return Err(format!("{}: accessibility missing without an error", self.url));
        }
        Ok(())
    }
}

/// A repository on a supported host.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RepoRef {
    pub owner: String,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RepoLookup {
    Found { fork: bool, parent: Option<String> },
    NotFound { status: u16 },
    Gone { status: u16 },
}

/// A code-hosting service API.
pub trait RepoHost: Send + Sync {
    /// Identifies the repository `url` denotes, if it is on this host.
    /// `Some(None)` means the URL is on this host but names no repository.
    fn parse(&self, url: &Url) -> Option<Option<RepoRef>>;
    fn repository(&self, repo: &RepoRef, log: &mut RequestLog) -> Result<RepoLookup, FetchError>;
    fn commit_exists(&self, repo: &RepoRef, sha: &str, log: &mut RequestLog) -> Result<bool, FetchError>;
    fn tag_exists(&self, repo: &RepoRef, tag: &str, log: &mut RequestLog) -> Result<bool, FetchError>;
}

pub struct RepoChecker<'a> {
    hosts: Vec<Box<dyn RepoHost + 'a>>,
    fetcher: &'a Fetcher,
    extra_patterns: Vec<String>,
}

impl<'a> RepoChecker<'a> {
    pub fn new(fetcher: &'a Fetcher, hosts: Vec<Box<dyn RepoHost + 'a>>, extra_patterns: Vec<String>) -> Self {
        RepoChecker {
            hosts,
            fetcher,
            extra_patterns,
        }
    }

    /// Runs every repository check for `coord` whose metadata points at
    /// `url` (already normalized). Fixture misses and rate limiting on the
    /// first lookup are returned as `Err`; every other failure lands in
    /// `fetch_errors`.
    pub fn check(
        &self,
        url: &str,
        coord: &PackageCoordinate,
        sha_hint: Option<&str>,
        log: &mut RequestLog,
    ) -> Result<RepoFacts, FetchError> {
        let mut facts = RepoFacts::new(url);
        facts.sha_hint = sha_hint.map(str::to_string);
        let parsed = Url::parse(url).ok();
        let target = parsed
            .as_ref()
            .and_then(|u| self.hosts.iter().find_map(|h| h.parse(u).map(|r| (h, r))));

        let Some((host, repo)) = target else {
            facts.accessibility = Some(Accessibility::NonRepoHost);
            facts.probe = Some(self.probe(url, log)?);
            return Ok(facts);
        };
        let Some(repo) = repo else {
            facts.accessibility = Some(Accessibility::NotFound);
            log.note(format!("{url} names no repository"));
            return Ok(facts);
        };

        match check_repo(host.as_ref(), &repo, log) {
            Err(e) if is_fatal(&e) => return Err(e),
            Err(e) => {
                facts.fail(FIELD_REPOSITORY, &e);
                return Ok(facts);
            }
            Ok(RepoLookup::NotFound { status }) => {
                facts.accessibility = Some(Accessibility::NotFound);
                facts.http_status = Some(status);
                return Ok(facts);
            }
            Ok(RepoLookup::Gone { status }) => {
                facts.accessibility = Some(Accessibility::Gone);
                facts.http_status = Some(status);
                return Ok(facts);
            }
            Ok(RepoLookup::Found { fork, parent }) => {
                facts.accessibility = Some(Accessibility::Accessible);
                facts.http_status = Some(200);
                facts.is_fork = Some(fork);
                facts.fork_parent = parent;
            }
        }

        match resolve_release(host.as_ref(), &repo, coord, sha_hint, &self.extra_patterns, log) {
            Err(e) => facts.fail(FIELD_RELEASE, &e),
            Ok(release) => {
                facts.tag_resolution = Some(release.resolution);
                facts.checked_candidates = release.checked_candidates;
                facts.resolved_ref = release.resolved_ref;
                facts.sha_hint_issue = release.sha_hint_issue;
            }
        }
        Ok(facts)
    }

    fn probe(&self, url: &str, log: &mut RequestLog) -> Result<Probe, FetchError> {
        let host = Url::parse(url)
            .ok()
            .and_then(|u| u.host_str().map(str::to_string))
            .unwrap_or_default();
        let digest = hex::encode(&Sha256::digest(url.as_bytes())[..8]);
        let key = RequestKey::new("web", host, digest, "probe");
        match fetch_logged(self.fetcher, log, &key, url, &[]) {
            Err(e) if is_fatal(&e) => Err(e),
            Err(e) => Ok(Probe {
                status: None,
                reachable: false,
                detail: Some(e.to_string()),
            }),
            Ok(resp) => Ok(Probe {
                status: Some(resp.status),
                reachable: resp.status < 400,
                detail: None,
            }),
        }
    }
}

fn is_fatal(err: &FetchError) -> bool {
    matches!(
        err,
        FetchError::FixtureMissing { .. } | FetchError::RateLimited { .. } | FetchError::Store(_)
    )
}

/// Accessibility and fork status from the host's repository metadata.
pub fn check_repo(host: &dyn RepoHost, repo: &RepoRef, log: &mut RequestLog) -> Result<RepoLookup, FetchError> {
    host.repository(repo, log)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Release {
    pub resolution: TagResolution,
    pub checked_candidates: Vec<String>,
    pub resolved_ref: Option<String>,
    pub sha_hint_issue: Option<ShaHintIssue>,
}

fn is_sha(value: &str) -> bool {
    (7..=40).contains(&value.len()) && value.chars().all(|c| c.is_ascii_hexdigit())
}

/// Locates the released revision: the commit named by `sha_hint` if it
/// exists, otherwise the first existing tag among the candidates.
pub fn resolve_release(
    host: &dyn RepoHost,
    repo: &RepoRef,
    coord: &PackageCoordinate,
    sha_hint: Option<&str>,
    extra_patterns: &[String],
    log: &mut RequestLog,
) -> Result<Release, FetchError> {
    let mut sha_hint_issue = None;
    if let Some(sha) = sha_hint {
        if !is_sha(sha) {
            sha_hint_issue = Some(ShaHintIssue::Malformed);
        } else if host.commit_exists(repo, sha, log)? {
            return Ok(Release {
                resolution: TagResolution::ResolvedBySha,
                checked_candidates: Vec::new(),
                resolved_ref: Some(sha.to_string()),
                sha_hint_issue: None,
            });
        } else {
            sha_hint_issue = Some(ShaHintIssue::NotFound);
        }
    }

    let mut checked = Vec::new();
    for candidate in tags::candidates(coord, extra_patterns) {
        checked.push(candidate.tag.clone());
        if host.tag_exists(repo, &candidate.tag, log)? {
            return Ok(Release {
                resolution: TagResolution::ResolvedByTag {
                    matched_pattern: candidate.pattern,
                },
                checked_candidates: checked,
                resolved_ref: Some(candidate.tag),
                sha_hint_issue,
            });
        }
    }
    Ok(Release {
        resolution: TagResolution::Unresolved,
        checked_candidates: checked,
        resolved_ref: None,
        sha_hint_issue,
    })
}
