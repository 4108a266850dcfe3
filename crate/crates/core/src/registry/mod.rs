//! Package registry metadata: source URL, deprecation, signature and
//! provenance for one package version.

mod maven;
mod npm;
pub mod signature;
mod source_url;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

pub use signature::SignatureStatus;
pub use source_url::normalize_source_url;

use crate::clock::Timestamp;
use crate::http::{FetchError, Fetcher, RequestLog};
use crate::model::{Ecosystem, PackageCoordinate};

pub const FIELD_SOURCE_URL: &str = "source_url";
pub const FIELD_DEPRECATED: &str = "deprecated";
pub const FIELD_SIGNATURE: &str = "signature";
pub const FIELD_PROVENANCE: &str = "provenance";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProvenanceStatus {
    Missing,
    Present,
}

/// A facet that could not be established, with the reason.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegistryFacts {
    pub coordinate: PackageCoordinate,
    /// Repository location exactly as declared in the registry metadata.
    pub source_url: Option<String>,
    /// `source_url` after [`normalize_source_url`]; absent when unusable.
    pub normalized_source_url: Option<String>,
    /// Commit the release was built from, when the metadata names one.
    pub release_sha: Option<String>,
    /// Absent when the ecosystem has no deprecation marker.
    pub deprecated: Option<bool>,
    pub deprecation_message: Option<String>,
    pub signature: SignatureStatus,
    pub signature_evidence: Option<String>,
    /// Absent when the ecosystem has no provenance attestations.
    pub provenance: Option<ProvenanceStatus>,
    pub fetched_at: Timestamp,
    pub fetch_errors: Vec<FieldError>,
}

impl RegistryFacts {
    pub fn blank(coordinate: PackageCoordinate, fetched_at: Timestamp) -> Self {
        let npm = coordinate.ecosystem == Ecosystem::Npm;
        RegistryFacts {
            coordinate,
            source_url: None,
            normalized_source_url: None,
            release_sha: None,
            deprecated: npm.then_some(false),
            deprecation_message: None,
            signature: SignatureStatus::Missing,
            signature_evidence: None,
            provenance: npm.then_some(ProvenanceStatus::Missing),
            fetched_at,
            fetch_errors: Vec::new(),
        }
    }

    pub fn has_error(&self, field: &str) -> bool {
        self.fetch_errors.iter().any(|e| e.field == field)
    }

    pub fn error(&self, field: &str) -> Option<&FieldError> {
        self.fetch_errors.iter().find(|e| e.field == field)
    }

    /// Records a failed facet and drops whatever value it had.
    pub(crate) fn fail(&mut self, field: &str, message: impl Into<String>) {
        let message = message.into();
        match field {
            FIELD_DEPRECATED => {
                self.deprecated = None;
                self.deprecation_message = None;
            }
            FIELD_PROVENANCE => self.provenance = None,
            _ => {}
        }
        if !self.has_error(field) {
            self.fetch_errors.push(FieldError {
                field: field.to_string(),
                message,
            });
            self.fetch_errors.sort();
        }
    }

    pub(crate) fn set_source_url(&mut self, raw: Option<String>) {
        let raw = raw.filter(|s| !s.trim().is_empty());
        self.normalized_source_url = raw.as_deref().and_then(normalize_source_url);
        self.source_url = raw;
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegistryConfig {
    pub npm_registry: String,
    pub maven_repository: String,
    /// Keyservers queried (in order) for Maven signing keys.
    pub keyservers: Vec<String>,
    /// Directory of `.asc`/`.gpg` public keys consulted before keyservers.
    pub keyring_dir: Option<PathBuf>,
    /// Maximum number of parent descriptors followed for SCM discovery.
    pub max_parent_depth: usize,
    #[serde(skip)]
    pub npm_token: Option<String>,
}

impl Default for RegistryConfig {
    fn default() -> Self {
        RegistryConfig {
            npm_registry: "https://registry.npmjs.org".to_string(),
            maven_repository: "https://repo1.maven.org/maven2".to_string(),
            keyservers: vec!["https://keyserver.ubuntu.com".to_string()],
            keyring_dir: None,
            max_parent_depth: 10,
            npm_token: None,
        }
    }
}

pub struct RegistryClient<'a> {
    fetcher: &'a Fetcher,
    config: &'a RegistryConfig,
    maven_keys: maven::KeyCache,
}

impl<'a> RegistryClient<'a> {
    pub fn new(fetcher: &'a Fetcher, config: &'a RegistryConfig) -> Self {
        RegistryClient {
            fetcher,
            config,
            maven_keys: maven::KeyCache::load(config.keyring_dir.as_deref()),
        }
    }

    /// Collects registry facts for `coord`. Facet failures are recorded in
    /// `fetch_errors`; an `Err` is returned only for failures that leave no
    /// facet populated (offline fixture missing, rate limiting).
    pub fn fetch_registry_facts(
        &self,
        coord: &PackageCoordinate,
        now: Timestamp,
        log: &mut RequestLog,
    ) -> Result<RegistryFacts, FetchError> {
        match coord.ecosystem {
            Ecosystem::Npm => npm::fetch(self.fetcher, self.config, coord, now, log),
            Ecosystem::Maven => maven::fetch(self.fetcher, self.config, &self.maven_keys, coord, now, log),
        }
    }
}

/// Whether `err` must abort the whole package rather than degrade a facet.
pub(crate) fn is_fatal(err: &FetchError) -> bool {
    matches!(
        err,
        FetchError::FixtureMissing { .. } | FetchError::RateLimited { .. } | FetchError::Store(_)
    )
}
