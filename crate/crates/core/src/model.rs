//! Ecosystem-neutral vocabulary: coordinates, the smell taxonomy, severities
//! and the per-ecosystem support matrix.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ecosystem {
    Npm,
    Maven,
}

impl Ecosystem {
    pub const ALL: [Ecosystem; 2] = [Ecosystem::Npm, Ecosystem::Maven];

    pub fn as_str(self) -> &'static str {
        match self {
            Ecosystem::Npm => "npm",
            Ecosystem::Maven => "maven",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Ecosystem::Npm => "NPM",
            Ecosystem::Maven => "Maven",
        }
    }
}

impl fmt::Display for Ecosystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Ecosystem {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "npm" => Ok(Ecosystem::Npm),
            "maven" => Ok(Ecosystem::Maven),
            other => Err(format!("unknown ecosystem `{other}` (expected npm or maven)")),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CoordinateError {
    #[error("package name is empty")]
    EmptyName,
    #[error("maven name `{0}` must be `groupId:artifactId`")]
    BadMavenName(String),
    #[error("version of `{name}` is empty")]
    EmptyVersion { name: String },
    #[error("version `{version}` of `{name}` is not a concrete resolved version")]
    NotConcrete { name: String, version: String },
}

/// Identity of one resolved package version.
///
/// Field order doubles as the canonical sort order used throughout the pond:
/// ecosystem, then name, then version.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PackageCoordinate {
    pub ecosystem: Ecosystem,
    pub name: String,
    pub version: String,
}

/// Version placeholder for a project root that has not been published.
pub const LOCAL_VERSION: &str = "local";

impl PackageCoordinate {
    pub fn new(
        ecosystem: Ecosystem,
        name: impl Into<String>,
        version: impl Into<String>,
    ) -> Result<Self, CoordinateError> {
        let coord = PackageCoordinate {
            ecosystem,
            name: name.into(),
            version: version.into(),
        };
        coord.validate()?;
        Ok(coord)
    }

    pub fn npm(name: &str, version: &str) -> Result<Self, CoordinateError> {
        Self::new(Ecosystem::Npm, name, version)
    }

    pub fn maven(name: &str, version: &str) -> Result<Self, CoordinateError> {
        Self::new(Ecosystem::Maven, name, version)
    }

    pub fn validate(&self) -> Result<(), CoordinateError> {
        if self.name.is_empty() {
            return Err(CoordinateError::EmptyName);
        }
        if self.ecosystem == Ecosystem::Maven {
            let mut parts = self.name.split(':');
            let ok = matches!(
                (parts.next(), parts.next(), parts.next()),
                (Some(g), Some(a), None) if !g.is_empty() && !a.is_empty()
            );
            if !ok {
                return Err(CoordinateError::BadMavenName(self.name.clone()));
            }
        }
        if self.version.is_empty() {
            return Err(CoordinateError::EmptyVersion {
                name: self.name.clone(),
            });
        }
        if !is_concrete_version(&self.version) {
            return Err(CoordinateError::NotConcrete {
                name: self.name.clone(),
                version: self.version.clone(),
            });
        }
        Ok(())
    }

    /// `groupId` for Maven, the scope (without `@`) for scoped NPM packages.
    pub fn namespace(&self) -> Option<&str> {
        match self.ecosystem {
            Ecosystem::Maven => self.name.split_once(':').map(|(g, _)| g),
            Ecosystem::Npm => self
                .name
                .strip_prefix('@')
                .and_then(|rest| rest.split_once('/'))
                .map(|(scope, _)| scope),
        }
    }

    /// `artifactId` for Maven, the unscoped package name for NPM.
    pub fn short_name(&self) -> &str {
        match self.ecosystem {
            Ecosystem::Maven => self.name.split_once(':').map_or(&self.name, |(_, a)| a),
            Ecosystem::Npm => self.name.rsplit_once('/').map_or(&self.name, |(_, n)| n),
        }
    }
}

impl fmt::Display for PackageCoordinate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.name, self.version)
    }
}

/// Rejects range operators, wildcards and whitespace.
pub fn is_concrete_version(version: &str) -> bool {
    if version.is_empty() {
        return false;
    }
    const FORBIDDEN: &[char] = &['^', '~', '>', '<', '=', '*', '|', ',', '[', ']', '(', ')'];
    if version.chars().any(|c| c.is_whitespace() || FORBIDDEN.contains(&c)) {
        return false;
    }
    // "1.x", "X", "latest"-style placeholders
    let bare = version.trim_start_matches('v');
    if bare.split(['.', '-', '+']).any(|seg| seg.eq_ignore_ascii_case("x")) {
        return false;
    }
    version != "latest" && version != "*"
}

/// The nine supply chain smells. Discriminants are the stable public IDs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SmellId {
    NoSourceCodeUrl = 1,
    InvalidSourceCodeUrl = 2,
    InaccessibleTag = 3,
    Deprecated = 4,
    Fork = 5,
    NoCodeSignature = 6,
    InvalidCodeSignature = 7,
    Aliased = 8,
    NoProvenance = 9,
}

impl SmellId {
    pub const ALL: [SmellId; 9] = [
        SmellId::NoSourceCodeUrl,
        SmellId::InvalidSourceCodeUrl,
        SmellId::InaccessibleTag,
        SmellId::Deprecated,
        SmellId::Fork,
        SmellId::NoCodeSignature,
        SmellId::InvalidCodeSignature,
        SmellId::Aliased,
        SmellId::NoProvenance,
    ];

    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn from_id(id: u8) -> Option<SmellId> {
        SmellId::ALL.get(usize::from(id).wrapping_sub(1)).copied()
    }

    /// Stable machine key, used in config files and the pond.
    pub fn key(self) -> &'static str {
        match self {
            SmellId::NoSourceCodeUrl => "no-source-code-url",
            SmellId::InvalidSourceCodeUrl => "invalid-source-code-url",
            SmellId::InaccessibleTag => "inaccessible-tag",
            SmellId::Deprecated => "deprecated",
            SmellId::Fork => "fork",
            SmellId::NoCodeSignature => "no-code-signature",
            SmellId::InvalidCodeSignature => "invalid-code-signature",
            SmellId::Aliased => "aliased",
            SmellId::NoProvenance => "no-provenance",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            SmellId::NoSourceCodeUrl => "No Source Code URL",
            SmellId::InvalidSourceCodeUrl => "Invalid Source Code URL",
            SmellId::InaccessibleTag => "Inaccessible Commit SHA/Release Tag",
            SmellId::Deprecated => "Deprecated",
            SmellId::Fork => "Fork",
            SmellId::NoCodeSignature => "No Code Signature",
            SmellId::InvalidCodeSignature => "Invalid Code Signature",
            SmellId::Aliased => "Aliased",
            SmellId::NoProvenance => "No Provenance",
        }
    }

    /// Attack vectors this smell facilitates. Descriptive only.
    pub fn related_attacks(self) -> &'static [Attack] {
        use Attack::*;
        match self {
            SmellId::NoSourceCodeUrl | SmellId::InvalidSourceCodeUrl => {
                &[DistributeMaliciousVersion, DevelopMaliciousPackage]
            }
            SmellId::InaccessibleTag | SmellId::Fork | SmellId::NoProvenance => &[InjectIntoSources],
            SmellId::Deprecated => &[TakeAdvantageOfVulnerabilities],
            SmellId::NoCodeSignature | SmellId::InvalidCodeSignature => &[DistributeMaliciousVersion],
            SmellId::Aliased => &[DevelopMaliciousPackage],
        }
    }
}

impl fmt::Display for SmellId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for SmellId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Ok(n) = s.parse::<u8>() {
            return SmellId::from_id(n).ok_or_else(|| format!("unknown smell id {n}"));
        }
        let wanted = s.to_ascii_lowercase().replace('_', "-");
        SmellId::ALL
            .into_iter()
            .find(|smell| {
                smell.key() == wanted
                    || smell.title().to_ascii_lowercase().replace(' ', "-") == wanted
                    || format!("{smell:?}").to_ascii_lowercase() == wanted.replace('-', "")
            })
            .ok_or_else(|| format!("unknown smell `{s}`"))
    }
}

impl Serialize for SmellId {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.key())
    }
}

/// Accepts the numeric id as well as every spelling [`FromStr`] knows, so
/// configuration files can say `4`, `"deprecated"` or `"Deprecated"`.
impl<'de> Deserialize<'de> for SmellId {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Id(u8),
            Name(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Id(n) => SmellId::from_id(n).ok_or_else(|| serde::de::Error::custom(format!("unknown smell id {n}"))),
            Raw::Name(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Attack {
    DistributeMaliciousVersion,
    DevelopMaliciousPackage,
    InjectIntoSources,
    TakeAdvantageOfVulnerabilities,
}

impl Attack {
    pub fn description(self) -> &'static str {
        match self {
            Attack::DistributeMaliciousVersion => "distribute malicious version of legitimate package",
            Attack::DevelopMaliciousPackage => "develop and advertise distinct malicious package",
            Attack::InjectIntoSources => "inject into sources of legitimate package",
            Attack::TakeAdvantageOfVulnerabilities => "take advantage of known vulnerabilities",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Low,
    Medium,
    High,
    Critical,
}

impl Severity {
    pub const ALL: [Severity; 4] = [Severity::Low, Severity::Medium, Severity::High, Severity::Critical];

    pub fn as_str(self) -> &'static str {
        match self {
            Severity::Low => "low",
            Severity::Medium => "medium",
            Severity::High => "high",
            Severity::Critical => "critical",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Severity::Low => "Low",
            Severity::Medium => "Medium",
            Severity::High => "High",
            Severity::Critical => "Critical",
        }
    }
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Severity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "low" | "l" => Ok(Severity::Low),
            "medium" | "m" => Ok(Severity::Medium),
            "high" | "h" => Ok(Severity::High),
            "critical" | "c" => Ok(Severity::Critical),
            other => Err(format!(
                "unknown severity `{other}` (expected low, medium, high or critical)"
            )),
        }
    }
}

/// Default severity per smell: the most common practitioner rating.
///
/// Deprecated is tied 4/4 between Medium and High and resolves to High.
/// Aliased's most common answer was "no rating"; among actual ratings Low wins.
pub fn default_severity(smell: SmellId) -> Severity {
    match smell {
        SmellId::NoSourceCodeUrl => Severity::High,
        SmellId::InvalidSourceCodeUrl => Severity::Critical,
        SmellId::InaccessibleTag => Severity::High,
        SmellId::Deprecated => Severity::High,
        SmellId::Fork => Severity::Medium,
        SmellId::NoCodeSignature => Severity::High,
        SmellId::InvalidCodeSignature => Severity::Critical,
        SmellId::Aliased => Severity::Low,
        SmellId::NoProvenance => Severity::Low,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Support {
    Supported,
    Unsupported,
}

/// Which checks the registry of each ecosystem can back.
pub fn support(smell: SmellId, eco: Ecosystem) -> Support {
    match (eco, smell) {
        (Ecosystem::Maven, SmellId::Deprecated | SmellId::Aliased | SmellId::NoProvenance) => Support::Unsupported,
        _ => Support::Supported,
    }
}

pub fn is_supported(smell: SmellId, eco: Ecosystem) -> bool {
    support(smell, eco) == Support::Supported
}

pub fn supported_smells(eco: Ecosystem) -> impl Iterator<Item = SmellId> {
    SmellId::ALL.into_iter().filter(move |s| is_supported(*s, eco))
}

/// Remediation guidance shown in the report's Call to Action section.
pub fn call_to_action(smell: SmellId) -> &'static str {
    match smell {
        SmellId::NoSourceCodeUrl => {
            "Submit a pull request to the dependency's maintainers adding the correct \
             source code repository URL to the package metadata, so that consumers can \
             audit the code they install."
        }
        SmellId::InvalidSourceCodeUrl => {
            "Submit a pull request to the dependency's maintainers correcting the \
             repository URL in the package metadata; an outdated or mistyped link \
             prevents anyone from reviewing the source."
        }
        SmellId::InaccessibleTag => {
            "Submit a pull request or request to the dependency's maintainers asking for \
             correct repository metadata and proper release tagging, so every published \
             version maps to a commit SHA or release tag."
        }
        SmellId::Deprecated => {
            "Confirm the maintainers' deprecation intention and double-check for \
             alternative versions or packages that are not deprecated, then plan the \
             migration."
        }
        SmellId::Fork => {
            "Manually inspect the package and its repository to verify that the fork is \
             not malicious: compare it with the upstream project and understand why the \
             fork exists."
        }
        SmellId::NoCodeSignature => {
            "Open an issue in the dependency's repository to request that releases be \
             signed as part of the CI/CD pipeline."
        }
        SmellId::InvalidCodeSignature => {
            "Verify the code signature yourself and contact the maintainers to fix the \
             broken signature; do not consume the release until its integrity is \
             established. If the signing setup is broken, open an issue requesting a \
             fix in the CI/CD release pipeline."
        }
        SmellId::Aliased => {
            "Manually inspect the aliased package and its repository to verify that the \
             alias points at the intended package and that the alias is not malicious."
        }
        SmellId::NoProvenance => {
            "Open an issue in the dependency's repository to request the inclusion of \
             provenance (build attestation) in the CI/CD pipeline. Provenance is not yet \
             widespread, but it is where supply chain security is heading."
        }
    }
}

/// Why the smell matters; one paragraph per smell.
pub fn context(smell: SmellId) -> &'static str {
    match smell {
        SmellId::NoSourceCodeUrl => {
            "The package metadata does not link a source code repository. Without the \
             source there is no way to audit what the package runs, so neither \
             vulnerabilities nor injected malicious code can be reviewed."
        }
        SmellId::InvalidSourceCodeUrl => {
            "The package metadata links a source repository that cannot be reached \
             (for example it returns HTTP 404). Usually this is stale metadata after a \
             move, but a fake link can also simulate transparency that does not exist."
        }
        SmellId::InaccessibleTag => {
            "The repository exists but no commit SHA or release tag for this version \
             could be found. The exact source of the released artifact is unknown, which \
             breaks traceability and makes incident investigation and reproducible \
             builds impossible."
        }
        SmellId::Deprecated => {
            "The maintainers marked this version as deprecated. Deprecated packages \
             stop receiving fixes and are more likely to carry known, unpatched \
             vulnerabilities."
        }
        SmellId::Fork => {
            "The linked repository is a fork of another repository. Forks are often \
             legitimate, but they are also used to hide malicious changes behind a \
             familiar code base, so the divergence deserves a look."
        }
        SmellId::NoCodeSignature => {
            "The release is not cryptographically signed, so its authenticity and \
             integrity cannot be checked; it may have been tampered with in transit or \
             come from an unofficial source."
        }
        SmellId::InvalidCodeSignature => {
            "The release carries a signature that does not verify. The artifact may have \
             been modified after signing or signed with the wrong, expired or revoked key; \
             either way its authenticity cannot be established."
        }
        SmellId::Aliased => {
            "The package is installed under a different, self-chosen name. Aliases hide \
             which package is really installed and can be redirected to attacker \
             controlled packages without obvious signs."
        }
        SmellId::NoProvenance => {
            "The release has no provenance attestation describing how and where it was \
             built, so there is no guarantee it was built from the claimed source by a \
             trusted builder."
        }
    }
}
