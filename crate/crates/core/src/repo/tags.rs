//! Release tag candidates derived from a package version.

use crate::model::{Ecosystem, PackageCoordinate};

/// Patterns tried for every ecosystem, in order.
pub const COMMON_PATTERNS: [&str; 7] = [
    "v{version}",
    "{version}",
    "{name}-{version}",
    "{name}@{version}",
    "release-{version}",
    "release/{version}",
    "r{version}",
];

/// Tried after [`COMMON_PATTERNS`] for Maven artifacts.
pub const MAVEN_PATTERNS: [&str; 1] = ["{artifactId}-{version}"];

/// The built-in ordered pattern list for `ecosystem`.
pub fn documented_patterns(ecosystem: Ecosystem) -> Vec<&'static str> {
    let mut out = COMMON_PATTERNS.to_vec();
    if ecosystem == Ecosystem::Maven {
        out.extend(MAVEN_PATTERNS);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Candidate {
    pub pattern: String,
    pub tag: String,
}

/// Substitutes `{name}`, `{artifactId}` and `{version}`.
///
/// `{name}` is the full package name (`@scope/pkg`, `group:artifact`),
/// `{artifactId}` the part after the scope or group.
pub fn render(pattern: &str, coord: &PackageCoordinate) -> String {
    pattern
        .replace("{name}", &coord.name)
        .replace("{artifactId}", coord.short_name())
        .replace("{version}", &coord.version)
}

/// Ordered candidate tags for `coord`: built-in patterns followed by
/// `extra` ones. Candidates that are not legal git tag names (a Maven
/// `{name}` contains ':') are skipped, and a tag produced by an earlier
/// pattern is not tried again.
pub fn candidates(coord: &PackageCoordinate, extra: &[String]) -> Vec<Candidate> {
    let mut out: Vec<Candidate> = Vec::new();
    let patterns = documented_patterns(coord.ecosystem)
        .into_iter()
        .map(str::to_string)
        .chain(extra.iter().cloned());
    for pattern in patterns {
        let tag = render(&pattern, coord);
        if is_valid_tag_name(&tag) && !out.iter().any(|c| c.tag == tag) {
            out.push(Candidate { pattern, tag });
        }
    }
    out
}

/// The rules of `git check-ref-format` applied to `refs/tags/<tag>`.
pub fn is_valid_tag_name(tag: &str) -> bool {
    if tag.is_empty() || tag.starts_with('-') || tag.ends_with('.') || tag.ends_with('/') {
        return false;
    }
    if tag.starts_with('/') || tag.contains("//") || tag.contains("..") || tag.contains("@{") {
        return false;
    }
    if tag
        .chars()
        .any(|c| c.is_ascii_control() || matches!(c, ' ' | '~' | '^' | ':' | '?' | '*' | '[' | '\\'))
    {
        return false;
    }
    tag.split('/')
        .all(|part| !part.starts_with('.') && !part.ends_with(".lock"))
}
