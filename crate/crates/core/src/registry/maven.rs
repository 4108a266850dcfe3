//! Maven Central: artifact descriptors (POM), parent traversal for SCM
//! discovery, and detached `.asc` signatures verified against keys from a
//! local keyring or keyservers.
//!
//! The signature checked is the one over the POM, which every artifact
//! published to Central carries regardless of packaging.

use std::collections::BTreeMap;
use std::path::Path;

use pgp::composed::SignedPublicKey;

use super::signature::{key_ids, parse_public_keys, signature_issuers, verify_pgp, PgpOutcome};
use super::{is_fatal, RegistryConfig, RegistryFacts, SignatureStatus, FIELD_SIGNATURE, FIELD_SOURCE_URL};
use crate::clock::Timestamp;
use crate::fixtures::{RequestKey, ANY_VERSION};
use crate::http::{fetch_logged, FetchError, Fetcher, RequestLog};
use crate::model::PackageCoordinate;

/// Keys from the local keyring. Keyserver answers are memoized by the
/// fetcher, so every lookup still shows up in the package's request log.
pub(super) struct KeyCache {
    local: Vec<SignedPublicKey>,
}

impl KeyCache {
    pub(super) fn load(dir: Option<&Path>) -> Self {
        let mut local = Vec::new();
        if let Some(dir) = dir {
            if let Ok(entries) = std::fs::read_dir(dir) {
                let mut paths: Vec<_> = entries.filter_map(|e| e.ok().map(|e| e.path())).collect();
                paths.sort();
                for path in paths {
                    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
                    if matches!(ext, "asc" | "gpg" | "pgp" | "key") {
                        if let Ok(bytes) = std::fs::read(&path) {
                            local.extend(parse_public_keys(&bytes));
                        }
                    }
                }
            }
        }
        KeyCache { local }
    }
}

#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub(super) struct Pom {
    pub group_id: Option<String>,
    pub artifact_id: Option<String>,
    pub version: Option<String>,
    pub parent: Option<(String, String, String)>,
    pub scm_url: Option<String>,
    pub scm_tag: Option<String>,
    pub properties: BTreeMap<String, String>,
}

fn child_text<'a>(node: roxmltree::Node<'a, 'a>, name: &str) -> Option<String> {
    node.children()
        .find(|c| c.is_element() && c.tag_name().name() == name)
        .and_then(|c| c.text())
        .map(|t| t.trim().to_string())
        .filter(|t| !t.is_empty())
}

fn child<'a>(node: roxmltree::Node<'a, 'a>, name: &str) -> Option<roxmltree::Node<'a, 'a>> {
    node.children().find(|c| c.is_element() && c.tag_name().name() == name)
}

pub(super) fn parse_pom(bytes: &[u8]) -> Result<Pom, String> {
    let text = std::str::from_utf8(bytes).map_err(|e| format!("POM is not UTF-8: {e}"))?;
    let doc = roxmltree::Document::parse(text).map_err(|e| format!("unparseable POM: {e}"))?;
    let project = doc.root_element();
    if project.tag_name().name() != "project" {
        return Err("POM root element is not <project>".into());
    }
    let mut pom = Pom {
        group_id: child_text(project, "groupId"),
        artifact_id: child_text(project, "artifactId"),
        version: child_text(project, "version"),
        ..Pom::default()
    };
    if let Some(parent) = child(project, "parent") {
        if let (Some(g), Some(a), Some(v)) = (
            child_text(parent, "groupId"),
            child_text(parent, "artifactId"),
            child_text(parent, "version"),
        ) {
            pom.parent = Some((g, a, v));
        }
    }
    if let Some(scm) = child(project, "scm") {
        pom.scm_url = child_text(scm, "url")
            .or_else(|| child_text(scm, "connection"))
            .or_else(|| child_text(scm, "developerConnection"));
        pom.scm_tag = child_text(scm, "tag");
    }
    if let Some(props) = child(project, "properties") {
        for p in props.children().filter(|c| c.is_element()) {
            if let Some(text) = p.text() {
                pom.properties
                    .insert(p.tag_name().name().to_string(), text.trim().to_string());
            }
        }
    }
    Ok(pom)
}

/// Expands `${...}` references from the project's own coordinates and
/// properties. Unknown references are left in place.
fn interpolate(value: &str, pom: &Pom, coord: &PackageCoordinate) -> String {
    let mut out = value.to_string();
    for _ in 0..5 {
        let Some(start) = out.find("${") else { break };
        let Some(len) = out[start..].find('}') else { break };
        let name = &out[start + 2..start + len];
        let replacement = match name {
            "project.artifactId" | "artifactId" | "pom.artifactId" => Some(coord.short_name().to_string()),
            "project.groupId" | "groupId" | "pom.groupId" => coord.namespace().map(str::to_string),
            "project.version" | "version" | "pom.version" => Some(coord.version.clone()),
            other => pom.properties.get(other).cloned(),
        };
        match replacement {
            Some(r) => out.replace_range(start..start + len + 1, &r),
            None => break,
        }
    }
    out
}

fn is_commit_sha(tag: &str) -> bool {
    (7..=40).contains(&tag.len()) && tag.chars().all(|c| c.is_ascii_hexdigit())
}

fn artifact_base(config: &RegistryConfig, group: &str, artifact: &str, version: &str) -> String {
    format!(
        "{}/{}/{artifact}/{version}/{artifact}-{version}",
        config.maven_repository.trim_end_matches('/'),
        group.replace('.', "/")
    )
}

enum PomFetch {
    Found(Vec<u8>),
    NotFound(u16),
}

fn fetch_pom(
    fetcher: &Fetcher,
    config: &RegistryConfig,
    group: &str,
    artifact: &str,
    version: &str,
    log: &mut RequestLog,
) -> Result<PomFetch, FetchError> {
    let key = RequestKey::new("maven", format!("{group}:{artifact}"), version, "pom");
    let url = format!("{}.pom", artifact_base(config, group, artifact, version));
    let resp = fetch_logged(fetcher, log, &key, &url, &[])?;
    if resp.status == 200 {
        Ok(PomFetch::Found(resp.body))
    } else if resp.status >= 500 {
        Err(FetchError::Network {
            url,
            message: format!("HTTP {}", resp.status),
        })
    } else {
        Ok(PomFetch::NotFound(resp.status))
    }
}

pub(super) fn fetch(
    fetcher: &Fetcher,
    config: &RegistryConfig,
    keys: &KeyCache,
    coord: &PackageCoordinate,
    now: Timestamp,
    log: &mut RequestLog,
) -> Result<RegistryFacts, FetchError> {
    let mut facts = RegistryFacts::blank(coord.clone(), now);
    let (group, artifact) = coord.name.split_once(':').expect("validated maven coordinate");

    let pom_bytes = match fetch_pom(fetcher, config, group, artifact, &coord.version, log) {
        Err(e) if is_fatal(&e) => return Err(e),
        Err(e) => {
            facts.fail(FIELD_SOURCE_URL, e.to_string());
            facts.fail(FIELD_SIGNATURE, e.to_string());
            return Ok(facts);
        }
        Ok(PomFetch::NotFound(status)) => {
            let msg = format!("artifact descriptor not found (HTTP {status})");
            facts.fail(FIELD_SOURCE_URL, &msg);
            facts.fail(FIELD_SIGNATURE, &msg);
            return Ok(facts);
        }
        Ok(PomFetch::Found(bytes)) => bytes,
    };

    match parse_pom(&pom_bytes) {
        Ok(pom) => {
            if let Some(tag) = pom.scm_tag.as_deref().filter(|t| is_commit_sha(t)) {
                facts.release_sha = Some(tag.to_string());
            }
            match discover_scm(fetcher, config, coord, pom, log) {
                Ok(url) => facts.set_source_url(url),
                Err(e) if is_fatal(&e) => return Err(e),
                Err(e) => facts.fail(FIELD_SOURCE_URL, e.to_string()),
            }
        }
        Err(e) => facts.fail(FIELD_SOURCE_URL, e),
    }

    check_signature(
        fetcher,
        config,
        keys,
        group,
        artifact,
        &coord.version,
        &pom_bytes,
        &mut facts,
        log,
    )?;
    Ok(facts)
}

/// Own SCM entry first, then parent descriptors up to the configured depth.
fn discover_scm(
    fetcher: &Fetcher,
    config: &RegistryConfig,
    coord: &PackageCoordinate,
    pom: Pom,
    log: &mut RequestLog,
) -> Result<Option<String>, FetchError> {
    let mut current = pom;
    let mut current_coord = coord.clone();
    for depth in 0..=config.max_parent_depth {
        if let Some(url) = &current.scm_url {
            if depth > 0 {
                log.note(format!("scm inherited from {current_coord}"));
            }
            return Ok(Some(interpolate(url, &current, &current_coord)));
        }
        let Some((g, a, v)) = current.parent.clone() else {
            return Ok(None);
        };
        if depth == config.max_parent_depth {
            log.note(format!("parent traversal stopped at depth {depth}"));
            return Ok(None);
        }
        let bytes = match fetch_pom(fetcher, config, &g, &a, &v, log)? {
            PomFetch::Found(bytes) => bytes,
            PomFetch::NotFound(_) => return Ok(None),
        };
        current = match parse_pom(&bytes) {
            Ok(p) => p,
            Err(_) => return Ok(None),
        };
        current_coord = match PackageCoordinate::maven(&format!("{g}:{a}"), &v) {
            Ok(c) => c,
            Err(_) => return Ok(None),
        };
    }
    Ok(None)
}

#[allow(clippy::too_many_arguments)]
fn check_signature(
    fetcher: &Fetcher,
    config: &RegistryConfig,
    keys: &KeyCache,
    group: &str,
    artifact: &str,
    version: &str,
    pom_bytes: &[u8],
    facts: &mut RegistryFacts,
    log: &mut RequestLog,
) -> Result<(), FetchError> {
    let key = RequestKey::new("maven", format!("{group}:{artifact}"), version, "pom.asc");
    let url = format!("{}.pom.asc", artifact_base(config, group, artifact, version));
    let sig = match fetch_logged(fetcher, log, &key, &url, &[]) {
        Err(e) if is_fatal(&e) => return Err(e),
        Err(e) => {
            facts.fail(FIELD_SIGNATURE, e.to_string());
            return Ok(());
        }
        Ok(resp) if resp.status == 404 => {
            facts.signature = SignatureStatus::Missing;
            facts.signature_evidence = Some(format!("no detached signature at {url}"));
            return Ok(());
        }
        Ok(resp) if resp.status != 200 => {
            facts.fail(
                FIELD_SIGNATURE,
                format!("signature request answered HTTP {}", resp.status),
            );
            return Ok(());
        }
        Ok(resp) => resp.body,
    };

    let mut keyring: Vec<SignedPublicKey> = keys.local.clone();
    if let Ok(issuers) = signature_issuers(&sig) {
        let local: Vec<String> = keys.local.iter().flat_map(key_ids).collect();
        for issuer in issuers.into_iter().filter(|i| !local.contains(i)) {
            keyring.extend(lookup_key(fetcher, config, &issuer, log)?);
        }
    }

    match verify_pgp(&sig, pom_bytes, &keyring) {
        PgpOutcome::Valid { key_id } => {
            facts.signature = SignatureStatus::VerifiedValid;
            facts.signature_evidence = Some(format!("{url} verified with key {key_id}"));
        }
        PgpOutcome::Invalid { reason } => {
            facts.signature = SignatureStatus::Invalid;
            facts.signature_evidence = Some(format!("{url}: {reason}"));
        }
        PgpOutcome::KeyUnavailable { issuers } => {
            facts.signature = SignatureStatus::Present;
            facts.signature_evidence = Some(format!(
                "{url} present but signing key {} unavailable",
                issuers.join(", ")
            ));
        }
    }
    Ok(())
}

fn lookup_key(
    fetcher: &Fetcher,
    config: &RegistryConfig,
    key_id: &str,
    log: &mut RequestLog,
) -> Result<Vec<SignedPublicKey>, FetchError> {
    let mut found = Vec::new();
    for server in &config.keyservers {
        let host = url::Url::parse(server)
            .ok()
            .and_then(|u| u.host_str().map(str::to_string))
            .unwrap_or_else(|| server.clone());
        let key = RequestKey::new("keys", key_id, ANY_VERSION, host);
        let url = format!(
            "{}/pks/lookup?op=get&options=mr&search=0x{key_id}",
            server.trim_end_matches('/')
        );
        match fetch_logged(fetcher, log, &key, &url, &[]) {
            Err(e) if is_fatal(&e) => return Err(e),
            Ok(resp) if resp.status == 200 => {
                found = parse_public_keys(&resp.body);
                if !found.is_empty() {
                    break;
                }
            }
            _ => {}
        }
    }
    Ok(found)
}

#[cfg(test)]
mod tests {
    use super::*;

    const POM: &str = r#"<?xml version="1.0" encoding="UTF-8"?>
<project xmlns="http://maven.apache.org/POM/4.0.0">
  <modelVersion>4.0.0</modelVersion>
  <parent>
    <groupId>org.example</groupId>
    <artifactId>parent</artifactId>
    <version>3</version>
  </parent>
  <artifactId>lib</artifactId>
  <version>1.2.3</version>
  <properties><repo.name>lib-repo</repo.name></properties>
  <scm>
    <connection>scm:git:https://github.com/example/${repo.name}.git</connection>
    <tag>0a1b2c3d4e5f</tag>
  </scm>
</project>"#;

    #[test]
    fn parses_descriptor() {
        let pom = parse_pom(POM.as_bytes()).unwrap();
        assert_eq!(pom.artifact_id.as_deref(), Some("lib"));
        assert_eq!(pom.group_id, None);
        assert_eq!(pom.parent, Some(("org.example".into(), "parent".into(), "3".into())));
        assert_eq!(
            pom.scm_url.as_deref(),
            Some("scm:git:https://github.com/example/${repo.name}.git")
        );
        assert!(is_commit_sha(pom.scm_tag.as_deref().unwrap()));
        let coord = PackageCoordinate::maven("org.example:lib", "1.2.3").unwrap();
        assert_eq!(
            interpolate(pom.scm_url.as_deref().unwrap(), &pom, &coord),
            "scm:git:https://github.com/example/lib-repo.git"
        );
    }

    #[test]
    fn interpolation_of_coordinates() {
        let coord = PackageCoordinate::maven("org.example:lib", "1.2.3").unwrap();
        let pom = Pom::default();
        assert_eq!(
            interpolate(
                "https://github.com/x/${project.artifactId}/tree/${project.version}",
                &pom,
                &coord
            ),
            "https://github.com/x/lib/tree/1.2.3"
        );
        assert_eq!(interpolate("${unknown}/x", &pom, &coord), "${unknown}/x");
    }

    #[test]
    fn rejects_non_pom() {
        assert!(parse_pom(b"<html></html>").is_err());
        assert!(parse_pom(b"not xml").is_err());
    }

    #[test]
    fn sha_tags() {
        assert!(is_commit_sha("0a1b2c3"));
        assert!(!is_commit_sha("v1.2.3"));
        assert!(!is_commit_sha("HEAD"));
    }
}
