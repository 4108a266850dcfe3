//! NPM registry: version manifest, registry signing keys and the
//! attestations endpoint.
//!
//! Endpoints (relative to the configured registry):
//! - `/<name>/<version>`: version manifest (`repository`, `gitHead`,
//!   `deprecated`, `dist.integrity`, `dist.signatures`, `dist.attestations`)
//! - `/-/npm/v1/keys`: public keys used for registry signatures
//! - `/-/npm/v1/attestations/<name>@<version>`: provenance bundles

use serde::Deserialize;
use serde_json::Value;

use super::signature::{npm_signed_payload, verify_npm_signature};
use super::{
    is_fatal, ProvenanceStatus, RegistryConfig, RegistryFacts, SignatureStatus, FIELD_DEPRECATED, FIELD_PROVENANCE,
    FIELD_SIGNATURE, FIELD_SOURCE_URL,
};
use crate::clock::Timestamp;
use crate::fixtures::{RequestKey, ANY_VERSION};
use crate::http::{bearer, fetch_logged, FetchError, Fetcher, RequestLog};
use crate::model::PackageCoordinate;

const SLSA_PREDICATE_PREFIX: &str = "https://slsa.dev/provenance/";

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase")]
struct VersionManifest {
    repository: Option<Value>,
    git_head: Option<String>,
    deprecated: Option<Value>,
    #[serde(default)]
    dist: Dist,
}

#[derive(Debug, Default, Deserialize)]
struct Dist {
    integrity: Option<String>,
    #[serde(default)]
    signatures: Vec<DistSignature>,
    attestations: Option<Value>,
}

#[derive(Debug, Deserialize)]
struct DistSignature {
    keyid: String,
    sig: String,
}

#[derive(Debug, Deserialize)]
struct KeysResponse {
    keys: Vec<RegistryKey>,
}

#[derive(Debug, Deserialize)]
struct RegistryKey {
    keyid: String,
    key: String,
}

fn encode_name(name: &str) -> String {
    name.replace('/', "%2F")
}

fn repository_url(value: &Value) -> Option<String> {
    match value {
        Value::String(s) => Some(s.clone()),
        Value::Object(map) => map.get("url").and_then(Value::as_str).map(str::to_string),
        _ => None,
    }
}

pub(super) fn fetch(
    fetcher: &Fetcher,
    config: &RegistryConfig,
    coord: &PackageCoordinate,
    now: Timestamp,
    log: &mut RequestLog,
) -> Result<RegistryFacts, FetchError> {
    let auth = bearer(config.npm_token.as_deref());
    let base = config.npm_registry.trim_end_matches('/');
    let mut facts = RegistryFacts::blank(coord.clone(), now);

    let key = RequestKey::new("npm", &coord.name, &coord.version, "manifest");
    let url = format!("{base}/{}/{}", encode_name(&coord.name), coord.version);
    let manifest = match fetch_logged(fetcher, log, &key, &url, &auth) {
        Err(e) if is_fatal(&e) => return Err(e),
        Err(e) => {
            fail_all(&mut facts, &e.to_string());
            return Ok(facts);
        }
        Ok(resp) if resp.status != 200 => {
            fail_all(&mut facts, &format!("registry answered HTTP {} for {url}", resp.status));
            return Ok(facts);
        }
        Ok(resp) => match serde_json::from_slice::<VersionManifest>(&resp.body) {
            Ok(m) => m,
            Err(e) => {
                fail_all(&mut facts, &format!("unparseable version manifest: {e}"));
                return Ok(facts);
            }
        },
    };

    facts.set_source_url(manifest.repository.as_ref().and_then(repository_url));
    facts.release_sha = manifest.git_head.filter(|s| !s.is_empty());

    match &manifest.deprecated {
        Some(Value::String(msg)) if !msg.is_empty() => {
            facts.deprecated = Some(true);
            facts.deprecation_message = Some(msg.clone());
        }
        Some(Value::Bool(true)) => facts.deprecated = Some(true),
        _ => facts.deprecated = Some(false),
    }

    check_signatures(fetcher, base, &auth, coord, &manifest.dist, &mut facts, log)?;

    if manifest.dist.attestations.is_none() {
        facts.provenance = Some(ProvenanceStatus::Missing);
    } else {
        let key = RequestKey::new("npm", &coord.name, &coord.version, "attestations");
        let url = format!(
            "{base}/-/npm/v1/attestations/{}@{}",
            encode_name(&coord.name),
            coord.version
        );
        match fetch_logged(fetcher, log, &key, &url, &auth) {
            Err(e) if is_fatal(&e) => return Err(e),
            Err(e) => facts.fail(FIELD_PROVENANCE, e.to_string()),
            Ok(resp) if resp.status == 404 => facts.provenance = Some(ProvenanceStatus::Missing),
            Ok(resp) if resp.status == 200 => {
                let has_slsa = serde_json::from_slice::<Value>(&resp.body)
                    .ok()
                    .and_then(|v| v.get("attestations").cloned())
                    .and_then(|a| a.as_array().cloned())
                    .unwrap_or_default()
                    .iter()
                    .any(|a| {
                        a.get("predicateType")
                            .and_then(Value::as_str)
                            .is_some_and(|p| p.starts_with(SLSA_PREDICATE_PREFIX))
                    });
                facts.provenance = Some(if has_slsa {
                    ProvenanceStatus::Present
                } else {
                    ProvenanceStatus::Missing
                });
            }
            Ok(resp) => facts.fail(
                FIELD_PROVENANCE,
                format!("attestations endpoint answered HTTP {}", resp.status),
            ),
        }
    }

    Ok(facts)
}

fn fail_all(facts: &mut RegistryFacts, message: &str) {
    for field in [FIELD_SOURCE_URL, FIELD_DEPRECATED, FIELD_SIGNATURE, FIELD_PROVENANCE] {
        facts.fail(field, message);
    }
}

fn check_signatures(
    fetcher: &Fetcher,
    base: &str,
    auth: &[(String, String)],
    coord: &PackageCoordinate,
    dist: &Dist,
    facts: &mut RegistryFacts,
    log: &mut RequestLog,
) -> Result<(), FetchError> {
    if dist.signatures.is_empty() {
        facts.signature = SignatureStatus::Missing;
        facts.signature_evidence = Some("version manifest lists no registry signatures".into());
        return Ok(());
    }
    let Some(integrity) = dist.integrity.as_deref() else {
        facts.signature = SignatureStatus::Invalid;
        facts.signature_evidence = Some("signatures present but dist.integrity is missing".into());
        return Ok(());
    };

    let key = RequestKey::new("npm", "-registry-keys", ANY_VERSION, "keys");
    let url = format!("{base}/-/npm/v1/keys");
    let keys = match fetch_logged(fetcher, log, &key, &url, auth) {
        Err(e) if is_fatal(&e) => return Err(e),
        Ok(resp) if resp.status == 200 => serde_json::from_slice::<KeysResponse>(&resp.body)
            .map(|k| k.keys)
            .unwrap_or_default(),
        _ => Vec::new(),
    };

    let payload = npm_signed_payload(&coord.name, &coord.version, integrity);
    let mut unknown = Vec::new();
    for sig in &dist.signatures {
        let Some(registry_key) = keys.iter().find(|k| k.keyid == sig.keyid) else {
            unknown.push(sig.keyid.clone());
            continue;
        };
        match verify_npm_signature(payload.as_bytes(), &sig.sig, &registry_key.key) {
            Ok(true) => {
                facts.signature = SignatureStatus::VerifiedValid;
                facts.signature_evidence = Some(format!("registry signature verified with key {}", sig.keyid));
                return Ok(());
            }
            Ok(false) => {
                facts.signature = SignatureStatus::Invalid;
                facts.signature_evidence = Some(format!(
                    "registry signature by key {} does not verify for `{payload}`",
                    sig.keyid
                ));
                return Ok(());
            }
            Err(e) => {
                facts.signature = SignatureStatus::Invalid;
                facts.signature_evidence = Some(format!("registry signature by key {} unusable: {e}", sig.keyid));
                return Ok(());
            }
        }
    }
    facts.signature = SignatureStatus::Present;
    facts.signature_evidence = Some(format!(
        "registry signature present but signing key unavailable ({})",
        unknown.join(", ")
    ));
    Ok(())
}
