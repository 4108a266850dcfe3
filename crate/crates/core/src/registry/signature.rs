//! Signature checks: NPM registry ECDSA signatures and detached OpenPGP
//! signatures published next to Maven artifacts.

use std::io::Cursor;

use base64::Engine;
use p256::ecdsa::signature::Verifier;
use p256::ecdsa::{Signature as EcdsaSignature, VerifyingKey};
use p256::pkcs8::DecodePublicKey;
use pgp::composed::{Deserializable, DetachedSignature, SignedPublicKey};
use pgp::types::KeyDetails;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignatureStatus {
    /// No signature record or file.
    Missing,
    /// Signature exists but could not be verified (key unavailable).
    Present,
    VerifiedValid,
    /// Verification was attempted and failed.
    Invalid,
}

fn b64(data: &str) -> Result<Vec<u8>, String> {
    base64::engine::general_purpose::STANDARD
        .decode(data.trim())
        .map_err(|e| format!("bad base64: {e}"))
}

/// Payload the NPM registry signs for a package version.
pub fn npm_signed_payload(name: &str, version: &str, integrity: &str) -> String {
    format!("{name}@{version}:{integrity}")
}

/// Verifies a base64 DER ECDSA-P256/SHA-256 signature against a base64
/// SubjectPublicKeyInfo key. `Err` means the key or signature could not be
/// decoded at all.
pub fn verify_npm_signature(payload: &[u8], sig_b64: &str, key_b64: &str) -> Result<bool, String> {
    let key_der = b64(key_b64)?;
    let key = VerifyingKey::from_public_key_der(&key_der).map_err(|e| format!("bad registry key: {e}"))?;
    let sig_der = b64(sig_b64)?;
    let sig = match EcdsaSignature::from_der(&sig_der) {
        Ok(sig) => sig,
        Err(_) => return Ok(false),
    };
    Ok(key.verify(payload, &sig).is_ok())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PgpOutcome {
    Valid { key_id: String },
    Invalid { reason: String },
    KeyUnavailable { issuers: Vec<String> },
}

/// Parses every transferable public key in `armored` (ASCII armor or binary).
pub fn parse_public_keys(data: &[u8]) -> Vec<SignedPublicKey> {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok((keys, _)) = SignedPublicKey::from_string_many(text) {
            return keys.filter_map(Result::ok).collect();
        }
    }
    SignedPublicKey::from_bytes_many(Cursor::new(data))
        .map(|keys| keys.filter_map(Result::ok).collect())
        .unwrap_or_default()
}

fn parse_detached(data: &[u8]) -> Result<DetachedSignature, String> {
    if let Ok(text) = std::str::from_utf8(data) {
        if text.contains("-----BEGIN PGP SIGNATURE-----") {
            return DetachedSignature::from_string(text)
                .map(|(sig, _)| sig)
                .map_err(|e| format!("unparseable signature: {e}"));
        }
    }
    DetachedSignature::from_bytes(Cursor::new(data)).map_err(|e| format!("unparseable signature: {e}"))
}

/// Long key IDs (16 upper-case hex digits) named as issuer in the signature.
pub fn signature_issuers(signature: &[u8]) -> Result<Vec<String>, String> {
    let sig = parse_detached(signature)?;
    Ok(issuers_of(&sig))
}

fn issuers_of(sig: &DetachedSignature) -> Vec<String> {
    let mut ids: Vec<String> = sig
        .signature
        .issuer_key_id()
        .into_iter()
        .map(|id| hex::encode_upper(id.as_ref()))
        .collect();
    for fp in sig.signature.issuer_fingerprint() {
        let bytes = fp.as_bytes();
        if bytes.len() >= 8 {
            ids.push(hex::encode_upper(&bytes[bytes.len() - 8..]));
        }
    }
    ids.sort();
    ids.dedup();
    ids
}

/// Long key IDs of the primary key and every subkey of `key`.
pub fn key_ids(key: &SignedPublicKey) -> Vec<String> {
    std::iter::once(key.primary_key.legacy_key_id())
        .chain(key.public_subkeys.iter().map(|s| s.key.legacy_key_id()))
        .map(|id| hex::encode_upper(id.as_ref()))
        .collect()
}

fn invalid(key_id: &pgp::types::KeyId, err: pgp::errors::Error) -> PgpOutcome {
    log::debug!("signature verification failed: {err}");
    PgpOutcome::Invalid {
        reason: format!(
            "signature by key {} does not verify",
            hex::encode_upper(key_id.as_ref())
        ),
    }
}

/// Verifies a detached signature over `content` with whichever key in
/// `keyring` (primary or subkey) the signature names as issuer.
pub fn verify_pgp(signature: &[u8], content: &[u8], keyring: &[SignedPublicKey]) -> PgpOutcome {
    let sig = match parse_detached(signature) {
        Ok(sig) => sig,
        Err(reason) => return PgpOutcome::Invalid { reason },
    };
    let issuers = issuers_of(&sig);
    let matches = |id: &pgp::types::KeyId| issuers.contains(&hex::encode_upper(id.as_ref()));

    for key in keyring {
        if matches(&key.primary_key.legacy_key_id()) {
            return match sig.verify(&key.primary_key, content) {
                Ok(()) => PgpOutcome::Valid {
                    key_id: hex::encode_upper(key.primary_key.legacy_key_id().as_ref()),
                },
                Err(e) => invalid(&key.primary_key.legacy_key_id(), e),
            };
        }
        for sub in &key.public_subkeys {
            if matches(&sub.key.legacy_key_id()) {
                return match sig.verify(&sub.key, content) {
                    Ok(()) => PgpOutcome::Valid {
                        key_id: hex::encode_upper(sub.key.legacy_key_id().as_ref()),
                    },
                    Err(e) => invalid(&sub.key.legacy_key_id(), e),
                };
            }
        }
    }
    PgpOutcome::KeyUnavailable { issuers }
}
