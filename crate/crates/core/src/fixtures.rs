//! On-disk record/replay store for HTTP responses.
//!
//! Layout: `<root>/<namespace>/<name>/<version>/<facet>.resp` holds the body
//! and `<facet>.status` the status line (first line: numeric status, then
//! `header: value` lines). Every path component is escaped with
//! [`encode_component`].

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

/// Identifies one recorded response.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RequestKey {
    /// `npm`, `maven`, `github`, `keys`, `web`.
    pub namespace: String,
    pub name: String,
    pub version: String,
    pub facet: String,
}

/// Placeholder version for requests that are not version specific.
pub const ANY_VERSION: &str = "-";

impl RequestKey {
    pub fn new(
        namespace: impl Into<String>,
        name: impl Into<String>,
        version: impl Into<String>,
        facet: impl Into<String>,
    ) -> Self {
        RequestKey {
            namespace: namespace.into(),
            name: name.into(),
            version: version.into(),
            facet: facet.into(),
        }
    }
}

impl fmt::Display for RequestKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}/{}", self.namespace, self.name, self.version, self.facet)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordedResponse {
    pub status: u16,
    pub headers: BTreeMap<String, String>,
    pub body: Vec<u8>,
}

/// Percent-escapes every byte outside `[A-Za-z0-9._+-]` and a leading `.`,
/// so a component can never be `.`, `..` or contain a separator.
pub fn encode_component(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    for (i, byte) in raw.bytes().enumerate() {
        let plain = byte.is_ascii_alphanumeric() || matches!(byte, b'_' | b'+' | b'-') || (byte == b'.' && i > 0);
        if plain {
            out.push(byte as char);
        } else {
            out.push_str(&format!("%{byte:02X}"));
        }
    }
    if out.is_empty() {
        out.push('%');
    }
    out
}

pub fn decode_component(encoded: &str) -> Option<String> {
    if encoded == "%" {
        return Some(String::new());
    }
    let bytes = encoded.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'%' {
            let hex = encoded.get(i + 1..i + 3)?;
            out.push(u8::from_str_radix(hex, 16).ok()?);
            i += 3;
        } else {
            out.push(bytes[i]);
            i += 1;
        }
    }
    String::from_utf8(out).ok()
}

#[derive(Debug, Clone)]
pub struct FixtureStore {
    root: PathBuf,
}

impl FixtureStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        FixtureStore { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn base(&self, key: &RequestKey) -> PathBuf {
        self.root
            .join(encode_component(&key.namespace))
            .join(encode_component(&key.name))
            .join(encode_component(&key.version))
    }

    pub fn body_path(&self, key: &RequestKey) -> PathBuf {
        self.base(key).join(format!("{}.resp", encode_component(&key.facet)))
    }

    pub fn status_path(&self, key: &RequestKey) -> PathBuf {
        self.base(key).join(format!("{}.status", encode_component(&key.facet)))
    }

    /// `Ok(None)` when no fixture was recorded for `key`.
    pub fn load(&self, key: &RequestKey) -> io::Result<Option<RecordedResponse>> {
        let status_text = match fs::read_to_string(self.status_path(key)) {
            Ok(text) => text,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(e),
        };
        let mut lines = status_text.lines();
        let status = lines
            .next()
            .and_then(|l| l.trim().parse::<u16>().ok())
            .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidData, format!("bad status file for {key}")))?;
        let headers = lines
            .filter_map(|l| l.split_once(':'))
            .map(|(k, v)| (k.trim().to_ascii_lowercase(), v.trim().to_string()))
            .collect();
        let body = match fs::read(self.body_path(key)) {
            Ok(body) => body,
            Err(e) if e.kind() == io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(e),
        };
        Ok(Some(RecordedResponse { status, headers, body }))
    }

    pub fn save(&self, key: &RequestKey, response: &RecordedResponse) -> io::Result<()> {
        fs::create_dir_all(self.base(key))?;
        let mut status = format!("{}\n", response.status);
        for (name, value) in &response.headers {
            status.push_str(&format!("{name}: {value}\n"));
        }
        fs::write(self.body_path(key), &response.body)?;
        fs::write(self.status_path(key), status)
    }
}
