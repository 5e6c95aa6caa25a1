//! `key=value` attribute blocks used by image meta and session headers.

use std::fmt;

use super::WireError;

/// Ordered attribute list. Keys may repeat to encode lists.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Meta {
    entries: Vec<(String, String)>,
}

impl Meta {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.entries.push((key.into(), value.into()));
    }

    /// Replace every value stored under `key` by a single entry.
    pub fn set(&mut self, key: impl Into<String>, value: impl Into<String>) {
        let key = key.into();
        self.entries.retain(|(k, _)| *k != key);
        self.entries.push((key, value.into()));
    }

    pub fn with(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.push(key, value);
        self
    }

    /// First value under `key`.
    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn get_all<'a>(&'a self, key: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.entries
            .iter()
            .filter(move |(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn get_f64(&self, key: &str) -> Option<f64> {
        self.get(key).and_then(|v| v.trim().parse().ok())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn validate(&self) -> Result<(), WireError> {
        for (k, v) in &self.entries {
            if k.is_empty() || k.contains(['=', '\n']) {
                return Err(WireError::invalid("meta", format!("bad key {k:?}")));
            }
            if v.contains('\n') {
                return Err(WireError::invalid("meta", format!("value of {k:?} contains newline")));
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, WireError> {
        self.validate()?;
        Ok(self.to_string().into_bytes())
    }

    pub fn parse(bytes: &[u8]) -> Result<Self, WireError> {
        let text = std::str::from_utf8(bytes).map_err(|_| WireError::Utf8("meta"))?;
        let mut meta = Meta::new();
        if text.is_empty() {
            return Ok(meta);
        }
        let Some(body) = text.strip_suffix('\n') else {
            return Err(WireError::invalid("meta", "missing final newline"));
        };
        for (n, line) in body.split('\n').enumerate() {
            let Some((k, v)) = line.split_once('=') else {
                return Err(WireError::invalid("meta", format!("line {} has no '='", n + 1)));
            };
            if k.is_empty() {
                return Err(WireError::invalid("meta", format!("line {} has empty key", n + 1)));
            }
            meta.push(k, v);
        }
        Ok(meta)
    }
}

impl fmt::Display for Meta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.entries {
            writeln!(f, "{k}={v}")?;
        }
        Ok(())
    }
}

impl<K: Into<String>, V: Into<String>> FromIterator<(K, V)> for Meta {
    fn from_iter<I: IntoIterator<Item = (K, V)>>(iter: I) -> Self {
        Self {
            entries: iter.into_iter().map(|(k, v)| (k.into(), v.into())).collect(),
        }
    }
}

/// Well-known session header keys.
pub mod keys {
    pub const HEART_RATE: &str = "heart_rate_bpm";
    pub const BSA: &str = "bsa_m2";
    pub const PATIENT_KEY: &str = "patient_key";
    pub const SCAN_KIND: &str = "scan_kind";
    pub const RESPIRATORY: &str = "respiratory";
    pub const FOV_READ: &str = "fov_read_mm";
    pub const FOV_PHASE: &str = "fov_phase_mm";
    pub const SLICE_THICKNESS: &str = "slice_thickness_mm";
    pub const SLICE_SPACING: &str = "slice_spacing_mm";
}
