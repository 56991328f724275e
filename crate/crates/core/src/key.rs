//! Measurement keys: dot-separated lowercase identifiers.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KeyError {
    #[error("invalid key name {0:?}: expected segment(.segment)* of [a-z0-9_]+")]
    InvalidName(String),
}

/// Name of one measurement kind, e.g. `driver.heart_rate_bpm`.
///
/// Keys follow the pattern `segment(.segment)*` with segments of `[a-z0-9_]+`
/// and must resolve in the data dictionary wherever they are used.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct DataKey(String);

impl DataKey {
    pub fn new(name: impl Into<String>) -> Result<Self, KeyError> {
        let name = name.into();
        if valid_name(&name) {
            Ok(DataKey(name))
        } else {
            Err(KeyError::InvalidName(name))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// First segment, e.g. `driver` for `driver.heart_rate_bpm`.
    pub fn group(&self) -> &str {
        self.0.split('.').next().unwrap_or(&self.0)
    }
}

fn valid_name(s: &str) -> bool {
    !s.is_empty()
        && s.split('.').all(|seg| {
            !seg.is_empty()
                && seg
                    .bytes()
                    .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_')
        })
}

impl FromStr for DataKey {
    type Err = KeyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DataKey::new(s)
    }
}

impl TryFrom<String> for DataKey {
    type Error = KeyError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        DataKey::new(s)
    }
}

impl From<DataKey> for String {
    fn from(k: DataKey) -> String {
        k.0
    }
}

impl AsRef<str> for DataKey {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for DataKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for DataKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DataKey({})", self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accepts_canonical_names() {
        for name in [
            "driver.heart_rate_bpm",
            "traffic.light.phase",
            "env.noise_db",
            "x",
            "a1.b_2.c",
        ] {
            assert!(DataKey::new(name).is_ok(), "{name}");
        }
    }

    #[test]
    fn rejects_malformed_names() {
        for name in ["", ".", "a.", ".a", "Driver.mood", "a b", "a..b", "a-b"] {
            assert!(DataKey::new(name).is_err(), "{name}");
        }
    }

    #[test]
    fn group_is_first_segment() {
        let k = DataKey::new("traffic.light.phase").unwrap();
        assert_eq!(k.group(), "traffic");
    }

    #[test]
    fn serde_rejects_invalid() {
        let ok: DataKey = serde_json::from_str("\"env.road.friction\"").unwrap();
        assert_eq!(ok.as_str(), "env.road.friction");
        assert!(serde_json::from_str::<DataKey>("\"Env.Friction\"").is_err());
    }
}
