//! Report header and JSON writing shared by every command.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::probe::GbtConfig;
use crate::{Error, Result, VERSION};

/// Provenance block at the top of every emitted report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportHeader {
    pub tool: String,
    pub version: String,
    /// SHA-256 prefix of the canonical JSON of the effective config.
    pub config_hash: String,
    pub seeds: BTreeMap<String, u64>,
    pub probe: GbtConfig,
}

impl ReportHeader {
    pub fn new<C: Serialize>(config: &C, seeds: &[(&str, u64)], probe: &GbtConfig) -> Result<Self> {
        Ok(ReportHeader {
            tool: "eafd".into(),
            version: VERSION.into(),
            config_hash: config_hash(config)?,
            seeds: seeds.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            probe: probe.clone(),
        })
    }
}

pub fn config_hash<C: Serialize>(config: &C) -> Result<String> {
    // Round-tripping through Value sorts object keys.
    let value = serde_json::to_value(config)?;
    let bytes = serde_json::to_vec(&value)?;
    Ok(hex::encode(&Sha256::digest(&bytes)[..8]))
}

/// Pretty JSON with a trailing newline.
pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, to_json_string(value)?).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = config_hash(&GbtConfig::default()).unwrap();
        assert_eq!(a, config_hash(&GbtConfig::default()).unwrap());
        let other = GbtConfig { n_trees: 7, ..Default::default() };
        assert_ne!(a, config_hash(&other).unwrap());
        assert_eq!(a.len(), 16);
    }
}
