//! Versioned state snapshots.
//!
//! Binary layout: the 8-byte magic `SVBSNAP\0`, a little-endian `u32`
//! format version, a little-endian `u64` payload length, then the payload
//! (the design and solver state as JSON). A CSV mirror lists every numeric
//! leaf of the payload as `path,value` for inspection.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use streamvb::model::Fitted;

use crate::design::Design;
use crate::error::CliError;
use crate::output::write_atomic;

const MAGIC: &[u8; 8] = b"SVBSNAP\0";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub design: Design,
    pub fitted: Fitted,
    /// Records read from the source, including skipped ones.
    pub records_seen: usize,
    pub skipped: usize,
}

impl Snapshot {
    pub fn to_bytes(&self) -> Result<Vec<u8>, CliError> {
        let payload = serde_json::to_vec(self).map_err(|e| CliError::Snapshot(e.to_string()))?;
        let mut out = Vec::with_capacity(20 + payload.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
        out.extend_from_slice(&payload);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CliError> {
        let bad = |m: &str| CliError::Snapshot(m.to_string());
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(bad("not a snapshot file"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(CliError::Snapshot(format!("unsupported snapshot version {version}")));
        }
        let len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        if bytes.len() != 20 + len {
            return Err(bad("snapshot is truncated"));
        }
        serde_json::from_slice(&bytes[20..]).map_err(|e| CliError::Snapshot(e.to_string()))
    }

    pub fn csv_mirror(&self) -> Result<String, CliError> {
        let v = serde_json::to_value(self).map_err(|e| CliError::Snapshot(e.to_string()))?;
        let mut out = String::from("path,value\n");
        flatten(&v, &mut String::new(), &mut out);
        Ok(out)
    }

    pub fn save(&self, dir: &Path) -> Result<(), CliError> {
        write_atomic(&dir.join("state.bin"), &self.to_bytes()?)?;
        write_atomic(&dir.join("state.csv"), self.csv_mirror()?.as_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        Snapshot::from_bytes(&std::fs::read(path)?)
    }
}

fn flatten(v: &Value, path: &mut String, out: &mut String) {
    match v {
        Value::Number(n) => {
            out.push_str(&format!("{path},{n}\n"));
        }
        Value::Array(items) => {
            for (i, item) in items.iter().enumerate() {
                let len = path.len();
                path.push_str(&format!("[{i}]"));
                flatten(item, path, out);
                path.truncate(len);
            }
        }
        Value::Object(map) => {
            for (k, item) in map {
                let len = path.len();
                if !path.is_empty() {
                    path.push('.');
                }
                path.push_str(k);
                flatten(item, path, out);
                path.truncate(len);
            }
        }
        _ => {}
    }
}
