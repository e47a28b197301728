//! Optional on-disk cache of row results, enabled by `HPCHAIN_CACHE_DIR`.

use std::path::PathBuf;

use serde_json::Value;
use sha2::{Digest, Sha256};

pub const CACHE_ENV: &str = "HPCHAIN_CACHE_DIR";

pub struct RowCache {
    dir: PathBuf,
}

impl RowCache {
    pub fn from_env() -> Option<Self> {
        let dir = std::env::var_os(CACHE_ENV)?;
        if dir.is_empty() {
            return None;
        }
        let dir = PathBuf::from(dir);
        std::fs::create_dir_all(&dir).ok()?;
        Some(RowCache { dir })
    }

    /// Key over everything that determines a row's result cells.
    pub fn key(mode: &str, key_cells: &[Value], settings: &Value) -> String {
        let material = serde_json::json!([env!("CARGO_PKG_VERSION"), mode, key_cells, settings]);
        hex(&Sha256::digest(material.to_string().as_bytes()))
    }

    pub fn get(&self, key: &str) -> Option<Vec<Value>> {
        let text = std::fs::read_to_string(self.dir.join(format!("{key}.json"))).ok()?;
        serde_json::from_str(&text).ok()
    }

    /// Best effort: a failed write only costs a recomputation later.
    pub fn put(&self, key: &str, cells: &[Value]) {
        let tmp = self.dir.join(format!("{key}.{}.tmp", std::process::id()));
        let text = serde_json::to_string(cells).expect("cells serialize");
        if std::fs::write(&tmp, text).is_ok() {
            let _ = std::fs::rename(&tmp, self.dir.join(format!("{key}.json")));
        }
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// First eight bytes of the SHA-256 of `text`.
pub fn hash64(text: &str) -> u64 {
    let d = Sha256::digest(text.as_bytes());
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}
