use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ProviderError;

/// SHA-256 over the length-prefixed tuple `(kind, provider, source, target,
/// text)`, as 64 lowercase hex digits.
pub fn cache_key(kind: &str, provider: &str, source: &str, target: &str, text: &str) -> String {
    let mut h = Sha256::new();
    for part in [kind, provider, source, target, text] {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part.as_bytes());
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CachedPayload {
    Text(String),
    Vector(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub key: String,
    pub kind: String,
    pub provider: String,
    pub source: String,
    pub target: String,
    pub text: String,
    pub payload: CachedPayload,
    /// Seconds since the Unix epoch.
    pub created_at: u64,
}

impl CacheEntry {
    pub fn recompute_key(&self) -> String {
        cache_key(
            &self.kind,
            &self.provider,
            &self.source,
            &self.target,
            &self.text,
        )
    }
}

#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct CacheStats {
    pub entries: usize,
    pub translations: usize,
    pub embeddings: usize,
    pub bytes: u64,
    pub unreadable: usize,
}

/// One JSON file per entry, named by its key. Writes go to a temporary file
/// and are renamed into place, so readers never see a partial entry.
#[derive(Debug, Clone)]
pub struct DiskCache {
    dir: PathBuf,
}

static TMP_SEQ: AtomicU64 = AtomicU64::new(0);

fn is_key_name(name: &str) -> bool {
    name.len() == 64 && name.bytes().all(|b| b.is_ascii_hexdigit())
}

impl DiskCache {
    pub fn new(dir: impl AsRef<Path>) -> Self {
        DiskCache {
            dir: dir.as_ref().to_path_buf(),
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn entry_path(&self, key: &str) -> PathBuf {
        self.dir.join(key)
    }

    /// Missing, unreadable or mismatched entries are all misses.
    pub fn get(&self, key: &str) -> Option<CacheEntry> {
        let bytes = fs::read(self.entry_path(key)).ok()?;
        let entry: CacheEntry = serde_json::from_slice(&bytes).ok()?;
        (entry.key == key).then_some(entry)
    }

    pub fn put(&self, entry: &CacheEntry) -> Result<(), ProviderError> {
        let err = |e: std::io::Error| ProviderError::Cache(e.to_string());
        fs::create_dir_all(&self.dir).map_err(err)?;
        let tmp = self.dir.join(format!(
            ".tmp-{}-{}-{}",
            entry.key,
            std::process::id(),
            TMP_SEQ.fetch_add(1, Ordering::Relaxed)
        ));
        let bytes = serde_json::to_vec(entry).map_err(|e| ProviderError::Cache(e.to_string()))?;
        let mut f = fs::File::create(&tmp).map_err(err)?;
        f.write_all(&bytes).map_err(err)?;
        f.sync_all().map_err(err)?;
        drop(f);
        fs::rename(&tmp, self.entry_path(&entry.key)).map_err(err)
    }

    pub fn stats(&self) -> std::io::Result<CacheStats> {
        let mut stats = CacheStats::default();
        let rd = match fs::read_dir(&self.dir) {
            Ok(rd) => rd,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(stats),
            Err(e) => return Err(e),
        };
        for item in rd {
            let item = item?;
            let name = item.file_name();
            if !is_key_name(&name.to_string_lossy()) {
                continue;
            }
            stats.bytes += item.metadata()?.len();
            match fs::read(item.path())
                .ok()
                .and_then(|b| serde_json::from_slice::<CacheEntry>(&b).ok())
            {
                Some(e) => {
                    stats.entries += 1;
                    match e.kind.as_str() {
                        "translate" => stats.translations += 1,
                        "embed" => stats.embeddings += 1,
                        _ => {}
                    }
                }
                None => stats.unreadable += 1,
            }
        }
        Ok(stats)
    }

    /// Removes entry files and stale temporaries; returns how many entries
    /// were deleted.
    pub fn clear(&self) -> std::io::Result<usize> {
        let rd = match fs::read_dir(&self.dir) {
            Ok(rd) => rd,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(0),
            Err(e) => return Err(e),
        };
        let mut removed = 0;
        for item in rd {
            let item = item?;
            let name = item.file_name().to_string_lossy().into_owned();
            if is_key_name(&name) {
                fs::remove_file(item.path())?;
                removed += 1;
            } else if name.starts_with(".tmp-") {
                fs::remove_file(item.path())?;
            }
        }
        Ok(removed)
    }
}

pub(crate) fn now_secs() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}
