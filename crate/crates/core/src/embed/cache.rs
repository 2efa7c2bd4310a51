//! Content-addressed tensor cache.
//!
//! ```text
//! <root>/manifest.json           cache_key -> {path, rows, cols, checksum}
//! <root>/tensors/ab/abcdef….bin  one tensor file per key
//! ```
//!
//! Writes go through a single lock; the manifest is persisted by
//! [`TensorCache::flush`] with write-to-temp-then-rename.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::tensor_io::{encode_tensor, read_tensor};
use super::{EmbedError, Modality};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Relative to the cache root.
    pub path: String,
    pub rows: usize,
    pub cols: usize,
    pub checksum: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CacheManifest {
    pub entries: BTreeMap<String, ManifestEntry>,
}

impl CacheManifest {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// `sha256(provider_id ␀ modality ␀ content_hash ␀ config_hash)` in hex.
pub fn cache_key(provider_id: &str, modality: Modality, content_hash: &str, config_hash: &str) -> String {
    let mut h = Sha256::new();
    for part in [provider_id, modality.as_str(), content_hash, config_hash] {
        h.update(part.as_bytes());
        h.update([0u8]);
    }
    hex::encode(h.finalize())
}

pub struct TensorCache {
    root: PathBuf,
    manifest: RwLock<CacheManifest>,
    write_lock: Mutex<bool>,
}

impl TensorCache {
    /// Opens (or creates) a cache directory and loads its manifest.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, EmbedError> {
        let root = root.into();
        fs::create_dir_all(root.join("tensors"))?;
        let manifest_path = root.join(MANIFEST_FILE);
        let manifest = if manifest_path.exists() {
            let text = fs::read_to_string(&manifest_path)?;
            serde_json::from_str(&text)
                .map_err(|e| EmbedError::Format(format!("{}: {e}", manifest_path.display())))?
        } else {
            CacheManifest::default()
        };
        Ok(Self {
            root,
            manifest: RwLock::new(manifest),
            write_lock: Mutex::new(false),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest(&self) -> CacheManifest {
        self.manifest.read().expect("manifest lock").clone()
    }

    pub fn len(&self) -> usize {
        self.manifest.read().expect("manifest lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, key: &str) -> bool {
        self.manifest
            .read()
            .expect("manifest lock")
            .entries
            .contains_key(key)
    }

    pub fn entry(&self, key: &str) -> Option<ManifestEntry> {
        self.manifest
            .read()
            .expect("manifest lock")
            .entries
            .get(key)
            .cloned()
    }

    pub fn tensor_path(&self, key: &str) -> PathBuf {
        self.root.join(relative_path(key))
    }

    /// Stores a tensor under `key`, replacing any previous entry.
    pub fn put(&self, key: &str, values: &Array2<f32>) -> Result<ManifestEntry, EmbedError> {
        let (bytes, checksum) = encode_tensor(values)?;
        let rel = relative_path(key);
        let path = self.root.join(&rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let tmp = path.with_extension("bin.tmp");
        fs::write(&tmp, &bytes)?;
        fs::rename(&tmp, &path)?;

        let entry = ManifestEntry {
            path: rel,
            rows: values.nrows(),
            cols: values.ncols(),
            checksum,
        };
        let mut dirty = self.write_lock.lock().expect("writer lock");
        self.manifest
            .write()
            .expect("manifest lock")
            .entries
            .insert(key.to_string(), entry.clone());
        *dirty = true;
        Ok(entry)
    }

    /// Reads and verifies a tensor against both its own header and the manifest.
    pub fn get(&self, key: &str) -> Result<Array2<f32>, EmbedError> {
        let entry = self
            .entry(key)
            .ok_or_else(|| EmbedError::Missing(format!("cache key {key}")))?;
        let file = fs::File::open(self.root.join(&entry.path))?;
        let (values, header) = read_tensor(std::io::BufReader::new(file))?;
        if header.checksum != entry.checksum {
            return Err(EmbedError::ChecksumMismatch {
                expected: entry.checksum,
                found: header.checksum,
            });
        }
        if (header.rows, header.cols) != (entry.rows, entry.cols) {
            return Err(EmbedError::Shape {
                expected: (entry.rows, entry.cols),
                found: (header.rows, header.cols),
            });
        }
        Ok(values)
    }

    pub fn remove(&self, key: &str) -> Result<(), EmbedError> {
        let mut dirty = self.write_lock.lock().expect("writer lock");
        let removed = self
            .manifest
            .write()
            .expect("manifest lock")
            .entries
            .remove(key);
        if let Some(entry) = removed {
            let _ = fs::remove_file(self.root.join(entry.path));
            *dirty = true;
        }
        Ok(())
    }

    /// Persists the manifest if it changed since the last flush.
    pub fn flush(&self) -> Result<(), EmbedError> {
        let mut dirty = self.write_lock.lock().expect("writer lock");
        if !*dirty {
            return Ok(());
        }
        let manifest = self.manifest.read().expect("manifest lock");
        let mut text = serde_json::to_string_pretty(&*manifest)
            .map_err(|e| EmbedError::Format(e.to_string()))?;
        text.push('\n');
        let path = self.root.join(MANIFEST_FILE);
        let tmp = self.root.join(format!("{MANIFEST_FILE}.tmp"));
        fs::write(&tmp, text)?;
        fs::rename(&tmp, &path)?;
        *dirty = false;
        Ok(())
    }
}

fn relative_path(key: &str) -> String {
    let shard = key.get(..2).unwrap_or("00");
    format!("tensors/{shard}/{key}.bin")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Array2<f32> {
        Array2::from_shape_fn((3, 5), |(i, j)| (i as f32 - 1.0) * 0.1 + j as f32 * 1e-3)
    }

    #[test]
    fn key_is_stable_and_sensitive_to_every_part() {
        let k = cache_key("synthetic", Modality::Video, "abc", "cfg");
        assert_eq!(k, cache_key("synthetic", Modality::Video, "abc", "cfg"));
        assert_eq!(k.len(), 64);
        assert_ne!(k, cache_key("other", Modality::Video, "abc", "cfg"));
        assert_ne!(k, cache_key("synthetic", Modality::Audio, "abc", "cfg"));
        assert_ne!(k, cache_key("synthetic", Modality::Video, "abd", "cfg"));
        assert_ne!(k, cache_key("synthetic", Modality::Video, "abc", "cfg2"));
        // separators keep ("ab", "c") and ("a", "bc") apart
        assert_ne!(
            cache_key("ab", Modality::Video, "c", ""),
            cache_key("a", Modality::Video, "bc", "")
        );
    }

    #[test]
    fn put_get_is_bit_exact_and_survives_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let key = cache_key("p", Modality::Text, "h", "c");
        {
            let cache = TensorCache::open(dir.path()).unwrap();
            cache.put(&key, &sample()).unwrap();
            assert_eq!(cache.get(&key).unwrap(), sample());
            cache.flush().unwrap();
        }
        let cache = TensorCache::open(dir.path()).unwrap();
        assert_eq!(cache.len(), 1);
        let back = cache.get(&key).unwrap();
        assert!(back.iter().zip(sample().iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
        assert!(!dir.path().join("manifest.json.tmp").exists());
    }

    #[test]
    fn corrupted_file_fails_checksum() {
        let dir = tempfile::tempdir().unwrap();
        let cache = TensorCache::open(dir.path()).unwrap();
        let key = cache_key("p", Modality::Audio, "h", "c");
        cache.put(&key, &sample()).unwrap();
        let path = cache.tensor_path(&key);
        let mut bytes = fs::read(&path).unwrap();
        let last = bytes.len() - 1;
        bytes[last] ^= 0x80;
        fs::write(&path, bytes).unwrap();
        assert!(matches!(cache.get(&key), Err(EmbedError::ChecksumMismatch { .. })));
    }

    #[test]
    fn missing_key_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let cache = TensorCache::open(dir.path()).unwrap();
        assert!(matches!(cache.get("nope"), Err(EmbedError::Missing(_))));
    }

    #[test]
    fn flush_without_changes_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let cache = TensorCache::open(dir.path()).unwrap();
        cache.flush().unwrap();
        assert!(!dir.path().join(MANIFEST_FILE).exists());
    }
}
