//! Frozen-extractor embeddings and their on-disk cache.
//!
//! Providers turn media and question text into `time × dim` tensors; the
//! cache stores them content-addressed so re-runs only compute what changed.

mod audio;
mod cache;
mod extract;
mod provider;
mod tensor_io;

use std::fmt;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

pub use audio::{read_wav, resample_audio, resample_to, Waveform, TARGET_RATE};
pub use cache::{cache_key, CacheManifest, ManifestEntry, TensorCache, MANIFEST_FILE};
pub use extract::{
    extract_embeddings, CachedFeatures, ExtractOptions, ExtractionReport, FeatureSource,
    InMemoryFeatures, MediaIndex, MediaItem, SampleFeatures, SampleIndex, SampleKeys, SkipEntry,
    SAMPLES_FILE,
};
pub use provider::{
    content_hash_bytes, content_hash_text, embed_checked, Dims, EmbeddingProvider,
    ExternalProvider, ExternalProviderConfig, ProviderDims, SyntheticProvider,
};
pub use tensor_io::{
    encode_tensor, fnv1a64, read_tensor, write_tensor, TensorHeader, HEADER_LEN, MAGIC, VERSION,
};

#[derive(Debug, thiserror::Error)]
pub enum EmbedError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("malformed tensor data: {0}")]
    Format(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("checksum mismatch: expected {expected:#018x}, found {found:#018x}")]
    ChecksumMismatch { expected: u64, found: u64 },
    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    Shape {
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("missing {0}")]
    Missing(String),
    #[error("audio: {0}")]
    Audio(String),
    #[error("provider: {0}")]
    Provider(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Video,
    Audio,
    Text,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::Video, Modality::Audio, Modality::Text];

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Video => "video",
            Modality::Audio => "audio",
            Modality::Text => "text",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One modality's feature sequence for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTensor {
    pub modality: Modality,
    pub content_hash: String,
    pub values: Array2<f32>,
}
