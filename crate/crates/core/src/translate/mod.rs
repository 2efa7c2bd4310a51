//! Machine translation of QA corpora, translation quality scoring and the
//! human review round-trip.

use thiserror::Error;

mod backend;
mod metrics;
mod pipeline;
mod quality;
mod review;

pub use backend::{
    translate_with_retry, BackendError, IdentityBackend, RemoteBackend, RemoteConfig,
    RetryPolicy, TableBackend, TranslationBackend,
};
pub use metrics::{bleu, meteor_exact, rouge_l, tokenize, RougeL};
pub use pipeline::{translate_corpus, FlaggedRecord, TranslateOptions, TranslationOutcome};
pub use quality::{quality_report, Metric, MetricScores, QualityReport};
pub use review::{export_review_sheet, import_review_sheet, ReviewRow, ReviewSheet};

#[derive(Debug, Error)]
pub enum TranslateError {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("question ids not aligned between corpora: {0:?}")]
    Misaligned(Vec<String>),
    #[error("review sheet references unknown ids: {0:?}")]
    UnknownIds(Vec<String>),
    #[error("answer label {label} ({language}) failed to translate: {source}")]
    Vocabulary {
        label: u32,
        language: crate::corpus::LanguageCode,
        #[source]
        source: BackendError,
    },
    #[error(transparent)]
    Corpus(#[from] crate::corpus::CorpusError),
    #[error("review sheet: {0}")]
    Csv(#[from] csv::Error),
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}
