//! Multilingual audio-visual question answering toolkit.
//!
//! The crate is organised along the pipeline:
//!
//! * [`corpus`] loads, validates and summarises multilingual QA datasets and
//!   owns the closed answer vocabulary.
//! * [`translate`] builds the multilingual corpus from an English source
//!   through a pluggable backend and scores translation quality.
//! * [`embed`] extracts frozen video/audio/text features and keeps them in a
//!   content-addressed tensor cache.
//! * [`models`] holds the three fusion classifiers (recurrent, convolutional
//!   and convolution + attention), the Rectified Adam optimizer and the
//!   training loop.
//! * [`enseval`] combines model outputs with the weighted ensemble, computes
//!   accuracy grids and renders reports.

pub mod corpus;
pub mod embed;
pub mod enseval;
pub mod models;
pub mod translate;

pub use corpus::{
    AnswerLabel, AnswerVocabulary, CorpusError, DatasetKind, LanguageCode, MultilingualQARecord,
    QuestionType, Split,
};
