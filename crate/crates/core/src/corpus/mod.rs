//! Multilingual QA corpora: languages, question types, records, the answer
//! vocabulary and the JSON-Lines dataset format.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub mod fixtures;
mod io;
mod stats;
mod vocab;

pub use io::{
    load_dataset, load_source_dataset, load_vocabulary, write_dataset, write_vocabulary,
    DatasetHeader, SplitCounts, QUESTIONS_FILE, VOCABULARY_FILE,
};
pub use stats::{corpus_stats, partition_by_split, CorpusStats, SplitPartition, TypeStats};
pub use vocab::{AnswerLabel, AnswerVocabulary};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed JSON: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: {message}")]
    Validation { line: usize, message: String },
    #[error("vocabulary: {0}")]
    Vocabulary(String),
    #[error("record {0} has no split tag")]
    MissingSplit(String),
}

/// One of the eight supported languages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LanguageCode {
    En,
    Fr,
    Hi,
    De,
    Es,
    It,
    Nl,
    Pt,
}

impl LanguageCode {
    pub const ALL: [LanguageCode; 8] = [
        LanguageCode::En,
        LanguageCode::Fr,
        LanguageCode::Hi,
        LanguageCode::De,
        LanguageCode::Es,
        LanguageCode::It,
        LanguageCode::Nl,
        LanguageCode::Pt,
    ];

    /// The seven translation targets.
    pub const TARGETS: [LanguageCode; 7] = [
        LanguageCode::Fr,
        LanguageCode::Hi,
        LanguageCode::De,
        LanguageCode::Es,
        LanguageCode::It,
        LanguageCode::Nl,
        LanguageCode::Pt,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LanguageCode::En => "en",
            LanguageCode::Fr => "fr",
            LanguageCode::Hi => "hi",
            LanguageCode::De => "de",
            LanguageCode::Es => "es",
            LanguageCode::It => "it",
            LanguageCode::Nl => "nl",
            LanguageCode::Pt => "pt",
        }
    }
}

impl fmt::Display for LanguageCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown language code {0:?}")]
pub struct UnknownLanguage(pub String);

impl FromStr for LanguageCode {
    type Err = UnknownLanguage;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LanguageCode::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| UnknownLanguage(s.to_string()))
    }
}

/// Question category. The first five belong to m-MUSIC-AVQA, the rest to m-AVQA.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum QuestionType {
    Comparative,
    Counting,
    Existential,
    Location,
    Temporal,
    Which,
    #[serde(rename = "Come from")]
    ComeFrom,
    Happening,
    Where,
    Why,
    #[serde(rename = "Before next")]
    BeforeNext,
    When,
    #[serde(rename = "Used for")]
    UsedFor,
}

impl QuestionType {
    pub const MUSIC_AVQA: [QuestionType; 5] = [
        QuestionType::Existential,
        QuestionType::Location,
        QuestionType::Counting,
        QuestionType::Comparative,
        QuestionType::Temporal,
    ];

    pub const AVQA: [QuestionType; 8] = [
        QuestionType::Which,
        QuestionType::ComeFrom,
        QuestionType::Happening,
        QuestionType::Where,
        QuestionType::Why,
        QuestionType::BeforeNext,
        QuestionType::When,
        QuestionType::UsedFor,
    ];

    pub fn name(self) -> &'static str {
        match self {
            QuestionType::Comparative => "Comparative",
            QuestionType::Counting => "Counting",
            QuestionType::Existential => "Existential",
            QuestionType::Location => "Location",
            QuestionType::Temporal => "Temporal",
            QuestionType::Which => "Which",
            QuestionType::ComeFrom => "Come from",
            QuestionType::Happening => "Happening",
            QuestionType::Where => "Where",
            QuestionType::Why => "Why",
            QuestionType::BeforeNext => "Before next",
            QuestionType::When => "When",
            QuestionType::UsedFor => "Used for",
        }
    }
}

impl fmt::Display for QuestionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for QuestionType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        QuestionType::MUSIC_AVQA
            .into_iter()
            .chain(QuestionType::AVQA)
            .find(|q| q.name() == s)
            .ok_or_else(|| format!("unknown question type {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DatasetKind {
    #[serde(rename = "m-MUSIC-AVQA")]
    MusicAvqa,
    #[serde(rename = "m-AVQA")]
    Avqa,
}

impl DatasetKind {
    pub fn question_types(self) -> &'static [QuestionType] {
        match self {
            DatasetKind::MusicAvqa => &QuestionType::MUSIC_AVQA,
            DatasetKind::Avqa => &QuestionType::AVQA,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DatasetKind::MusicAvqa => "m-MUSIC-AVQA",
            DatasetKind::Avqa => "m-AVQA",
        }
    }
}

impl FromStr for DatasetKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "m-MUSIC-AVQA" => Ok(DatasetKind::MusicAvqa),
            "m-AVQA" => Ok(DatasetKind::Avqa),
            other => Err(format!("unknown dataset kind {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

/// One question, its translations, and its canonical answer label.
///
/// Records read from a dataset file always carry a split; the tag is optional
/// only so that records assembled in memory can be checked by
/// [`partition_by_split`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultilingualQARecord {
    pub question_id: String,
    pub video_id: String,
    pub question_type: QuestionType,
    pub question_text: BTreeMap<LanguageCode, String>,
    pub answer_label: u32,
    split: Option<Split>,
}

impl MultilingualQARecord {
    pub fn new(
        question_id: impl Into<String>,
        video_id: impl Into<String>,
        question_type: QuestionType,
        question_text: BTreeMap<LanguageCode, String>,
        answer_label: u32,
        split: Option<Split>,
    ) -> Self {
        Self {
            question_id: question_id.into(),
            video_id: video_id.into(),
            question_type,
            question_text,
            answer_label,
            split,
        }
    }

    pub fn split(&self) -> Option<Split> {
        self.split
    }

    pub fn question(&self, language: LanguageCode) -> Option<&str> {
        self.question_text.get(&language).map(String::as_str)
    }
}
