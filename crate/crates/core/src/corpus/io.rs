//! JSON-Lines dataset files and the vocabulary file.
//!
//! A dataset lives in a directory holding `questions.jsonl` and
//! `vocabulary.json`. Line 1 of the questions file is the header, every
//! following line one record.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use super::{
    AnswerLabel, AnswerVocabulary, CorpusError, DatasetKind, LanguageCode, MultilingualQARecord,
    QuestionType, Split,
};

pub const QUESTIONS_FILE: &str = "questions.jsonl";
pub const VOCABULARY_FILE: &str = "vocabulary.json";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl SplitCounts {
    pub fn total(&self) -> usize {
        self.train + self.val + self.test
    }

    fn bump(&mut self, split: Split) {
        match split {
            Split::Train => self.train += 1,
            Split::Val => self.val += 1,
            Split::Test => self.test += 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub dataset_kind: DatasetKind,
    pub languages: Vec<LanguageCode>,
    pub label_count: usize,
    pub split_counts: SplitCounts,
}

#[derive(Deserialize)]
struct RawHeader {
    dataset_kind: String,
    languages: Vec<String>,
    label_count: usize,
    split_counts: SplitCounts,
}

#[derive(Deserialize)]
struct RawRecord {
    qid: String,
    vid: String,
    qtype: String,
    question: BTreeMap<String, String>,
    answer: u32,
    split: Option<String>,
}

#[derive(Serialize)]
struct RecordLine<'a> {
    qid: &'a str,
    vid: &'a str,
    qtype: QuestionType,
    question: &'a BTreeMap<LanguageCode, String>,
    answer: u32,
    split: Split,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn resolve(path: &Path) -> (PathBuf, PathBuf) {
    if path.is_dir() {
        (path.join(QUESTIONS_FILE), path.join(VOCABULARY_FILE))
    } else {
        let dir = path.parent().unwrap_or_else(|| Path::new("."));
        (path.to_path_buf(), dir.join(VOCABULARY_FILE))
    }
}

/// Loads a fully translated dataset: every record and label must carry all
/// eight languages.
pub fn load_dataset(
    path: &Path,
    kind: DatasetKind,
) -> Result<(Vec<MultilingualQARecord>, AnswerVocabulary), CorpusError> {
    let (header, records, vocab) = load_with(path, kind, &LanguageCode::ALL)?;
    if header.languages != LanguageCode::ALL {
        return Err(CorpusError::Validation {
            line: 1,
            message: format!(
                "header must list all eight languages, found {:?}",
                header.languages
            ),
        });
    }
    Ok((records, vocab))
}

/// Loads a source dataset (at least English) ahead of translation.
pub fn load_source_dataset(
    path: &Path,
    kind: DatasetKind,
) -> Result<(DatasetHeader, Vec<MultilingualQARecord>, AnswerVocabulary), CorpusError> {
    load_with(path, kind, &[LanguageCode::En])
}

fn load_with(
    path: &Path,
    kind: DatasetKind,
    required: &[LanguageCode],
) -> Result<(DatasetHeader, Vec<MultilingualQARecord>, AnswerVocabulary), CorpusError> {
    let (questions_path, vocab_path) = resolve(path);
    let file = fs::File::open(&questions_path).map_err(io_err(&questions_path))?;
    let mut lines = BufReader::new(file).lines();

    let first = lines
        .next()
        .ok_or(CorpusError::Validation {
            line: 1,
            message: "missing header line".into(),
        })?
        .map_err(io_err(&questions_path))?;
    let header = parse_header(&first, kind, required)?;

    let vocab = load_vocabulary(&vocab_path, &header.languages)?;
    if vocab.len() != header.label_count {
        return Err(CorpusError::Validation {
            line: 1,
            message: format!(
                "header declares {} labels, vocabulary holds {}",
                header.label_count,
                vocab.len()
            ),
        });
    }

    let mut records = Vec::new();
    let mut seen = HashSet::new();
    let mut counts = SplitCounts::default();
    for (idx, line) in lines.enumerate() {
        let line_no = idx + 2;
        let line = line.map_err(io_err(&questions_path))?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord = serde_json::from_str(&line).map_err(|e| CorpusError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let record = validate_record(raw, line_no, kind, &header.languages, &vocab)?;
        if !seen.insert(record.question_id.clone()) {
            return Err(CorpusError::Validation {
                line: line_no,
                message: format!("duplicate question_id {:?}", record.question_id),
            });
        }
        if let Some(split) = record.split() {
            counts.bump(split);
        }
        records.push(record);
    }

    if counts != header.split_counts {
        return Err(CorpusError::Validation {
            line: 1,
            message: format!(
                "split counts {:?} do not match header {:?}",
                counts, header.split_counts
            ),
        });
    }
    Ok((header, records, vocab))
}

fn parse_header(
    line: &str,
    kind: DatasetKind,
    required: &[LanguageCode],
) -> Result<DatasetHeader, CorpusError> {
    let raw: RawHeader = serde_json::from_str(line).map_err(|e| CorpusError::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    let invalid = |message: String| CorpusError::Validation { line: 1, message };
    let dataset_kind: DatasetKind = raw.dataset_kind.parse().map_err(invalid)?;
    if dataset_kind != kind {
        return Err(invalid(format!(
            "expected a {} dataset, header says {}",
            kind.name(),
            dataset_kind.name()
        )));
    }
    let mut languages = Vec::with_capacity(raw.languages.len());
    for code in &raw.languages {
        let lang: LanguageCode = code.parse().map_err(|e: super::UnknownLanguage| invalid(e.to_string()))?;
        if languages.contains(&lang) {
            return Err(invalid(format!("language {lang} listed twice")));
        }
        languages.push(lang);
    }
    languages.sort();
    for lang in required {
        if !languages.contains(lang) {
            return Err(invalid(format!("header is missing language {lang}")));
        }
    }
    Ok(DatasetHeader {
        dataset_kind,
        languages,
        label_count: raw.label_count,
        split_counts: raw.split_counts,
    })
}

fn validate_record(
    raw: RawRecord,
    line: usize,
    kind: DatasetKind,
    languages: &[LanguageCode],
    vocab: &AnswerVocabulary,
) -> Result<MultilingualQARecord, CorpusError> {
    let invalid = |message: String| CorpusError::Validation { line, message };
    if raw.qid.is_empty() {
        return Err(invalid("empty question id".into()));
    }
    let qtype: QuestionType = raw.qtype.parse().map_err(invalid)?;
    if !kind.question_types().contains(&qtype) {
        return Err(invalid(format!(
            "question type {qtype} does not belong to {}",
            kind.name()
        )));
    }
    let mut question_text = BTreeMap::new();
    for (code, text) in raw.question {
        let lang: LanguageCode = code
            .parse()
            .map_err(|e: super::UnknownLanguage| invalid(e.to_string()))?;
        if !languages.contains(&lang) {
            return Err(invalid(format!("language {lang} is not declared in the header")));
        }
        question_text.insert(lang, text.nfc().collect::<String>());
    }
    for lang in languages {
        match question_text.get(lang) {
            Some(text) if !text.trim().is_empty() => {}
            _ => return Err(invalid(format!("question {} has no {lang} text", raw.qid))),
        }
    }
    let label = vocab
        .get(raw.answer)
        .ok_or_else(|| invalid(format!("answer label {} is not in the vocabulary", raw.answer)))?;
    if label.qtype != qtype {
        return Err(invalid(format!(
            "answer label {} belongs to {}, record is {qtype}",
            raw.answer, label.qtype
        )));
    }
    let split = match raw.split {
        Some(s) => s.parse::<Split>().map_err(invalid)?,
        None => return Err(invalid(format!("question {} has no split tag", raw.qid))),
    };
    Ok(MultilingualQARecord::new(
        raw.qid,
        raw.vid,
        qtype,
        question_text,
        raw.answer,
        Some(split),
    ))
}

pub fn load_vocabulary(
    path: &Path,
    languages: &[LanguageCode],
) -> Result<AnswerVocabulary, CorpusError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut labels: Vec<AnswerLabel> =
        serde_json::from_str(&text).map_err(|e| CorpusError::Vocabulary(e.to_string()))?;
    for label in &mut labels {
        for text in label.surface.values_mut() {
            *text = text.nfc().collect();
        }
    }
    AnswerVocabulary::from_labels(labels, languages)
}

pub fn write_vocabulary(path: &Path, vocab: &AnswerVocabulary) -> Result<(), CorpusError> {
    let mut text = serde_json::to_string_pretty(vocab.labels())
        .map_err(|e| CorpusError::Vocabulary(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

/// Writes `questions.jsonl` and `vocabulary.json` into `dir`, deriving the
/// header from the records.
pub fn write_dataset(
    dir: &Path,
    kind: DatasetKind,
    languages: &[LanguageCode],
    records: &[MultilingualQARecord],
    vocab: &AnswerVocabulary,
) -> Result<DatasetHeader, CorpusError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut languages = languages.to_vec();
    languages.sort();
    languages.dedup();

    let mut split_counts = SplitCounts::default();
    for record in records {
        let split = record
            .split()
            .ok_or_else(|| CorpusError::MissingSplit(record.question_id.clone()))?;
        split_counts.bump(split);
    }
    let header = DatasetHeader {
        dataset_kind: kind,
        languages,
        label_count: vocab.len(),
        split_counts,
    };

    let path = dir.join(QUESTIONS_FILE);
    let file = fs::File::create(&path).map_err(io_err(&path))?;
    let mut out = BufWriter::new(file);
    let json = |e: serde_json::Error| CorpusError::Parse {
        line: 0,
        message: e.to_string(),
    };
    serde_json::to_writer(&mut out, &header).map_err(json)?;
    out.write_all(b"\n").map_err(io_err(&path))?;
    for record in records {
        let line = RecordLine {
            qid: &record.question_id,
            vid: &record.video_id,
            qtype: record.question_type,
            question: &record.question_text,
            answer: record.answer_label,
            split: record.split().expect("checked above"),
        };
        serde_json::to_writer(&mut out, &line).map_err(json)?;
        out.write_all(b"\n").map_err(io_err(&path))?;
    }
    out.flush().map_err(io_err(&path))?;
    write_vocabulary(&dir.join(VOCABULARY_FILE), vocab)?;
    Ok(header)
}
