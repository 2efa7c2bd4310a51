//! CSV review sheets for human correction of machine translations.
//!
//! Question rows use the question id. Answer rows use `label:<id>` and
//! correct the vocabulary surface form for that label.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TranslateError;
use crate::corpus::{AnswerVocabulary, LanguageCode, MultilingualQARecord};

const LABEL_PREFIX: &str = "label:";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewRow {
    pub qid: String,
    pub language: LanguageCode,
    pub machine_text: String,
    #[serde(default, deserialize_with = "empty_as_none")]
    pub corrected_text: Option<String>,
}

fn empty_as_none<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Option<String>, D::Error> {
    let value = Option::<String>::deserialize(d)?;
    Ok(value.filter(|s| !s.trim().is_empty()))
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ReviewSheet {
    pub rows: Vec<ReviewRow>,
}

impl ReviewSheet {
    pub fn write_csv(&self, path: &Path) -> Result<(), TranslateError> {
        let mut writer = csv::Writer::from_path(path)?;
        for row in &self.rows {
            writer.serialize(row)?;
        }
        writer.flush().map_err(|source| TranslateError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self, TranslateError> {
        let mut reader = csv::Reader::from_path(path)?;
        let rows = reader.deserialize().collect::<Result<Vec<ReviewRow>, _>>()?;
        Ok(Self { rows })
    }
}

/// One row per question followed by one row per answer label, all in `language`.
pub fn export_review_sheet(
    records: &[MultilingualQARecord],
    vocab: &AnswerVocabulary,
    language: LanguageCode,
) -> ReviewSheet {
    let questions = records.iter().filter_map(|r| {
        r.question(language).map(|t| ReviewRow {
            qid: r.question_id.clone(),
            language,
            machine_text: t.to_string(),
            corrected_text: None,
        })
    });
    let answers = vocab.labels().iter().filter_map(|l| {
        l.surface.get(&language).map(|t| ReviewRow {
            qid: format!("{LABEL_PREFIX}{}", l.label_id),
            language,
            machine_text: t.clone(),
            corrected_text: None,
        })
    });
    ReviewSheet {
        rows: questions.chain(answers).collect(),
    }
}

/// Applies corrected rows; rows without a correction leave everything as is.
/// Every row id must exist, otherwise nothing is applied.
pub fn import_review_sheet(
    records: &[MultilingualQARecord],
    vocab: &AnswerVocabulary,
    sheet: &ReviewSheet,
) -> Result<(Vec<MultilingualQARecord>, AnswerVocabulary), TranslateError> {
    let index: HashMap<&str, usize> = records
        .iter()
        .enumerate()
        .map(|(i, r)| (r.question_id.as_str(), i))
        .collect();

    let mut unknown = Vec::new();
    for row in &sheet.rows {
        let known = match row.qid.strip_prefix(LABEL_PREFIX) {
            Some(id) => id.parse::<u32>().is_ok_and(|id| vocab.contains(id)),
            None => index.contains_key(row.qid.as_str()),
        };
        if !known {
            unknown.push(row.qid.clone());
        }
    }
    if !unknown.is_empty() {
        return Err(TranslateError::UnknownIds(unknown));
    }

    let mut records = records.to_vec();
    let mut vocab = vocab.clone();
    for row in &sheet.rows {
        let Some(text) = &row.corrected_text else {
            continue;
        };
        match row.qid.strip_prefix(LABEL_PREFIX) {
            Some(id) => {
                let id: u32 = id.parse().expect("validated above");
                vocab.set_surface(id, row.language, text.clone())?;
            }
            None => {
                let i = index[row.qid.as_str()];
                records[i].question_text.insert(row.language, text.clone());
            }
        }
    }
    Ok((records, vocab))
}
