use std::collections::{BTreeMap, HashMap, HashSet};

use serde::Serialize;

use super::{bleu, meteor_exact, rouge_l, tokenize, TranslateError};
use crate::corpus::{LanguageCode, MultilingualQARecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Bleu,
    RougeL,
    MeteorExact,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricScores {
    pub corpus: f64,
    pub sentences: Vec<f64>,
}

/// Per-language, per-metric translation quality. ROUGE-L is reported as F1.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QualityReport {
    pub bleu_order: usize,
    /// Question ids in the order the sentence lists follow.
    pub question_ids: Vec<String>,
    pub scores: BTreeMap<LanguageCode, BTreeMap<Metric, MetricScores>>,
}

impl QualityReport {
    pub fn corpus_score(&self, language: LanguageCode, metric: Metric) -> Option<f64> {
        self.scores
            .get(&language)
            .and_then(|m| m.get(&metric))
            .map(|s| s.corpus)
    }
}

/// Scores machine output against reference translations, sentence by
/// sentence, and averages into corpus scores.
pub fn quality_report(
    machine: &[MultilingualQARecord],
    reference: &[MultilingualQARecord],
    languages: &[LanguageCode],
    bleu_order: usize,
) -> Result<QualityReport, TranslateError> {
    let by_id: HashMap<&str, &MultilingualQARecord> = reference
        .iter()
        .map(|r| (r.question_id.as_str(), r))
        .collect();
    let machine_ids: HashSet<&str> = machine.iter().map(|r| r.question_id.as_str()).collect();
    let mut offenders: Vec<String> = machine
        .iter()
        .filter(|r| !by_id.contains_key(r.question_id.as_str()))
        .chain(
            reference
                .iter()
                .filter(|r| !machine_ids.contains(r.question_id.as_str())),
        )
        .map(|r| r.question_id.clone())
        .collect();
    if !offenders.is_empty() {
        offenders.sort();
        offenders.dedup();
        return Err(TranslateError::Misaligned(offenders));
    }

    let mut scores = BTreeMap::new();
    for &lang in languages {
        let mut lists: BTreeMap<Metric, Vec<f64>> = BTreeMap::new();
        for record in machine {
            let gold = by_id[record.question_id.as_str()];
            let missing = || {
                TranslateError::Argument(format!(
                    "record {} has no {lang} text",
                    record.question_id
                ))
            };
            let cand = tokenize(record.question(lang).ok_or_else(missing)?);
            let refr = tokenize(gold.question(lang).ok_or_else(missing)?);
            let b = if refr.is_empty() {
                0.0
            } else {
                bleu(&cand, std::slice::from_ref(&refr), bleu_order)?
            };
            lists.entry(Metric::Bleu).or_default().push(b);
            lists
                .entry(Metric::RougeL)
                .or_default()
                .push(rouge_l(&cand, &refr).f1);
            lists
                .entry(Metric::MeteorExact)
                .or_default()
                .push(meteor_exact(&cand, &refr));
        }
        let per_metric = lists
            .into_iter()
            .map(|(metric, sentences)| {
                let corpus = if sentences.is_empty() {
                    0.0
                } else {
                    sentences.iter().sum::<f64>() / sentences.len() as f64
                };
                (metric, MetricScores { corpus, sentences })
            })
            .collect();
        scores.insert(lang, per_metric);
    }
    Ok(QualityReport {
        bleu_order,
        question_ids: machine.iter().map(|r| r.question_id.clone()).collect(),
        scores,
    })
}
