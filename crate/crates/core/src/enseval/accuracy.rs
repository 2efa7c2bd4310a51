use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::predictions::PredictionRecord;
use super::{EvalError, System};
use crate::corpus::{LanguageCode, MultilingualQARecord, QuestionType};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Accuracy {
    pub correct: usize,
    pub total: usize,
}

impl Accuracy {
    pub fn percent(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            100.0 * self.correct as f64 / self.total as f64
        }
    }
}

pub type TypeAccuracies = BTreeMap<QuestionType, Accuracy>;

/// Rounds to two decimals for display.
pub fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// Exact-label accuracy per question type over `gold`.
pub fn accuracy_by_type(
    predictions: &HashMap<String, u32>,
    gold: &[MultilingualQARecord],
) -> Result<TypeAccuracies, EvalError> {
    let missing: Vec<String> = gold
        .iter()
        .filter(|r| !predictions.contains_key(&r.question_id))
        .map(|r| r.question_id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(EvalError::MissingPredictions {
            context: String::new(),
            ids: missing,
        });
    }
    let mut out = TypeAccuracies::new();
    for r in gold {
        let acc = out.entry(r.question_type).or_default();
        acc.total += 1;
        if predictions[&r.question_id] == r.answer_label {
            acc.correct += 1;
        }
    }
    Ok(out)
}

type Cells = BTreeMap<QuestionType, BTreeMap<System, f64>>;

/// Accuracy grid: language × question type × system, plus the average row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMatrix {
    /// Column order for rendering.
    pub question_types: Vec<QuestionType>,
    pub systems: Vec<System>,
    pub grid: BTreeMap<LanguageCode, Cells>,
    /// Full-precision means over languages; empty until aggregated.
    pub average: Cells,
}

impl EvalMatrix {
    pub fn new(question_types: Vec<QuestionType>, systems: Vec<System>) -> Self {
        Self {
            question_types,
            systems,
            grid: BTreeMap::new(),
            average: BTreeMap::new(),
        }
    }

    pub fn set(&mut self, language: LanguageCode, qtype: QuestionType, system: System, value: f64) {
        self.grid
            .entry(language)
            .or_default()
            .entry(qtype)
            .or_default()
            .insert(system, value);
    }

    pub fn get(&self, language: LanguageCode, qtype: QuestionType, system: System) -> Option<f64> {
        self.grid.get(&language)?.get(&qtype)?.get(&system).copied()
    }

    pub fn average(&self, qtype: QuestionType, system: System) -> Option<f64> {
        self.average.get(&qtype)?.get(&system).copied()
    }

    pub fn languages(&self) -> Vec<LanguageCode> {
        self.grid.keys().copied().collect()
    }

    fn check_complete(&self) -> Result<(), EvalError> {
        for (lang, row) in &self.grid {
            for q in &self.question_types {
                for s in &self.systems {
                    let v = row
                        .get(q)
                        .and_then(|c| c.get(s))
                        .ok_or_else(|| EvalError::Incomplete(format!("{lang} / {q} / {s}")))?;
                    if !(0.0..=100.0).contains(v) {
                        return Err(EvalError::Incomplete(format!("{lang} / {q} / {s} = {v} outside [0, 100]")));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Fills the average row with the unweighted mean over every language row.
pub fn aggregate_language_average(matrix: &mut EvalMatrix, expected: &[LanguageCode]) -> Result<(), EvalError> {
    let missing: Vec<LanguageCode> = expected
        .iter()
        .copied()
        .filter(|l| !matrix.grid.contains_key(l))
        .collect();
    if !missing.is_empty() {
        return Err(EvalError::MissingLanguages(missing));
    }
    if matrix.grid.is_empty() {
        return Err(EvalError::Incomplete("no language rows".into()));
    }
    matrix.check_complete()?;
    let n = matrix.grid.len() as f64;
    let mut average = Cells::new();
    for &q in &matrix.question_types {
        for &s in &matrix.systems {
            // BTreeMap order makes the sum independent of insertion order
            let sum: f64 = matrix.grid.values().map(|row| row[&q][&s]).sum();
            average.entry(q).or_default().insert(s, sum / n);
        }
    }
    matrix.average = average;
    Ok(())
}

/// Scores interchange-format predictions against gold records.
pub fn matrix_from_predictions(
    predictions: &[PredictionRecord],
    gold: &[MultilingualQARecord],
    languages: &[LanguageCode],
    question_types: &[QuestionType],
) -> Result<EvalMatrix, EvalError> {
    let mut grouped: BTreeMap<(LanguageCode, System), HashMap<String, u32>> = BTreeMap::new();
    for p in predictions {
        grouped
            .entry((p.language, p.system))
            .or_default()
            .insert(p.qid.clone(), p.label_id);
    }
    let systems: BTreeSet<System> = grouped.keys().map(|(_, s)| *s).collect();
    let mut matrix = EvalMatrix::new(question_types.to_vec(), systems.iter().copied().collect());
    for &lang in languages {
        for &system in &systems {
            let empty = HashMap::new();
            let preds = grouped.get(&(lang, system)).unwrap_or(&empty);
            let acc = accuracy_by_type(preds, gold).map_err(|e| match e {
                EvalError::MissingPredictions { ids, .. } => EvalError::MissingPredictions {
                    context: format!(" ({lang}, {system})"),
                    ids,
                },
                other => other,
            })?;
            for &q in question_types {
                matrix.set(lang, q, system, acc.get(&q).map(Accuracy::percent).unwrap_or(0.0));
            }
        }
    }
    Ok(matrix)
}
