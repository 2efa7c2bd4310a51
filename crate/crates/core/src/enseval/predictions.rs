//! JSON-Lines prediction interchange, so external systems can be scored.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{EvalError, System};
use crate::corpus::LanguageCode;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub qid: String,
    pub language: LanguageCode,
    pub system: System,
    pub label_id: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probs: Option<Vec<f64>>,
}

pub fn write_predictions<W: Write>(mut w: W, predictions: &[PredictionRecord]) -> Result<(), EvalError> {
    for p in predictions {
        serde_json::to_writer(&mut w, p).map_err(|e| EvalError::Argument(e.to_string()))?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_predictions<R: BufRead>(r: R) -> Result<Vec<PredictionRecord>, EvalError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| EvalError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}
