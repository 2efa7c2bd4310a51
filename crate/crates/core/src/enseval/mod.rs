//! Weighted ensembling, accuracy grids, reports and latency measurement.

mod accuracy;
mod ensemble;
mod predictions;
mod report;
mod timing;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::LanguageCode;
use crate::models::{ModelError, Variant};

pub use accuracy::{
    accuracy_by_type, aggregate_language_average, matrix_from_predictions, round2, Accuracy,
    EvalMatrix, TypeAccuracies,
};
pub use ensemble::{weighted_ensemble, EnsembleOutput, EnsembleWeights};
pub use predictions::{read_predictions, write_predictions, PredictionRecord};
pub use report::{render_report, Report};
pub use timing::{timing_benchmark, LatencyReport};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("probability vectors differ in length: {0:?}")]
    Length(Vec<usize>),
    #[error("missing predictions{context}: {}", ids.join(", "))]
    MissingPredictions { context: String, ids: Vec<String> },
    #[error("missing language rows: {}", .0.iter().map(|l| l.as_str()).collect::<Vec<_>>().join(", "))]
    MissingLanguages(Vec<LanguageCode>),
    #[error("incomplete matrix: {0}")]
    Incomplete(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("prediction line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// A column of the results grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum System {
    L,
    C,
    T,
    #[serde(rename = "ENS")]
    Ens,
}

impl System {
    pub const ALL: [System; 4] = [System::L, System::C, System::T, System::Ens];

    pub fn as_str(self) -> &'static str {
        match self {
            System::L => "L",
            System::C => "C",
            System::T => "T",
            System::Ens => "ENS",
        }
    }

    pub fn variant(self) -> Option<Variant> {
        match self {
            System::L => Some(Variant::Lstm),
            System::C => Some(Variant::Conv),
            System::T => Some(Variant::Transformer),
            System::Ens => None,
        }
    }
}

impl From<Variant> for System {
    fn from(v: Variant) -> Self {
        match v {
            Variant::Lstm => System::L,
            Variant::Conv => System::C,
            Variant::Transformer => System::T,
        }
    }
}

impl fmt::Display for System {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for System {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "L" => Ok(System::L),
            "C" => Ok(System::C),
            "T" => Ok(System::T),
            "ENS" => Ok(System::Ens),
            _ => Err(EvalError::Argument(format!("unknown system {s:?}"))),
        }
    }
}
