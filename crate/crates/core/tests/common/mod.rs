//! Published per-language accuracy grid (percent) used as a fixture.

#![allow(dead_code)]

use mera_core::enseval::{EvalMatrix, System};
use mera_core::{LanguageCode, QuestionType};

/// Column groups in published order.
pub const COLUMNS: [QuestionType; 5] = [
    QuestionType::Existential,
    QuestionType::Comparative,
    QuestionType::Counting,
    QuestionType::Location,
    QuestionType::Temporal,
];

/// Each row: 5 question types × (L, C, T, ENS).
pub const ROWS: [(LanguageCode, [f64; 20]); 8] = [
    (LanguageCode::En, [
        79.09, 81.50, 80.60, 80.70, 54.08, 60.00, 61.43, 60.35, 55.72, 59.18,
        51.64, 57.29, 35.16, 47.57, 33.54, 46.92, 35.43, 51.69, 32.40, 51.69,
    ]),
    (LanguageCode::Fr, [
        80.80, 80.60, 80.20, 81.50, 59.46, 60.26, 59.19, 61.25, 58.47, 57.84,
        53.45, 58.94, 38.29, 49.40, 33.44, 48.43, 43.20, 52.66, 31.67, 54.36,
    ]),
    (LanguageCode::Hi, [
        81.20, 80.10, 80.80, 81.40, 57.93, 62.06, 60.89, 63.31, 59.18, 60.51,
        56.75, 59.34, 41.53, 50.26, 34.84, 49.94, 43.68, 51.82, 32.28, 53.15,
    ]),
    (LanguageCode::De, [
        79.89, 77.38, 80.60, 80.10, 58.20, 62.24, 59.91, 63.58, 59.65, 60.28,
        56.20, 60.04, 43.14, 49.94, 32.68, 50.70, 41.38, 52.42, 32.28, 55.21,
    ]),
    (LanguageCode::Es, [
        78.79, 81.10, 80.60, 81.30, 58.29, 60.98, 59.01, 61.34, 58.79, 61.38,
        55.72, 61.30, 36.89, 45.73, 32.03, 45.73, 45.14, 50.24, 31.67, 52.42,
    ]),
    (LanguageCode::It, [
        80.40, 77.28, 79.89, 81.00, 60.00, 63.22, 59.46, 63.31, 60.12, 62.79,
        55.96, 60.36, 36.56, 49.73, 31.71, 49.62, 41.14, 54.36, 31.71, 56.18,
    ]),
    (LanguageCode::Nl, [
        80.80, 80.60, 78.69, 81.10, 55.96, 60.26, 53.27, 64.12, 57.45, 57.84,
        56.20, 59.26, 38.18, 49.40, 33.76, 49.83, 39.19, 52.66, 32.88, 55.58,
    ]),
    (LanguageCode::Pt, [
        78.49, 80.60, 80.60, 80.60, 60.00, 59.82, 59.55, 60.17, 56.82, 60.12,
        55.80, 58.47, 38.40, 48.22, 32.68, 46.06, 42.23, 51.94, 32.76, 51.21,
    ]),
];

/// Published language-average row, same layout as [`ROWS`].
pub const AVERAGE: [f64; 20] = [
    79.93, 79.90, 80.25, 80.96, 57.99, 61.10, 59.09, 62.18, 58.28, 59.99,
    55.21, 59.37, 38.52, 48.78, 33.09, 48.40, 41.42, 52.22, 32.21, 53.72,
];

pub fn grid() -> EvalMatrix {
    let mut m = EvalMatrix::new(COLUMNS.to_vec(), System::ALL.to_vec());
    for (lang, values) in ROWS {
        for (i, v) in values.into_iter().enumerate() {
            m.set(lang, COLUMNS[i / 4], System::ALL[i % 4], v);
        }
    }
    m
}
