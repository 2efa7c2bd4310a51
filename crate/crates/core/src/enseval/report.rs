use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde_json::{json, Map, Value};

use super::accuracy::{aggregate_language_average, round2, EvalMatrix};
use super::ensemble::EnsembleWeights;
use super::timing::LatencyReport;
use super::{EvalError, System};

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub markdown: String,
    pub json: Value,
}

impl Report {
    /// Writes `<stem>.md` and `<stem>.json` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<(), EvalError> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(format!("{stem}.md")), &self.markdown)?;
        let mut text = serde_json::to_string_pretty(&self.json).map_err(|e| EvalError::Argument(e.to_string()))?;
        text.push('\n');
        fs::write(dir.join(format!("{stem}.json")), text)?;
        Ok(())
    }
}

/// Systems whose two-decimal score equals the best in the cell.
fn best_systems(cells: &[(System, f64)]) -> Vec<System> {
    let best = cells.iter().map(|(_, v)| round2(*v)).fold(f64::NEG_INFINITY, f64::max);
    cells
        .iter()
        .filter(|(_, v)| round2(*v) == best)
        .map(|(s, _)| *s)
        .collect()
}

/// Renders the grid with the best system per (row, question type) in bold
/// and an `A` row of language means.
pub fn render_report(
    matrix: &EvalMatrix,
    weights: &EnsembleWeights,
    latency: Option<&LatencyReport>,
) -> Result<Report, EvalError> {
    let mut matrix = matrix.clone();
    if matrix.average.is_empty() {
        aggregate_language_average(&mut matrix, &[])?;
    }

    let mut md = String::new();
    writeln!(md, "# Accuracy by question type (%)\n").unwrap();
    writeln!(
        md,
        "Ensemble weights: α = {}, β = {}, γ = {}\n",
        weights.alpha, weights.beta, weights.gamma
    )
    .unwrap();
    let mut header = String::from("| Lang |");
    let mut rule = String::from("|---|");
    for q in &matrix.question_types {
        for s in &matrix.systems {
            write!(header, " {q} {s} |").unwrap();
            rule.push_str("---:|");
        }
    }
    writeln!(md, "{header}\n{rule}").unwrap();

    let mut best_json = Map::new();
    let mut rows: Vec<(String, Vec<Vec<(System, f64)>>)> = matrix
        .grid
        .iter()
        .map(|(lang, row)| {
            let cells = matrix
                .question_types
                .iter()
                .map(|q| matrix.systems.iter().map(|s| (*s, row[q][s])).collect())
                .collect();
            (lang.as_str().to_string(), cells)
        })
        .collect();
    let average_cells = matrix
        .question_types
        .iter()
        .map(|q| matrix.systems.iter().map(|s| (*s, matrix.average[q][s])).collect())
        .collect();
    rows.push(("A".to_string(), average_cells));

    for (label, cells) in &rows {
        let shown = if label == "A" { "**A**".to_string() } else { label.clone() };
        let mut line = format!("| {shown} |");
        let mut best_row = Map::new();
        for (q, group) in matrix.question_types.iter().zip(cells) {
            let best = best_systems(group);
            for (s, v) in group {
                if best.contains(s) {
                    write!(line, " **{:.2}** |", round2(*v)).unwrap();
                } else {
                    write!(line, " {:.2} |", round2(*v)).unwrap();
                }
            }
            best_row.insert(q.name().to_string(), json!(best.iter().map(|s| s.as_str()).collect::<Vec<_>>()));
        }
        writeln!(md, "{line}").unwrap();
        best_json.insert(label.clone(), Value::Object(best_row));
    }
    writeln!(
        md,
        "\nBold marks the best system per language and question type; `A` is the mean over languages."
    )
    .unwrap();

    if let Some(lat) = latency {
        writeln!(md, "\n## Inference latency\n").unwrap();
        writeln!(md, "| System | Median ms |\n|---|---:|").unwrap();
        for (s, ms) in &lat.median_ms {
            writeln!(md, "| {s} | {ms:.1} |").unwrap();
        }
        writeln!(
            md,
            "\nMedian of {} full passes over {} test samples. {}",
            lat.repeats, lat.samples, lat.hardware_note
        )
        .unwrap();
    }

    let cells_json = |cells: &std::collections::BTreeMap<_, std::collections::BTreeMap<System, f64>>| {
        let mut out = Map::new();
        for q in &matrix.question_types {
            let mut by_system = Map::new();
            for (s, v) in &cells[q] {
                by_system.insert(s.as_str().to_string(), json!(v));
            }
            out.insert(q.name().to_string(), Value::Object(by_system));
        }
        Value::Object(out)
    };
    let mut languages = Map::new();
    for (lang, row) in &matrix.grid {
        languages.insert(lang.as_str().to_string(), cells_json(row));
    }
    let json = json!({
        "languages": languages,
        "A": cells_json(&matrix.average),
        "best": best_json,
        "weights": weights,
        "latency": latency,
    });
    Ok(Report { markdown: md, json })
}
