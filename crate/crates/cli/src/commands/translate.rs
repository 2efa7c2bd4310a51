use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::PathBuf;

use anyhow::{Context as _, Result};
use mera_core::corpus::{load_source_dataset, write_dataset};
use mera_core::translate::{
    export_review_sheet, import_review_sheet, quality_report, translate_corpus, IdentityBackend, Metric,
    RemoteBackend, ReviewSheet, TableBackend, TranslateOptions, TranslationBackend,
};
use mera_core::LanguageCode;
use serde::Serialize;

use super::{ensure_dir, finish, Layout};
use crate::config::{BackendKind, RunConfig};
use crate::errors::{MissingPath, UsageError};
use crate::manifest::write_json;

fn backend(config: &RunConfig) -> Result<Box<dyn TranslationBackend>> {
    let section = &config.translate;
    Ok(match section.backend {
        BackendKind::Identity => Box::new(IdentityBackend),
        BackendKind::Table => {
            let path = section.table.as_ref().expect("validated");
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let entries: BTreeMap<LanguageCode, BTreeMap<String, String>> =
                serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
            let mut table = TableBackend::new().with_passthrough(section.table_passthrough);
            for (lang, pairs) in entries {
                for (source, target) in pairs {
                    table.insert(lang, source, target);
                }
            }
            Box::new(table)
        }
        BackendKind::Remote => {
            let remote = section.remote.clone().expect("validated");
            Box::new(RemoteBackend::from_env(remote)?)
        }
    })
}

#[derive(Serialize)]
struct QualitySummary<'a> {
    report: &'a mera_core::translate::QualityReport,
    below_threshold: Vec<LanguageCode>,
}

/// Translates the English source corpus into every configured language.
pub fn run(config: &RunConfig, reviews: &[PathBuf]) -> Result<()> {
    let layout = Layout::new(config);
    let source = config
        .dataset
        .source
        .as_ref()
        .ok_or_else(|| UsageError("dataset.source must be set for translate".into()))?;
    if !source.exists() {
        return Err(MissingPath::new(source).into());
    }
    for review in reviews {
        if !review.exists() {
            return Err(MissingPath::new(review).into());
        }
    }
    let kind = config.dataset.kind;
    let (_, records, vocab) = load_source_dataset(source, kind)?;
    let targets: Vec<LanguageCode> = config
        .languages
        .iter()
        .copied()
        .filter(|l| *l != LanguageCode::En)
        .collect();
    let backend = backend(config)?;
    log::info!(
        "translating {} records into {} languages with the {} backend",
        records.len(),
        targets.len(),
        backend.name()
    );
    let options = TranslateOptions {
        max_in_flight: config.translate.max_in_flight,
        ..TranslateOptions::default()
    };
    let outcome = translate_corpus(&records, &vocab, backend.as_ref(), &targets, options)?;
    let (mut records, mut vocab) = (outcome.records, outcome.vocabulary);
    for review in reviews {
        let sheet = ReviewSheet::read_csv(review)?;
        (records, vocab) = import_review_sheet(&records, &vocab, &sheet)?;
        log::info!("applied {} review rows from {}", sheet.rows.len(), review.display());
    }

    let mut languages = targets.clone();
    languages.push(LanguageCode::En);
    write_dataset(&layout.corpus, kind, &languages, &records, &vocab)?;
    let reloaded = load_source_dataset(&layout.corpus, kind)?;
    anyhow::ensure!(
        reloaded.1.len() == records.len(),
        "corpus written to {} does not read back",
        layout.corpus.display()
    );

    let stage = layout.stage("translate");
    ensure_dir(&stage)?;
    let mut outputs = layout.corpus_files();

    let flagged_path = stage.join("flagged.jsonl");
    let mut flagged = String::new();
    for f in &outcome.flagged {
        flagged.push_str(&serde_json::to_string(&serde_json::json!({
            "qid": f.question_id,
            "language": f.language,
            "error": f.error,
        }))?);
        flagged.push('\n');
    }
    fs::write(&flagged_path, flagged)?;
    outputs.push(flagged_path);
    if !outcome.flagged.is_empty() {
        log::warn!("{} records failed to translate and were dropped", outcome.flagged.len());
    }

    let review_dir = stage.join("review");
    ensure_dir(&review_dir)?;
    for &lang in &targets {
        let path = review_dir.join(format!("{lang}.csv"));
        export_review_sheet(&records, &vocab, lang).write_csv(&path)?;
        outputs.push(path);
    }

    let mut inputs = vec![source.join(mera_core::corpus::QUESTIONS_FILE)];
    if let Some(reference_path) = &config.dataset.references {
        let (_, reference, _) = load_source_dataset(reference_path, kind)?;
        let kept: HashSet<&str> = records.iter().map(|r| r.question_id.as_str()).collect();
        let reference: Vec<_> = reference
            .into_iter()
            .filter(|r| kept.contains(r.question_id.as_str()))
            .collect();
        let report = quality_report(&records, &reference, &targets, config.translate.bleu_order)?;
        let below_threshold: Vec<LanguageCode> = match config.translate.min_bleu {
            Some(min) => targets
                .iter()
                .copied()
                .filter(|l| report.corpus_score(*l, Metric::Bleu).is_some_and(|b| b < min))
                .collect(),
            None => Vec::new(),
        };
        for lang in &below_threshold {
            log::warn!("{lang}: corpus BLEU below the configured minimum; review {lang}.csv");
        }
        let path = stage.join("quality.json");
        write_json(
            &path,
            &QualitySummary {
                report: &report,
                below_threshold,
            },
        )?;
        outputs.push(path);
        inputs.push(reference_path.join(mera_core::corpus::QUESTIONS_FILE));
    }
    if let Some(table) = &config.translate.table {
        inputs.push(table.clone());
    }
    inputs.extend(reviews.iter().cloned());
    finish("translate", config, &layout, &inputs, &outputs)
}
