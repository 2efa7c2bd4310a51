use std::fs;
use std::io::BufWriter;

use anyhow::Result;
use mera_core::corpus::partition_by_split;
use mera_core::enseval::{
    aggregate_language_average, matrix_from_predictions, render_report, weighted_ensemble, write_predictions,
    EnsembleWeights, PredictionRecord, System,
};
use mera_core::models::{argmax, predict_batch};

use super::extract::check_upstream;
use super::{checkpoint_paths, finish, load_all_checkpoints, load_corpus, open_features, with_features, Layout};
use crate::config::RunConfig;
use crate::manifest::write_json;

/// Scores L, C, T and the weighted ensemble on the test split of every language.
pub fn run(config: &RunConfig, weights: Option<EnsembleWeights>) -> Result<()> {
    let layout = Layout::new(config);
    let weights = weights.unwrap_or(config.ensemble);
    weights.validate()?;
    check_upstream(config, &layout)?;
    let corpus = load_corpus(config, &layout)?;
    let features = open_features(&layout)?;
    let test = partition_by_split(&with_features(&corpus.records, features.samples()))?.test;
    anyhow::ensure!(!test.is_empty(), "the corpus has no test records with cached features");

    let mut predictions = Vec::new();
    for &lang in &config.languages {
        let models = load_all_checkpoints(&layout, lang)?;
        let in_memory = features.preload(test.iter().map(|r| r.question_id.as_str()), lang)?;
        let [l, c, t] = [&models[0], &models[1], &models[2]]
            .map(|ckpt| predict_batch(&ckpt.model, &in_memory, &test, lang));
        let (l, c, t) = (l?, c?, t?);
        for (i, record) in test.iter().enumerate() {
            let ens = weighted_ensemble(&l[i], &c[i], &t[i], &weights)?;
            let label_id = ens.argmax() as u32;
            let [pl, pc, pt] = ens.components;
            for (system, probs) in [(System::L, pl), (System::C, pc), (System::T, pt), (System::Ens, ens.ensemble)] {
                let label_id = if system == System::Ens {
                    label_id
                } else {
                    argmax(&probs) as u32
                };
                predictions.push(PredictionRecord {
                    qid: record.question_id.clone(),
                    language: lang,
                    system,
                    label_id,
                    probs: Some(probs),
                });
            }
        }
        log::info!("{lang}: scored {} test records", test.len());
    }

    let mut matrix = matrix_from_predictions(
        &predictions,
        &test,
        &config.languages,
        config.dataset.kind.question_types(),
    )?;
    aggregate_language_average(&mut matrix, &config.languages)?;
    let report = render_report(&matrix, &weights, None)?;

    let stage = layout.stage("eval");
    let predictions_path = stage.join("predictions.jsonl");
    fs::create_dir_all(&stage)?;
    write_predictions(BufWriter::new(fs::File::create(&predictions_path)?), &predictions)?;
    let matrix_path = stage.join("matrix.json");
    write_json(&matrix_path, &matrix)?;
    report.write(&stage, "report")?;

    let mut inputs = layout.corpus_files();
    inputs.extend(layout.cache_files());
    inputs.extend(checkpoint_paths(&layout, &config.languages));
    let outputs = vec![predictions_path, matrix_path, stage.join("report.md"), stage.join("report.json")];
    finish("eval", config, &layout, &inputs, &outputs)
}
