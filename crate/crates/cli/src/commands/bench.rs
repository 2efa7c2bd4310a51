use anyhow::Result;
use mera_core::corpus::partition_by_split;
use mera_core::enseval::{render_report, timing_benchmark, EvalMatrix};

use super::extract::check_upstream;
use super::{finish, load_all_checkpoints, load_corpus, open_features, with_features, Layout};
use crate::config::RunConfig;
use crate::manifest::write_json;

/// Times single-model and ensemble inference over the cached test set.
pub fn run(config: &RunConfig, repeats: Option<usize>) -> Result<()> {
    let layout = Layout::new(config);
    let repeats = repeats.unwrap_or(config.bench.repeats);
    let lang = config.bench.language.unwrap_or(config.languages[0]);
    check_upstream(config, &layout)?;
    let corpus = load_corpus(config, &layout)?;
    let features = open_features(&layout)?;
    let test = partition_by_split(&with_features(&corpus.records, features.samples()))?.test;
    anyhow::ensure!(!test.is_empty(), "the corpus has no test records with cached features");

    let models = load_all_checkpoints(&layout, lang)?;
    let in_memory = features.preload(test.iter().map(|r| r.question_id.as_str()), lang)?;
    let latency = timing_benchmark(
        [&models[0].model, &models[1].model, &models[2].model],
        &config.ensemble,
        &test,
        &in_memory,
        lang,
        repeats,
    )?;
    for (system, ms) in &latency.median_ms {
        log::info!("{lang} {system}: {ms:.2} ms per pass over {} samples", latency.samples);
    }

    let stage = layout.stage("bench");
    let latency_path = stage.join("latency.json");
    write_json(&latency_path, &latency)?;
    let mut outputs = vec![latency_path];
    let mut inputs: Vec<_> = mera_core::models::Variant::ALL
        .iter()
        .map(|&v| layout.checkpoint(lang, v))
        .collect();

    let matrix_path = layout.stage("eval").join("matrix.json");
    if matrix_path.exists() {
        let matrix: EvalMatrix = serde_json::from_str(&std::fs::read_to_string(&matrix_path)?)?;
        render_report(&matrix, &config.ensemble, Some(&latency))?.write(&stage, "report")?;
        outputs.extend([stage.join("report.md"), stage.join("report.json")]);
        inputs.push(matrix_path);
    }
    finish("bench", config, &layout, &inputs, &outputs)
}
