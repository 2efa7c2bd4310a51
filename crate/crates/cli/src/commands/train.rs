use std::fs;
use std::io::BufWriter;

use anyhow::{Context as _, Result};
use mera_core::corpus::partition_by_split;
use mera_core::models::{
    count_parameters, load_checkpoint, save_checkpoint, train, write_training_log, FusionModel, ModelConfig,
};
use serde::Serialize;

use super::extract::check_upstream;
use super::{ensure_dir, finish, load_corpus, open_features, with_features, Layout};
use crate::config::RunConfig;
use crate::manifest::{sha256_file, sha256_json, write_json};

#[derive(Serialize)]
struct TrainSummary {
    language: String,
    variant: String,
    parameters: usize,
    epochs_run: usize,
    best_epoch: usize,
    best_val_loss: f64,
    best_val_acc: f64,
}

/// Trains one model per (language, variant), skipping up-to-date checkpoints.
pub fn run(config: &RunConfig, force: bool) -> Result<()> {
    let layout = Layout::new(config);
    let upstream = check_upstream(config, &layout)?;
    let corpus = load_corpus(config, &layout)?;
    let features = open_features(&layout)?;
    let records = with_features(&corpus.records, features.samples());
    let split = partition_by_split(&records)?;

    let mut inputs = layout.corpus_files();
    inputs.extend(layout.cache_files());
    let input_hashes = inputs
        .iter()
        .map(|p| sha256_file(p).with_context(|| format!("hashing {}", p.display())))
        .collect::<Result<Vec<_>>>()?;

    let mut outputs = Vec::new();
    let mut summary = Vec::new();
    for &lang in &config.languages {
        let qids = split.train.iter().chain(&split.val).map(|r| r.question_id.as_str());
        let in_memory = features.preload(qids, lang)?;
        for &variant in &config.models.variants {
            let mut model_config = ModelConfig::new(variant, upstream.dims).with_seed(config.seed);
            model_config.n_labels = corpus.vocabulary.len();
            let ckpt_path = layout.checkpoint(lang, variant);
            let log_path = layout.training_log(lang, variant);
            let stamp_path = ckpt_path.with_extension("stamp");
            let stamp = sha256_json(&(&model_config, &config.train, lang, &input_hashes));

            let fresh = ckpt_path.exists()
                && log_path.exists()
                && fs::read_to_string(&stamp_path).is_ok_and(|s| s.trim() == stamp);
            let ckpt = if fresh && !force {
                log::info!("{lang} {variant}: checkpoint is up to date");
                load_checkpoint(&ckpt_path)?
            } else {
                log::info!(
                    "{lang} {variant}: training on {} samples, validating on {}",
                    split.train.len(),
                    split.val.len()
                );
                let model = FusionModel::build(model_config)?;
                let ckpt = train(
                    model,
                    &split.train,
                    &split.val,
                    &in_memory,
                    lang,
                    &corpus.vocabulary,
                    &config.train,
                )?;
                ensure_dir(ckpt_path.parent().expect("nested path"))?;
                ensure_dir(log_path.parent().expect("nested path"))?;
                save_checkpoint(&ckpt_path, &ckpt)?;
                write_training_log(BufWriter::new(fs::File::create(&log_path)?), &ckpt.history)?;
                anyhow::ensure!(
                    load_checkpoint(&ckpt_path)? == ckpt,
                    "checkpoint {} does not read back",
                    ckpt_path.display()
                );
                fs::write(&stamp_path, format!("{stamp}\n"))?;
                ckpt
            };
            let best = &ckpt.history[ckpt.best_epoch - 1];
            summary.push(TrainSummary {
                language: lang.to_string(),
                variant: variant.name().to_string(),
                parameters: count_parameters(&ckpt.model),
                epochs_run: ckpt.history.len(),
                best_epoch: ckpt.best_epoch,
                best_val_loss: best.val_loss,
                best_val_acc: best.val_acc,
            });
            outputs.extend([ckpt_path, log_path]);
        }
    }
    let summary_path = layout.stage("train").join("summary.json");
    write_json(&summary_path, &summary)?;
    outputs.push(summary_path);
    finish("train", config, &layout, &inputs, &outputs)
}
