use std::collections::BTreeSet;

use anyhow::Result;
use mera_core::embed::{
    extract_embeddings, EmbeddingProvider, ExternalProvider, ExtractOptions, MediaIndex, ProviderDims, SkipEntry,
    SyntheticProvider, TensorCache,
};
use serde::{Deserialize, Serialize};

use super::{finish, load_corpus, Layout};
use crate::config::{ProviderKind, RunConfig};
use crate::errors::{MissingPath, StaleArtifact};
use crate::manifest::{sha256_json, write_json};

/// Summary written by `extract` and checked by later stages.
#[derive(Debug, Serialize, Deserialize)]
pub struct ExtractSummary {
    pub provider: String,
    /// Hash of the provider settings; later stages refuse a mismatch.
    pub provider_hash: String,
    pub dims: ProviderDims,
    pub extracted: usize,
    pub reused: usize,
    pub cache_entries: usize,
    pub samples: usize,
    pub skipped: Vec<SkipEntry>,
}

pub fn provider_hash(config: &RunConfig) -> String {
    let e = &config.embed;
    match e.provider {
        ProviderKind::Synthetic => sha256_json(&("synthetic", config.seed, e.synthetic_dims)),
        ProviderKind::External => sha256_json(&("external", &e.external)),
    }
}

fn provider(config: &RunConfig) -> Result<Box<dyn EmbeddingProvider>> {
    Ok(match config.embed.provider {
        ProviderKind::Synthetic => Box::new(SyntheticProvider::new(config.seed, config.embed.synthetic_dims)?),
        ProviderKind::External => Box::new(ExternalProvider::new(
            config.embed.external.clone().expect("validated"),
        )?),
    })
}

/// Reads the extract summary and checks it matches the current provider settings.
pub fn check_upstream(config: &RunConfig, layout: &Layout) -> Result<ExtractSummary> {
    let path = layout.extract_report();
    if !path.exists() {
        return Err(MissingPath::produced_by(&path, "extract").into());
    }
    let summary: ExtractSummary = serde_json::from_str(&std::fs::read_to_string(&path)?)?;
    if summary.provider_hash != provider_hash(config) {
        return Err(StaleArtifact {
            path,
            producer: "extract",
        }
        .into());
    }
    Ok(summary)
}

pub fn run(config: &RunConfig, verify: bool) -> Result<()> {
    let layout = Layout::new(config);
    let corpus = load_corpus(config, &layout)?;
    let media = match &config.embed.media {
        Some(path) => MediaIndex::load(path)?,
        None => {
            let ids: BTreeSet<&str> = corpus.records.iter().map(|r| r.video_id.as_str()).collect();
            MediaIndex::synthetic(ids)
        }
    };
    let provider = provider(config)?;
    let cache = TensorCache::open(&layout.cache)?;
    let options = ExtractOptions {
        workers: config.embed.workers,
        attempts: config.embed.attempts,
        verify: verify || config.embed.verify,
        languages: config.languages.clone(),
        ..ExtractOptions::default()
    };
    let report = extract_embeddings(&corpus.records, &media, provider.as_ref(), &cache, &options)?;
    log::info!(
        "extracted {} tensors, reused {}, skipped {} (record, modality) pairs",
        report.extracted,
        report.reused,
        report.skipped.len()
    );
    for skip in &report.skipped {
        log::warn!("skipped {} {}: {}", skip.question_id, skip.modality, skip.reason);
    }
    let summary = ExtractSummary {
        provider: provider.id().to_string(),
        provider_hash: provider_hash(config),
        dims: provider.dims(),
        extracted: report.extracted,
        reused: report.reused,
        cache_entries: report.manifest.len(),
        samples: report.samples.len(),
        skipped: report.skipped,
    };
    write_json(&layout.extract_report(), &summary)?;

    let mut inputs = layout.corpus_files();
    inputs.extend(config.embed.media.clone());
    let mut outputs = layout.cache_files();
    outputs.push(layout.extract_report());
    finish("extract", config, &layout, &inputs, &outputs)
}
