//! Pipeline stages and the shared on-disk layout.

pub mod bench;
pub mod eval;
pub mod extract;
pub mod train;
pub mod translate;

use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use mera_core::corpus::{load_source_dataset, QUESTIONS_FILE, VOCABULARY_FILE};
use mera_core::embed::{CachedFeatures, SampleIndex, MANIFEST_FILE, SAMPLES_FILE};
use mera_core::models::{load_checkpoint, Checkpoint, Variant};
use mera_core::{AnswerVocabulary, LanguageCode, MultilingualQARecord};

use crate::config::RunConfig;
use crate::errors::MissingPath;
use crate::manifest::RunManifest;

/// Where each stage reads and writes under the output directory.
pub struct Layout {
    pub out: PathBuf,
    pub corpus: PathBuf,
    pub cache: PathBuf,
}

impl Layout {
    pub fn new(config: &RunConfig) -> Self {
        let out = config.out_dir.clone();
        Self {
            corpus: config.dataset.corpus.clone().unwrap_or_else(|| out.join("corpus")),
            cache: config.embed.cache_dir.clone().unwrap_or_else(|| out.join("cache")),
            out,
        }
    }

    pub fn corpus_files(&self) -> Vec<PathBuf> {
        vec![self.corpus.join(QUESTIONS_FILE), self.corpus.join(VOCABULARY_FILE)]
    }

    pub fn cache_files(&self) -> Vec<PathBuf> {
        vec![self.cache.join(MANIFEST_FILE), self.cache.join(SAMPLES_FILE)]
    }

    pub fn stage(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    pub fn extract_report(&self) -> PathBuf {
        self.stage("extract").join("report.json")
    }

    pub fn checkpoint(&self, language: LanguageCode, variant: Variant) -> PathBuf {
        self.stage("checkpoints").join(language.as_str()).join(format!("{}.ckpt", variant.name()))
    }

    pub fn training_log(&self, language: LanguageCode, variant: Variant) -> PathBuf {
        self.stage("logs").join(language.as_str()).join(format!("{}.jsonl", variant.name()))
    }

    pub fn manifest(&self, command: &str) -> PathBuf {
        self.stage("manifests").join(format!("{command}.json"))
    }
}

pub struct Corpus {
    pub records: Vec<MultilingualQARecord>,
    pub vocabulary: AnswerVocabulary,
}

/// Loads the translated corpus and checks it covers every configured language.
pub fn load_corpus(config: &RunConfig, layout: &Layout) -> Result<Corpus> {
    for file in layout.corpus_files() {
        if !file.exists() {
            return Err(MissingPath::produced_by(&file, "translate").into());
        }
    }
    let (header, records, vocabulary) = load_source_dataset(&layout.corpus, config.dataset.kind)?;
    let missing: Vec<_> = config
        .languages
        .iter()
        .filter(|l| !header.languages.contains(l))
        .map(|l| l.as_str())
        .collect();
    if !missing.is_empty() {
        bail!(
            "corpus at {} lacks languages {}; rerun `mera translate` with them configured",
            layout.corpus.display(),
            missing.join(", ")
        );
    }
    Ok(Corpus {
        records,
        vocabulary,
    })
}

/// Opens the feature cache written by `extract`.
pub fn open_features(layout: &Layout) -> Result<CachedFeatures> {
    for file in layout.cache_files() {
        if !file.exists() {
            return Err(MissingPath::produced_by(&file, "extract").into());
        }
    }
    Ok(CachedFeatures::open(&layout.cache)?)
}

/// Records that have cached features, in input order.
pub fn with_features(records: &[MultilingualQARecord], samples: &SampleIndex) -> Vec<MultilingualQARecord> {
    let kept: Vec<_> = records
        .iter()
        .filter(|r| samples.get(&r.question_id).is_some())
        .cloned()
        .collect();
    if kept.len() < records.len() {
        log::warn!("{} records have no cached features and are left out", records.len() - kept.len());
    }
    kept
}

pub fn load_all_checkpoints(layout: &Layout, language: LanguageCode) -> Result<[Checkpoint; 3]> {
    let load = |v: Variant| -> Result<Checkpoint> {
        let path = layout.checkpoint(language, v);
        if !path.exists() {
            return Err(MissingPath::produced_by(&path, "train").into());
        }
        Ok(load_checkpoint(&path)?)
    };
    Ok([load(Variant::Lstm)?, load(Variant::Conv)?, load(Variant::Transformer)?])
}

pub fn checkpoint_paths(layout: &Layout, languages: &[LanguageCode]) -> Vec<PathBuf> {
    languages
        .iter()
        .flat_map(|&l| Variant::ALL.map(|v| layout.checkpoint(l, v)))
        .collect()
}

pub fn finish(command: &str, config: &RunConfig, layout: &Layout, inputs: &[PathBuf], outputs: &[PathBuf]) -> Result<()> {
    let manifest = RunManifest::build(command, config, inputs, outputs)?;
    manifest.write(&layout.manifest(command))?;
    log::info!("{command}: wrote {} outputs under {}", outputs.len(), layout.out.display());
    Ok(())
}

pub fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| anyhow::anyhow!("creating {}: {e}", path.display()))
}
