//! Versioned TOML run configuration.
//!
//! ```toml
//! version = 1
//! seed = 0
//! out_dir = "runs/demo"
//! languages = ["en", "fr"]
//!
//! [dataset]
//! kind = "m-MUSIC-AVQA"
//! source = "data/english"        # input of `translate`
//! corpus = "data/multilingual"   # defaults to <out_dir>/corpus
//! references = "data/reference"  # optional, for translation quality
//!
//! [translate]
//! backend = "identity"           # identity | table | remote
//!
//! [embed]
//! provider = "synthetic"         # synthetic | external
//!
//! [models]
//! variants = ["MERA-L", "MERA-C", "MERA-T"]
//!
//! [train]
//! epochs = 50
//!
//! [ensemble]
//! alpha = 0.33
//! beta = 0.33
//! gamma = 0.33
//! ```
//!
//! Relative paths resolve against the directory holding the config file.

use std::path::{Path, PathBuf};

use anyhow::{Context as _, Result};
use mera_core::embed::{ExternalProviderConfig, ProviderDims};
use mera_core::enseval::EnsembleWeights;
use mera_core::models::{TrainConfig, Variant};
use mera_core::translate::RemoteConfig;
use mera_core::{DatasetKind, LanguageCode};
use serde::{Deserialize, Serialize};

use crate::errors::{MissingPath, UsageError};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    /// Drives model initialisation, shuffling, dropout and the synthetic provider.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default = "default_languages")]
    pub languages: Vec<LanguageCode>,
    #[serde(default)]
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub translate: TranslateSection,
    #[serde(default)]
    pub embed: EmbedSection,
    #[serde(default)]
    pub models: ModelsSection,
    /// `train.seed` is replaced by the top-level seed.
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub ensemble: EnsembleWeights,
    #[serde(default)]
    pub bench: BenchSection,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("runs")
}

fn default_languages() -> Vec<LanguageCode> {
    LanguageCode::ALL.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    #[serde(default = "default_kind")]
    pub kind: DatasetKind,
    pub source: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    pub references: Option<PathBuf>,
}

fn default_kind() -> DatasetKind {
    DatasetKind::MusicAvqa
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            kind: default_kind(),
            source: None,
            corpus: None,
            references: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Identity,
    Table,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TranslateSection {
    #[serde(default)]
    pub backend: BackendKind,
    /// JSON object `{target: {english: translation}}` for the table backend.
    pub table: Option<PathBuf>,
    /// Keep the English text for strings missing from the table.
    #[serde(default)]
    pub table_passthrough: bool,
    pub remote: Option<RemoteConfig>,
    #[serde(default = "default_workers")]
    pub max_in_flight: usize,
    #[serde(default = "default_bleu_order")]
    pub bleu_order: usize,
    /// Languages whose corpus BLEU falls below this are reported for review.
    pub min_bleu: Option<f64>,
}

fn default_workers() -> usize {
    4
}

fn default_bleu_order() -> usize {
    4
}

impl Default for TranslateSection {
    fn default() -> Self {
        Self {
            backend: BackendKind::default(),
            table: None,
            table_passthrough: false,
            remote: None,
            max_in_flight: default_workers(),
            bleu_order: default_bleu_order(),
            min_bleu: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    #[default]
    Synthetic,
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbedSection {
    #[serde(default)]
    pub provider: ProviderKind,
    /// Defaults to `<out_dir>/cache`.
    pub cache_dir: Option<PathBuf>,
    /// Media index JSON; synthetic media per video id when absent.
    pub media: Option<PathBuf>,
    #[serde(default = "default_dims")]
    pub synthetic_dims: ProviderDims,
    pub external: Option<ExternalProviderConfig>,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default = "default_attempts")]
    pub attempts: u32,
    #[serde(default)]
    pub verify: bool,
}

fn default_dims() -> ProviderDims {
    ProviderDims::uniform(16, 32)
}

fn default_attempts() -> u32 {
    3
}

impl Default for EmbedSection {
    fn default() -> Self {
        Self {
            provider: ProviderKind::default(),
            cache_dir: None,
            media: None,
            synthetic_dims: default_dims(),
            external: None,
            workers: default_workers(),
            attempts: default_attempts(),
            verify: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelsSection {
    #[serde(default = "default_variants")]
    pub variants: Vec<Variant>,
}

fn default_variants() -> Vec<Variant> {
    Variant::ALL.to_vec()
}

impl Default for ModelsSection {
    fn default() -> Self {
        Self {
            variants: default_variants(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchSection {
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    /// Defaults to the first configured language.
    pub language: Option<LanguageCode>,
}

fn default_repeats() -> usize {
    5
}

impl Default for BenchSection {
    fn default() -> Self {
        Self {
            repeats: default_repeats(),
            language: None,
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            seed: 0,
            out_dir: default_out_dir(),
            languages: default_languages(),
            dataset: DatasetConfig::default(),
            translate: TranslateSection::default(),
            embed: EmbedSection::default(),
            models: ModelsSection::default(),
            train: TrainConfig::default(),
            ensemble: EnsembleWeights::default(),
            bench: BenchSection::default(),
        }
    }
}

fn rebase(base: &Path, path: &mut PathBuf) {
    if path.is_relative() {
        *path = base.join(&*path);
    }
}

fn rebase_opt(base: &Path, path: &mut Option<PathBuf>) {
    if let Some(p) = path {
        rebase(base, p);
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let config: RunConfig = toml::from_str(text).map_err(|e| UsageError(format!("invalid config: {e}")))?;
        if config.version != CONFIG_VERSION {
            return Err(UsageError(format!(
                "config version {} is not supported (expected {CONFIG_VERSION})",
                config.version
            ))
            .into());
        }
        Ok(config)
    }

    /// Reads, parses and validates a config file.
    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(MissingPath::new(path).into());
        }
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut config = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.rebase(base);
        config.validate()?;
        Ok(config)
    }

    fn rebase(&mut self, base: &Path) {
        rebase(base, &mut self.out_dir);
        rebase_opt(base, &mut self.dataset.source);
        rebase_opt(base, &mut self.dataset.corpus);
        rebase_opt(base, &mut self.dataset.references);
        rebase_opt(base, &mut self.translate.table);
        rebase_opt(base, &mut self.embed.cache_dir);
        rebase_opt(base, &mut self.embed.media);
    }

    /// Applies command-line overrides and the single-seed rule.
    pub fn apply_overrides(&mut self, seed: Option<u64>, out_dir: Option<PathBuf>) {
        if let Some(seed) = seed {
            self.seed = seed;
        }
        if let Some(dir) = out_dir {
            self.out_dir = dir;
        }
        self.train.seed = self.seed;
    }

    /// Checks enums, numeric ranges and every input path that must already exist.
    pub fn validate(&self) -> Result<()> {
        let usage = |m: String| -> Result<()> { Err(UsageError(m).into()) };
        if self.languages.is_empty() {
            return usage("languages must not be empty".into());
        }
        let mut seen = self.languages.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.languages.len() {
            return usage("languages contains duplicates".into());
        }
        if self.models.variants.is_empty() {
            return usage("models.variants must not be empty".into());
        }
        self.train.validate().map_err(|e| UsageError(format!("[train] {e}")))?;
        self.ensemble.validate().map_err(|e| UsageError(format!("[ensemble] {e}")))?;
        if self.bench.repeats < 3 {
            return usage(format!("bench.repeats must be at least 3, got {}", self.bench.repeats));
        }
        if let Some(lang) = self.bench.language {
            if !self.languages.contains(&lang) {
                return usage(format!("bench.language {lang} is not among the configured languages"));
            }
        }
        match self.translate.backend {
            BackendKind::Table if self.translate.table.is_none() => {
                return usage("translate.backend = \"table\" needs translate.table".into())
            }
            BackendKind::Remote if self.translate.remote.is_none() => {
                return usage("translate.backend = \"remote\" needs a [translate.remote] section".into())
            }
            _ => {}
        }
        if self.embed.provider == ProviderKind::External && self.embed.external.is_none() {
            return usage("embed.provider = \"external\" needs an [embed.external] section".into());
        }
        if self.translate.max_in_flight == 0 || self.embed.workers == 0 || self.embed.attempts == 0 {
            return usage("worker and attempt counts must be positive".into());
        }
        for path in [
            &self.dataset.source,
            &self.dataset.references,
            &self.translate.table,
            &self.embed.media,
        ]
        .into_iter()
        .flatten()
        {
            if !path.exists() {
                return Err(MissingPath::new(path).into());
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_takes_defaults() {
        let c = RunConfig::parse("version = 1").unwrap();
        assert_eq!(c.languages, LanguageCode::ALL.to_vec());
        assert_eq!(c.models.variants, Variant::ALL.to_vec());
        assert_eq!(c.train, TrainConfig::default());
        assert_eq!(c.ensemble, EnsembleWeights::default());
        c.validate().unwrap();
    }

    #[test]
    fn full_config_parses() {
        let text = r#"
            version = 1
            seed = 9
            languages = ["en", "hi"]
            [dataset]
            kind = "m-MUSIC-AVQA"
            [translate]
            backend = "identity"
            bleu_order = 2
            [embed]
            provider = "synthetic"
            synthetic_dims = { video = [16, 8], audio = [16, 8], text = [16, 4] }
            [models]
            variants = ["MERA-L", "MERA-T"]
            [train]
            epochs = 3
            early_stopping_patience = 2
            [ensemble]
            alpha = 1.0
            beta = 0.0
            gamma = 0.0
        "#;
        let mut c = RunConfig::parse(text).unwrap();
        c.apply_overrides(None, None);
        c.validate().unwrap();
        assert_eq!(c.embed.synthetic_dims.text, (16, 4));
        assert_eq!(c.train.seed, 9);
        assert_eq!(c.models.variants, [Variant::Lstm, Variant::Transformer]);
    }

    #[test]
    fn bad_values_are_rejected_at_parse_time() {
        for text in [
            "version = 2",
            "version = 1\nlanguages = [\"xx\"]",
            "version = 1\n[models]\nvariants = [\"MERA-Q\"]",
            "version = 1\nunknown = 3",
        ] {
            let err = RunConfig::parse(text).unwrap_err();
            assert!(err.downcast_ref::<UsageError>().is_some(), "{text}: {err}");
        }
        let mut c = RunConfig::parse("version = 1").unwrap();
        c.translate.backend = BackendKind::Table;
        assert!(c.validate().is_err());
        let mut c = RunConfig::parse("version = 1").unwrap();
        c.dataset.source = Some(PathBuf::from("/definitely/not/here"));
        let err = c.validate().unwrap_err();
        assert!(err.downcast_ref::<MissingPath>().is_some());
    }
}
