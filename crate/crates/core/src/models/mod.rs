//! Fusion classifiers over per-modality embedding sequences.
//!
//! Three variants share the same head and differ only in how each modality
//! sequence is encoded into a vector:
//!
//! * [`Variant::Lstm`]: one LSTM per modality, final hidden state.
//! * [`Variant::Conv`]: four conv → ReLU → max-pool blocks, mean over time.
//! * [`Variant::Transformer`]: the conv stack followed by one post-norm
//!   self-attention encoder layer, mean over time.
//!
//! The encoded vectors are concatenated and passed through the
//! fully-connected stack and a softmax head. All layers carry hand-written
//! backward passes; models are generic over [`Scalar`] so gradients can be
//! checked at `f64` while training runs at `f32`.

mod checkpoint;
pub mod fixtures;
mod gradcheck;
mod layers;
mod network;
mod optim;
mod train;

use std::fmt;
use std::iter::Sum;
use std::str::FromStr;

use ndarray::NdFloat;
use num_traits::FromPrimitive;
use serde::{Deserialize, Serialize};

use crate::embed::{EmbedError, ProviderDims};

pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use gradcheck::{gradient_check, reduced_config, relative_error, GradCheckReport, GRADIENT_FLOOR};
pub use layers::{ConvBlock, EncoderLayer, LayerNorm, Linear, Lstm, MultiHeadAttention};
pub use network::{count_parameters, Encoder, FusionModel, ModelInputs, Parameterized};
pub use optim::{radam_step, rho_infinity, rho_t, RAdamConfig, RAdamState, RectifyMode, StepInfo};
pub use train::{
    evaluate, predict, predict_batch, train, write_training_log, EpochLog, Optimizer, TrainConfig,
};

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("input shape mismatch for {modality}: expected {expected:?}, found {found:?}")]
    Input {
        modality: &'static str,
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("label {label} out of range for {n_labels} labels")]
    Label { label: usize, n_labels: usize },
    #[error("non-finite gradient in {0}")]
    NonFiniteGradient(String),
    #[error("features for {question_id}: {source}")]
    Features {
        question_id: String,
        #[source]
        source: EmbedError,
    },
    #[error("empty {0} split")]
    EmptySplit(&'static str),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Floating-point element type of a model.
pub trait Scalar: NdFloat + FromPrimitive + Default + Sum {}

impl Scalar for f32 {}
impl Scalar for f64 {}

pub(crate) fn lit<T: Scalar>(x: f64) -> T {
    T::from_f64(x).expect("representable constant")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "MERA-L")]
    Lstm,
    #[serde(rename = "MERA-C")]
    Conv,
    #[serde(rename = "MERA-T")]
    Transformer,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Lstm, Variant::Conv, Variant::Transformer];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Lstm => "MERA-L",
            Variant::Conv => "MERA-C",
            Variant::Transformer => "MERA-T",
        }
    }

    /// One-letter column tag used in reports.
    pub fn short(self) -> &'static str {
        match self {
            Variant::Lstm => "L",
            Variant::Conv => "C",
            Variant::Transformer => "T",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "MERA-L" | "L" | "LSTM" => Ok(Variant::Lstm),
            "MERA-C" | "C" | "CNN" | "CONV" => Ok(Variant::Conv),
            "MERA-T" | "T" | "TRANSFORMER" => Ok(Variant::Transformer),
            _ => Err(ModelError::Config(format!("unknown variant {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    /// `(time, dim)` of the video, audio and text sequences.
    pub inputs: ProviderDims,
    pub lstm_hidden: usize,
    pub conv_filters: Vec<usize>,
    pub kernel: usize,
    pub transformer_heads: usize,
    pub ffn_multiplier: usize,
    pub fcn: Vec<usize>,
    pub n_labels: usize,
    pub dropout_rate: f64,
    pub seed: u64,
}

impl ModelConfig {
    pub fn new(variant: Variant, inputs: ProviderDims) -> Self {
        Self {
            variant,
            inputs,
            lstm_hidden: 60,
            conv_filters: vec![32, 64, 128, 256],
            kernel: 3,
            transformer_heads: 8,
            ffn_multiplier: 4,
            fcn: vec![200, 90, 56],
            n_labels: 42,
            dropout_rate: 0.2,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let err = |m: String| Err(ModelError::Config(m));
        for (name, (t, d)) in [
            ("video", self.inputs.video),
            ("audio", self.inputs.audio),
            ("text", self.inputs.text),
        ] {
            if t == 0 || d == 0 {
                return err(format!("{name} input dims must be positive"));
            }
            if self.variant != Variant::Lstm {
                let min = 1usize << self.conv_filters.len();
                if t < min {
                    return err(format!(
                        "{name} sequence length {t} is shorter than the {min} steps needed by {} pooling blocks",
                        self.conv_filters.len()
                    ));
                }
            }
        }
        if self.n_labels < 2 {
            return err("n_labels must be at least 2".into());
        }
        if self.fcn.is_empty() || self.fcn.contains(&0) {
            return err("fully-connected sizes must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return err(format!("dropout rate {} outside [0, 1)", self.dropout_rate));
        }
        match self.variant {
            Variant::Lstm => {
                if self.lstm_hidden == 0 {
                    return err("lstm_hidden must be positive".into());
                }
            }
            Variant::Conv | Variant::Transformer => {
                if self.conv_filters.is_empty() || self.conv_filters.contains(&0) {
                    return err("conv filters must be non-empty and positive".into());
                }
                if self.kernel == 0 || self.kernel % 2 == 0 {
                    return err(format!("kernel {} must be odd", self.kernel));
                }
            }
        }
        if self.variant == Variant::Transformer {
            let width = *self.conv_filters.last().expect("checked");
            if self.transformer_heads == 0 || width % self.transformer_heads != 0 {
                return err(format!(
                    "model width {width} not divisible by {} heads",
                    self.transformer_heads
                ));
            }
            if self.ffn_multiplier == 0 {
                return err("ffn_multiplier must be positive".into());
            }
        }
        Ok(())
    }
}

/// Numerically stable softmax, computed in `f64`.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub const CE_EPSILON: f64 = 1e-12;

/// `-ln max(p[target], ε)`.
pub fn cross_entropy(probabilities: &[f64], target: usize) -> Result<f64, ModelError> {
    let p = probabilities.get(target).ok_or(ModelError::Label {
        label: target,
        n_labels: probabilities.len(),
    })?;
    Ok(-p.max(CE_EPSILON).ln())
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cross_entropy_reference_points() {
        assert_eq!(cross_entropy(&[0.0, 1.0], 1).unwrap(), 0.0);
        let uniform = vec![1.0 / 42.0; 42];
        let l = cross_entropy(&uniform, 5).unwrap();
        assert!((l - 42f64.ln()).abs() < 1e-12);
        assert!((l - 3.7377).abs() < 1e-4);
        let l = cross_entropy(&[1.0, 0.0], 1).unwrap();
        assert!((l - (-(1e-12f64).ln())).abs() < 1e-9);
        assert!(l.is_finite());
        assert!(matches!(cross_entropy(&[1.0], 3), Err(ModelError::Label { .. })));
    }

    #[test]
    fn argmax_prefers_lowest_index_on_ties() {
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
        assert_eq!(argmax(&[0.5, 0.5]), 0);
        assert_eq!(argmax(&[0.1, 0.2, 0.7]), 2);
    }

    #[test]
    fn softmax_is_stable_for_large_logits() {
        let p = softmax(&[1000.0, 1000.0, -1000.0]);
        assert!((p[0] - 0.5).abs() < 1e-12);
        assert_eq!(p[2], 0.0);
    }

    #[test]
    fn short_sequences_rejected_for_pooling_variants() {
        let mut cfg = ModelConfig::new(Variant::Conv, ProviderDims::uniform(8, 4));
        assert!(matches!(cfg.validate(), Err(ModelError::Config(m)) if m.contains("shorter")));
        cfg.variant = Variant::Lstm;
        assert!(cfg.validate().is_ok());
        cfg.inputs = ProviderDims::uniform(16, 4);
        cfg.variant = Variant::Transformer;
        assert!(cfg.validate().is_ok());
        cfg.transformer_heads = 7;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
            let json = serde_json::to_string(&v).unwrap();
            assert_eq!(json, format!("\"{}\"", v.name()));
        }
    }
}
