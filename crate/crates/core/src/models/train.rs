use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::checkpoint::Checkpoint;
use super::network::{FusionModel, ModelInputs};
use super::optim::{radam_step, RAdamConfig, RAdamState, RectifyMode};
use super::{argmax, cross_entropy, ModelError};
use crate::corpus::{AnswerVocabulary, LanguageCode, MultilingualQARecord};
use crate::embed::{FeatureSource, SampleFeatures};

/// Samples per gradient work unit. Fixed so that results do not depend on
/// the number of worker threads.
const CHUNK: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Optimizer {
    #[default]
    #[serde(rename = "radam")]
    RAdam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub early_stopping_patience: usize,
    /// Drives shuffling and dropout masks.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 32,
            learning_rate: 1e-3,
            optimizer: Optimizer::RAdam,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            early_stopping_patience: 5,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let err = |m: String| Err(ModelError::Config(m));
        if self.epochs == 0 || self.batch_size == 0 {
            return err("epochs and batch_size must be positive".into());
        }
        if self.early_stopping_patience == 0 || self.early_stopping_patience >= self.epochs {
            return err(format!(
                "patience {} must be in 1..{}",
                self.early_stopping_patience, self.epochs
            ));
        }
        // zero is allowed: it freezes the model
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return err(format!("learning rate {} must be finite and non-negative", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.epsilon <= 0.0 {
            return err("betas must lie in [0, 1) and epsilon must be positive".into());
        }
        Ok(())
    }

    fn radam(&self) -> RAdamConfig {
        RAdamConfig {
            lr: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.epsilon,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub train_acc: f64,
    pub val_acc: f64,
    pub lr: f64,
    pub stopped_early: bool,
}

pub fn write_training_log<W: Write>(mut w: W, history: &[EpochLog]) -> std::io::Result<()> {
    for entry in history {
        serde_json::to_writer(&mut w, entry)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

struct Sample {
    features: SampleFeatures,
    label: usize,
}

fn gather(
    records: &[MultilingualQARecord],
    features: &dyn FeatureSource,
    language: LanguageCode,
    n_labels: usize,
) -> Result<Vec<Sample>, ModelError> {
    records
        .iter()
        .map(|r| {
            let label = r.answer_label as usize;
            if label >= n_labels {
                return Err(ModelError::Label { label, n_labels });
            }
            let features = features
                .features(&r.question_id, language)
                .map_err(|source| ModelError::Features {
                    question_id: r.question_id.clone(),
                    source,
                })?;
            Ok(Sample { features, label })
        })
        .collect()
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn dropout_rng(seed: u64, epoch: usize, position: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(splitmix64(seed ^ epoch as u64) ^ position as u64))
}

/// Mean loss and accuracy in inference mode.
fn score(model: &FusionModel<f32>, samples: &[Sample]) -> Result<(f64, f64), ModelError> {
    let per: Vec<(f64, bool)> = samples
        .par_iter()
        .map(|s| {
            let p = model.forward(&ModelInputs::from(&s.features))?;
            Ok((cross_entropy(&p, s.label)?, argmax(&p) == s.label))
        })
        .collect::<Result<_, ModelError>>()?;
    let n = per.len() as f64;
    let loss = per.iter().map(|(l, _)| l).sum::<f64>() / n;
    let acc = per.iter().filter(|(_, c)| *c).count() as f64 / n;
    Ok((loss, acc))
}

/// Trains one per-language model with early stopping on validation loss and
/// returns the best-validation checkpoint.
pub fn train(
    mut model: FusionModel<f32>,
    train_records: &[MultilingualQARecord],
    val_records: &[MultilingualQARecord],
    features: &dyn FeatureSource,
    language: LanguageCode,
    vocabulary: &AnswerVocabulary,
    config: &TrainConfig,
) -> Result<Checkpoint, ModelError> {
    config.validate()?;
    let n_labels = model.config().n_labels;
    if n_labels != vocabulary.len() {
        return Err(ModelError::Config(format!(
            "model has {n_labels} outputs but the vocabulary has {} labels",
            vocabulary.len()
        )));
    }
    if train_records.is_empty() {
        return Err(ModelError::EmptySplit("train"));
    }
    if val_records.is_empty() {
        return Err(ModelError::EmptySplit("validation"));
    }
    let train_set = gather(train_records, features, language, n_labels)?;
    let val_set = gather(val_records, features, language, n_labels)?;

    let radam = config.radam();
    let mut state = RAdamState::new();
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::new();
    let mut best = model.clone();
    let mut best_loss = f64::INFINITY;
    let mut best_epoch = 0;
    let mut waited = 0;

    for epoch in 1..=config.epochs {
        let mut shuffle = ChaCha8Rng::seed_from_u64(config.seed);
        shuffle.set_stream(epoch as u64);
        order.shuffle(&mut shuffle);

        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            let base = b * config.batch_size;
            let parts: Vec<(FusionModel<f32>, f64, usize)> = batch
                .par_chunks(CHUNK)
                .enumerate()
                .map(|(c, chunk)| {
                    let mut grads = model.zeros_like();
                    let mut loss = 0.0;
                    let mut hits = 0;
                    for (k, &idx) in chunk.iter().enumerate() {
                        let s = &train_set[idx];
                        let mut rng = dropout_rng(config.seed, epoch, base + c * CHUNK + k);
                        let (probs, cache) = model.forward_cached(&ModelInputs::from(&s.features), Some(&mut rng))?;
                        loss += cross_entropy(&probs, s.label)?;
                        hits += usize::from(argmax(&probs) == s.label);
                        model.backward(&cache, s.label, &mut grads);
                    }
                    Ok((grads, loss, hits))
                })
                .collect::<Result<_, ModelError>>()?;
            let mut parts = parts.into_iter();
            let (mut grads, mut loss, mut hits) = parts.next().expect("non-empty batch");
            for (g, l, h) in parts {
                grads.add_assign(&g);
                loss += l;
                hits += h;
            }
            grads.scale(1.0 / batch.len() as f32);
            loss_sum += loss;
            correct += hits;
            let grad_refs = grads.named_parameters();
            let mut params = model.named_parameters_mut();
            radam_step(&mut params, &grad_refs, &mut state, &radam, RectifyMode::Auto)?;
        }

        let n = train_set.len() as f64;
        let (val_loss, val_acc) = score(&model, &val_set)?;
        if val_loss < best_loss {
            best_loss = val_loss;
            best = model.clone();
            best_epoch = epoch;
            waited = 0;
        } else {
            waited += 1;
        }
        let stopped_early = waited >= config.early_stopping_patience;
        let entry = EpochLog {
            epoch,
            train_loss: loss_sum / n,
            val_loss,
            train_acc: correct as f64 / n,
            val_acc,
            lr: config.learning_rate,
            stopped_early,
        };
        log::info!(
            "{language} {} epoch {epoch}: train_loss {:.4} val_loss {:.4} train_acc {:.3} val_acc {:.3}",
            model.variant(),
            entry.train_loss,
            val_loss,
            entry.train_acc,
            val_acc
        );
        history.push(entry);
        if stopped_early {
            break;
        }
    }

    Ok(Checkpoint {
        model: best,
        train_config: config.clone(),
        history,
        best_epoch,
        language,
    })
}

/// Class probabilities for one record.
pub fn predict(
    model: &FusionModel<f32>,
    features: &dyn FeatureSource,
    question_id: &str,
    language: LanguageCode,
) -> Result<Vec<f64>, ModelError> {
    let f = features
        .features(question_id, language)
        .map_err(|source| ModelError::Features {
            question_id: question_id.to_string(),
            source,
        })?;
    model.forward(&ModelInputs::from(&f))
}

/// Predictions for many records, in input order.
pub fn predict_batch(
    model: &FusionModel<f32>,
    features: &dyn FeatureSource,
    records: &[MultilingualQARecord],
    language: LanguageCode,
) -> Result<Vec<Vec<f64>>, ModelError> {
    records
        .par_iter()
        .map(|r| predict(model, features, &r.question_id, language))
        .collect()
}

/// Mean cross-entropy and accuracy over `records`.
pub fn evaluate(
    model: &FusionModel<f32>,
    features: &dyn FeatureSource,
    records: &[MultilingualQARecord],
    language: LanguageCode,
) -> Result<(f64, f64), ModelError> {
    let samples = gather(records, features, language, model.config().n_labels)?;
    score(model, &samples)
}
