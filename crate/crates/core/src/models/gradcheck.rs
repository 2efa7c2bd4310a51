//! Finite-difference verification of the analytic gradients.

use super::network::{FusionModel, ModelInputs};
use super::{cross_entropy, ModelConfig, ModelError, Variant};
use crate::embed::ProviderDims;

/// Gradients smaller than this in both estimates count as agreeing.
pub const GRADIENT_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_relative_error: f64,
    /// `name[index]` of the worst entry.
    pub worst: String,
}

/// Small architecture of the given variant for gradient checks: every input
/// dim ≤ 8, filters `[2, 3]`, one attention head.
pub fn reduced_config(variant: Variant, seed: u64) -> ModelConfig {
    ModelConfig {
        variant,
        inputs: ProviderDims {
            video: (8, 5),
            audio: (7, 6),
            text: (8, 7),
        },
        lstm_hidden: 4,
        conv_filters: vec![2, 3],
        kernel: 3,
        transformer_heads: 1,
        ffn_multiplier: 4,
        fcn: vec![6, 5, 4],
        n_labels: 5,
        dropout_rate: 0.2,
        seed,
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs());
    if scale < GRADIENT_FLOOR {
        0.0
    } else {
        (analytic - numeric).abs() / scale
    }
}

/// Compares every analytic partial derivative of the inference-mode loss
/// with a central difference of step `h`.
pub fn gradient_check(
    model: &FusionModel<f64>,
    inputs: &ModelInputs,
    target: usize,
    h: f64,
) -> Result<GradCheckReport, ModelError> {
    let (_, grads) = model.loss_and_gradient(inputs, target, None)?;
    let analytic: Vec<(String, Vec<f64>)> = grads
        .named_parameters()
        .into_iter()
        .map(|(n, g)| (n, g.iter().copied().collect()))
        .collect();

    let mut probe = model.clone();
    let loss_at = |m: &FusionModel<f64>| -> Result<f64, ModelError> { cross_entropy(&m.forward(inputs)?, target) };
    let mut report = GradCheckReport {
        checked: 0,
        max_relative_error: 0.0,
        worst: String::new(),
    };
    for (pi, (name, values)) in analytic.iter().enumerate() {
        for (k, &a) in values.iter().enumerate() {
            let nudge = |m: &mut FusionModel<f64>, delta: f64| {
                let mut params = m.named_parameters_mut();
                let p = &mut params[pi].1;
                let cell = p.iter_mut().nth(k).expect("index in range");
                *cell += delta;
            };
            let orig = probe.named_parameters()[pi].1.iter().nth(k).copied().expect("index");
            nudge(&mut probe, h);
            let plus = loss_at(&probe)?;
            nudge(&mut probe, -2.0 * h);
            let minus = loss_at(&probe)?;
            {
                let mut params = probe.named_parameters_mut();
                *params[pi].1.iter_mut().nth(k).expect("index") = orig;
            }
            let numeric = (plus - minus) / (2.0 * h);
            let err = relative_error(a, numeric);
            report.checked += 1;
            if err > report.max_relative_error {
                report.max_relative_error = err;
                report.worst = format!("{name}[{k}]: analytic {a:e} numeric {numeric:e}");
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn inputs_for(config: &ModelConfig, seed: u64) -> [Array2<f32>; 3] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        [config.inputs.video, config.inputs.audio, config.inputs.text]
            .map(|d| Array2::from_shape_simple_fn(d, || rng.random_range(-1.0f32..1.0)))
    }

    fn check(config: ModelConfig) {
        let x = inputs_for(&config, config.seed + 100);
        let model: FusionModel<f64> = FusionModel::build(config).unwrap();
        let inputs = ModelInputs {
            video: x[0].view(),
            audio: x[1].view(),
            text: x[2].view(),
        };
        for target in [0, 3] {
            let r = gradient_check(&model, &inputs, target, 1e-5).unwrap();
            assert_eq!(r.checked, model.parameter_count());
            assert!(r.max_relative_error < 1e-3, "{r:?}");
        }
    }

    #[test]
    fn lstm_gradients_match_finite_differences() {
        check(reduced_config(Variant::Lstm, 1));
    }

    #[test]
    fn conv_gradients_match_finite_differences() {
        check(reduced_config(Variant::Conv, 2));
    }

    #[test]
    fn transformer_gradients_match_finite_differences() {
        check(reduced_config(Variant::Transformer, 3));
    }

    #[test]
    fn multi_head_attention_gradients_match() {
        let mut cfg = reduced_config(Variant::Transformer, 4);
        cfg.conv_filters = vec![2, 4];
        cfg.transformer_heads = 2;
        check(cfg);
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(1e-10, -1e-10), 0.0);
        assert!((relative_error(1.0, 1.001) - 0.001 / 1.001).abs() < 1e-12);
    }
}
