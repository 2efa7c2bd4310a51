use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::models::argmax;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for EnsembleWeights {
    fn default() -> Self {
        Self {
            alpha: 0.33,
            beta: 0.33,
            gamma: 0.33,
        }
    }
}

impl EnsembleWeights {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Result<Self, EvalError> {
        let w = Self { alpha, beta, gamma };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma)] {
            if !v.is_finite() || v < 0.0 {
                return Err(EvalError::Argument(format!("weight {name} = {v} must be finite and non-negative")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleOutput {
    /// `α·ŷ_L + β·ŷ_C + γ·ŷ_T`, not renormalized.
    pub ensemble: Vec<f64>,
    pub components: [Vec<f64>; 3],
}

impl EnsembleOutput {
    pub fn argmax(&self) -> usize {
        argmax(&self.ensemble)
    }

    pub fn total(&self) -> f64 {
        self.ensemble.iter().sum()
    }
}

pub fn weighted_ensemble(
    l: &[f64],
    c: &[f64],
    t: &[f64],
    weights: &EnsembleWeights,
) -> Result<EnsembleOutput, EvalError> {
    if l.len() != c.len() || c.len() != t.len() {
        return Err(EvalError::Length(vec![l.len(), c.len(), t.len()]));
    }
    weights.validate()?;
    let ensemble = l
        .iter()
        .zip(c)
        .zip(t)
        .map(|((&a, &b), &g)| weights.alpha * a + weights.beta * b + weights.gamma * g)
        .collect();
    Ok(EnsembleOutput {
        ensemble,
        components: [l.to_vec(), c.to_vec(), t.to_vec()],
    })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn hand_evaluated_example() {
        let third = 1.0 / 3.0;
        let out = weighted_ensemble(
            &[0.6, 0.4],
            &[0.2, 0.8],
            &[0.5, 0.5],
            &EnsembleWeights::new(third, third, third).unwrap(),
        )
        .unwrap();
        assert!((out.ensemble[0] - 0.4333).abs() < 1e-4);
        assert!((out.ensemble[1] - 0.5667).abs() < 1e-4);
        assert_eq!(out.argmax(), 1);
    }

    #[test]
    fn common_vector_scales_by_weight_sum() {
        let p = [0.1, 0.7, 0.2];
        let out = weighted_ensemble(&p, &p, &p, &EnsembleWeights::default()).unwrap();
        for (e, x) in out.ensemble.iter().zip(p) {
            assert!((e - 0.99 * x).abs() < 1e-12);
        }
        assert_eq!(out.argmax(), 1);
        assert!((out.total() - 0.99).abs() < 1e-12);
    }

    #[test]
    fn zero_weights_give_zero_vector() {
        let out = weighted_ensemble(&[0.5, 0.5], &[1.0, 0.0], &[0.0, 1.0], &EnsembleWeights::new(0.0, 0.0, 0.0).unwrap())
            .unwrap();
        assert_eq!(out.ensemble, vec![0.0, 0.0]);
    }

    #[test]
    fn length_mismatch_and_negative_weights_rejected() {
        assert!(matches!(
            weighted_ensemble(&[1.0], &[0.5, 0.5], &[1.0], &EnsembleWeights::default()),
            Err(EvalError::Length(_))
        ));
        assert!(EnsembleWeights::new(-0.1, 0.5, 0.5).is_err());
    }

    fn distribution(n: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.001f64..1.0, n).prop_map(|v| {
            let s: f64 = v.iter().sum();
            v.into_iter().map(|x| x / s).collect()
        })
    }

    proptest! {
        #[test]
        fn argmax_invariant_under_common_scaling(
            l in distribution(6), c in distribution(6), t in distribution(6),
            a in 0.0f64..1.0, b in 0.0f64..1.0, g in 0.01f64..1.0, k in 0.1f64..10.0,
        ) {
            let w = EnsembleWeights::new(a, b, g).unwrap();
            let scaled = EnsembleWeights::new(k * a, k * b, k * g).unwrap();
            let x = weighted_ensemble(&l, &c, &t, &w).unwrap();
            let y = weighted_ensemble(&l, &c, &t, &scaled).unwrap();
            // exact ties can flip under rounding; skip them
            let mut sorted = x.ensemble.clone();
            sorted.sort_by(|p, q| q.total_cmp(p));
            prop_assume!(sorted[0] - sorted[1] > 1e-9);
            prop_assert_eq!(x.argmax(), y.argmax());
        }
    }
}
