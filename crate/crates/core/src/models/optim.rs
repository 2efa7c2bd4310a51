//! Rectified Adam.

use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use super::{lit, ModelError, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RAdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for RAdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RectifyMode {
    /// Rectified adaptive step when `ρ_t > 4`, momentum-only otherwise.
    #[default]
    Auto,
    /// Always take the adaptive branch with rectifier 1.
    ForceAdaptive,
}

#[derive(Debug, Clone, Default)]
pub struct RAdamState<T> {
    pub t: u64,
    m: Vec<Array2<T>>,
    v: Vec<Array2<T>>,
}

impl<T: Scalar> RAdamState<T> {
    pub fn new() -> Self {
        Self {
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub t: u64,
    pub rho_t: f64,
    pub adaptive: bool,
    /// Variance rectification term `r_t`, when the adaptive branch ran.
    pub rectifier: Option<f64>,
}

pub fn rho_infinity(beta2: f64) -> f64 {
    2.0 / (1.0 - beta2) - 1.0
}

pub fn rho_t(beta2: f64, t: u64) -> f64 {
    let b2t = beta2.powf(t as f64);
    let rho_inf = rho_infinity(beta2);
    if b2t == 0.0 {
        return rho_inf;
    }
    rho_inf - 2.0 * t as f64 * b2t / (1.0 - b2t)
}

/// Applies one update to `params` in place; `params` and `grads` must list
/// the same tensors in the same order on every call.
pub fn radam_step<T: Scalar>(
    params: &mut [(String, &mut Array2<T>)],
    grads: &[(String, &Array2<T>)],
    state: &mut RAdamState<T>,
    config: &RAdamConfig,
    mode: RectifyMode,
) -> Result<StepInfo, ModelError> {
    if params.len() != grads.len() {
        return Err(ModelError::Config(format!(
            "{} parameters but {} gradients",
            params.len(),
            grads.len()
        )));
    }
    for ((pn, p), (gn, g)) in params.iter().zip(grads) {
        if p.dim() != g.dim() {
            return Err(ModelError::Config(format!("gradient {gn} does not match parameter {pn}")));
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFiniteGradient(gn.clone()));
        }
    }
    if state.m.is_empty() {
        state.m = grads.iter().map(|(_, g)| Array2::zeros(g.dim())).collect();
        state.v = state.m.clone();
    }

    state.t += 1;
    let t = state.t;
    let RAdamConfig { lr, beta1, beta2, eps } = *config;
    let rho = rho_t(beta2, t);
    let rho_inf = rho_infinity(beta2);
    let bc1 = 1.0 - beta1.powf(t as f64);
    let bc2 = 1.0 - beta2.powf(t as f64);
    let rectifier = match mode {
        RectifyMode::ForceAdaptive => Some(1.0),
        RectifyMode::Auto if rho > 4.0 => Some(
            (((rho - 4.0) * (rho - 2.0) * rho_inf) / ((rho_inf - 4.0) * (rho_inf - 2.0) * rho)).sqrt(),
        ),
        RectifyMode::Auto => None,
    };

    let (b1, b2): (T, T) = (lit(beta1), lit(beta2));
    let (c1, c2): (T, T) = (lit(1.0 - beta1), lit(1.0 - beta2));
    let eps_t: T = lit(eps);
    let inv_bc1: T = lit(1.0 / bc1);
    let inv_bc2: T = lit(1.0 / bc2);
    for (i, ((_, p), (_, g))) in params.iter_mut().zip(grads).enumerate() {
        let m = &mut state.m[i];
        let v = &mut state.v[i];
        Zip::from(&mut *m).and(&mut *v).and(*g).for_each(|m, v, &g| {
            *m = b1 * *m + c1 * g;
            *v = b2 * *v + c2 * g * g;
        });
        match rectifier {
            Some(r) => {
                let step: T = lit(lr * r);
                Zip::from(&mut **p).and(&*m).and(&*v).for_each(|p, &m, &v| {
                    let m_hat = m * inv_bc1;
                    let v_hat = v * inv_bc2;
                    *p = *p - step * m_hat / (v_hat.sqrt() + eps_t);
                });
            }
            None => {
                let step: T = lit(lr);
                Zip::from(&mut **p).and(&*m).for_each(|p, &m| {
                    *p = *p - step * m * inv_bc1;
                });
            }
        }
    }
    Ok(StepInfo {
        t,
        rho_t: rho,
        adaptive: rectifier.is_some(),
        rectifier,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step_scalar(
        p: &mut Array2<f64>,
        g: f64,
        state: &mut RAdamState<f64>,
        cfg: &RAdamConfig,
        mode: RectifyMode,
    ) -> StepInfo {
        let grad = Array2::from_elem((1, 1), g);
        radam_step(&mut [("p".into(), p)], &[("p".into(), &grad)], state, cfg, mode).unwrap()
    }

    #[test]
    fn first_step_is_momentum_only() {
        let rho = rho_t(0.999, 1);
        // 1999 - 1998
        assert!((rho - 1.0).abs() < 1e-9, "{rho}");
        let mut p = Array2::from_elem((1, 1), 1.0);
        let mut s = RAdamState::new();
        let info = step_scalar(&mut p, 0.5, &mut s, &RAdamConfig::default(), RectifyMode::Auto);
        assert!(!info.adaptive);
        // m̂ = g on the first step
        assert!((p[[0, 0]] - (1.0 - 1e-3 * 0.5)).abs() < 1e-15);
    }

    #[test]
    fn branch_switches_once_rho_exceeds_four() {
        let first_adaptive = (1..100).find(|&t| rho_t(0.999, t) > 4.0).unwrap();
        let mut p = Array2::from_elem((1, 1), 0.0);
        let mut s = RAdamState::new();
        for t in 1..=first_adaptive {
            let info = step_scalar(&mut p, 1.0, &mut s, &RAdamConfig::default(), RectifyMode::Auto);
            assert_eq!(info.adaptive, t == first_adaptive, "t = {t}");
        }
    }

    #[test]
    fn zero_gradients_leave_parameters_unchanged() {
        let mut p = Array2::from_elem((1, 1), 0.75);
        let mut s = RAdamState::new();
        for _ in 0..20 {
            step_scalar(&mut p, 0.0, &mut s, &RAdamConfig::default(), RectifyMode::Auto);
        }
        assert_eq!(p[[0, 0]], 0.75);
    }

    #[test]
    fn constant_gradient_moves_against_its_sign() {
        for g in [2.5, -0.01] {
            let mut p = Array2::from_elem((1, 1), 0.0);
            let mut s = RAdamState::new();
            let mut before = 0.0;
            for _ in 0..1000 {
                before = p[[0, 0]];
                step_scalar(&mut p, g, &mut s, &RAdamConfig::default(), RectifyMode::Auto);
            }
            let delta: f64 = p[[0, 0]] - before;
            assert_eq!(delta.signum(), -f64::signum(g));
            // m̂ / sqrt(v̂) = sign(g), so the step is lr · r_t with r_t in (0, 1]
            assert!(delta.abs() <= 1e-3 && delta.abs() > 5e-4, "{delta}");
        }
    }

    #[test]
    fn degenerate_betas_give_sign_descent() {
        let cfg = RAdamConfig {
            lr: 0.1,
            beta1: 0.0,
            beta2: 0.0,
            eps: 1e-8,
        };
        let mut p = Array2::from_elem((1, 1), 1.0);
        let mut s = RAdamState::new();
        let info = step_scalar(&mut p, 4.0, &mut s, &cfg, RectifyMode::ForceAdaptive);
        assert!(info.adaptive);
        assert!((p[[0, 0]] - (1.0 - 0.1 * 4.0 / (4.0 + 1e-8))).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_names_the_parameter() {
        let mut p = Array2::from_elem((1, 1), 1.0);
        let g = Array2::from_elem((1, 1), f64::NAN);
        let err = radam_step(
            &mut [("fc0.w".into(), &mut p)],
            &[("fc0.w".into(), &g)],
            &mut RAdamState::new(),
            &RAdamConfig::default(),
            RectifyMode::Auto,
        )
        .unwrap_err();
        assert!(err.to_string().contains("fc0.w"));
        assert_eq!(p[[0, 0]], 1.0);
    }
}
