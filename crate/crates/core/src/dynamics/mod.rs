//! Combined reference/tracking system with periodic resets and speed-gradient adaptation.
//!
//! Both systems share the canonical right-hand side
//!
//! ```text
//! x_i' = alpha_i xi1(x_i) + q_i xi2(x_i)
//! ```
//!
//! where the basis pair depends on the [`Structure`]:
//!
//! * [`Structure::Free`]: `xi1(x) = x`, `xi2(x) = x^2`. Both the linear rate `alpha`
//!   and the signed quadratic coefficient `q` are unknown. A logistic term
//!   `alpha x (1 - beta x)` maps to `q = -alpha beta`; `alpha x - beta x^2` maps to
//!   `q = -beta`.
//! * [`Structure::KnownSaturation`]: `xi1(x) = x (1 - beta x)` with `beta` known and
//!   `xi2 = 0`. Only `alpha` is estimated.
//!
//! The tracking copy adds the output-error injection `K e` with
//! `e = C^T x_hat - C^T x`. A reset gate `lambda` switches both systems to a
//! sliding-mode return `-l0 sign(x - x0)` during the last `dT2` seconds of every
//! period and whenever `|x_hat| >= D`; adaptation is frozen while the gate is on.

mod forward;
mod lyapunov;

pub use forward::{feedback_rhs, multiinput_rhs, InputChannel, MultiInputSystem};
pub use lyapunov::{
    dead_zone_potential, disturbance_bound, gain_for_bound, kstar_bound, lyapunov_value,
    progress_bound, ProgressError, ProgressTrace, Truth,
};

use serde::{Deserialize, Serialize};

use crate::error::ValidationError;
use crate::model::LogisticEnsemble;

/// Periodic reset gate: `active` seconds of tracking followed by `reset` seconds of return.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResetSchedule {
    /// Active-window length `T`.
    pub active: f64,
    /// Reset-window length `dT2`.
    pub reset: f64,
    /// Norm bound `D` on the tracking state; `inf` disables the norm trigger.
    pub norm_bound: f64,
    /// Slew rate `l0` of the sliding-mode return.
    pub slew: f64,
    /// Keep the gate on after a norm trigger until the end of the current period.
    #[serde(default)]
    pub latched: bool,
}

impl ResetSchedule {
    /// Validated schedule with the reachability condition `l0 >= D / dT2`.
    pub fn new(active: f64, reset: f64, norm_bound: f64, slew: f64) -> Result<Self, ValidationError> {
        let s = Self {
            active,
            reset,
            norm_bound,
            slew,
            latched: false,
        };
        s.validate()?;
        Ok(s)
    }

    /// Purely periodic gate without a norm trigger. The reachability condition
    /// cannot be checked, so a reset window may end before the states reach `x0`.
    pub fn periodic(active: f64, reset: f64, slew: f64) -> Result<Self, ValidationError> {
        let s = Self {
            active,
            reset,
            norm_bound: f64::INFINITY,
            slew,
            latched: false,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        if !(self.active > 0.0 && self.active.is_finite()) {
            return Err(ValidationError::new("schedule.active", "must be positive and finite"));
        }
        if !(self.reset > 0.0 && self.reset.is_finite()) {
            return Err(ValidationError::new("schedule.reset", "must be positive and finite"));
        }
        if !(self.slew > 0.0 && self.slew.is_finite()) {
            return Err(ValidationError::new("schedule.slew", "must be positive and finite"));
        }
        if !(self.norm_bound > 0.0) {
            return Err(ValidationError::new("schedule.norm_bound", "must be positive"));
        }
        if self.norm_bound.is_finite() && self.slew < self.norm_bound / self.reset {
            return Err(ValidationError::new(
                "schedule.slew",
                format!(
                    "reachability requires l0 >= D/dT2 = {}, got {}",
                    self.norm_bound / self.reset,
                    self.slew
                ),
            ));
        }
        Ok(())
    }

    /// Period `T1 = T + dT2`.
    pub fn period(&self) -> f64 {
        self.active + self.reset
    }
}

/// `lambda(t, D)`: `true` inside a reset window or when `|x_hat| >= D`.
pub fn lambda_gate(t: f64, x_hat_norm: f64, sched: &ResetSchedule) -> bool {
    t.rem_euclid(sched.period()) >= sched.active || x_hat_norm >= sched.norm_bound
}

/// Componentwise sign with `sign(0) = 0`.
#[inline]
pub fn signum(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub fn signum_vec(v: &[f64]) -> Vec<f64> {
    v.iter().map(|&x| signum(x)).collect()
}

/// `y = C^T x`.
#[inline]
pub fn output(weights: &[f64], x: &[f64]) -> f64 {
    weights.iter().zip(x).map(|(c, x)| c * x).sum()
}

pub fn euclidean_norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Dead-zone indicator `S_delta(e)`.
#[inline]
pub fn dead_zone(e: f64, delta: f64) -> bool {
    e.abs() > delta
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Structure {
    Free,
    KnownSaturation { beta: Vec<f64> },
}

/// The reference system's structure and true parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackingModel {
    pub alpha: Vec<f64>,
    /// Signed quadratic coefficient `q`; zero under [`Structure::KnownSaturation`].
    pub quad: Vec<f64>,
    pub c_out: Vec<f64>,
    pub x0: Vec<f64>,
    pub structure: Structure,
}

impl TrackingModel {
    /// Canonical `x' = alpha x + q x^2` with both coefficients estimated.
    pub fn free(
        alpha: Vec<f64>,
        quad: Vec<f64>,
        c_out: Vec<f64>,
        x0: Vec<f64>,
    ) -> Result<Self, ValidationError> {
        let m = Self {
            alpha,
            quad,
            c_out,
            x0,
            structure: Structure::Free,
        };
        m.validate()?;
        Ok(m)
    }

    /// `x' = alpha x (1 - beta x)` with both `alpha` and `q = -alpha beta` estimated.
    pub fn free_from_ensemble(sys: &LogisticEnsemble) -> Result<Self, ValidationError> {
        let quad = sys.alpha.iter().zip(&sys.beta).map(|(a, b)| -a * b).collect();
        Self::free(sys.alpha.clone(), quad, sys.c_out.clone(), sys.x0.clone())
    }

    /// `x' = alpha x (1 - beta x)` with `beta` known; only `alpha` is estimated.
    pub fn known_saturation(sys: &LogisticEnsemble) -> Result<Self, ValidationError> {
        let m = Self {
            alpha: sys.alpha.clone(),
            quad: vec![0.0; sys.len()],
            c_out: sys.c_out.clone(),
            x0: sys.x0.clone(),
            structure: Structure::KnownSaturation {
                beta: sys.beta.clone(),
            },
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        let n = self.alpha.len();
        if n == 0 {
            return Err(ValidationError::new("alpha", "at least one equation is required"));
        }
        let mut fields: Vec<(&str, &Vec<f64>)> = vec![
            ("alpha", &self.alpha),
            ("quad", &self.quad),
            ("c_out", &self.c_out),
            ("x0", &self.x0),
        ];
        if let Structure::KnownSaturation { beta } = &self.structure {
            fields.push(("beta", beta));
        }
        for (name, v) in fields {
            if v.len() != n {
                return Err(ValidationError::new(
                    name,
                    format!("expected {n} entries, got {}", v.len()),
                ));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(ValidationError::new(name, "entries must be finite"));
            }
        }
        if self.c_out.iter().all(|&c| c == 0.0) {
            return Err(ValidationError::new("c_out", "output weights must not all be zero"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    /// Whether the quadratic coefficient is part of the estimate.
    pub fn estimates_quad(&self) -> bool {
        matches!(self.structure, Structure::Free)
    }

    /// Basis pair `(xi1(x_i), xi2(x_i))` of equation `i`.
    #[inline]
    pub fn basis(&self, i: usize, x: f64) -> (f64, f64) {
        match &self.structure {
            Structure::Free => (x, x * x),
            Structure::KnownSaturation { beta } => (x * (1.0 - beta[i] * x), 0.0),
        }
    }

    /// Drift `alpha_i xi1 + q_i xi2` of equation `i` for the given coefficients.
    #[inline]
    pub fn drift(&self, i: usize, x: f64, alpha: f64, quad: f64) -> f64 {
        let (b1, b2) = self.basis(i, x);
        alpha * b1 + quad * b2
    }
}

/// Learning gain, dead-zone width and the convergence slack used by diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptationConfig {
    pub gamma: f64,
    pub delta: f64,
    pub delta1: f64,
    /// Integrate the feedback-gain law; when false `K` stays at its initial value.
    pub adapt_gain: bool,
}

impl AdaptationConfig {
    pub fn new(gamma: f64, delta: f64, delta1: f64, adapt_gain: bool) -> Result<Self, ValidationError> {
        let c = Self {
            gamma,
            delta,
            delta1,
            adapt_gain,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(ValidationError::new("adaptation.gamma", "must be positive"));
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(ValidationError::new("adaptation.delta", "must be non-negative"));
        }
        if !(self.delta1 > 0.0 && self.delta1.is_finite()) {
            return Err(ValidationError::new("adaptation.delta1", "must be positive"));
        }
        Ok(())
    }
}

/// Full state of the combined system plus the adapted quantities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveState {
    pub t: f64,
    pub x: Vec<f64>,
    pub x_hat: Vec<f64>,
    pub alpha_hat: Vec<f64>,
    /// Estimate of the signed quadratic coefficient `q`.
    pub beta_hat: Vec<f64>,
    /// Output-error feedback gain `K`.
    pub gain: Vec<f64>,
    /// Norm-trigger latch (only used by latched schedules).
    #[serde(default)]
    pub latched: bool,
}

impl AdaptiveState {
    /// Both systems start at `x0`.
    pub fn new(model: &TrackingModel, alpha_hat: Vec<f64>, beta_hat: Vec<f64>, gain: Vec<f64>) -> Self {
        debug_assert_eq!(alpha_hat.len(), model.len());
        Self {
            t: 0.0,
            x: model.x0.clone(),
            x_hat: model.x0.clone(),
            alpha_hat,
            beta_hat,
            gain,
            latched: false,
        }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// `e = C^T x_hat - C^T x`.
    pub fn error(&self, model: &TrackingModel) -> f64 {
        model
            .c_out
            .iter()
            .zip(self.x_hat.iter().zip(&self.x))
            .map(|(c, (xh, x))| c * (xh - x))
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        [&self.x, &self.x_hat, &self.alpha_hat, &self.beta_hat, &self.gain]
            .iter()
            .all(|v| v.iter().all(|x| x.is_finite()))
    }
}

/// Time derivatives of the adapted quantities.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AdaptationRates {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub gain: Vec<f64>,
}

pub(crate) fn reference_rhs_into(
    x: &[f64],
    model: &TrackingModel,
    sched: &ResetSchedule,
    lam: bool,
    out: &mut [f64],
) {
    for i in 0..model.len() {
        out[i] = if lam {
            -sched.slew * signum(x[i] - model.x0[i])
        } else {
            model.drift(i, x[i], model.alpha[i], model.quad[i])
        };
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn tracking_rhs_into(
    x_hat: &[f64],
    alpha_hat: &[f64],
    beta_hat: &[f64],
    gain: &[f64],
    e: f64,
    model: &TrackingModel,
    sched: &ResetSchedule,
    lam: bool,
    out: &mut [f64],
) {
    for i in 0..model.len() {
        out[i] = if lam {
            -sched.slew * signum(x_hat[i] - model.x0[i])
        } else {
            model.drift(i, x_hat[i], alpha_hat[i], beta_hat[i]) + gain[i] * e
        };
    }
}

/// Adaptation laws with the dead-zone indicator supplied by the caller.
#[allow(clippy::too_many_arguments)]
pub(crate) fn adaptation_rhs_into(
    x_hat: &[f64],
    e: f64,
    adapting: bool,
    cfg: &AdaptationConfig,
    model: &TrackingModel,
    lam: bool,
    d_alpha: &mut [f64],
    d_beta: &mut [f64],
    d_gain: &mut [f64],
) {
    let on = adapting && !lam;
    let estimates_quad = model.estimates_quad();
    for i in 0..model.len() {
        if !on {
            d_alpha[i] = 0.0;
            d_beta[i] = 0.0;
            d_gain[i] = 0.0;
            continue;
        }
        let c = model.c_out[i];
        let (b1, b2) = model.basis(i, x_hat[i]);
        d_alpha[i] = -cfg.gamma * e * c * b1;
        d_beta[i] = if estimates_quad { -cfg.gamma * e * c * b2 } else { 0.0 };
        d_gain[i] = if cfg.adapt_gain { -cfg.gamma * e * e * c } else { 0.0 };
    }
}

/// Reference vector field `(alpha xi1 + q xi2)(1 - lam) - lam l0 sign(x - x0)`.
pub fn reference_rhs(x: &[f64], model: &TrackingModel, sched: &ResetSchedule, lam: bool) -> Vec<f64> {
    let mut out = vec![0.0; model.len()];
    reference_rhs_into(x, model, sched, lam, &mut out);
    out
}

/// Tracking vector field; `e` is supplied by the caller.
pub fn tracking_rhs(
    x_hat: &[f64],
    e: f64,
    state: &AdaptiveState,
    model: &TrackingModel,
    sched: &ResetSchedule,
    lam: bool,
) -> Vec<f64> {
    let mut out = vec![0.0; model.len()];
    tracking_rhs_into(
        x_hat,
        &state.alpha_hat,
        &state.beta_hat,
        &state.gain,
        e,
        model,
        sched,
        lam,
        &mut out,
    );
    out
}

/// Speed-gradient laws for `alpha_hat`, `beta_hat` and `K`, evaluated at `state.x_hat`.
pub fn adaptation_rhs(
    state: &AdaptiveState,
    e: f64,
    cfg: &AdaptationConfig,
    model: &TrackingModel,
    lam: bool,
) -> AdaptationRates {
    let n = model.len();
    let mut r = AdaptationRates {
        alpha: vec![0.0; n],
        beta: vec![0.0; n],
        gain: vec![0.0; n],
    };
    adaptation_rhs_into(
        &state.x_hat,
        e,
        dead_zone(e, cfg.delta),
        cfg,
        model,
        lam,
        &mut r.alpha,
        &mut r.beta,
        &mut r.gain,
    );
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn example1_model() -> TrackingModel {
        TrackingModel::free(vec![2.0 / 3.0], vec![-1.0 / 3.0], vec![1.0], vec![0.1]).unwrap()
    }

    fn example2_schedule() -> ResetSchedule {
        ResetSchedule::new(2.0, 1.0, 10.0, 10.0).unwrap()
    }

    #[test]
    fn lambda_gate_examples() {
        let s = example2_schedule();
        assert!(!lambda_gate(0.5, 0.0, &s));
        assert!(lambda_gate(2.5, 0.0, &s));
        assert!(lambda_gate(0.5, 10.0, &s));
        assert!(!lambda_gate(3.0, 0.0, &s));
        assert!(lambda_gate(2.0, 0.0, &s));
    }

    #[test]
    fn schedule_rejects_unreachable_reset() {
        let err = ResetSchedule::new(2.0, 1.0, 10.0, 9.0).unwrap_err();
        assert_eq!(err.field, "schedule.slew");
        assert!(ResetSchedule::new(0.0, 1.0, 1.0, 1.0).is_err());
        assert!(ResetSchedule::periodic(9.0, 1.0, 1.0).is_ok());
    }

    #[test]
    fn signum_examples() {
        assert_eq!(signum_vec(&[3.0, -0.1, 0.0]), vec![1.0, -1.0, 0.0]);
        assert_eq!(signum_vec(&[0.0, 0.0]), vec![0.0, 0.0]);
        let v = [0.3, -2.0, 0.0, 1e-300];
        let neg: Vec<f64> = v.iter().map(|x| -x).collect();
        let a = signum_vec(&neg);
        let b: Vec<f64> = signum_vec(&v).iter().map(|x| -x).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn reference_rhs_examples() {
        let m = example1_model();
        let s = ResetSchedule::periodic(9.0, 1.0, 1.0).unwrap();
        assert_eq!(reference_rhs(&m.x0, &m, &s, true), vec![0.0]);
        assert_eq!(reference_rhs(&[0.5], &m, &s, true), vec![-1.0]);
        assert_eq!(reference_rhs(&[0.05], &m, &s, true), vec![1.0]);
        let r = reference_rhs(&[0.1], &m, &s, false);
        assert_relative_eq!(r[0], 2.0 / 30.0 - 1.0 / 300.0, epsilon = 1e-15);
        assert!((r[0] - 0.0633).abs() < 1e-4);
    }

    #[test]
    fn tracking_rhs_matches_reference_when_matched() {
        let m = example1_model();
        let s = ResetSchedule::periodic(9.0, 1.0, 1.0).unwrap();
        let st = AdaptiveState::new(&m, m.alpha.clone(), m.quad.clone(), vec![-0.2]);
        for x in [0.1, 0.7, 1.5] {
            let tr = tracking_rhs(&[x], 0.0, &st, &m, &s, false);
            assert_eq!(tr, reference_rhs(&[x], &m, &s, false));
        }
    }

    #[test]
    fn tracking_rhs_gate_and_gain() {
        let m = example1_model();
        let s = ResetSchedule::periodic(9.0, 1.0, 1.0).unwrap();
        let st = AdaptiveState::new(&m, vec![-3.0], vec![-1.0], vec![-0.2]);
        assert_eq!(tracking_rhs(&[0.4], 7.0, &st, &m, &s, true), vec![-1.0]);
        // Example-1 form: (a x - b x^2) - 0.2 e.
        let (x, e) = (0.4, 0.25);
        let r = tracking_rhs(&[x], e, &st, &m, &s, false);
        assert_relative_eq!(r[0], -3.0 * x - x * x - 0.2 * e, epsilon = 1e-15);
    }

    #[test]
    fn adaptation_rhs_dead_zone_and_gate() {
        let m = example1_model();
        let cfg = AdaptationConfig::new(0.2, 0.01, 0.001, true).unwrap();
        let mut st = AdaptiveState::new(&m, vec![-3.0], vec![-1.0], vec![-0.2]);
        st.x_hat = vec![0.6];
        let zero = AdaptationRates {
            alpha: vec![0.0],
            beta: vec![0.0],
            gain: vec![0.0],
        };
        assert_eq!(adaptation_rhs(&st, 0.005, &cfg, &m, false), zero);
        assert_eq!(adaptation_rhs(&st, -0.01, &cfg, &m, false), zero);
        assert_eq!(adaptation_rhs(&st, 0.5, &cfg, &m, true), zero);
    }

    #[test]
    fn adaptation_rhs_example1_signs() {
        // alpha_hat' = -0.2 e x_hat, beta' = +0.2 e x_hat^2 where beta = -q.
        let m = example1_model();
        let cfg = AdaptationConfig::new(0.2, 0.0, 0.001, false).unwrap();
        let mut st = AdaptiveState::new(&m, vec![-3.0], vec![-1.0], vec![-0.2]);
        st.x_hat = vec![0.6];
        let e = 0.3;
        let r = adaptation_rhs(&st, e, &cfg, &m, false);
        assert_relative_eq!(r.alpha[0], -0.2 * e * 0.6, epsilon = 1e-15);
        assert_relative_eq!(-r.beta[0], 0.2 * e * 0.36, epsilon = 1e-15);
        assert_eq!(r.gain[0], 0.0);
    }

    #[test]
    fn known_saturation_adapts_alpha_only() {
        let sys = LogisticEnsemble::normalized(vec![1.0, 2.0], vec![3.0, -1.0], vec![0.2, 0.4]).unwrap();
        let m = TrackingModel::known_saturation(&sys).unwrap();
        let cfg = AdaptationConfig::new(0.001, 1e-4, 1e-3, true).unwrap();
        let st = AdaptiveState::new(&m, vec![5.0, 5.0], vec![0.0, 0.0], vec![0.0, 0.0]);
        let e = 0.5;
        let r = adaptation_rhs(&st, e, &cfg, &m, false);
        assert_relative_eq!(r.alpha[0], -0.001 * e * 3.0 * 0.2 * 0.8, epsilon = 1e-15);
        assert_relative_eq!(r.alpha[1], -0.001 * e * -1.0 * 0.4 * 0.6, epsilon = 1e-15);
        assert_eq!(r.beta, vec![0.0, 0.0]);
        assert_relative_eq!(r.gain[0], -0.001 * 0.25 * 3.0, epsilon = 1e-15);
        assert_relative_eq!(r.gain[1], 0.001 * 0.25, epsilon = 1e-15);
    }

    #[test]
    fn output_examples() {
        let x = [0.3, -1.2, 4.0];
        assert_eq!(output(&[1.0, 1.0, 1.0], &x), x.iter().sum::<f64>());
        assert_eq!(output(&[2.0, 5.0, 1.0], &[0.0; 3]), 0.0);
        // Example-2 tables: sum c_i x0_i by hand = 0.3+1.0-0.9+0.1-0.5+0.2-0.49+1.1-1.8+0.8.
        let c = [3.0, 5.0, -3.0, 0.5, -1.0, 2.0, -0.7, 5.5, -3.0, 2.0];
        let x0 = [0.1, 0.2, 0.3, 0.2, 0.5, 0.1, 0.7, 0.2, 0.6, 0.4];
        assert_relative_eq!(output(&c, &x0), -0.19, epsilon = 1e-12);
    }

    #[test]
    fn model_validation() {
        assert!(TrackingModel::free(vec![1.0], vec![1.0, 2.0], vec![1.0], vec![0.1]).is_err());
        assert!(TrackingModel::free(vec![1.0], vec![1.0], vec![0.0], vec![0.1]).is_err());
        assert!(AdaptationConfig::new(0.0, 0.0, 1.0, true).is_err());
        assert!(AdaptationConfig::new(1.0, -1.0, 1.0, true).is_err());
        assert!(AdaptationConfig::new(1.0, 0.0, 0.0, true).is_err());
    }
}
