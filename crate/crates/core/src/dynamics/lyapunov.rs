//! Stabilizing gain construction and Lyapunov bookkeeping for the adaptive scheme.

use thiserror::Error;

use super::{AdaptationConfig, AdaptiveState, Structure, TrackingModel};
use crate::error::ValidationError;

/// Bound `D2` on `|C^T (Theta (xi(x_hat) - xi(x)))|` over the ball `|x|, |x_hat| <= D`.
///
/// Per component, `|x_hat - x| <= 2D` and `|x_hat^2 - x^2| <= |x_hat - x| |x_hat + x| <= 4D^2`.
/// For the known-saturation basis `x (1 - beta x)` the Lipschitz constant on `[-D, D]`
/// is `1 + 2|beta| D`, giving `2D (1 + 2|beta| D)`.
pub fn disturbance_bound(model: &TrackingModel, norm_bound: f64) -> f64 {
    let d = norm_bound;
    (0..model.len())
        .map(|i| {
            let l1 = match &model.structure {
                Structure::Free => 2.0 * d,
                Structure::KnownSaturation { beta } => 2.0 * d * (1.0 + 2.0 * beta[i].abs() * d),
            };
            let l2 = 4.0 * d * d;
            model.c_out[i].abs() * (model.alpha[i].abs() * l1 + model.quad[i].abs() * l2)
        })
        .sum()
}

/// Constant gain with `C^T k* = -(D2 / (delta - delta1) + 1)`, aligned with `C`.
pub fn gain_for_bound(
    c_hat: &[f64],
    d2: f64,
    delta: f64,
    delta1: f64,
) -> Result<Vec<f64>, ValidationError> {
    let norm2: f64 = c_hat.iter().map(|c| c * c).sum();
    if norm2 == 0.0 || !norm2.is_finite() {
        return Err(ValidationError::new("c_out", "output weights must be finite and not all zero"));
    }
    if !(delta > delta1 && delta1 > 0.0) {
        return Err(ValidationError::new(
            "adaptation.delta1",
            format!("requires delta > delta1 > 0, got delta={delta}, delta1={delta1}"),
        ));
    }
    if !(d2 >= 0.0 && d2.is_finite()) {
        return Err(ValidationError::new("d2", "must be finite and non-negative"));
    }
    let target = d2 / (delta - delta1) + 1.0;
    Ok(c_hat.iter().map(|c| -c * target / norm2).collect())
}

/// `k*` for the model on the ball of radius `norm_bound`.
pub fn kstar_bound(
    model: &TrackingModel,
    norm_bound: f64,
    delta: f64,
    delta1: f64,
) -> Result<Vec<f64>, ValidationError> {
    if !(norm_bound > 0.0 && norm_bound.is_finite()) {
        return Err(ValidationError::new("schedule.norm_bound", "k* needs a finite positive D"));
    }
    gain_for_bound(&model.c_out, disturbance_bound(model, norm_bound), delta, delta1)
}

/// `int_0^e S_delta(v) v dv`.
pub fn dead_zone_potential(e: f64, delta: f64) -> f64 {
    if e.abs() > delta {
        0.5 * (e * e - delta * delta)
    } else {
        0.0
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `V = int S v + (|alpha_hat - alpha|^2 + |q_hat - q|^2 + |K - k*|^2) / (2 gamma)`.
pub fn lyapunov_value(
    state: &AdaptiveState,
    model: &TrackingModel,
    kstar: &[f64],
    cfg: &AdaptationConfig,
) -> f64 {
    let e = state.error(model);
    let mut p = sq_dist(&state.alpha_hat, &model.alpha) + sq_dist(&state.gain, kstar);
    if model.estimates_quad() {
        p += sq_dist(&state.beta_hat, &model.quad);
    }
    dead_zone_potential(e, cfg.delta) + 0.5 * p / cfg.gamma
}

/// True parameters needed to evaluate the progress bound.
#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    pub alpha: Vec<f64>,
    pub quad: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProgressError {
    #[error("progress bound needs the true parameters")]
    MissingTruth,
    #[error("trace has inconsistent lengths")]
    Shape,
}

/// Parameter history and integrand samples `S(e)(1 - lambda)|e C^T k*|` on the step grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ProgressTrace {
    pub truth: Option<Truth>,
    pub dt: f64,
    pub alpha0: Vec<f64>,
    pub quad0: Vec<f64>,
    pub gain0: Vec<f64>,
    pub alpha: Vec<f64>,
    pub quad: Vec<f64>,
    pub gain: Vec<f64>,
    pub integrand: Vec<f64>,
}

impl ProgressTrace {
    pub fn new(truth: Option<Truth>, state: &AdaptiveState, dt: f64) -> Self {
        Self {
            truth,
            dt,
            alpha0: state.alpha_hat.clone(),
            quad0: state.beta_hat.clone(),
            gain0: state.gain.clone(),
            alpha: state.alpha_hat.clone(),
            quad: state.beta_hat.clone(),
            gain: state.gain.clone(),
            integrand: Vec::new(),
        }
    }

    /// Record the integrand at the start of a step.
    pub fn sample(&mut self, e: f64, adapting: bool, lam: bool, kstar_dot_c: f64) {
        let v = if adapting && !lam { (e * kstar_dot_c).abs() } else { 0.0 };
        self.integrand.push(v);
    }

    /// Update the current parameters after a step.
    pub fn update(&mut self, state: &AdaptiveState) {
        self.alpha.clone_from(&state.alpha_hat);
        self.quad.clone_from(&state.beta_hat);
        self.gain.clone_from(&state.gain);
    }
}

fn trapezoid(samples: &[f64], dt: f64) -> f64 {
    match samples.len() {
        0 | 1 => 0.0,
        n => dt * (samples[1..n - 1].iter().sum::<f64>() + 0.5 * (samples[0] + samples[n - 1])),
    }
}

/// `(lhs, rhs)` of the parameter-progress inequality; the contract is `lhs >= rhs`.
pub fn progress_bound(
    trace: &ProgressTrace,
    kstar: &[f64],
    cfg: &AdaptationConfig,
) -> Result<(f64, f64), ProgressError> {
    let truth = trace.truth.as_ref().ok_or(ProgressError::MissingTruth)?;
    let n = truth.alpha.len();
    if [
        truth.quad.len(),
        kstar.len(),
        trace.alpha0.len(),
        trace.quad0.len(),
        trace.gain0.len(),
        trace.alpha.len(),
        trace.quad.len(),
        trace.gain.len(),
    ]
    .iter()
    .any(|&l| l != n)
    {
        return Err(ProgressError::Shape);
    }
    let g = cfg.gamma;
    let lhs = ((sq_dist(&trace.alpha0, &truth.alpha) - sq_dist(&trace.alpha, &truth.alpha))
        + (sq_dist(&trace.quad0, &truth.quad) - sq_dist(&trace.quad, &truth.quad)))
        / g;
    let rhs = (sq_dist(&trace.gain, kstar) - sq_dist(&trace.gain0, kstar)) / g
        + 2.0 * cfg.delta1 * trapezoid(&trace.integrand, trace.dt);
    Ok((lhs, rhs))
}
