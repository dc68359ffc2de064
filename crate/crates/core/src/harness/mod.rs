//! Epoch/trial orchestration, the distance and mean-square-error metrics, and the two
//! reference experiments.

pub mod example1;
pub mod example2;
pub mod rng;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    kstar_bound, lyapunov_value, output, AdaptationConfig, AdaptiveState, ResetSchedule, TrackingModel,
};
use crate::error::{SimError, ValidationError};
use crate::integrator::{IntegratorConfig, Stepper};
use rng::{trial_seed, Xoshiro256StarStar};

/// Euclidean distance between estimate and truth.
pub fn metric_d(estimate: &[f64], truth: &[f64]) -> f64 {
    estimate
        .iter()
        .zip(truth)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// Distance of the adapted coefficients from the model's true ones. The quadratic
/// coefficient enters only when it is estimated.
pub fn parameter_distance(state: &AdaptiveState, model: &TrackingModel) -> f64 {
    let mut s: f64 = state
        .alpha_hat
        .iter()
        .zip(&model.alpha)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    if model.estimates_quad() {
        s += state
            .beta_hat
            .iter()
            .zip(&model.quad)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>();
    }
    s.sqrt()
}

/// `sum e^2 dt / T1` over one period of left-endpoint samples.
pub fn metric_r(e_samples: &[f64], dt: f64, period: f64) -> Result<f64, ValidationError> {
    let expected = (period / dt).round();
    if !(dt > 0.0 && period > 0.0) || ((period / dt) - expected).abs() > 1e-9 * expected.max(1.0) {
        return Err(ValidationError::new("period", "period is not a whole number of steps"));
    }
    if e_samples.len() as f64 != expected {
        return Err(ValidationError::new(
            "e_samples",
            format!("expected {expected} samples for one period, got {}", e_samples.len()),
        ));
    }
    Ok(e_samples.iter().map(|e| e * e).sum::<f64>() * dt / period)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitBox {
    pub lower: f64,
    pub upper: f64,
}

impl InitBox {
    pub fn validate(&self) -> Result<(), ValidationError> {
        if !(self.lower.is_finite() && self.upper.is_finite() && self.lower < self.upper) {
            return Err(ValidationError::new("init_box", "requires finite lower < upper"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: TrackingModel,
    pub sched: ResetSchedule,
    pub acfg: AdaptationConfig,
    pub icfg: IntegratorConfig,
    pub epochs: u64,
    pub trials: u64,
    pub seed: u64,
    /// Hypercube from which the initial `alpha_hat` is drawn.
    pub init_box: InitBox,
    /// Initial quadratic-coefficient estimate; zeros when absent.
    #[serde(default)]
    pub quad_hat0: Option<Vec<f64>>,
    /// Initial feedback gain; zeros when absent.
    #[serde(default)]
    pub gain0: Option<Vec<f64>>,
    /// Steps between trace samples; 0 disables traces.
    #[serde(default)]
    pub record_stride: u64,
    /// Epochs at the end of a trial over which the tracking error is bounded.
    #[serde(default = "default_tail_epochs")]
    pub tail_epochs: u64,
    /// Extra per-step checks: gate annihilation and Lyapunov bookkeeping.
    #[serde(default)]
    pub instrument: bool,
}

fn default_tail_epochs() -> u64 {
    10
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ValidationError> {
        self.model.validate()?;
        self.sched.validate()?;
        self.acfg.validate()?;
        self.icfg.validate()?;
        self.init_box.validate()?;
        crate::integrator::Grid::new(&self.sched, &self.icfg)?;
        if self.trials == 0 {
            return Err(ValidationError::new("trials", "must be at least 1"));
        }
        let n = self.model.len();
        for (name, v) in [("quad_hat0", &self.quad_hat0), ("gain0", &self.gain0)] {
            if let Some(v) = v {
                if v.len() != n || v.iter().any(|x| !x.is_finite()) {
                    return Err(ValidationError::new(name, format!("expected {n} finite entries")));
                }
            }
        }
        Ok(())
    }

    fn initial_state(&self, seed: u64) -> AdaptiveState {
        let n = self.model.len();
        let mut rng = Xoshiro256StarStar::seed_from_u64(seed);
        let alpha_hat = (0..n)
            .map(|_| rng.uniform(self.init_box.lower, self.init_box.upper))
            .collect();
        let quad = self.quad_hat0.clone().unwrap_or_else(|| vec![0.0; n]);
        let gain = self.gain0.clone().unwrap_or_else(|| vec![0.0; n]);
        AdaptiveState::new(&self.model, alpha_hat, quad, gain)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialStatus {
    Ok,
    /// Tail error did not fall below `delta + delta1`.
    Flagged,
    Diverged,
}

impl TrialStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Ok => "ok",
            Self::Flagged => "flagged",
            Self::Diverged => "diverged",
        }
    }
}

/// Counts of invariant violations observed while stepping.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violations {
    /// Parameters moved on a step with `|e| <= delta` or `lambda = 1`.
    pub dead_zone: u64,
    /// A state differed from `x0` at an epoch boundary.
    pub reset: u64,
    /// A gated step depended on the adapted quantities.
    pub gate: u64,
    /// Lyapunov function grew across an active window by more than the discretization slack.
    pub lyapunov: u64,
}

impl Violations {
    pub fn total(&self) -> u64 {
        self.dead_zone + self.reset + self.gate + self.lyapunov
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSample {
    pub t: f64,
    pub e: f64,
    pub lambda: bool,
    pub d: f64,
    /// R of the last completed epoch.
    pub r: f64,
    pub alpha_hat: Vec<f64>,
    pub gain: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: u64,
    pub seed: u64,
    pub d0: f64,
    pub d_final: f64,
    pub r0: f64,
    pub r_final: f64,
    /// Largest `|e|` on active steps of the last `tail_epochs` epochs.
    pub tail_error: f64,
    pub status: TrialStatus,
    pub message: Option<String>,
    pub violations: Violations,
    /// `d` and `R` at the end of every epoch.
    pub d_epochs: Vec<f64>,
    pub r_epochs: Vec<f64>,
    pub alpha_final: Vec<f64>,
    pub quad_final: Vec<f64>,
    pub gain_final: Vec<f64>,
    pub trace: Vec<TraceSample>,
}

fn same_bits(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

/// One epoch with frozen parameters: the tracking error before any learning.
fn probe_r(cfg: &ExperimentConfig, state: &AdaptiveState) -> Result<f64, SimError> {
    let mut stepper = Stepper::new(&cfg.model, &cfg.sched, &cfg.acfg, cfg.icfg)?;
    stepper.adapt = false;
    let mut st = state.clone();
    let steps = stepper.grid().period;
    let mut sum = 0.0;
    for _ in 0..steps {
        let info = stepper.step(&mut st)?;
        sum += info.error * info.error;
    }
    Ok(sum * cfg.icfg.dt / cfg.sched.period())
}

/// Run one trial. Divergence is reported through the record's status.
pub fn run_trial(cfg: &ExperimentConfig, trial: u64) -> Result<TrialRecord, ValidationError> {
    cfg.validate()?;
    let seed = trial_seed(cfg.seed, trial);
    let mut state = cfg.initial_state(seed);
    let model = &cfg.model;
    let d0 = parameter_distance(&state, model);
    let mut rec = TrialRecord {
        trial,
        seed,
        d0,
        d_final: d0,
        r0: f64::NAN,
        r_final: f64::NAN,
        tail_error: 0.0,
        status: TrialStatus::Ok,
        message: None,
        violations: Violations::default(),
        d_epochs: Vec::with_capacity(cfg.epochs as usize),
        r_epochs: Vec::with_capacity(cfg.epochs as usize),
        alpha_final: Vec::new(),
        quad_final: Vec::new(),
        gain_final: Vec::new(),
        trace: Vec::new(),
    };
    match probe_r(cfg, &state) {
        Ok(r) => {
            rec.r0 = r;
            rec.r_final = r;
        }
        Err(SimError::Validation(v)) => return Err(v),
        Err(SimError::Divergence(e)) => {
            rec.status = TrialStatus::Diverged;
            rec.message = Some(e.to_string());
        }
    }
    if rec.status == TrialStatus::Ok {
        if let Err(e) = run_epochs(cfg, &mut state, &mut rec) {
            rec.status = TrialStatus::Diverged;
            rec.message = Some(e.to_string());
        }
    }
    rec.alpha_final = state.alpha_hat.clone();
    rec.quad_final = state.beta_hat.clone();
    rec.gain_final = state.gain.clone();
    if rec.status == TrialStatus::Ok && cfg.epochs > 0 && rec.tail_error >= cfg.acfg.delta + cfg.acfg.delta1 {
        rec.status = TrialStatus::Flagged;
    }
    Ok(rec)
}

struct LyapunovCheck {
    kstar: Vec<f64>,
    v_start: Option<f64>,
    slack: f64,
}

fn run_epochs(
    cfg: &ExperimentConfig,
    state: &mut AdaptiveState,
    rec: &mut TrialRecord,
) -> Result<(), crate::error::DivergenceError> {
    let model = &cfg.model;
    let mut stepper = Stepper::new(model, &cfg.sched, &cfg.acfg, cfg.icfg).expect("validated");
    let mut probe = Stepper::new(model, &cfg.sched, &cfg.acfg, cfg.icfg).expect("validated");
    let period = stepper.grid().period;
    let dt = cfg.icfg.dt;
    let t1 = cfg.sched.period();
    let n = model.len();
    let tail_from = cfg.epochs.saturating_sub(cfg.tail_epochs);

    let mut lyap = if cfg.instrument && cfg.acfg.delta > 0.0 && cfg.sched.norm_bound.is_finite() {
        kstar_bound(model, cfg.sched.norm_bound, cfg.acfg.delta, 0.5 * cfg.acfg.delta)
            .ok()
            .map(|kstar| LyapunovCheck {
                kstar,
                v_start: None,
                slack: 0.0,
            })
    } else {
        None
    };

    let mut prev = vec![0.0; 3 * n];
    let mut shadow = state.clone();
    let mut last_r = rec.r0;

    for epoch in 0..cfg.epochs {
        let mut sum_e2 = 0.0;
        for k in 0..period {
            let before_v = lyap.as_ref().map(|l| lyapunov_value(state, model, &l.kstar, &cfg.acfg));
            prev[..n].copy_from_slice(&state.alpha_hat);
            prev[n..2 * n].copy_from_slice(&state.beta_hat);
            prev[2 * n..].copy_from_slice(&state.gain);
            let e_before = state.error(model);
            if cfg.instrument {
                shadow.clone_from(state);
            }

            let info = stepper.step(state)?;
            sum_e2 += info.error * info.error;

            if !info.adapting
                && !(same_bits(&prev[..n], &state.alpha_hat)
                    && same_bits(&prev[n..2 * n], &state.beta_hat)
                    && same_bits(&prev[2 * n..], &state.gain))
            {
                rec.violations.dead_zone += 1;
            }
            if cfg.instrument && info.lambda {
                for v in shadow
                    .alpha_hat
                    .iter_mut()
                    .chain(shadow.beta_hat.iter_mut())
                    .chain(shadow.gain.iter_mut())
                {
                    *v += 1.0;
                }
                let perturbed: Vec<f64> = shadow
                    .alpha_hat
                    .iter()
                    .chain(&shadow.beta_hat)
                    .chain(&shadow.gain)
                    .copied()
                    .collect();
                probe.step(&mut shadow)?;
                let params_now: Vec<f64> = shadow
                    .alpha_hat
                    .iter()
                    .chain(&shadow.beta_hat)
                    .chain(&shadow.gain)
                    .copied()
                    .collect();
                if !same_bits(&shadow.x, &state.x)
                    || !same_bits(&shadow.x_hat, &state.x_hat)
                    || !same_bits(&perturbed, &params_now)
                {
                    rec.violations.gate += 1;
                }
            }
            if let (Some(l), Some(v0)) = (lyap.as_mut(), before_v) {
                if info.lambda {
                    close_window(l, v0, &mut rec.violations);
                } else {
                    if l.v_start.is_none() {
                        l.v_start = Some(v0);
                    }
                    let de = state.error(model) - e_before;
                    let dp: f64 = prev
                        .iter()
                        .zip(state.alpha_hat.iter().chain(&state.beta_hat).chain(&state.gain))
                        .map(|(a, b)| (b - a) * (b - a))
                        .sum();
                    l.slack += 0.5 * de * de
                        + 0.5 * dp / cfg.acfg.gamma
                        + (e_before.abs() + de.abs()) * de.abs();
                }
            }
            if epoch >= tail_from && !info.lambda {
                rec.tail_error = rec.tail_error.max(info.error.abs());
            }
            if cfg.record_stride > 0 && (epoch * period + k) % cfg.record_stride == 0 {
                rec.trace.push(TraceSample {
                    t: state.t - dt,
                    e: info.error,
                    lambda: info.lambda,
                    d: parameter_distance(state, model),
                    r: last_r,
                    alpha_hat: state.alpha_hat.clone(),
                    gain: state.gain.clone(),
                });
            }
        }
        if let Some(l) = lyap.as_mut() {
            let v = lyapunov_value(state, model, &l.kstar, &cfg.acfg);
            close_window(l, v, &mut rec.violations);
        }
        for v in [&state.x, &state.x_hat] {
            if !same_bits(v, &model.x0) {
                rec.violations.reset += 1;
            }
        }
        last_r = sum_e2 * dt / t1;
        rec.r_epochs.push(last_r);
        rec.d_epochs.push(parameter_distance(state, model));
    }
    rec.r_final = last_r;
    rec.d_final = parameter_distance(state, model);
    Ok(())
}

fn close_window(l: &mut LyapunovCheck, v_end: f64, viol: &mut Violations) {
    if let Some(v0) = l.v_start.take() {
        let tol = 1e-10 * (1.0 + v0.abs());
        if v_end - v0 > l.slack + tol {
            viol.lyapunov += 1;
        }
    }
    l.slack = 0.0;
}

/// Run every trial, in parallel, and return the records ordered by trial index.
pub fn run_trials(cfg: &ExperimentConfig) -> Result<Vec<TrialRecord>, ValidationError> {
    cfg.validate()?;
    (0..cfg.trials).into_par_iter().map(|k| run_trial(cfg, k)).collect()
}

/// Output error `C^T x_hat - C^T x` of a state.
pub fn output_error(model: &TrackingModel, state: &AdaptiveState) -> f64 {
    output(&model.c_out, &state.x_hat) - output(&model.c_out, &state.x)
}

/// Median of finite values; `NaN` for an empty input.
pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metric_d_examples() {
        let a = [1.0, 2.0, 3.0];
        assert_eq!(metric_d(&a, &a), 0.0);
        assert_eq!(metric_d(&[4.0, 6.0, 3.0], &a), 5.0);
        assert!(metric_d(&[2.0, 1.0, 3.0], &a) > 0.0);
    }

    #[test]
    fn metric_r_examples() {
        assert_eq!(metric_r(&[0.0; 30], 0.1, 3.0).unwrap(), 0.0);
        let r = metric_r(&[0.5; 30], 0.1, 3.0).unwrap();
        assert!((r - 0.25).abs() < 1e-15);
        assert!(metric_r(&[0.5; 31], 0.1, 3.0).is_err());
    }

    #[test]
    fn median_examples() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[]).is_nan());
    }
}
