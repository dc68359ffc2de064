//! Single-sigmoid estimation: the adaptive scheme against the two gradient baselines.
//!
//! The reference is `x' = alpha x - beta x^2` with `alpha = 2/3`, `beta = 1/3`,
//! `x(0) = 0.1`, whose output equals `g(t) = 2 f(2t/3 - 2.944)` on every active window.
//! Results are reported in the `(a, c)` chart of `g`, where `c = alpha_hat / beta_hat`.
//! The adaptive path may cross `beta_hat = 0`, which sends `c` through infinity; such
//! crossings are logged as chart singularities.

use serde::{Deserialize, Serialize};

use crate::baselines::{batch_cost, run_baseline, Flow, ScalarSigmoidTarget, QUAD_N};
use crate::dynamics::{
    kstar_bound, AdaptationConfig, AdaptiveState, ProgressTrace, ResetSchedule, TrackingModel, Truth,
};
use crate::error::SimError;
use crate::integrator::{IntegratorConfig, Method, Stepper};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Adaptive,
    Pattern,
    Batch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example1Settings {
    pub gamma: f64,
    /// Feedback gain in the `+K e` convention; the injection `-0.2 e` is `K = -0.2`.
    pub gain0: f64,
    pub adapt_gain: bool,
    pub delta: f64,
    pub delta1: f64,
    pub active: f64,
    pub reset: f64,
    pub slew: f64,
    /// Norm trigger; `inf` gives a purely periodic gate.
    pub norm_bound: f64,
    pub dt: f64,
    /// Step used by the batch flow, whose every step is a full quadrature.
    pub batch_dt: f64,
    pub t_end: f64,
    pub record_stride: usize,
}

impl Example1Settings {
    /// Baseline run: constant gain, no dead zone, 9 s active plus 1 s reset.
    pub fn standard() -> Self {
        Self {
            gamma: 0.2,
            gain0: -0.2,
            adapt_gain: false,
            delta: 0.0,
            delta1: 1e-3,
            active: 9.0,
            reset: 1.0,
            slew: 1.0,
            norm_bound: f64::INFINITY,
            dt: 1e-3,
            batch_dt: 1e-2,
            t_end: 900.0,
            record_stride: 1000,
        }
    }

    /// Instrumented variant for the parameter-progress bound: adapted gain, a dead zone
    /// and a norm trigger reachable within the reset window.
    pub fn progress() -> Self {
        Self {
            adapt_gain: true,
            delta: 0.01,
            delta1: 0.001,
            slew: 3.0,
            norm_bound: 2.5,
            ..Self::standard()
        }
    }

    pub fn model() -> TrackingModel {
        TrackingModel::free(vec![2.0 / 3.0], vec![-1.0 / 3.0], vec![1.0], vec![0.1]).expect("valid")
    }

    fn schedule(&self) -> Result<ResetSchedule, SimError> {
        Ok(if self.norm_bound.is_finite() {
            ResetSchedule::new(self.active, self.reset, self.norm_bound, self.slew)?
        } else {
            ResetSchedule::periodic(self.active, self.reset, self.slew)?
        })
    }

    fn adaptation(&self) -> Result<AdaptationConfig, SimError> {
        Ok(AdaptationConfig::new(self.gamma, self.delta, self.delta1, self.adapt_gain)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example1Result {
    pub variant: Variant,
    pub t: Vec<f64>,
    pub a: Vec<f64>,
    pub c: Vec<f64>,
    pub cost: Vec<f64>,
    /// Times at which `beta_hat` changed sign.
    pub singularities: Vec<f64>,
    pub final_a: f64,
    pub final_c: f64,
    pub final_cost: f64,
}

/// Run one variant from `init = (a, c)`. The adaptive scheme starts from
/// `alpha_hat = a`, `beta_hat = a / c`.
pub fn run_example1(variant: Variant, init: (f64, f64), settings: &Example1Settings) -> Result<Example1Result, SimError> {
    let target = ScalarSigmoidTarget::example1();
    match variant {
        Variant::Adaptive => {
            if init.1 == 0.0 {
                return Err(crate::ValidationError::new("init", "c must be non-zero").into());
            }
            run_adaptive((init.0, init.0 / init.1), settings)
        }
        Variant::Pattern | Variant::Batch => {
            let (flow, dt) = match variant {
                Variant::Pattern => (Flow::Pattern, settings.dt),
                _ => (Flow::Batch, settings.batch_dt),
            };
            let icfg = IntegratorConfig::new(dt, Method::Euler)?;
            let stride = ((settings.record_stride as f64 * settings.dt / dt).round() as usize).max(1);
            let tr = run_baseline(flow, &target, init, settings.gamma, settings.t_end, &icfg, stride)?;
            let (final_a, final_c, final_cost) = tr.last();
            Ok(Example1Result {
                variant,
                t: tr.t,
                a: tr.a,
                c: tr.c,
                cost: tr.cost,
                singularities: Vec::new(),
                final_a,
                final_c,
                final_cost,
            })
        }
    }
}

/// Adaptive scheme from `(alpha_hat, beta_hat)`, where the model is `alpha x - beta x^2`.
pub fn run_adaptive(init: (f64, f64), settings: &Example1Settings) -> Result<Example1Result, SimError> {
    let model = Example1Settings::model();
    let sched = settings.schedule()?;
    let acfg = settings.adaptation()?;
    let icfg = IntegratorConfig::euler(settings.dt)?;
    let mut stepper = Stepper::new(&model, &sched, &acfg, icfg)?;
    let steps = icfg.steps(settings.t_end, "t_end")?;
    let mut st = AdaptiveState::new(&model, vec![init.0], vec![-init.1], vec![settings.gain0]);
    let target = ScalarSigmoidTarget::example1();
    let stride = settings.record_stride.max(1) as u64;

    let chart = |st: &AdaptiveState| {
        let a = st.alpha_hat[0];
        let c = a / -st.beta_hat[0];
        (a, c)
    };
    let mut res = Example1Result {
        variant: Variant::Adaptive,
        t: Vec::new(),
        a: Vec::new(),
        c: Vec::new(),
        cost: Vec::new(),
        singularities: Vec::new(),
        final_a: f64::NAN,
        final_c: f64::NAN,
        final_cost: f64::NAN,
    };
    let push = |res: &mut Example1Result, st: &AdaptiveState| {
        let (a, c) = chart(st);
        res.t.push(st.t);
        res.a.push(a);
        res.c.push(c);
        res.cost.push(batch_cost(a, c, &target, QUAD_N));
    };
    push(&mut res, &st);
    for k in 0..steps {
        let b_before = st.beta_hat[0];
        stepper.step(&mut st)?;
        if b_before != 0.0 && (st.beta_hat[0] == 0.0 || b_before.signum() != st.beta_hat[0].signum()) {
            res.singularities.push(st.t);
        }
        if (k + 1) % stride == 0 || k + 1 == steps {
            push(&mut res, &st);
        }
    }
    let (a, c) = chart(&st);
    res.final_a = a;
    res.final_c = c;
    res.final_cost = batch_cost(a, c, &target, QUAD_N);
    Ok(res)
}

/// Checkpoint of the parameter-progress bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProgressCheckpoint {
    pub t: f64,
    pub lhs: f64,
    pub rhs: f64,
}

/// Run the adaptive scheme from `(alpha_hat, beta_hat)` and evaluate the progress bound
/// at every epoch boundary.
pub fn progress_run(init: (f64, f64), settings: &Example1Settings) -> Result<Vec<ProgressCheckpoint>, SimError> {
    let model = Example1Settings::model();
    let sched = settings.schedule()?;
    let acfg = settings.adaptation()?;
    let icfg = IntegratorConfig::euler(settings.dt)?;
    let kstar = kstar_bound(&model, sched.norm_bound, acfg.delta, acfg.delta1)?;
    let kc: f64 = kstar.iter().zip(&model.c_out).map(|(k, c)| k * c).sum();
    let mut stepper = Stepper::new(&model, &sched, &acfg, icfg)?;
    let period = stepper.grid().period;
    let steps = icfg.steps(settings.t_end, "t_end")?;
    let mut st = AdaptiveState::new(&model, vec![init.0], vec![-init.1], vec![settings.gain0]);
    let truth = Truth {
        alpha: model.alpha.clone(),
        quad: model.quad.clone(),
    };
    let mut trace = ProgressTrace::new(Some(truth), &st, icfg.dt);
    let mut out = Vec::new();
    for k in 0..steps {
        let info = stepper.step(&mut st)?;
        trace.sample(info.error, info.adapting, info.lambda, kc);
        trace.update(&st);
        if (k + 1) % period == 0 {
            // Close the quadrature with the sample at the checkpoint itself.
            let e = st.error(&model);
            let gate = stepper.gate(&st);
            trace.sample(e, !gate && crate::dynamics::dead_zone(e, acfg.delta), gate, kc);
            let bound = crate::dynamics::progress_bound(&trace, &kstar, &acfg);
            trace.integrand.pop();
            let (lhs, rhs) = bound.map_err(|e| crate::ValidationError::new("trace", e.to_string()))?;
            out.push(ProgressCheckpoint { t: st.t, lhs, rhs });
        }
    }
    Ok(out)
}
