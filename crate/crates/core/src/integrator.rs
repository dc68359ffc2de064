//! Fixed-step explicit Euler and classical RK4.
//!
//! The adaptive scheme is stepped by [`Stepper`], which evaluates the reset gate and
//! the dead-zone indicator once at the start of every step. Time is always recomputed
//! from the integer step index, so gate transitions land exactly on grid points.

use serde::{Deserialize, Serialize};

use crate::dynamics::{
    dead_zone, euclidean_norm, output, AdaptationConfig, AdaptiveState, MultiInputSystem,
    ResetSchedule, Structure, TrackingModel,
};
use crate::error::{DivergenceError, SimError, ValidationError};
use crate::model::LogisticEnsemble;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Euler,
    Rk4,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub method: Method,
}

impl IntegratorConfig {
    pub fn new(dt: f64, method: Method) -> Result<Self, ValidationError> {
        let c = Self { dt, method };
        c.validate()?;
        Ok(c)
    }

    pub fn euler(dt: f64) -> Result<Self, ValidationError> {
        Self::new(dt, Method::Euler)
    }

    pub fn rk4(dt: f64) -> Result<Self, ValidationError> {
        Self::new(dt, Method::Rk4)
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(ValidationError::new("integrator.dt", "must be positive and finite"));
        }
        Ok(())
    }

    /// Number of steps spanning `duration`; the ratio must be an integer.
    pub fn steps(&self, duration: f64, field: &str) -> Result<u64, ValidationError> {
        let r = duration / self.dt;
        let k = r.round();
        if !(duration >= 0.0 && r.is_finite()) || (r - k).abs() > 1e-9 * k.max(1.0) {
            return Err(ValidationError::new(
                field,
                format!("{duration} is not a whole number of steps of {}", self.dt),
            ));
        }
        Ok(k as u64)
    }
}

/// Step counts of a reset schedule on an integrator grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grid {
    pub period: u64,
    pub active: u64,
}

impl Grid {
    /// Requires `T1/dt` and `dT2/dt` to be integers.
    pub fn new(sched: &ResetSchedule, icfg: &IntegratorConfig) -> Result<Self, ValidationError> {
        icfg.validate()?;
        let period = icfg.steps(sched.period(), "schedule.period")?;
        let reset = icfg.steps(sched.reset, "schedule.reset")?;
        if reset == 0 || reset >= period {
            return Err(ValidationError::new("schedule.reset", "reset window must span at least one step"));
        }
        Ok(Self {
            period,
            active: period - reset,
        })
    }
}

/// One explicit Euler step of `y' = f(t, y)`; `k` is scratch of the same length.
pub fn euler_step<F>(f: &mut F, t: f64, y: &mut [f64], dt: f64, k: &mut [f64])
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    f(t, y, k);
    for (y, k) in y.iter_mut().zip(k.iter()) {
        *y += dt * k;
    }
}

/// Scratch buffers for [`rk4_step`].
#[derive(Debug, Clone, Default)]
pub struct Rk4Workspace {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4Workspace {
    pub fn new(n: usize) -> Self {
        Self {
            k1: vec![0.0; n],
            k2: vec![0.0; n],
            k3: vec![0.0; n],
            k4: vec![0.0; n],
            tmp: vec![0.0; n],
        }
    }

    fn resize(&mut self, n: usize) {
        for v in [&mut self.k1, &mut self.k2, &mut self.k3, &mut self.k4, &mut self.tmp] {
            v.resize(n, 0.0);
        }
    }
}

/// One classical fourth-order Runge-Kutta step of `y' = f(t, y)`.
pub fn rk4_step<F>(f: &mut F, t: f64, y: &mut [f64], dt: f64, ws: &mut Rk4Workspace)
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = y.len();
    ws.resize(n);
    let h = 0.5 * dt;
    f(t, y, &mut ws.k1);
    for i in 0..n {
        ws.tmp[i] = y[i] + h * ws.k1[i];
    }
    f(t + h, &ws.tmp, &mut ws.k2);
    for i in 0..n {
        ws.tmp[i] = y[i] + h * ws.k2[i];
    }
    f(t + h, &ws.tmp, &mut ws.k3);
    for i in 0..n {
        ws.tmp[i] = y[i] + dt * ws.k3[i];
    }
    f(t + dt, &ws.tmp, &mut ws.k4);
    for i in 0..n {
        y[i] += dt / 6.0 * (ws.k1[i] + 2.0 * ws.k2[i] + 2.0 * ws.k3[i] + ws.k4[i]);
    }
}

/// Gate and error observed at the start of a step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub lambda: bool,
    pub error: f64,
    /// Dead zone open and gate off: the parameters moved during this step.
    pub adapting: bool,
}

/// Allocation-free stepper for the combined reference/tracking/adaptation system.
#[derive(Debug, Clone)]
pub struct Stepper<'a> {
    pub model: &'a TrackingModel,
    pub sched: &'a ResetSchedule,
    pub acfg: &'a AdaptationConfig,
    pub icfg: IntegratorConfig,
    /// When false the parameters are held fixed regardless of the error.
    pub adapt: bool,
    grid: Grid,
    packed: Vec<f64>,
    ws: Rk4Workspace,
}

impl<'a> Stepper<'a> {
    pub fn new(
        model: &'a TrackingModel,
        sched: &'a ResetSchedule,
        acfg: &'a AdaptationConfig,
        icfg: IntegratorConfig,
    ) -> Result<Self, ValidationError> {
        model.validate()?;
        sched.validate()?;
        acfg.validate()?;
        let grid = Grid::new(sched, &icfg)?;
        let n = model.len();
        Ok(Self {
            model,
            sched,
            acfg,
            icfg,
            adapt: true,
            grid,
            packed: vec![0.0; 5 * n],
            ws: Rk4Workspace::new(5 * n),
        })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    /// Step index of the grid point nearest to `t`.
    pub fn index_of(&self, t: f64) -> u64 {
        (t / self.icfg.dt).round().max(0.0) as u64
    }

    /// Gate value at the current state, honoring the latch.
    pub fn gate(&self, state: &AdaptiveState) -> bool {
        let phase = self.index_of(state.t) % self.grid.period;
        let norm_hit = self.norm_trigger(state);
        phase >= self.grid.active || norm_hit || (self.sched.latched && state.latched && phase != 0)
    }

    fn norm_trigger(&self, state: &AdaptiveState) -> bool {
        let d = self.sched.norm_bound;
        d.is_finite() && euclidean_norm(&state.x_hat) >= d
    }

    pub fn step(&mut self, state: &mut AdaptiveState) -> Result<StepInfo, DivergenceError> {
        let idx = self.index_of(state.t);
        let phase = idx % self.grid.period;
        if phase == 0 {
            state.latched = false;
        }
        let norm_hit = self.norm_trigger(state);
        if self.sched.latched && norm_hit {
            state.latched = true;
        }
        let lam = phase >= self.grid.active || norm_hit || (self.sched.latched && state.latched);
        let e = state.error(self.model);
        let adapting = self.adapt && !lam && dead_zone(e, self.acfg.delta);

        let finite = if lam {
            self.reset_step(state);
            false
        } else {
            match self.icfg.method {
                Method::Euler => self.euler_active(state, e, adapting),
                Method::Rk4 => {
                    self.rk4_active(state, adapting);
                    false
                }
            }
        };
        state.t = (idx + 1) as f64 * self.icfg.dt;
        if !finite {
            check_finite(state)?;
        }
        Ok(StepInfo {
            lambda: lam,
            error: e,
            adapting,
        })
    }

    /// Sliding-mode return with snap to `x0`; parameters frozen.
    fn reset_step(&self, state: &mut AdaptiveState) {
        let h = self.sched.slew * self.icfg.dt;
        for v in [&mut state.x, &mut state.x_hat] {
            for (xi, &x0) in v.iter_mut().zip(&self.model.x0) {
                let d = *xi - x0;
                if d.abs() <= h {
                    *xi = x0;
                } else {
                    *xi -= h * d.signum();
                }
            }
        }
    }

    fn euler_active(&self, state: &mut AdaptiveState, e: f64, adapting: bool) -> bool {
        let m = self.model;
        let dt = self.icfg.dt;
        let g = self.acfg.gamma;
        let adapt_gain = self.acfg.adapt_gain;
        let n = m.len();
        let (x, xh) = (&mut state.x[..n], &mut state.x_hat[..n]);
        let (ah, qh, k) = (&mut state.alpha_hat[..n], &mut state.beta_hat[..n], &mut state.gain[..n]);
        let (alpha, quad, c) = (&m.alpha[..n], &m.quad[..n], &m.c_out[..n]);
        let mut finite = true;
        match &m.structure {
            Structure::Free => {
                for i in 0..n {
                    let (xi, xhi) = (x[i], xh[i]);
                    let dx = alpha[i] * xi + quad[i] * xi * xi;
                    let dxh = ah[i] * xhi + qh[i] * xhi * xhi + k[i] * e;
                    if adapting {
                        let ge = g * e * c[i];
                        ah[i] -= dt * ge * xhi;
                        qh[i] -= dt * ge * xhi * xhi;
                        if adapt_gain {
                            k[i] -= dt * ge * e;
                        }
                    }
                    x[i] = xi + dt * dx;
                    xh[i] = xhi + dt * dxh;
                    finite &= x[i].is_finite() & xh[i].is_finite() & ah[i].is_finite() & qh[i].is_finite() & k[i].is_finite();
                }
            }
            Structure::KnownSaturation { beta } => {
                let beta = &beta[..n];
                for i in 0..n {
                    let (xi, xhi) = (x[i], xh[i]);
                    let b1 = xhi * (1.0 - beta[i] * xhi);
                    let dx = alpha[i] * xi * (1.0 - beta[i] * xi);
                    let dxh = ah[i] * b1 + k[i] * e;
                    if adapting {
                        let ge = g * e * c[i];
                        ah[i] -= dt * ge * b1;
                        if adapt_gain {
                            k[i] -= dt * ge * e;
                        }
                    }
                    x[i] = xi + dt * dx;
                    xh[i] = xhi + dt * dxh;
                    finite &= x[i].is_finite() & xh[i].is_finite() & ah[i].is_finite() & qh[i].is_finite() & k[i].is_finite();
                }
            }
        }
        finite
    }

    fn rk4_active(&mut self, state: &mut AdaptiveState, adapting: bool) {
        let m = self.model;
        let n = m.len();
        let g = self.acfg.gamma;
        let adapt_gain = self.acfg.adapt_gain;
        let free = matches!(m.structure, Structure::Free);
        let y = &mut self.packed;
        for (k, block) in [&state.x, &state.x_hat, &state.alpha_hat, &state.beta_hat, &state.gain]
            .iter()
            .enumerate()
        {
            y[k * n..(k + 1) * n].copy_from_slice(block);
        }
        let mut f = |_t: f64, y: &[f64], dy: &mut [f64]| {
            let (x, rest) = y.split_at(n);
            let (xh, rest) = rest.split_at(n);
            let (ah, rest) = rest.split_at(n);
            let (qh, k) = rest.split_at(n);
            let e = output(&m.c_out, xh) - output(&m.c_out, x);
            for i in 0..n {
                let (b1, b2) = m.basis(i, xh[i]);
                dy[i] = m.drift(i, x[i], m.alpha[i], m.quad[i]);
                dy[n + i] = ah[i] * b1 + qh[i] * b2 + k[i] * e;
                let ge = if adapting { g * e * m.c_out[i] } else { 0.0 };
                dy[2 * n + i] = -ge * b1;
                dy[3 * n + i] = if free { -ge * b2 } else { 0.0 };
                dy[4 * n + i] = if adapt_gain { -ge * e } else { 0.0 };
            }
        };
        rk4_step(&mut f, state.t, y, self.icfg.dt, &mut self.ws);
        for (k, block) in [
            &mut state.x,
            &mut state.x_hat,
            &mut state.alpha_hat,
            &mut state.beta_hat,
            &mut state.gain,
        ]
        .into_iter()
        .enumerate()
        {
            block.copy_from_slice(&y[k * n..(k + 1) * n]);
        }
    }
}

fn check_finite(state: &AdaptiveState) -> Result<(), DivergenceError> {
    // A non-finite entry makes the sum non-finite; only then locate it.
    let total: f64 = [&state.x, &state.x_hat, &state.alpha_hat, &state.beta_hat, &state.gain]
        .iter()
        .map(|v| v.iter().sum::<f64>())
        .sum();
    if total.is_finite() {
        return Ok(());
    }
    let blocks: [(&'static str, &Vec<f64>); 5] = [
        ("x", &state.x),
        ("x_hat", &state.x_hat),
        ("alpha_hat", &state.alpha_hat),
        ("beta_hat", &state.beta_hat),
        ("gain", &state.gain),
    ];
    for (field, v) in blocks {
        if v.iter().any(|x| !x.is_finite()) {
            return Err(DivergenceError { t: state.t, field });
        }
    }
    Err(DivergenceError { t: state.t, field: "x" })
}

/// Advance a copy of `state` by one step.
pub fn step(
    state: &AdaptiveState,
    model: &TrackingModel,
    sched: &ResetSchedule,
    acfg: &AdaptationConfig,
    icfg: IntegratorConfig,
) -> Result<(AdaptiveState, StepInfo), SimError> {
    let mut stepper = Stepper::new(model, sched, acfg, icfg)?;
    let mut next = state.clone();
    let info = stepper.step(&mut next)?;
    Ok((next, info))
}

/// Sampled trajectory on the step grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    /// Integrated output of a feedback system.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z: Option<Vec<f64>>,
}

/// Integrate `y' = f(t, y)` from `y0` over `[0, t_end]`, keeping every `stride`-th grid point.
pub fn integrate<F>(
    mut f: F,
    y0: &[f64],
    t_end: f64,
    icfg: &IntegratorConfig,
    stride: usize,
) -> Result<(Vec<f64>, Vec<Vec<f64>>), SimError>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    icfg.validate()?;
    let steps = icfg.steps(t_end, "t_end")?;
    let stride = stride.max(1) as u64;
    let mut y = y0.to_vec();
    let mut ts = vec![0.0];
    let mut ys = vec![y.clone()];
    let mut k = vec![0.0; y.len()];
    let mut ws = Rk4Workspace::new(y.len());
    for s in 0..steps {
        let t = s as f64 * icfg.dt;
        match icfg.method {
            Method::Euler => euler_step(&mut f, t, &mut y, icfg.dt, &mut k),
            Method::Rk4 => rk4_step(&mut f, t, &mut y, icfg.dt, &mut ws),
        }
        let t1 = (s + 1) as f64 * icfg.dt;
        if y.iter().any(|v| !v.is_finite()) {
            return Err(DivergenceError { t: t1, field: "x" }.into());
        }
        if (s + 1) % stride == 0 || s + 1 == steps {
            ts.push(t1);
            ys.push(y.clone());
        }
    }
    Ok((ts, ys))
}

/// Free-running ensemble: no schedule, no adaptation.
pub fn integrate_autonomous(
    sys: &LogisticEnsemble,
    t_end: f64,
    icfg: &IntegratorConfig,
) -> Result<Trajectory, SimError> {
    let (t, x) = integrate(|_, x, dx| sys.rhs(x, dx), &sys.x0, t_end, icfg, 1)?;
    let y = x.iter().map(|x| sys.output(x)).collect();
    Ok(Trajectory { t, x, y, z: None })
}

pub fn integrate_multiinput(
    sys: &MultiInputSystem,
    t_end: f64,
    icfg: &IntegratorConfig,
) -> Result<Trajectory, SimError> {
    sys.validate()?;
    let (t, x) = integrate(
        |t, x, dx| crate::dynamics::multiinput_rhs(sys, x, t, dx),
        &sys.x0,
        t_end,
        icfg,
        1,
    )?;
    let y = x.iter().map(|x| output(&sys.c_out, x)).collect();
    Ok(Trajectory { t, x, y, z: None })
}

/// Output-feedback ensemble with the integrated output `z`, started from `z(0) = z0`.
pub fn integrate_feedback(
    sys: &LogisticEnsemble,
    z0: f64,
    t_end: f64,
    icfg: &IntegratorConfig,
) -> Result<Trajectory, SimError> {
    let n = sys.len();
    let mut y0 = sys.x0.clone();
    y0.push(z0);
    let (t, xz) = integrate(
        |_, s, ds| {
            ds[n] = crate::dynamics::feedback_rhs(sys, &s[..n], &mut ds[..n]);
        },
        &y0,
        t_end,
        icfg,
        1,
    )?;
    let x: Vec<Vec<f64>> = xz.iter().map(|s| s[..n].to_vec()).collect();
    let z = xz.iter().map(|s| s[n]).collect();
    let y = x.iter().map(|x| sys.output(x)).collect();
    Ok(Trajectory { t, x, y, z: Some(z) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn euler_step_of_exponential() {
        let mut y = [1.0];
        let mut k = [0.0];
        euler_step(&mut |_, y: &[f64], d: &mut [f64]| d[0] = y[0], 0.0, &mut y, 0.1, &mut k);
        assert_eq!(y[0], 1.1);
    }

    #[test]
    fn rk4_step_of_exponential() {
        let mut y = [1.0];
        let mut ws = Rk4Workspace::new(1);
        rk4_step(&mut |_, y: &[f64], d: &mut [f64]| d[0] = y[0], 0.0, &mut y, 0.1, &mut ws);
        let taylor = 1.0 + 0.1 + 0.01 / 2.0 + 0.001 / 6.0 + 0.0001 / 24.0;
        assert!((y[0] - taylor).abs() < 1e-15);
    }

    #[test]
    fn grid_alignment() {
        let icfg = IntegratorConfig::euler(1e-4).unwrap();
        let s = ResetSchedule::new(2.0, 1.0, 10.0, 10.0).unwrap();
        assert_eq!(Grid::new(&s, &icfg).unwrap(), Grid { period: 30000, active: 20000 });
        let bad = IntegratorConfig::euler(0.7).unwrap();
        assert_eq!(Grid::new(&s, &bad).unwrap_err().field, "schedule.period");
    }

    #[test]
    fn matched_states_stay_equal() {
        let m = TrackingModel::free(vec![2.0 / 3.0], vec![-1.0 / 3.0], vec![1.0], vec![0.1]).unwrap();
        let s = ResetSchedule::periodic(9.0, 1.0, 1.0).unwrap();
        let a = AdaptationConfig::new(0.2, 0.0, 1e-3, true).unwrap();
        for icfg in [IntegratorConfig::euler(1e-3).unwrap(), IntegratorConfig::rk4(1e-3).unwrap()] {
            let mut st = AdaptiveState::new(&m, m.alpha.clone(), m.quad.clone(), vec![-0.2]);
            let mut stepper = Stepper::new(&m, &s, &a, icfg).unwrap();
            for _ in 0..2000 {
                stepper.step(&mut st).unwrap();
                assert_eq!(st.x, st.x_hat);
            }
            assert_eq!(st.alpha_hat, m.alpha);
        }
    }

    #[test]
    fn snap_during_reset() {
        let m = TrackingModel::free(vec![1.0], vec![-1.0], vec![1.0], vec![0.5]).unwrap();
        let s = ResetSchedule::periodic(1.0, 1.0, 2.0).unwrap();
        let a = AdaptationConfig::new(0.1, 0.0, 1e-3, false).unwrap();
        let icfg = IntegratorConfig::euler(0.01).unwrap();
        let mut st = AdaptiveState::new(&m, vec![1.0], vec![-1.0], vec![0.0]);
        st.t = 1.0;
        st.x = vec![0.5 + 0.015];
        st.x_hat = vec![0.5 - 0.03];
        let (next, info) = step(&st, &m, &s, &a, icfg).unwrap();
        assert!(info.lambda);
        assert_eq!(next.x, vec![0.5]);
        assert!((next.x_hat[0] - 0.49).abs() < 1e-15);
        assert_eq!(next.t, 1.01);
    }

    #[test]
    fn divergence_is_reported() {
        let m = TrackingModel::free(vec![1.0], vec![0.0], vec![1.0], vec![1.0]).unwrap();
        let s = ResetSchedule::periodic(1000.0, 1.0, 1.0).unwrap();
        let a = AdaptationConfig::new(0.1, 0.0, 1e-3, false).unwrap();
        let icfg = IntegratorConfig::euler(0.5).unwrap();
        let mut st = AdaptiveState::new(&m, vec![1.0], vec![1e300], vec![0.0]);
        let mut stepper = Stepper::new(&m, &s, &a, icfg).unwrap();
        let mut err = None;
        for _ in 0..100 {
            if let Err(e) = stepper.step(&mut st) {
                err = Some(e);
                break;
            }
        }
        assert_eq!(err.unwrap().field, "x_hat");
    }

    #[test]
    fn exact_logistic_value() {
        let sys = LogisticEnsemble::normalized(vec![1.0], vec![1.0], vec![0.5]).unwrap();
        let tr = integrate_autonomous(&sys, 5.0, &IntegratorConfig::rk4(1e-3).unwrap()).unwrap();
        let x5 = tr.x.last().unwrap()[0];
        assert!((x5 - 1.0 / (1.0 + (-5.0f64).exp())).abs() < 1e-10);
        assert!((x5 - 0.993307).abs() < 1e-6);
    }

    #[test]
    fn zero_rate_is_constant() {
        let sys = LogisticEnsemble::normalized(vec![0.0, 0.0], vec![1.0, 2.0], vec![0.3, 0.8]).unwrap();
        let tr = integrate_autonomous(&sys, 1.0, &IntegratorConfig::euler(1e-2).unwrap()).unwrap();
        assert!(tr.x.iter().all(|x| x == &sys.x0));
    }

    #[test]
    fn rejects_misaligned_horizon() {
        let sys = LogisticEnsemble::normalized(vec![1.0], vec![1.0], vec![0.5]).unwrap();
        let icfg = IntegratorConfig::euler(0.3).unwrap();
        assert!(matches!(integrate_autonomous(&sys, 1.0, &icfg), Err(SimError::Validation(_))));
    }
}
