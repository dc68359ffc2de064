//! Gradient-descent comparators on the single-sigmoid surface `g(t, a, c) = c f(a t - b)`.

use serde::{Deserialize, Serialize};

use crate::error::{SimError, ValidationError};
use crate::integrator::{integrate, IntegratorConfig};
use crate::model::{sigmoid, sigmoid_prime};

/// Default number of trapezoid intervals on the cost window.
pub const QUAD_N: usize = 900;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarSigmoidTarget {
    pub alpha_true: f64,
    pub c_true: f64,
    /// Offset subtracted inside the sigmoid: `f(a t - b_fixed)`.
    pub b_fixed: f64,
    /// Cost window `[0, horizon]`.
    pub horizon: f64,
}

impl ScalarSigmoidTarget {
    pub fn new(alpha_true: f64, c_true: f64, b_fixed: f64, horizon: f64) -> Result<Self, ValidationError> {
        let s = Self {
            alpha_true,
            c_true,
            b_fixed,
            horizon,
        };
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(ValidationError::new("horizon", "must be positive and finite"));
        }
        if ![alpha_true, c_true, b_fixed].iter().all(|v| v.is_finite()) {
            return Err(ValidationError::new("target", "parameters must be finite"));
        }
        Ok(s)
    }

    /// `a* = 2/3`, `c* = 2`, `b = 2.944`, window `[0, 9]`.
    pub fn example1() -> Self {
        Self {
            alpha_true: 2.0 / 3.0,
            c_true: 2.0,
            b_fixed: 2.944,
            horizon: 9.0,
        }
    }

    pub fn g(&self, t: f64, a: f64, c: f64) -> f64 {
        c * sigmoid(a * t - self.b_fixed)
    }

    /// `dg/da = c t f'(a t - b)`.
    pub fn dg_da(&self, t: f64, a: f64, c: f64) -> f64 {
        c * t * sigmoid_prime(a * t - self.b_fixed)
    }

    /// `dg/dc = f(a t - b)`.
    pub fn dg_dc(&self, t: f64, a: f64) -> f64 {
        sigmoid(a * t - self.b_fixed)
    }

    pub fn error(&self, t: f64, a: f64, c: f64) -> f64 {
        self.g(t, a, c) - self.g(t, self.alpha_true, self.c_true)
    }
}

/// Pattern-by-pattern flow at clock `t`: `-rate e(t) grad g`.
pub fn pattern_gradient_rhs(a: f64, c: f64, t: f64, target: &ScalarSigmoidTarget, rate: f64) -> (f64, f64) {
    let e = target.error(t, a, c);
    (-rate * e * target.dg_da(t, a, c), -rate * e * target.dg_dc(t, a))
}

fn trapezoid_nodes(target: &ScalarSigmoidTarget, quad_n: usize) -> impl Iterator<Item = (f64, f64)> + '_ {
    let h = target.horizon / quad_n as f64;
    (0..=quad_n).map(move |k| {
        let w = if k == 0 || k == quad_n { 0.5 * h } else { h };
        (k as f64 * h, w)
    })
}

/// `J = int_0^H (g(t, a, c) - g(t, a*, c*))^2 dt` by the trapezoid rule on `quad_n` intervals.
pub fn batch_cost(a: f64, c: f64, target: &ScalarSigmoidTarget, quad_n: usize) -> f64 {
    trapezoid_nodes(target, quad_n)
        .map(|(t, w)| {
            let e = target.error(t, a, c);
            w * e * e
        })
        .sum()
}

/// Exact gradient of [`batch_cost`] with respect to `(a, c)`.
pub fn batch_gradient(a: f64, c: f64, target: &ScalarSigmoidTarget, quad_n: usize) -> (f64, f64) {
    trapezoid_nodes(target, quad_n).fold((0.0, 0.0), |(ga, gc), (t, w)| {
        let e = target.error(t, a, c);
        (
            ga + 2.0 * w * e * target.dg_da(t, a, c),
            gc + 2.0 * w * e * target.dg_dc(t, a),
        )
    })
}

/// Batch flow `-rate grad J`.
pub fn batch_gradient_rhs(a: f64, c: f64, target: &ScalarSigmoidTarget, rate: f64, quad_n: usize) -> (f64, f64) {
    let (ga, gc) = batch_gradient(a, c, target, quad_n);
    (-rate * ga, -rate * gc)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flow {
    /// Instantaneous gradient with the clock folded into the cost window.
    Pattern,
    Batch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineTrajectory {
    pub t: Vec<f64>,
    pub a: Vec<f64>,
    pub c: Vec<f64>,
    /// Quadrature cost at each sample.
    pub cost: Vec<f64>,
}

impl BaselineTrajectory {
    pub fn last(&self) -> (f64, f64, f64) {
        let k = self.t.len() - 1;
        (self.a[k], self.c[k], self.cost[k])
    }
}

/// Integrate a baseline flow from `init = (a0, c0)` and keep every `stride`-th step.
pub fn run_baseline(
    flow: Flow,
    target: &ScalarSigmoidTarget,
    init: (f64, f64),
    rate: f64,
    t_end: f64,
    icfg: &IntegratorConfig,
    stride: usize,
) -> Result<BaselineTrajectory, SimError> {
    if !(init.0.is_finite() && init.1.is_finite()) {
        return Err(ValidationError::new("init", "initial point must be finite").into());
    }
    let h = target.horizon;
    let (t, ys) = integrate(
        |t, y, dy| {
            let (da, dc) = match flow {
                Flow::Pattern => pattern_gradient_rhs(y[0], y[1], t.rem_euclid(h), target, rate),
                Flow::Batch => batch_gradient_rhs(y[0], y[1], target, rate, QUAD_N),
            };
            dy[0] = da;
            dy[1] = dc;
        },
        &[init.0, init.1],
        t_end,
        icfg,
        stride,
    )?;
    let a: Vec<f64> = ys.iter().map(|y| y[0]).collect();
    let c: Vec<f64> = ys.iter().map(|y| y[1]).collect();
    let cost = a.iter().zip(&c).map(|(&a, &c)| batch_cost(a, c, target, QUAD_N)).collect();
    Ok(BaselineTrajectory { t, a, c, cost })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example1_initial_value() {
        let tg = ScalarSigmoidTarget::example1();
        assert!((tg.g(0.0, tg.alpha_true, tg.c_true) - 0.1).abs() < 1e-4);
    }

    #[test]
    fn stationary_at_truth() {
        let tg = ScalarSigmoidTarget::example1();
        for t in [0.0, 1.5, 7.0] {
            assert_eq!(pattern_gradient_rhs(2.0 / 3.0, 2.0, t, &tg, 0.2), (0.0, 0.0));
        }
        assert_eq!(batch_gradient_rhs(2.0 / 3.0, 2.0, &tg, 0.2, QUAD_N), (0.0, 0.0));
        assert_eq!(batch_cost(2.0 / 3.0, 2.0, &tg, QUAD_N), 0.0);
    }

    #[test]
    fn slope_update_vanishes_at_origin() {
        let tg = ScalarSigmoidTarget::example1();
        let (da, dc) = pattern_gradient_rhs(-3.0, -3.0, 0.0, &tg, 0.2);
        assert_eq!(da, 0.0);
        assert!(dc != 0.0);
    }

    #[test]
    fn cost_is_nonnegative() {
        let tg = ScalarSigmoidTarget::example1();
        for a in [-3.0, -1.0, 0.0, 1.0, 3.0] {
            for c in [-3.0, 0.0, 3.0] {
                assert!(batch_cost(a, c, &tg, QUAD_N) >= 0.0);
            }
        }
    }

    #[test]
    fn rejects_bad_target() {
        assert!(ScalarSigmoidTarget::new(1.0, 1.0, 0.0, 0.0).is_err());
        assert!(ScalarSigmoidTarget::new(f64::NAN, 1.0, 0.0, 1.0).is_err());
    }
}
