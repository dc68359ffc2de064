//! Static sigmoid superpositions and the logistic ODE ensembles that realize them.
//!
//! A single logistic equation `x' = a x (1 - b x)` started from `x(0) = x0` with
//! `b x0` in `(0, 1)` has the closed-form solution `x(t) = f(a t + logit(b x0)) / b`,
//! where `f` is the logistic sigmoid. Summing weighted solutions therefore
//! reproduces any finite sum `sum_i c_i f(a_i t + b_i)`, and the map between the two
//! parameterizations is a bijection on the valid domain.
//!
//! The canonical ensemble chart is the normalized one (`beta = 1`, so that every
//! state lives in `(0, 1)`); general-`beta` ensembles are accepted and converted
//! with [`scale_coordinates`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("model must have at least one term")]
    Empty,
    #[error("length mismatch: `{field}` has {got} entries, expected {expected}")]
    Length {
        field: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("`{field}[{index}]` is not finite")]
    NonFinite { field: &'static str, index: usize },
    #[error("`{field}[{index}]` is zero; the term is degenerate")]
    ZeroCoefficient { field: &'static str, index: usize },
    #[error("term {index}: initial value {value} lies outside the open interval (0, 1)")]
    OutsideFunnel { index: usize, value: f64 },
}

/// Logistic sigmoid `1 / (1 + exp(-z))`, evaluated without overflow for any finite `z`.
#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let ez = z.exp();
        ez / (1.0 + ez)
    }
}

/// Derivative of [`sigmoid`], `f(z) (1 - f(z))`.
///
/// Evaluated as `e / (1 + e)^2` with `e = exp(-|z|)`; forming `1 - f(z)` directly
/// cancels for large positive `z`.
#[inline]
pub fn sigmoid_prime(z: f64) -> f64 {
    let e = (-z.abs()).exp();
    let d = 1.0 + e;
    e / (d * d)
}

/// Inverse of [`sigmoid`]. Returns `None` unless `p` is strictly inside `(0, 1)`.
pub fn logit(p: f64) -> Option<f64> {
    if !(p > 0.0 && p < 1.0) {
        return None;
    }
    // 1 - p is exact for p >= 0.5, so split there.
    Some(if p < 0.5 {
        p.ln() - (-p).ln_1p()
    } else {
        -((1.0 - p) / p).ln()
    })
}

fn check_len(field: &'static str, v: &[f64], expected: usize) -> Result<(), ModelError> {
    if v.len() != expected {
        return Err(ModelError::Length {
            field,
            got: v.len(),
            expected,
        });
    }
    if let Some(index) = v.iter().position(|x| !x.is_finite()) {
        return Err(ModelError::NonFinite { field, index });
    }
    Ok(())
}

/// `y(t) = sum_i c_i f(a_i t + b_i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmoidSum {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
}

impl SigmoidSum {
    pub fn new(a: Vec<f64>, b: Vec<f64>, c: Vec<f64>) -> Result<Self, ModelError> {
        let model = Self { a, b, c };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let n = self.a.len();
        if n == 0 {
            return Err(ModelError::Empty);
        }
        check_len("a", &self.a, n)?;
        check_len("b", &self.b, n)?;
        check_len("c", &self.c, n)
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    pub fn eval(&self, t: f64) -> f64 {
        eval_sigmoid_sum(self, t)
    }
}

pub fn eval_sigmoid_sum(model: &SigmoidSum, t: f64) -> f64 {
    model
        .a
        .iter()
        .zip(&model.b)
        .zip(&model.c)
        .map(|((a, b), c)| c * sigmoid(a * t + b))
        .sum()
}

/// `x_i' = alpha_i x_i (1 - beta_i x_i)`, `y = sum_i c_out_i x_i`, `x_i(0) = x0_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticEnsemble {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub c_out: Vec<f64>,
    pub x0: Vec<f64>,
}

impl LogisticEnsemble {
    pub fn new(
        alpha: Vec<f64>,
        beta: Vec<f64>,
        c_out: Vec<f64>,
        x0: Vec<f64>,
    ) -> Result<Self, ModelError> {
        let sys = Self {
            alpha,
            beta,
            c_out,
            x0,
        };
        sys.validate()?;
        Ok(sys)
    }

    /// Ensemble in the normalized chart (`beta = 1`). Initial values must lie in `(0, 1)`.
    pub fn normalized(alpha: Vec<f64>, c_out: Vec<f64>, x0: Vec<f64>) -> Result<Self, ModelError> {
        let beta = vec![1.0; alpha.len()];
        let sys = Self::new(alpha, beta, c_out, x0)?;
        sys.check_funnel()?;
        Ok(sys)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let n = self.alpha.len();
        if n == 0 {
            return Err(ModelError::Empty);
        }
        check_len("alpha", &self.alpha, n)?;
        check_len("beta", &self.beta, n)?;
        check_len("c_out", &self.c_out, n)?;
        check_len("x0", &self.x0, n)
    }

    /// Every `beta_i x0_i` must lie strictly inside `(0, 1)`.
    pub fn check_funnel(&self) -> Result<(), ModelError> {
        for (index, (b, x)) in self.beta.iter().zip(&self.x0).enumerate() {
            let value = b * x;
            if !(value > 0.0 && value < 1.0) {
                return Err(ModelError::OutsideFunnel { index, value });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    pub fn is_normalized(&self) -> bool {
        self.beta.iter().all(|&b| b == 1.0)
    }

    /// Right-hand side of the autonomous ensemble.
    pub fn rhs(&self, x: &[f64], dx: &mut [f64]) {
        for i in 0..self.len() {
            dx[i] = self.alpha[i] * x[i] * (1.0 - self.beta[i] * x[i]);
        }
    }

    pub fn output(&self, x: &[f64]) -> f64 {
        self.c_out.iter().zip(x).map(|(c, x)| c * x).sum()
    }

    /// Closed-form state at time `t`; requires the funnel condition.
    pub fn exact_state(&self, t: f64) -> Result<Vec<f64>, ModelError> {
        let sig = logistic_to_sigmoid(self)?;
        Ok((0..self.len())
            .map(|i| sigmoid(sig.a[i] * t + sig.b[i]) / self.beta[i])
            .collect())
    }
}

/// Exact sigmoid form of an ensemble: `a = alpha`, `b = logit(beta x0)`, `c = c_out / beta`.
pub fn logistic_to_sigmoid(sys: &LogisticEnsemble) -> Result<SigmoidSum, ModelError> {
    sys.validate()?;
    let n = sys.len();
    let mut b = Vec::with_capacity(n);
    let mut c = Vec::with_capacity(n);
    for i in 0..n {
        let beta = sys.beta[i];
        if beta == 0.0 {
            return Err(ModelError::ZeroCoefficient {
                field: "beta",
                index: i,
            });
        }
        let p = beta * sys.x0[i];
        let offset = logit(p).ok_or(ModelError::OutsideFunnel { index: i, value: p })?;
        b.push(offset);
        c.push(sys.c_out[i] / beta);
    }
    SigmoidSum::new(sys.alpha.clone(), b, c)
}

/// Normalized ensemble realizing `model`: `alpha = a`, `beta = 1`, `c_out = c`, `x0 = f(b)`.
pub fn sigmoid_to_logistic(model: &SigmoidSum) -> Result<LogisticEnsemble, ModelError> {
    model.validate()?;
    let n = model.len();
    let mut x0 = Vec::with_capacity(n);
    for i in 0..n {
        if model.c[i] == 0.0 {
            return Err(ModelError::ZeroCoefficient {
                field: "c",
                index: i,
            });
        }
        let p = sigmoid(model.b[i]);
        if !(p > 0.0 && p < 1.0) {
            return Err(ModelError::OutsideFunnel { index: i, value: p });
        }
        x0.push(p);
    }
    LogisticEnsemble::new(model.a.clone(), vec![1.0; n], model.c.clone(), x0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// `x'_i = beta_i x_i`: unit saturation, output weights absorb `1 / beta`.
    Beta,
    /// `x'_i = c_i x_i`: unit output weights, saturation absorbs `1 / c`.
    Output,
}

/// Output-preserving linear change of coordinates.
pub fn scale_coordinates(
    sys: &LogisticEnsemble,
    mode: Normalization,
) -> Result<LogisticEnsemble, ModelError> {
    sys.validate()?;
    let n = sys.len();
    let (divisor, field) = match mode {
        Normalization::Beta => (&sys.beta, "beta"),
        Normalization::Output => (&sys.c_out, "c_out"),
    };
    if let Some(index) = divisor.iter().position(|&d| d == 0.0) {
        return Err(ModelError::ZeroCoefficient { field, index });
    }
    let mut out = sys.clone();
    for i in 0..n {
        match mode {
            Normalization::Beta => {
                let b = sys.beta[i];
                out.beta[i] = 1.0;
                out.c_out[i] = sys.c_out[i] / b;
                out.x0[i] = sys.x0[i] * b;
            }
            Normalization::Output => {
                let c = sys.c_out[i];
                out.c_out[i] = 1.0;
                out.beta[i] = sys.beta[i] / c;
                out.x0[i] = sys.x0[i] * c;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert_eq!(sigmoid(800.0), 1.0);
        assert_eq!(sigmoid(-800.0), 0.0);
        assert!(sigmoid(-745.0) >= 0.0);
        assert_eq!(sigmoid(0.0), 0.5);
    }

    #[test]
    fn logit_inverts_sigmoid() {
        for z in [-20.0, -3.0, -0.1, 0.0, 0.7, 4.0, 15.0] {
            let back = logit(sigmoid(z)).unwrap();
            assert!((back - z).abs() < 1e-9 * (1.0 + z.abs()), "{z} -> {back}");
        }
        assert!(logit(0.0).is_none());
        assert!(logit(1.0).is_none());
        assert!(logit(f64::NAN).is_none());
    }

    #[test]
    fn eval_single_sigmoid_examples() {
        let m = SigmoidSum::new(vec![2.0 / 3.0], vec![-2.944], vec![2.0]).unwrap();
        assert_relative_eq!(m.eval(0.0), 2.0 / (1.0 + 2.944f64.exp()), epsilon = 1e-15);
        assert!((m.eval(0.0) - 0.1).abs() < 1e-3);

        let m = SigmoidSum::new(vec![1.0], vec![0.0], vec![1.0]).unwrap();
        assert_eq!(m.eval(0.0), 0.5);
    }

    #[test]
    fn symmetric_pair_sums_to_one() {
        let m = SigmoidSum::new(vec![1.0, -1.0], vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        assert_relative_eq!(m.eval(3.0), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn logistic_to_sigmoid_examples() {
        let sys = LogisticEnsemble::new(vec![2.0 / 3.0], vec![1.0 / 3.0], vec![1.0], vec![0.1])
            .unwrap();
        let s = logistic_to_sigmoid(&sys).unwrap();
        assert_eq!(s.a[0], 2.0 / 3.0);
        assert_relative_eq!(s.b[0], (1.0f64 / 29.0).ln(), epsilon = 1e-12);
        assert_relative_eq!(s.b[0], -3.367, epsilon = 1e-3);
        assert_relative_eq!(s.c[0], 3.0, epsilon = 1e-12);

        let sys = LogisticEnsemble::new(vec![1.0], vec![1.0], vec![1.0], vec![0.5]).unwrap();
        let s = logistic_to_sigmoid(&sys).unwrap();
        assert_eq!((s.a[0], s.b[0], s.c[0]), (1.0, 0.0, 1.0));
    }

    #[test]
    fn logistic_to_sigmoid_rejects_degenerate() {
        let sys = LogisticEnsemble::new(vec![1.0], vec![0.0], vec![1.0], vec![0.5]).unwrap();
        assert!(matches!(
            logistic_to_sigmoid(&sys),
            Err(ModelError::ZeroCoefficient { field: "beta", .. })
        ));
        let sys = LogisticEnsemble::new(vec![1.0], vec![2.0], vec![1.0], vec![0.5]).unwrap();
        assert!(matches!(
            logistic_to_sigmoid(&sys),
            Err(ModelError::OutsideFunnel { .. })
        ));
        let sys = LogisticEnsemble::new(vec![1.0], vec![1.0], vec![1.0], vec![-0.1]).unwrap();
        assert!(logistic_to_sigmoid(&sys).is_err());
    }

    #[test]
    fn sigmoid_to_logistic_examples() {
        let m = SigmoidSum::new(vec![2.0 / 3.0], vec![-2.944], vec![2.0]).unwrap();
        let sys = sigmoid_to_logistic(&m).unwrap();
        assert_eq!(sys.alpha[0], 2.0 / 3.0);
        assert_eq!(sys.beta[0], 1.0);
        assert_eq!(sys.c_out[0], 2.0);
        assert_relative_eq!(sys.x0[0], 1.0 / (1.0 + 2.944f64.exp()), epsilon = 1e-15);
        assert!((sys.x0[0] - 0.05).abs() < 1e-3);
        // g(0) = c x0 recovers the Example-1 starting value.
        assert!((sys.output(&sys.x0) - 0.1).abs() < 1e-3);

        let m = SigmoidSum::new(vec![1.0], vec![0.0], vec![1.0]).unwrap();
        let sys = sigmoid_to_logistic(&m).unwrap();
        assert_eq!(sys.x0[0], 0.5);
        assert!(sys.is_normalized());
    }

    #[test]
    fn sigmoid_to_logistic_rejects_zero_weight_and_saturated_offset() {
        let m = SigmoidSum::new(vec![1.0, 1.0], vec![0.0, 0.0], vec![1.0, 0.0]).unwrap();
        assert!(matches!(
            sigmoid_to_logistic(&m),
            Err(ModelError::ZeroCoefficient { field: "c", index: 1 })
        ));
        let m = SigmoidSum::new(vec![1.0], vec![50.0], vec![1.0]).unwrap();
        assert!(matches!(
            sigmoid_to_logistic(&m),
            Err(ModelError::OutsideFunnel { .. })
        ));
        let m = SigmoidSum::new(vec![1.0], vec![-800.0], vec![1.0]).unwrap();
        assert!(sigmoid_to_logistic(&m).is_err());
    }

    #[test]
    fn scale_coordinates_examples() {
        let sys =
            LogisticEnsemble::new(vec![2.0 / 3.0], vec![1.0 / 3.0], vec![2.0], vec![0.3]).unwrap();
        let b = scale_coordinates(&sys, Normalization::Beta).unwrap();
        assert_eq!(b.beta[0], 1.0);
        assert_relative_eq!(b.c_out[0], 6.0, epsilon = 1e-14);
        assert_relative_eq!(b.x0[0], 0.1, epsilon = 1e-15);

        let sys =
            LogisticEnsemble::new(vec![2.0 / 3.0], vec![1.0 / 3.0], vec![2.0], vec![0.2]).unwrap();
        let c = scale_coordinates(&sys, Normalization::Output).unwrap();
        assert_eq!(c.c_out[0], 1.0);
        assert_relative_eq!(c.beta[0], 1.0 / 6.0, epsilon = 1e-15);
        assert_relative_eq!(c.x0[0], 0.4, epsilon = 1e-15);
        let (y, yc) = (sys.output(&sys.exact_state(1.5).unwrap()), c.output(&c.exact_state(1.5).unwrap()));
        assert_relative_eq!(y, yc, epsilon = 1e-14);
    }

    #[test]
    fn scale_coordinates_rejects_zero_divisor() {
        let sys = LogisticEnsemble::new(vec![1.0], vec![1.0], vec![0.0], vec![0.3]).unwrap();
        assert!(scale_coordinates(&sys, Normalization::Output).is_err());
        assert!(scale_coordinates(&sys, Normalization::Beta).is_ok());
    }

    #[test]
    fn constructors_validate_shapes() {
        assert_eq!(
            SigmoidSum::new(vec![], vec![], vec![]).unwrap_err(),
            ModelError::Empty
        );
        assert!(matches!(
            SigmoidSum::new(vec![1.0], vec![1.0, 2.0], vec![1.0]),
            Err(ModelError::Length { field: "b", .. })
        ));
        assert!(matches!(
            SigmoidSum::new(vec![f64::NAN], vec![1.0], vec![1.0]),
            Err(ModelError::NonFinite { field: "a", .. })
        ));
        assert!(LogisticEnsemble::normalized(vec![1.0], vec![1.0], vec![1.0]).is_err());
    }
}
