//! Forward-only systems: logistic ensembles driven by external inputs and by their own output.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::ValidationError;
use crate::model::LogisticEnsemble;

/// Input-derivative channel `xi_j'(t)`.
#[derive(Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum InputChannel {
    Constant { value: f64 },
    /// `amplitude * sin(omega t + phase)`.
    Sine { amplitude: f64, omega: f64, phase: f64 },
    /// Coefficients in increasing powers of `t`.
    Polynomial { coeffs: Vec<f64> },
    #[serde(skip)]
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl InputChannel {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Self::Constant { value } => *value,
            Self::Sine {
                amplitude,
                omega,
                phase,
            } => amplitude * (omega * t + phase).sin(),
            Self::Polynomial { coeffs } => coeffs.iter().rev().fold(0.0, |acc, c| acc * t + c),
            Self::Custom(f) => f(t),
        }
    }
}

impl fmt::Debug for InputChannel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Constant { value } => f.debug_struct("Constant").field("value", value).finish(),
            Self::Sine {
                amplitude,
                omega,
                phase,
            } => f
                .debug_struct("Sine")
                .field("amplitude", amplitude)
                .field("omega", omega)
                .field("phase", phase)
                .finish(),
            Self::Polynomial { coeffs } => f.debug_struct("Polynomial").field("coeffs", coeffs).finish(),
            Self::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

/// `x_i' = sum_j alpha_ij xi_j'(t) x_i (1 - beta_ij x_i)`, `y = C^T x`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MultiInputSystem {
    /// Row-major `n x m`.
    pub alpha: Vec<Vec<f64>>,
    pub beta: Vec<Vec<f64>>,
    pub c_out: Vec<f64>,
    pub x0: Vec<f64>,
    pub inputs: Vec<InputChannel>,
}

impl MultiInputSystem {
    pub fn new(
        alpha: Vec<Vec<f64>>,
        beta: Vec<Vec<f64>>,
        c_out: Vec<f64>,
        x0: Vec<f64>,
        inputs: Vec<InputChannel>,
    ) -> Result<Self, ValidationError> {
        let s = Self {
            alpha,
            beta,
            c_out,
            x0,
            inputs,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        let n = self.x0.len();
        let m = self.inputs.len();
        if n == 0 || m == 0 {
            return Err(ValidationError::new("x0", "need at least one equation and one input"));
        }
        for (name, mat) in [("alpha", &self.alpha), ("beta", &self.beta)] {
            if mat.len() != n || mat.iter().any(|row| row.len() != m) {
                return Err(ValidationError::new(name, format!("expected a {n}x{m} matrix")));
            }
            if mat.iter().flatten().any(|v| !v.is_finite()) {
                return Err(ValidationError::new(name, "entries must be finite"));
            }
        }
        if self.c_out.len() != n {
            return Err(ValidationError::new("c_out", format!("expected {n} entries")));
        }
        if self.x0.iter().chain(&self.c_out).any(|v| !v.is_finite()) {
            return Err(ValidationError::new("x0", "entries must be finite"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.x0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x0.is_empty()
    }

    /// Single-input system equivalent to an autonomous ensemble when `xi(t) = t`.
    pub fn from_ensemble(sys: &LogisticEnsemble, input: InputChannel) -> Self {
        Self {
            alpha: sys.alpha.iter().map(|&a| vec![a]).collect(),
            beta: sys.beta.iter().map(|&b| vec![b]).collect(),
            c_out: sys.c_out.clone(),
            x0: sys.x0.clone(),
            inputs: vec![input],
        }
    }
}

pub fn multiinput_rhs(sys: &MultiInputSystem, x: &[f64], t: f64, dx: &mut [f64]) {
    let rates: Vec<f64> = sys.inputs.iter().map(|c| c.eval(t)).collect();
    for (i, out) in dx.iter_mut().enumerate() {
        let xi = x[i];
        *out = (0..rates.len())
            .map(|j| sys.alpha[i][j] * rates[j] * xi * (1.0 - sys.beta[i][j] * xi))
            .sum();
    }
}

/// Output-driven ensemble: `x_i' = alpha_i (C^T x) x_i (1 - beta_i x_i)`, `z' = C^T x`.
/// Returns `z'`.
pub fn feedback_rhs(sys: &LogisticEnsemble, x: &[f64], dx: &mut [f64]) -> f64 {
    let y: f64 = sys.c_out.iter().zip(x).map(|(c, x)| c * x).sum();
    for i in 0..sys.len() {
        dx[i] = sys.alpha[i] * y * x[i] * (1.0 - sys.beta[i] * x[i]);
    }
    y
}
