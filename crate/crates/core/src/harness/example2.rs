//! Ten-term ensemble with known saturation: only the rates and the feedback gain adapt.

use serde::{Deserialize, Serialize};

use super::{ExperimentConfig, InitBox, TrialRecord};
use crate::dynamics::{AdaptationConfig, ResetSchedule, TrackingModel};
use crate::error::ValidationError;
use crate::integrator::{IntegratorConfig, Method};
use crate::model::LogisticEnsemble;

pub const X0: [f64; 10] = [0.1, 0.2, 0.3, 0.2, 0.5, 0.1, 0.7, 0.2, 0.6, 0.4];
pub const C_OUT: [f64; 10] = [3.0, 5.0, -3.0, 0.5, -1.0, 2.0, -0.7, 5.5, -3.0, 2.0];
/// Ground-truth rates, chosen inside the sampling box.
pub const ALPHA_TRUE: [f64; 10] = [6.0, 7.0, 8.0, 5.0, 9.0, 6.5, 7.5, 5.5, 8.5, 6.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    /// 400 trials of 10000 epochs.
    Full,
    /// 20 trials of 2000 epochs.
    Desk,
}

impl Scale {
    pub fn trials(self) -> u64 {
        match self {
            Self::Full => 400,
            Self::Desk => 20,
        }
    }

    pub fn epochs(self) -> u64 {
        match self {
            Self::Full => 10_000,
            Self::Desk => 2_000,
        }
    }
}

pub fn ensemble() -> LogisticEnsemble {
    LogisticEnsemble::normalized(ALPHA_TRUE.to_vec(), C_OUT.to_vec(), X0.to_vec()).expect("valid tables")
}

/// `gamma = 0.001`, `delta = 1e-4`, `T = 2`, `dT2 = 1`, `l0 = 10`, `D = 10`, Euler with
/// `dt = 1e-4`, initial rates uniform on `[0, 12]^10`, `K(0) = 0`. The acceptance slack
/// `delta1` is `10 delta`.
pub fn config(scale: Scale, seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        model: TrackingModel::known_saturation(&ensemble()).expect("valid tables"),
        sched: ResetSchedule::new(2.0, 1.0, 10.0, 10.0).expect("valid schedule"),
        acfg: AdaptationConfig::new(0.001, 1e-4, 1e-3, true).expect("valid adaptation"),
        icfg: IntegratorConfig::new(1e-4, Method::Euler).expect("valid step"),
        epochs: scale.epochs(),
        trials: scale.trials(),
        seed,
        init_box: InitBox {
            lower: 0.0,
            upper: 12.0,
        },
        quad_hat0: None,
        gain0: None,
        record_stride: 0,
        tail_epochs: 10,
        instrument: false,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramRow {
    pub metric: String,
    pub bin_lo: f64,
    pub bin_hi: f64,
    pub start: u64,
    pub end: u64,
}

/// Counts of `values` in `bins` equal-width bins over `[lo, hi]`; the top edge is inclusive.
pub fn histogram(values: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<u64> {
    let mut counts = vec![0; bins];
    let w = (hi - lo) / bins as f64;
    for &v in values.iter().filter(|v| v.is_finite()) {
        if v < lo || v > hi {
            continue;
        }
        let k = if w > 0.0 { (((v - lo) / w) as usize).min(bins - 1) } else { 0 };
        counts[k] += 1;
    }
    counts
}

/// Start and end distributions of `d` and `R` on shared bin edges.
pub fn histograms(records: &[TrialRecord], bins: usize) -> Vec<HistogramRow> {
    let mut rows = Vec::new();
    let metrics: [(&str, Vec<f64>, Vec<f64>); 2] = [
        (
            "d",
            records.iter().map(|r| r.d0).collect(),
            records.iter().map(|r| r.d_final).collect(),
        ),
        (
            "R",
            records.iter().map(|r| r.r0).collect(),
            records.iter().map(|r| r.r_final).collect(),
        ),
    ];
    for (name, start, end) in metrics {
        let all: Vec<f64> = start.iter().chain(&end).copied().filter(|v| v.is_finite()).collect();
        if all.is_empty() || bins == 0 {
            continue;
        }
        let lo = all.iter().copied().fold(f64::INFINITY, f64::min);
        let mut hi = all.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi <= lo {
            hi = lo + 1.0;
        }
        let hs = histogram(&start, lo, hi, bins);
        let he = histogram(&end, lo, hi, bins);
        let w = (hi - lo) / bins as f64;
        for k in 0..bins {
            rows.push(HistogramRow {
                metric: name.to_string(),
                bin_lo: lo + k as f64 * w,
                bin_hi: if k + 1 == bins { hi } else { lo + (k + 1) as f64 * w },
                start: hs[k],
                end: he[k],
            });
        }
    }
    rows
}

/// Validate a scale override.
pub fn with_overrides(
    mut cfg: ExperimentConfig,
    trials: Option<u64>,
    epochs: Option<u64>,
) -> Result<ExperimentConfig, ValidationError> {
    if let Some(t) = trials {
        cfg.trials = t;
    }
    if let Some(e) = epochs {
        cfg.epochs = e;
    }
    cfg.validate()?;
    Ok(cfg)
}
