//! JSON configuration, CSV results and the run manifest.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dynamics::{AdaptationConfig, ResetSchedule, TrackingModel};
use crate::error::ValidationError;
use crate::harness::example1::Example1Result;
use crate::harness::example2::{self, HistogramRow};
use crate::harness::{ExperimentConfig, InitBox, TrialRecord};
use crate::integrator::{IntegratorConfig, Method};
use crate::model::LogisticEnsemble;

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Invalid(#[from] ValidationError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StructureKind {
    /// Saturation coefficients are known; only the rates adapt.
    #[default]
    KnownSaturation,
    /// Both the rate and the quadratic coefficient adapt.
    Free,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDoc {
    #[serde(default = "default_alpha")]
    pub alpha: Vec<f64>,
    /// Saturation coefficients; ones when absent.
    #[serde(default)]
    pub beta: Option<Vec<f64>>,
    #[serde(default = "default_c_out")]
    pub c_out: Vec<f64>,
    #[serde(default = "default_x0")]
    pub x0: Vec<f64>,
    #[serde(default)]
    pub structure: StructureKind,
}

impl Default for ModelDoc {
    fn default() -> Self {
        Self {
            alpha: default_alpha(),
            beta: None,
            c_out: default_c_out(),
            x0: default_x0(),
            structure: StructureKind::default(),
        }
    }
}

fn default_alpha() -> Vec<f64> {
    example2::ALPHA_TRUE.to_vec()
}
fn default_c_out() -> Vec<f64> {
    example2::C_OUT.to_vec()
}
fn default_x0() -> Vec<f64> {
    example2::X0.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleDoc {
    #[serde(default = "default_active")]
    pub active: f64,
    #[serde(default = "default_reset")]
    pub reset: f64,
    /// `null` disables the norm trigger.
    #[serde(default = "default_norm_bound")]
    pub norm_bound: Option<f64>,
    #[serde(default = "default_slew")]
    pub slew: f64,
    #[serde(default)]
    pub latched: bool,
}

impl Default for ScheduleDoc {
    fn default() -> Self {
        Self {
            active: default_active(),
            reset: default_reset(),
            norm_bound: default_norm_bound(),
            slew: default_slew(),
            latched: false,
        }
    }
}

fn default_active() -> f64 {
    2.0
}
fn default_reset() -> f64 {
    1.0
}
fn default_norm_bound() -> Option<f64> {
    Some(10.0)
}
fn default_slew() -> f64 {
    10.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdaptationDoc {
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_delta1")]
    pub delta1: f64,
    #[serde(default = "default_true")]
    pub adapt_gain: bool,
}

impl Default for AdaptationDoc {
    fn default() -> Self {
        Self {
            gamma: default_gamma(),
            delta: default_delta(),
            delta1: default_delta1(),
            adapt_gain: true,
        }
    }
}

fn default_gamma() -> f64 {
    0.001
}
fn default_delta() -> f64 {
    1e-4
}
fn default_delta1() -> f64 {
    1e-3
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorDoc {
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_method")]
    pub method: Method,
}

impl Default for IntegratorDoc {
    fn default() -> Self {
        Self {
            dt: default_dt(),
            method: default_method(),
        }
    }
}

fn default_dt() -> f64 {
    1e-4
}
fn default_method() -> Method {
    Method::Euler
}

/// On-disk experiment document. Every field is optional; defaults reproduce the
/// ten-term desk-scale experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigDoc {
    #[serde(default)]
    pub model: ModelDoc,
    #[serde(default)]
    pub schedule: ScheduleDoc,
    #[serde(default)]
    pub adaptation: AdaptationDoc,
    #[serde(default)]
    pub integrator: IntegratorDoc,
    #[serde(default = "default_epochs")]
    pub epochs: u64,
    #[serde(default = "default_trials")]
    pub trials: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_box")]
    pub init_box: InitBox,
    #[serde(default)]
    pub quad_hat0: Option<Vec<f64>>,
    #[serde(default)]
    pub gain0: Option<Vec<f64>>,
    #[serde(default)]
    pub record_stride: u64,
    #[serde(default = "default_tail")]
    pub tail_epochs: u64,
    #[serde(default)]
    pub instrument: bool,
}

impl Default for ConfigDoc {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults")
    }
}

fn default_epochs() -> u64 {
    2000
}
fn default_trials() -> u64 {
    20
}
fn default_box() -> InitBox {
    InitBox {
        lower: 0.0,
        upper: 12.0,
    }
}
fn default_tail() -> u64 {
    10
}

impl ConfigDoc {
    /// Apply constructors and validate every invariant.
    pub fn resolve(&self) -> Result<ExperimentConfig, ValidationError> {
        let m = &self.model;
        let n = m.alpha.len();
        let beta = m.beta.clone().unwrap_or_else(|| vec![1.0; n]);
        let sys = LogisticEnsemble::new(m.alpha.clone(), beta, m.c_out.clone(), m.x0.clone())
            .map_err(|e| ValidationError::new("model", e.to_string()))?;
        let model = match m.structure {
            StructureKind::KnownSaturation => TrackingModel::known_saturation(&sys)?,
            StructureKind::Free => TrackingModel::free_from_ensemble(&sys)?,
        };
        let s = &self.schedule;
        let mut sched = match s.norm_bound {
            Some(d) => ResetSchedule::new(s.active, s.reset, d, s.slew)?,
            None => ResetSchedule::periodic(s.active, s.reset, s.slew)?,
        };
        sched.latched = s.latched;
        let a = &self.adaptation;
        let acfg = AdaptationConfig::new(a.gamma, a.delta, a.delta1, a.adapt_gain)?;
        let icfg = IntegratorConfig::new(self.integrator.dt, self.integrator.method)?;
        let cfg = ExperimentConfig {
            model,
            sched,
            acfg,
            icfg,
            epochs: self.epochs,
            trials: self.trials,
            seed: self.seed,
            init_box: self.init_box.clone(),
            quad_hat0: self.quad_hat0.clone(),
            gain0: self.gain0.clone(),
            record_stride: self.record_stride,
            tail_epochs: self.tail_epochs,
            instrument: self.instrument,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn parse_config(text: &str, path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let doc: ConfigDoc = serde_json::from_str(text).map_err(|source| ConfigError::Parse {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(doc.resolve()?)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text, path)
}

/// SHA-256 of the resolved configuration serialized with sorted keys.
pub fn config_digest(cfg: &ExperimentConfig) -> String {
    value_digest(cfg)
}

/// SHA-256 of any serializable value, keys sorted.
pub fn value_digest<T: Serialize + ?Sized>(v: &T) -> String {
    let value = serde_json::to_value(v).expect("value serializes");
    let canonical = serde_json::to_string(&value).expect("value serializes");
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_digest: String,
    pub artifact_version: String,
    pub started: String,
    pub finished: String,
    pub outputs: Vec<PathBuf>,
}

impl RunManifest {
    pub fn new(config_digest: String, started: DateTime<Utc>) -> Self {
        Self {
            config_digest,
            artifact_version: ARTIFACT_VERSION.to_string(),
            started: started.to_rfc3339_opts(SecondsFormat::Millis, true),
            finished: String::new(),
            outputs: Vec::new(),
        }
    }

    /// Stamp the finish time and write `manifest.json` into `dir`.
    pub fn finish(mut self, dir: &Path) -> Result<Self, IoError> {
        self.finished = Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true);
        let path = dir.join("manifest.json");
        let file = create(&path)?;
        serde_json::to_writer_pretty(BufWriter::new(file), &self).map_err(|source| IoError::Json {
            path: path.clone(),
            source,
        })?;
        Ok(self)
    }
}

/// Shortest decimal that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

fn create(path: &Path) -> Result<File, IoError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|source| IoError::Io {
                path: parent.to_path_buf(),
                source,
            })?;
        }
    }
    File::create(path).map_err(|source| IoError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>, IoError> {
    Ok(csv::Writer::from_writer(create(path)?))
}

fn write_rows<I>(path: &Path, header: &[String], rows: I) -> Result<(), IoError>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv_writer(path)?;
    let wrap = |source| IoError::Csv {
        path: path.to_path_buf(),
        source,
    };
    w.write_record(header).map_err(wrap)?;
    for row in rows {
        w.write_record(&row).map_err(wrap)?;
    }
    w.flush().map_err(|source| IoError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub const TRIALS_HEADER: [&str; 7] = ["trial", "seed", "d0", "d_final", "R0", "R_final", "status"];

pub fn write_trials_csv(records: &[TrialRecord], path: &Path) -> Result<(), IoError> {
    let header: Vec<String> = TRIALS_HEADER.iter().map(|s| s.to_string()).collect();
    write_rows(
        path,
        &header,
        records.iter().map(|r| {
            vec![
                r.trial.to_string(),
                r.seed.to_string(),
                fmt_f64(r.d0),
                fmt_f64(r.d_final),
                fmt_f64(r.r0),
                fmt_f64(r.r_final),
                r.status.as_str().to_string(),
            ]
        }),
    )
}

pub fn trace_header(n: usize) -> Vec<String> {
    let mut h: Vec<String> = ["t", "e", "lambda", "d", "R"].iter().map(|s| s.to_string()).collect();
    h.extend((1..=n).map(|i| format!("alpha_hat_{i}")));
    h.extend((1..=n).map(|i| format!("K_{i}")));
    h
}

pub fn write_trace_csv(record: &TrialRecord, n: usize, path: &Path) -> Result<(), IoError> {
    write_rows(
        path,
        &trace_header(n),
        record.trace.iter().map(|s| {
            let mut row = vec![
                fmt_f64(s.t),
                fmt_f64(s.e),
                u8::from(s.lambda).to_string(),
                fmt_f64(s.d),
                fmt_f64(s.r),
            ];
            row.extend(s.alpha_hat.iter().map(|&v| fmt_f64(v)));
            row.extend(s.gain.iter().map(|&v| fmt_f64(v)));
            row
        }),
    )
}

pub fn write_histograms_csv(rows: &[HistogramRow], path: &Path) -> Result<(), IoError> {
    let header: Vec<String> = ["metric", "bin_lo", "bin_hi", "count_start", "count_end"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    write_rows(
        path,
        &header,
        rows.iter().map(|r| {
            vec![
                r.metric.clone(),
                fmt_f64(r.bin_lo),
                fmt_f64(r.bin_hi),
                r.start.to_string(),
                r.end.to_string(),
            ]
        }),
    )
}

pub fn write_example1_csv(res: &Example1Result, path: &Path) -> Result<(), IoError> {
    let header: Vec<String> = ["t", "a", "c", "J"].iter().map(|s| s.to_string()).collect();
    write_rows(
        path,
        &header,
        (0..res.t.len()).map(|k| {
            vec![
                fmt_f64(res.t[k]),
                fmt_f64(res.a[k]),
                fmt_f64(res.c[k]),
                fmt_f64(res.cost[k]),
            ]
        }),
    )
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), IoError> {
    let file = create(path)?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).map_err(|source| IoError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    w.write_all(b"\n").map_err(|source| IoError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Write `trials.csv`, one trace file per trial that has samples, and `manifest.json`.
/// `extra` lists files the caller already wrote into `dir`.
pub fn emit_results(
    records: &[TrialRecord],
    dir: &Path,
    n: usize,
    config_digest: String,
    started: DateTime<Utc>,
    extra: &[PathBuf],
) -> Result<RunManifest, IoError> {
    fs::create_dir_all(dir).map_err(|source| IoError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut manifest = RunManifest::new(config_digest, started);
    let trials = dir.join("trials.csv");
    write_trials_csv(records, &trials)?;
    manifest.outputs.push(trials);
    for r in records.iter().filter(|r| !r.trace.is_empty()) {
        let p = dir.join(format!("trial_{}_trace.csv", r.trial));
        write_trace_csv(r, n, &p)?;
        manifest.outputs.push(p);
    }
    manifest.outputs.extend(extra.iter().cloned());
    manifest.finish(dir)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_mirror_desk_experiment() {
        let cfg = parse_config("{}", Path::new("mem")).unwrap();
        let reference = example2::config(example2::Scale::Desk, 0);
        assert_eq!(cfg, reference);
        assert_eq!(cfg.icfg.dt, 1e-4);
    }

    #[test]
    fn float_format_round_trips() {
        for v in [0.1, 1e-300, 123456.789, -2.0 / 3.0, 5e20] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn unknown_field_is_rejected() {
        let err = parse_config(r#"{"epoch": 3}"#, Path::new("mem")).unwrap_err();
        assert!(matches!(err, ConfigError::Parse { .. }));
    }
}
