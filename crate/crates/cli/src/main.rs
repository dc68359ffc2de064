use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{CommandFactory, Parser, Subcommand, ValueEnum};
use logfit::dynamics::{InputChannel, MultiInputSystem};
use logfit::harness::example1::{run_example1, Example1Settings, Variant};
use logfit::harness::example2::{self, Scale};
use logfit::harness::{run_trials, TrialStatus};
use logfit::integrator::{integrate_autonomous, integrate_feedback, integrate_multiinput, IntegratorConfig, Method, Trajectory};
use logfit::io::{self, RunManifest};
use logfit::model::{logistic_to_sigmoid, sigmoid_to_logistic, LogisticEnsemble, SigmoidSum};
use logfit::{DivergenceError, SimError, ValidationError};

mod check;

#[derive(Parser, Debug)]
#[command(name = "logfit", version, about = "Adaptive recovery of sigmoid-sum parameters")]
struct Cli {
    /// JSON configuration document.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, env = "LOGFIT_OUT", default_value = ".")]
    out: PathBuf,
    /// Root seed for randomized runs.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Suppress progress and summary output.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Convert a sigmoid-sum document to a logistic ensemble or back (stdin to stdout).
    Convert {
        /// Read from this file instead of stdin.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Forward-simulate an ensemble without adaptation.
    Simulate {
        #[arg(long, value_enum, default_value_t = SimKind::Autonomous)]
        kind: SimKind,
        #[arg(long, default_value_t = 10.0)]
        t_end: f64,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        #[arg(long, value_enum, default_value_t = MethodArg::Rk4)]
        method: MethodArg,
        /// Constant input rate for the multi-input system.
        #[arg(long, default_value_t = 1.0)]
        rate: f64,
    },
    /// Run the adaptive scheme from a configuration document.
    Fit,
    /// Single-sigmoid comparison of the adaptive scheme and gradient descent.
    Example1 {
        #[arg(long, value_enum, default_value_t = VariantArg::Adaptive)]
        variant: VariantArg,
        /// Initial point `a,c`.
        #[arg(long, default_value = "-3,-3", value_parser = parse_pair, allow_hyphen_values = true)]
        init: (f64, f64),
        #[arg(long)]
        t_end: Option<f64>,
    },
    /// Ten-term experiment over many seeded trials.
    Example2 {
        #[arg(long, value_enum, default_value_t = ScaleArg::Desk)]
        scale: ScaleArg,
        #[arg(long)]
        trials: Option<u64>,
        #[arg(long)]
        epochs: Option<u64>,
        /// Steps between trace samples; 0 disables traces.
        #[arg(long, default_value_t = 0)]
        record_stride: u64,
    },
    /// Run the built-in invariant checks.
    Check,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SimKind {
    Autonomous,
    MultiInput,
    Feedback,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MethodArg {
    Euler,
    Rk4,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Euler => Method::Euler,
            MethodArg::Rk4 => Method::Rk4,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum VariantArg {
    Adaptive,
    Pattern,
    Batch,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ScaleArg {
    Full,
    Desk,
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let (a, c) = s.split_once(',').ok_or("expected `a,c`")?;
    let a: f64 = a.trim().parse().map_err(|e| format!("{e}"))?;
    let c: f64 = c.trim().parse().map_err(|e| format!("{e}"))?;
    Ok((a, c))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let _ = e.print();
            eprintln!();
            eprintln!("{}", usage_help());
            return ExitCode::from(1);
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}

/// Long help of the subcommand named on the command line, or of the top-level command.
fn usage_help() -> String {
    let mut cmd = Cli::command();
    let names: Vec<String> = cmd.get_subcommands().map(|s| s.get_name().to_string()).collect();
    let picked = std::env::args().skip(1).find(|a| names.contains(a));
    match picked.and_then(|n| cmd.find_subcommand_mut(&n).map(|s| s.render_help())) {
        Some(h) => h.to_string(),
        None => cmd.render_help().to_string(),
    }
}

/// Error chain joined by `: `, skipping causes already quoted by their parent.
fn describe(e: &anyhow::Error) -> String {
    let mut msg = e.to_string();
    for cause in e.chain().skip(1) {
        let s = cause.to_string();
        if !msg.contains(&s) {
            msg.push_str(": ");
            msg.push_str(&s);
        }
    }
    msg
}

fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.downcast_ref::<DivergenceError>().is_some() {
            return 2;
        }
        if let Some(SimError::Divergence(_)) = cause.downcast_ref::<SimError>() {
            return 2;
        }
    }
    1
}

fn run(cli: &Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::Convert { input } => convert(input.as_deref()),
        Command::Simulate {
            kind,
            t_end,
            dt,
            method,
            rate,
        } => simulate(cli, *kind, *t_end, *dt, (*method).into(), *rate),
        Command::Fit => fit(cli),
        Command::Example1 { variant, init, t_end } => example1(cli, *variant, *init, *t_end),
        Command::Example2 {
            scale,
            trials,
            epochs,
            record_stride,
        } => example2_cmd(cli, *scale, *trials, *epochs, *record_stride),
        Command::Check => check::run(cli.seed.unwrap_or(0), cli.quiet),
    }
}

#[derive(serde::Deserialize)]
#[serde(untagged)]
enum ConvertDoc {
    Sigmoid(SigmoidSum),
    Logistic(LogisticEnsemble),
}

fn convert(input: Option<&Path>) -> Result<ExitCode> {
    let text = match input {
        Some(p) => std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        None => {
            let mut s = String::new();
            std::io::stdin().read_to_string(&mut s).context("reading stdin")?;
            s
        }
    };
    let doc: ConvertDoc = serde_json::from_str(&text).map_err(|e| {
        ValidationError::new("document", format!("expected a sigmoid sum {{a,b,c}} or an ensemble {{alpha,beta,c_out,x0}}: {e}"))
    })?;
    let out = match doc {
        ConvertDoc::Sigmoid(s) => serde_json::to_string_pretty(&sigmoid_to_logistic(&s).map_err(model_err)?)?,
        ConvertDoc::Logistic(l) => serde_json::to_string_pretty(&logistic_to_sigmoid(&l).map_err(model_err)?)?,
    };
    println!("{out}");
    Ok(ExitCode::SUCCESS)
}

fn model_err(e: logfit::model::ModelError) -> ValidationError {
    ValidationError::new("model", e.to_string())
}

fn load_ensemble(cli: &Cli) -> Result<LogisticEnsemble> {
    match &cli.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            let sys: LogisticEnsemble = serde_json::from_str(&text)
                .map_err(|e| ValidationError::new("config", format!("{}: {e}", p.display())))?;
            sys.validate().map_err(model_err)?;
            Ok(sys)
        }
        None => Ok(LogisticEnsemble::new(vec![2.0 / 3.0], vec![1.0 / 3.0], vec![1.0], vec![0.1]).map_err(model_err)?),
    }
}

fn simulate(cli: &Cli, kind: SimKind, t_end: f64, dt: f64, method: Method, rate: f64) -> Result<ExitCode> {
    let started = chrono::Utc::now();
    let icfg = IntegratorConfig::new(dt, method)?;
    let sys = load_ensemble(cli)?;
    let traj = match kind {
        SimKind::Autonomous => integrate_autonomous(&sys, t_end, &icfg)?,
        SimKind::MultiInput => {
            let m = MultiInputSystem::from_ensemble(&sys, InputChannel::Constant { value: rate });
            integrate_multiinput(&m, t_end, &icfg)?
        }
        SimKind::Feedback => integrate_feedback(&sys, 0.0, t_end, &icfg)?,
    };
    std::fs::create_dir_all(&cli.out).with_context(|| format!("creating {}", cli.out.display()))?;
    let path = cli.out.join("trajectory.csv");
    write_trajectory(&traj, &path)?;
    let digest = digest_of(&(kind as u8, t_end, dt, rate, &sys));
    let mut manifest = RunManifest::new(digest, started);
    manifest.outputs.push(path);
    manifest.finish(&cli.out)?;
    if !cli.quiet {
        let y = traj.y.last().copied().unwrap_or(f64::NAN);
        println!("y({t_end}) = {y}");
    }
    Ok(ExitCode::SUCCESS)
}

fn digest_of<T: serde::Serialize>(v: &T) -> String {
    io::value_digest(v)
}

fn write_trajectory(traj: &Trajectory, path: &Path) -> Result<()> {
    let n = traj.x.first().map_or(0, Vec::len);
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("x_{i}")));
    header.push("y".into());
    if traj.z.is_some() {
        header.push("z".into());
    }
    w.write_record(&header)?;
    for k in 0..traj.t.len() {
        let mut row = vec![io::fmt_f64(traj.t[k])];
        row.extend(traj.x[k].iter().map(|&v| io::fmt_f64(v)));
        row.push(io::fmt_f64(traj.y[k]));
        if let Some(z) = &traj.z {
            row.push(io::fmt_f64(z[k]));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn fit(cli: &Cli) -> Result<ExitCode> {
    let Some(path) = &cli.config else {
        bail!(ValidationError::new("config", "`fit` requires --config"));
    };
    let mut cfg = io::load_config(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    run_experiment(cli, cfg, false)
}

fn run_experiment(cli: &Cli, cfg: logfit::harness::ExperimentConfig, histograms: bool) -> Result<ExitCode> {
    let started = chrono::Utc::now();
    if !cli.quiet {
        eprintln!("running {} trials of {} epochs", cfg.trials, cfg.epochs);
    }
    let records = run_trials(&cfg)?;
    std::fs::create_dir_all(&cli.out).with_context(|| format!("creating {}", cli.out.display()))?;
    let mut extra = Vec::new();
    if histograms {
        let p = cli.out.join("histograms.csv");
        io::write_histograms_csv(&example2::histograms(&records, 20), &p)?;
        extra.push(p);
    }
    io::emit_results(&records, &cli.out, cfg.model.len(), io::config_digest(&cfg), started, &extra)?;
    if !cli.quiet {
        let d0: Vec<f64> = records.iter().map(|r| r.d0).collect();
        let d1: Vec<f64> = records.iter().map(|r| r.d_final).collect();
        let improved = records.iter().filter(|r| r.d_final < r.d0).count();
        println!(
            "median d0 = {:.4}, median d_final = {:.4}, d decreased in {improved}/{} trials",
            logfit::harness::median(&d0),
            logfit::harness::median(&d1),
            records.len()
        );
    }
    if let Some(r) = records.iter().find(|r| r.status == TrialStatus::Diverged) {
        eprintln!("error: trial {} diverged: {}", r.trial, r.message.as_deref().unwrap_or(""));
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn example1(cli: &Cli, variant: VariantArg, init: (f64, f64), t_end: Option<f64>) -> Result<ExitCode> {
    let started = chrono::Utc::now();
    let mut settings = Example1Settings::standard();
    if let Some(t) = t_end {
        settings.t_end = t;
    }
    let variant = match variant {
        VariantArg::Adaptive => Variant::Adaptive,
        VariantArg::Pattern => Variant::Pattern,
        VariantArg::Batch => Variant::Batch,
    };
    let res = run_example1(variant, init, &settings)?;
    std::fs::create_dir_all(&cli.out).with_context(|| format!("creating {}", cli.out.display()))?;
    let csv_path = cli.out.join("example1.csv");
    io::write_example1_csv(&res, &csv_path)?;
    let summary = serde_json::json!({
        "variant": res.variant,
        "init": [init.0, init.1],
        "final_a": res.final_a,
        "final_c": res.final_c,
        "final_cost": res.final_cost,
        "singularities": res.singularities,
    });
    let summary_path = cli.out.join("example1_summary.json");
    io::write_json(&summary, &summary_path)?;
    let mut manifest = RunManifest::new(digest_of(&(&settings, variant, init)), started);
    manifest.outputs.extend([csv_path, summary_path]);
    manifest.finish(&cli.out)?;
    if !cli.quiet {
        println!(
            "a = {:.6}, c = {:.6}, J = {:.3e}, chart singularities = {}",
            res.final_a,
            res.final_c,
            res.final_cost,
            res.singularities.len()
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn example2_cmd(
    cli: &Cli,
    scale: ScaleArg,
    trials: Option<u64>,
    epochs: Option<u64>,
    record_stride: u64,
) -> Result<ExitCode> {
    let scale = match scale {
        ScaleArg::Full => Scale::Full,
        ScaleArg::Desk => Scale::Desk,
    };
    let mut cfg = example2::config(scale, cli.seed.unwrap_or(0));
    cfg.record_stride = record_stride;
    let cfg = example2::with_overrides(cfg, trials, epochs)?;
    run_experiment(cli, cfg, true)
}
