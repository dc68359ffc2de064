//! Quick self-checks run by `logfit check`.

use std::process::ExitCode;

use anyhow::Result;
use logfit::baselines::{batch_cost, batch_gradient, ScalarSigmoidTarget, QUAD_N};
use logfit::harness::example2::{self, Scale};
use logfit::harness::rng::Xoshiro256StarStar;
use logfit::harness::run_trials;
use logfit::integrator::{integrate_autonomous, IntegratorConfig};
use logfit::model::{logistic_to_sigmoid, sigmoid_to_logistic, LogisticEnsemble, SigmoidSum};

struct Outcome {
    name: &'static str,
    ok: bool,
    detail: String,
}

pub fn run(seed: u64, quiet: bool) -> Result<ExitCode> {
    let outcomes = [
        conversion(seed)?,
        gradient(seed),
        integrator_order()?,
        instrumented(seed)?,
    ];
    let mut failed = 0;
    for o in &outcomes {
        if !o.ok {
            failed += 1;
        }
        if !quiet || !o.ok {
            println!("{} {}: {}", if o.ok { "PASS" } else { "FAIL" }, o.name, o.detail);
        }
    }
    Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

/// Random sigmoid sums survive the round trip and the ensemble output matches them.
fn conversion(seed: u64) -> Result<Outcome> {
    let mut rng = Xoshiro256StarStar::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let n = 1 + (rng.next_u64() % 4) as usize;
        let a: Vec<f64> = (0..n).map(|_| rng.uniform(0.1, 3.0)).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.uniform(-5.0, 5.0)).collect();
        let c: Vec<f64> = (0..n).map(|_| rng.uniform(0.5, 4.0) * if rng.next_f64() < 0.5 { -1.0 } else { 1.0 }).collect();
        let s = SigmoidSum::new(a, b, c)?;
        let sys: LogisticEnsemble = sigmoid_to_logistic(&s)?;
        let back = logistic_to_sigmoid(&sys)?;
        for k in 0..=20 {
            let t = k as f64 * 0.5;
            let y = sys.output(&sys.exact_state(t)?);
            worst = worst.max((y - s.eval(t)).abs()).max((back.eval(t) - s.eval(t)).abs());
        }
    }
    Ok(Outcome {
        name: "conversion",
        ok: worst <= 1e-10,
        detail: format!("max output mismatch {worst:.2e}"),
    })
}

/// Analytic batch gradient against a five-point stencil.
fn gradient(seed: u64) -> Outcome {
    let target = ScalarSigmoidTarget::example1();
    let mut rng = Xoshiro256StarStar::seed_from_u64(seed ^ 0x9e37_79b9);
    let h = 1e-3;
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let (a, c) = (rng.uniform(-3.0, 3.0), rng.uniform(-3.0, 3.0));
        let j = |a: f64, c: f64| batch_cost(a, c, &target, QUAD_N);
        let fd = |f: &dyn Fn(f64) -> f64| (8.0 * (f(h) - f(-h)) - (f(2.0 * h) - f(-2.0 * h))) / (12.0 * h);
        let ga = fd(&|d| j(a + d, c));
        let gc = fd(&|d| j(a, c + d));
        let (da, dc) = batch_gradient(a, c, &target, QUAD_N);
        let rel = |x: f64, y: f64| (x - y).abs() / y.abs().max(1e-3);
        worst = worst.max(rel(da, ga)).max(rel(dc, gc));
    }
    Outcome {
        name: "gradient",
        ok: worst <= 1e-5,
        detail: format!("max relative error {worst:.2e}"),
    }
}

/// RK4 error on a two-term ensemble shrinks at fourth order.
fn integrator_order() -> Result<Outcome> {
    let sys = LogisticEnsemble::normalized(vec![3.0, 1.5], vec![1.0, -2.0], vec![0.05, 0.3])?;
    let err = |dt: f64| -> Result<f64> {
        let tr = integrate_autonomous(&sys, 2.0, &IntegratorConfig::rk4(dt)?)?;
        let exact = sys.exact_state(2.0)?;
        let last = tr.x.last().expect("non-empty");
        Ok(last.iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
    };
    let (e1, e2) = (err(0.04)?, err(0.02)?);
    let slope = (e1 / e2).log2();
    Ok(Outcome {
        name: "rk4-order",
        ok: (3.7..=4.3).contains(&slope),
        detail: format!("observed order {slope:.2}"),
    })
}

/// Short instrumented ten-term run; every per-step invariant must hold.
fn instrumented(seed: u64) -> Result<Outcome> {
    let mut cfg = example2::config(Scale::Desk, seed);
    cfg.instrument = true;
    let cfg = example2::with_overrides(cfg, Some(2), Some(10))?;
    let records = run_trials(&cfg)?;
    let v: u64 = records.iter().map(|r| r.violations.total()).sum();
    Ok(Outcome {
        name: "invariants",
        ok: v == 0,
        detail: format!("{v} violations over {} trials", records.len()),
    })
}
