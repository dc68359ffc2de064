use logfit::baselines::{run_baseline, Flow, ScalarSigmoidTarget};
use logfit::dynamics::{InputChannel, MultiInputSystem};
use logfit::integrator::{integrate_autonomous, integrate_feedback, integrate_multiinput, IntegratorConfig};
use logfit::model::LogisticEnsemble;
use proptest::prelude::*;

fn ensemble() -> impl Strategy<Value = LogisticEnsemble> {
    (1usize..4).prop_flat_map(|n| {
        (
            prop::collection::vec(-2.0f64..2.0, n),
            prop::collection::vec(0.2f64..3.0, n),
            prop::collection::vec(0.05f64..0.95, n),
        )
            .prop_map(|(a, c, x0)| LogisticEnsemble::normalized(a, c, x0).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn constant_input_rescales_time(sys in ensemble(), rate in 0.25f64..2.0) {
        // With a constant rate r the system runs on the clock r t.
        let icfg = IntegratorConfig::rk4(1e-3).unwrap();
        let m = MultiInputSystem::from_ensemble(&sys, InputChannel::Constant { value: rate });
        let tr = integrate_multiinput(&m, 2.0, &icfg).unwrap();
        for (t, x) in tr.t.iter().zip(&tr.x).step_by(100) {
            let exact = sys.exact_state(rate * t).unwrap();
            for (a, b) in x.iter().zip(&exact) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn sine_rate_follows_the_integrated_clock(sys in ensemble(), amp in 0.0f64..1.0, omega in 0.5f64..4.0) {
        // xi' = 1 + amp sin(omega t), so xi(t) = t + amp (1 - cos(omega t)) / omega.
        let icfg = IntegratorConfig::rk4(1e-3).unwrap();
        let mut m = MultiInputSystem::from_ensemble(&sys, InputChannel::Constant { value: 1.0 });
        for row in &mut m.alpha {
            row.push(row[0]);
        }
        for row in &mut m.beta {
            row.push(row[0]);
        }
        m.inputs.push(InputChannel::Sine { amplitude: amp, omega, phase: 0.0 });
        let tr = integrate_multiinput(&m, 2.0, &icfg).unwrap();
        for (t, x) in tr.t.iter().zip(&tr.x).step_by(50) {
            let clock = t + amp * (1.0 - (omega * t).cos()) / omega;
            let exact = sys.exact_state(clock).unwrap();
            for (a, b) in x.iter().zip(&exact) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn unit_input_matches_autonomous(sys in ensemble()) {
        let icfg = IntegratorConfig::rk4(1e-2).unwrap();
        let m = MultiInputSystem::from_ensemble(&sys, InputChannel::Constant { value: 1.0 });
        let a = integrate_multiinput(&m, 3.0, &icfg).unwrap();
        let b = integrate_autonomous(&sys, 3.0, &icfg).unwrap();
        prop_assert_eq!(a.x, b.x);
    }

    #[test]
    fn feedback_integral_tracks_the_output(sys in ensemble(), z0 in -1.0f64..1.0) {
        let icfg = IntegratorConfig::rk4(1e-3).unwrap();
        let tr = integrate_feedback(&sys, z0, 1.0, &icfg).unwrap();
        let z = tr.z.as_ref().unwrap();
        prop_assert_eq!(z[0], z0);
        // z(t) - z0 against the trapezoid integral of the sampled output.
        let mut acc = z0;
        for k in 1..tr.t.len() {
            acc += 0.5 * (tr.y[k - 1] + tr.y[k]) * (tr.t[k] - tr.t[k - 1]);
            prop_assert!((z[k] - acc).abs() < 1e-5, "t = {}: {} vs {}", tr.t[k], z[k], acc);
        }
    }
}

#[test]
fn sine_input_with_zero_amplitude_freezes_the_state() {
    let sys = LogisticEnsemble::normalized(vec![1.0, -1.0], vec![1.0, 1.0], vec![0.3, 0.6]).unwrap();
    let m = MultiInputSystem::from_ensemble(
        &sys,
        InputChannel::Sine {
            amplitude: 0.0,
            omega: 3.0,
            phase: 0.1,
        },
    );
    let tr = integrate_multiinput(&m, 1.0, &IntegratorConfig::euler(1e-2).unwrap()).unwrap();
    assert!(tr.x.iter().all(|x| x == &sys.x0));
}

#[test]
fn batch_flow_never_increases_the_cost() {
    let target = ScalarSigmoidTarget::example1();
    let icfg = IntegratorConfig::euler(1e-2).unwrap();
    for init in [(-3.0, -3.0), (3.0, -3.0), (0.5, 1.0), (-1.0, 2.5)] {
        let tr = run_baseline(Flow::Batch, &target, init, 0.2, 50.0, &icfg, 10).unwrap();
        for w in tr.cost.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12), "{init:?}: {} -> {}", w[0], w[1]);
        }
    }
}

#[test]
fn pattern_flow_rests_at_the_true_parameters() {
    let target = ScalarSigmoidTarget::example1();
    let icfg = IntegratorConfig::euler(1e-3).unwrap();
    let tr = run_baseline(Flow::Pattern, &target, (2.0 / 3.0, 2.0), 0.2, 20.0, &icfg, 1000).unwrap();
    let (a, c, j) = tr.last();
    assert_eq!((a, c), (2.0 / 3.0, 2.0));
    assert_eq!(j, 0.0);
}
