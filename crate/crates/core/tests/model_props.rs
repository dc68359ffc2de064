use logfit::model::{
    logistic_to_sigmoid, logit, scale_coordinates, sigmoid, sigmoid_prime, sigmoid_to_logistic, LogisticEnsemble,
    Normalization, SigmoidSum,
};
use proptest::prelude::*;

fn nonzero(lo: f64, hi: f64) -> impl Strategy<Value = f64> {
    (lo..hi, any::<bool>()).prop_map(|(m, neg)| if neg { -m } else { m })
}

fn sigmoid_sum() -> impl Strategy<Value = SigmoidSum> {
    (1usize..6).prop_flat_map(|n| {
        (
            prop::collection::vec(nonzero(0.05, 4.0), n),
            prop::collection::vec(-8.0f64..8.0, n),
            prop::collection::vec(nonzero(0.1, 5.0), n),
        )
            .prop_map(|(a, b, c)| SigmoidSum::new(a, b, c).unwrap())
    })
}

proptest! {
    #[test]
    fn round_trip_recovers_parameters(s in sigmoid_sum()) {
        let back = logistic_to_sigmoid(&sigmoid_to_logistic(&s).unwrap()).unwrap();
        for i in 0..s.len() {
            prop_assert_eq!(back.a[i], s.a[i]);
            prop_assert!((back.b[i] - s.b[i]).abs() <= 1e-12 * (1.0 + s.b[i].abs()));
            prop_assert!((back.c[i] - s.c[i]).abs() <= 1e-14 * s.c[i].abs());
        }
    }

    #[test]
    fn ensemble_closed_form_reproduces_sum(s in sigmoid_sum(), t in 0.0f64..20.0) {
        let sys = sigmoid_to_logistic(&s).unwrap();
        let y = sys.output(&sys.exact_state(t).unwrap());
        let scale: f64 = s.c.iter().map(|c| c.abs()).sum();
        prop_assert!((y - s.eval(t)).abs() <= 1e-12 * scale);
    }

    #[test]
    fn coordinate_scaling_preserves_output(
        s in sigmoid_sum(),
        k in prop::collection::vec(nonzero(0.2, 5.0), 6),
        t in 0.0f64..10.0,
    ) {
        let base = sigmoid_to_logistic(&s).unwrap();
        let n = base.len();
        // x'_i = x_i / k_i: beta scales by k, x0 by 1/k, output weight by k.
        let beta: Vec<f64> = (0..n).map(|i| k[i]).collect();
        let x0: Vec<f64> = (0..n).map(|i| base.x0[i] / k[i]).collect();
        let c: Vec<f64> = (0..n).map(|i| base.c_out[i] * k[i]).collect();
        let scaled = LogisticEnsemble::new(base.alpha.clone(), beta, c, x0).unwrap();
        let y0 = base.output(&base.exact_state(t).unwrap());
        let y1 = scaled.output(&scaled.exact_state(t).unwrap());
        let scale: f64 = s.c.iter().map(|c| c.abs()).sum();
        prop_assert!((y0 - y1).abs() <= 1e-12 * scale);

        for mode in [Normalization::Beta, Normalization::Output] {
            let norm = scale_coordinates(&scaled, mode).unwrap();
            let y2 = norm.output(&norm.exact_state(t).unwrap());
            prop_assert!((y2 - y1).abs() <= 1e-12 * scale);
        }
        prop_assert!(scale_coordinates(&scaled, Normalization::Beta).unwrap().is_normalized());
    }

    #[test]
    fn normalized_solution_is_monotone_with_the_right_limit(
        a in nonzero(0.1, 5.0),
        x0 in 0.001f64..0.999,
    ) {
        let sys = LogisticEnsemble::normalized(vec![a], vec![1.0], vec![x0]).unwrap();
        let mut prev = x0;
        for k in 1..=200 {
            let x = sys.exact_state(k as f64 * 0.25).unwrap()[0];
            prop_assert!((0.0..=1.0).contains(&x));
            let monotone = if a > 0.0 { x >= prev } else { x <= prev };
            prop_assert!(monotone);
            prev = x;
        }
        let far = sys.exact_state(1e4 / a.abs()).unwrap()[0];
        prop_assert_eq!(far, if a > 0.0 { 1.0 } else { 0.0 });
    }

    #[test]
    fn logit_is_the_inverse(z in -30.0f64..30.0) {
        let back = logit(sigmoid(z)).unwrap();
        // Near p = 1 the spacing of f64 limits 1 - p, so the error grows like eps e^|z|.
        prop_assert!((back - z).abs() <= 8.0 * f64::EPSILON * (1.0 + z.abs().exp()));
    }

    #[test]
    fn sigmoid_prime_matches_the_product_form(z in -700.0f64..700.0) {
        // exp(-|z|) / (1 + exp(-|z|))^2, written with the branch on the other side.
        let e = (-z.abs()).exp();
        let direct = if z >= 0.0 { e / ((1.0 + e) * (1.0 + e)) } else { 1.0 / ((1.0 + e) * (1.0 + 1.0 / e)) };
        prop_assert!((sigmoid_prime(z) - direct).abs() <= 1e-15 * direct.max(1e-300));
        prop_assert_eq!(sigmoid_prime(z), sigmoid_prime(-z));
    }
}

#[test]
fn out_of_funnel_inputs_are_rejected() {
    let at_edge = LogisticEnsemble::new(vec![1.0], vec![1.0], vec![1.0], vec![1.0]).unwrap();
    assert!(logistic_to_sigmoid(&at_edge).is_err());
    let no_saturation = LogisticEnsemble::new(vec![1.0], vec![0.0], vec![1.0], vec![0.5]).unwrap();
    assert!(logistic_to_sigmoid(&no_saturation).is_err());
    let saturated = SigmoidSum::new(vec![1.0], vec![40.0], vec![1.0]).unwrap();
    assert!(sigmoid_to_logistic(&saturated).is_err());
    let zero_weight = SigmoidSum::new(vec![1.0], vec![0.0], vec![0.0]).unwrap();
    assert!(sigmoid_to_logistic(&zero_weight).is_err());
}

#[test]
fn single_sigmoid_example_converts() {
    let s = SigmoidSum::new(vec![2.0 / 3.0], vec![-2.944], vec![2.0]).unwrap();
    let sys = sigmoid_to_logistic(&s).unwrap();
    assert_eq!(sys.alpha, vec![2.0 / 3.0]);
    assert_eq!(sys.beta, vec![1.0]);
    assert_eq!(sys.c_out, vec![2.0]);
    assert!((sys.x0[0] - 1.0 / (1.0 + 2.944f64.exp())).abs() < 1e-17);
}
