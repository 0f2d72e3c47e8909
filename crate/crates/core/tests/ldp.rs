mod common;

use battpool_core::battery::sample_rewards;
use battpool_core::chain::drift;
use battpool_core::ldp::{decay_rate, scaled_cgf, Cgf, CgfCurve};
use common::{arb_model, e2, model, scaled};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn cgf_vanishes_at_zero_with_slope_minus_drift(m in arb_model(5, 3)) {
        let cgf = Cgf::new(&m);
        prop_assert!(cgf.eval(0.0).unwrap().abs() <= 1e-12);
        let h = 1e-6;
        let fd = (cgf.eval(h).unwrap() - cgf.eval(-h).unwrap()) / (2.0 * h);
        let delta = drift(&m);
        prop_assert!((fd + delta).abs() <= 1e-4 * delta.abs(), "fd {} vs -Δ {}", fd, -delta);
    }

    #[test]
    fn sampled_curves_are_midpoint_convex(m in arb_model(5, 3)) {
        let thetas: Vec<f64> = (0..=16).map(|k| 0.125 * k as f64).collect();
        prop_assert!(CgfCurve::sample(&m, &thetas).unwrap().is_midpoint_convex(1e-9));
    }

    #[test]
    fn decay_rate_brackets_the_root(m in arb_model(5, 3)) {
        let d = decay_rate(&m).unwrap();
        prop_assert!(d.lambda > 0.0 && d.lambda.is_finite());
        let cgf = Cgf::new(&m);
        prop_assert!(cgf.eval(d.lambda * (1.0 - 1e-6)).unwrap() < 0.0);
        prop_assert!(cgf.eval(d.lambda * (1.0 + 1e-6)).unwrap() > 0.0);
    }

    #[test]
    fn scaling_rewards_divides_the_rate(m in arb_model(4, 2), c in 2i64..=4) {
        let base = decay_rate(&m).unwrap().lambda;
        let big = decay_rate(&scaled(&m, c)).unwrap().lambda;
        prop_assert!((big * c as f64 - base).abs() <= 1e-9, "{} vs {}", big * c as f64, base);
    }
}

/// `(1/k) log` of the block-average of `exp(θ U_k)` over a long path, with
/// `U_k` the negated reward sum over a block of `k` steps.
fn empirical_cgf(rewards: &[i64], k: usize, theta: f64) -> f64 {
    let blocks: Vec<f64> = rewards
        .chunks_exact(k)
        .map(|b| (-theta * b.iter().sum::<i64>() as f64).exp())
        .collect();
    (blocks.iter().sum::<f64>() / blocks.len() as f64).ln() / k as f64
}

/// Log growth of `π (P D_θ)^k 1`, renormalised each step so it never
/// overflows. Converges geometrically to the scaled CGF.
fn transfer_growth(p: &[Vec<f64>], r: &[f64], theta: f64, steps: usize) -> f64 {
    let n = r.len();
    let mut v = vec![1.0 / n as f64; n];
    let mut growth = 0.0;
    for _ in 0..steps {
        let mut next = vec![0.0; n];
        for (i, vi) in v.iter().enumerate() {
            for j in 0..n {
                next[j] += vi * p[i][j] * (-theta * r[j]).exp();
            }
        }
        let total: f64 = next.iter().sum();
        growth = total.ln();
        v = next.into_iter().map(|x| x / total).collect();
    }
    growth
}

fn sticky() -> (Vec<Vec<f64>>, Vec<f64>) {
    (
        vec![
            vec![0.7, 0.2, 0.1],
            vec![0.15, 0.7, 0.15],
            vec![0.1, 0.2, 0.7],
        ],
        vec![-2.0, 1.0, 2.0],
    )
}

#[test]
fn spectral_cgf_matches_transfer_growth() {
    let (p, r) = sticky();
    let m = model(p.clone(), r.clone());
    for theta in [-0.4, 0.05, 0.15, 0.6, 2.0] {
        let expected = transfer_growth(&p, &r, theta, 2000);
        let got = scaled_cgf(&m, theta).unwrap();
        assert!(
            (got - expected).abs() <= 1e-10,
            "θ={theta}: {got} vs {expected}"
        );
    }
}

#[test]
fn spectral_cgf_matches_empirical_log_mgf() {
    let (p, r) = sticky();
    for (m, seed) in [(e2(), 31), (model(p, r), 32)] {
        let rewards = sample_rewards(&m, 1_000_000, seed);
        let spectral = scaled_cgf(&m, 0.05).unwrap();
        let empirical = empirical_cgf(&rewards, 50, 0.05);
        assert!(
            (spectral - empirical).abs() <= 1e-2,
            "spectral {spectral} vs empirical {empirical}"
        );
    }
}

#[test]
fn e2_squared_cgf_at_one() {
    let joint =
        battpool_core::chain::product_chain(&[e2(), e2()], battpool_core::DEFAULT_STATE_CAP)
            .unwrap();
    let expected = 2.0 * (0.4 * 1f64.exp() + 0.6 * (-1f64).exp()).ln();
    approx::assert_abs_diff_eq!(
        scaled_cgf(joint.model(), 1.0).unwrap(),
        expected,
        epsilon = 1e-12
    );
}
