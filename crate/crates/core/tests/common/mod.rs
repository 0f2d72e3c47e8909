#![allow(dead_code)]

use battpool_core::chain::{drift, UserModel};
use proptest::prelude::*;

pub fn model(p: Vec<Vec<f64>>, r: Vec<f64>) -> UserModel {
    let labels = (0..r.len()).map(|i| format!("s{i}")).collect();
    UserModel::new(labels, p, r).expect("valid model")
}

pub fn e2() -> UserModel {
    model(vec![vec![0.4, 0.6], vec![0.4, 0.6]], vec![-1.0, 1.0])
}

pub fn scaled(m: &UserModel, c: i64) -> UserModel {
    let mut raw = m.to_raw();
    raw.net_gen.iter_mut().for_each(|r| *r *= c as f64);
    UserModel::from_raw(raw).expect("scaling keeps validity")
}

fn normalise(raw: Vec<f64>) -> Vec<f64> {
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

/// Dense chains with 2..=max_states states, integer rewards in
/// [-max_r, max_r], at least one deficit state and drift ≥ 0.05.
pub fn arb_model(max_states: usize, max_r: i64) -> impl Strategy<Value = UserModel> {
    (2..=max_states)
        .prop_flat_map(move |n| {
            (
                proptest::collection::vec(proptest::collection::vec(0.02f64..1.0, n), n),
                proptest::collection::vec(-max_r..=max_r, n),
            )
        })
        .prop_map(|(rows, rewards)| {
            let rows: Vec<Vec<f64>> = rows.into_iter().map(normalise).collect();
            (rows, rewards)
        })
        .prop_filter_map(
            "needs a deficit state and drift ≥ 0.05",
            |(rows, rewards)| {
                if !rewards.iter().any(|&r| r < 0) {
                    return None;
                }
                let m = model(rows, rewards.into_iter().map(|r| r as f64).collect());
                (drift(&m) >= 0.05).then_some(m)
            },
        )
}

/// Same as [`arb_model`] with every reward non-zero.
pub fn arb_model_nonzero(max_states: usize, max_r: i64) -> impl Strategy<Value = UserModel> {
    arb_model(max_states, max_r)
        .prop_filter("no zero rewards", |m| m.net_gen().iter().all(|&r| r != 0))
}
