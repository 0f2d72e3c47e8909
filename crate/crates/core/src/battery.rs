//! Greedy battery dynamics `b(k+1) = [b(k) + r(X(k))]` clamped to `[0, B]`,
//! with exact and simulated loss-of-load probabilities.
//!
//! A loss of load happens at step `k` when `b(k) + r(X(k)) < 0`; a net
//! generation of exactly zero on an empty battery is not a loss.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::chain::UserModel;
use crate::linalg::gth_banded;
use crate::trace::TraceSeries;
use crate::{Error, Result};

/// Residual `‖πQ − π‖∞` accepted from the exact battery solve.
pub const EXACT_RESIDUAL_TOL: f64 = 1e-10;

/// Number of batches used for Monte Carlo confidence intervals.
pub const BATCHES: usize = 100;

/// Normal quantile for the reported 95% half-width.
const Z_95: f64 = 1.959_963_984_540_054;

/// One clamped battery update.
///
/// # Panics
///
/// If `b` lies outside `[0, capacity]`.
pub fn step(b: i64, r: i64, capacity: i64) -> i64 {
    assert!(
        (0..=capacity).contains(&b),
        "occupancy {b} outside [0, {capacity}]"
    );
    (b + r).clamp(0, capacity)
}

/// Real-valued clamp used by trace simulation.
pub fn step_real(b: f64, r: f64, capacity: f64) -> f64 {
    (b + r).clamp(0.0, capacity)
}

/// Stationary law of `(b, X)` over its recurrent class.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct BatteryDist {
    pub capacity: u64,
    pub num_states: usize,
    /// `P[b, s]` at index `b * num_states + s`; zero off the recurrent class.
    probs: Vec<f64>,
    /// Size of the recurrent class.
    pub support: usize,
    pub lolp: f64,
    pub empty_prob: f64,
    pub full_prob: f64,
    /// `‖πQ − π‖∞` of the solve.
    pub residual: f64,
}

impl BatteryDist {
    pub fn prob(&self, b: u64, s: usize) -> f64 {
        self.probs[b as usize * self.num_states + s]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// `P[b = level]` for every level.
    pub fn occupancy(&self) -> Vec<f64> {
        self.probs
            .chunks_exact(self.num_states)
            .map(|c| c.iter().sum())
            .collect()
    }

    /// The bracket `(p / |S₋|) · P[b = 0] ≤ LOLP ≤ P[b = 0]`, with
    /// `S₋ = {s : r(s) < 0}` and `p = min over S₋ of P(s, s)`.
    ///
    /// The lower half is not a theorem once some state has zero reward: the
    /// battery can then sit empty in that state without losing load, and
    /// `holds` comes back false. The upper half always holds.
    pub fn empty_bound(&self, model: &UserModel) -> EmptyBound {
        let deficits: Vec<usize> = model.deficit_states().collect();
        let p = deficits
            .iter()
            .map(|&s| model.transition().get(s, s))
            .fold(f64::INFINITY, f64::min);
        let lower = p / deficits.len() as f64 * self.empty_prob;
        // Slack for rounding in the summed probabilities.
        let slack = 1e-12 * self.empty_prob.max(f64::MIN_POSITIVE);
        EmptyBound {
            self_loop: p,
            deficit_states: deficits.len(),
            lower,
            upper: self.empty_prob,
            lolp: self.lolp,
            holds: lower <= self.lolp + slack && self.lolp <= self.empty_prob + slack,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct EmptyBound {
    pub self_loop: f64,
    pub deficit_states: usize,
    pub lower: f64,
    pub upper: f64,
    pub lolp: f64,
    pub holds: bool,
}

/// Exact stationary LOLP for integer capacity `capacity`.
///
/// The `(b, s)` chain is restricted to the recurrent class, found as the
/// closure of `(0, s₋)` for a deficit state `s₋` with a self-loop (every
/// state reaches it by moving to `s₋` and draining). Ordered by `(b, s)` the
/// chain is banded, and the stationary law comes from banded GTH reduction.
pub fn exact_stationary(model: &UserModel, capacity: u64, cap: usize) -> Result<BatteryDist> {
    let n = model.len();
    let levels = capacity
        .checked_add(1)
        .and_then(|l| usize::try_from(l).ok())
        .ok_or(Error::Capacity {
            what: "battery levels",
            requested: usize::MAX,
            cap,
        })?;
    let total = levels
        .checked_mul(n)
        .filter(|&t| t <= cap)
        .ok_or(Error::Capacity {
            what: "battery unknowns",
            requested: levels.saturating_mul(n),
            cap,
        })?;
    let r = model.net_gen();
    let p = model.transition();
    let anchor = model
        .deficit_states()
        .find(|&s| p.get(s, s) > 0.0)
        .ok_or_else(|| {
            Error::Domain("exact LOLP needs a deficit state with a positive self-loop".into())
        })?;

    let cap_i = capacity as i64;
    let next_level = |b: usize, s: usize| (b as i64 + r[s]).clamp(0, cap_i) as usize;

    // Closure of (0, anchor).
    let mut reachable = vec![false; total];
    let mut stack = vec![anchor];
    reachable[anchor] = true;
    while let Some(x) = stack.pop() {
        let (b, s) = (x / n, x % n);
        let nb = next_level(b, s);
        for (s2, _) in p.row(s) {
            let y = nb * n + s2;
            if !reachable[y] {
                reachable[y] = true;
                stack.push(y);
            }
        }
    }

    let mut compact = vec![usize::MAX; total];
    let mut members = Vec::new();
    for (x, &seen) in reachable.iter().enumerate() {
        if seen {
            compact[x] = members.len();
            members.push(x);
        }
    }
    drop(reachable);
    let m = members.len();

    let mut w = 0usize;
    for (i, &x) in members.iter().enumerate() {
        let (b, s) = (x / n, x % n);
        let nb = next_level(b, s);
        for (s2, _) in p.row(s) {
            w = w.max(compact[nb * n + s2].abs_diff(i));
        }
    }
    let width = 2 * w + 1;
    let mut band = vec![0.0; m * width];
    for (i, &x) in members.iter().enumerate() {
        let (b, s) = (x / n, x % n);
        let nb = next_level(b, s);
        for (s2, v) in p.row(s) {
            let j = compact[nb * n + s2];
            band[i * width + (j + w - i)] += v;
        }
    }
    let pi = if m == 1 {
        vec![1.0]
    } else {
        gth_banded(&mut band, m, w).ok_or(Error::Numerical {
            what: "battery stationary solve",
            residual: f64::INFINITY,
        })?
    };

    // Residual of πQ = π on the recurrent class.
    let mut flow = vec![0.0; m];
    for (i, &x) in members.iter().enumerate() {
        let (b, s) = (x / n, x % n);
        let nb = next_level(b, s);
        for (s2, v) in p.row(s) {
            flow[compact[nb * n + s2]] += pi[i] * v;
        }
    }
    let residual = flow
        .iter()
        .zip(&pi)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    if !(residual <= EXACT_RESIDUAL_TOL) {
        return Err(Error::Numerical {
            what: "battery stationary solve",
            residual,
        });
    }

    let mut probs = vec![0.0; total];
    let (mut lolp, mut empty, mut full) = (0.0, 0.0, 0.0);
    for (&x, &q) in members.iter().zip(&pi) {
        probs[x] = q;
        let (b, s) = (x / n, x % n);
        if (b as i64) + r[s] < 0 {
            lolp += q;
        }
        if b == 0 {
            empty += q;
        }
        if b == levels - 1 {
            full += q;
        }
    }
    Ok(BatteryDist {
        capacity,
        num_states: n,
        probs,
        support: m,
        lolp,
        empty_prob: empty,
        full_prob: full,
        residual,
    })
}

/// The system with generation and demand swapped: rewards negated, same
/// background chain. Under a common sample path its occupancy is `B − b`.
pub fn reverse_system(model: &UserModel) -> UserModel {
    model.with_net_gen(model.net_gen().iter().map(|r| -r).collect())
}

/// Inverse-CDF sampler for the rows of a transition matrix.
#[derive(Debug, Clone)]
struct RowSampler {
    offsets: Vec<usize>,
    targets: Vec<usize>,
    cumulative: Vec<f64>,
    initial: Vec<f64>,
}

impl RowSampler {
    fn new(model: &UserModel) -> Self {
        let p = model.transition();
        let mut offsets = vec![0];
        let mut targets = Vec::with_capacity(p.nnz());
        let mut cumulative = Vec::with_capacity(p.nnz());
        for s in 0..p.dim() {
            let mut acc = 0.0;
            for (j, v) in p.row(s) {
                acc += v;
                targets.push(j);
                cumulative.push(acc);
            }
            offsets.push(targets.len());
        }
        let mut acc = 0.0;
        let initial = model
            .stationary()
            .as_slice()
            .iter()
            .map(|v| {
                acc += v;
                acc
            })
            .collect();
        RowSampler {
            offsets,
            targets,
            cumulative,
            initial,
        }
    }

    fn draw(cumulative: &[f64], u: f64) -> usize {
        let total = *cumulative.last().unwrap();
        cumulative
            .partition_point(|&c| c <= u * total)
            .min(cumulative.len() - 1)
    }

    fn initial<R: Rng>(&self, rng: &mut R) -> usize {
        Self::draw(&self.initial, rng.random::<f64>())
    }

    fn next<R: Rng>(&self, s: usize, rng: &mut R) -> usize {
        let span = self.offsets[s]..self.offsets[s + 1];
        let k = Self::draw(&self.cumulative[span.clone()], rng.random::<f64>());
        self.targets[span.start + k]
    }
}

/// Background path of a chain, started from `π`.
///
/// Randomness comes from ChaCha8 seeded with `seed_from_u64`, so paths are
/// identical across runs and platforms for a given seed.
#[derive(Debug, Clone)]
pub struct ChainPath {
    sampler: RowSampler,
    rng: ChaCha8Rng,
    state: Option<usize>,
}

impl ChainPath {
    pub fn new(model: &UserModel, seed: u64) -> Self {
        ChainPath {
            sampler: RowSampler::new(model),
            rng: ChaCha8Rng::seed_from_u64(seed),
            state: None,
        }
    }
}

impl Iterator for ChainPath {
    type Item = usize;

    fn next(&mut self) -> Option<usize> {
        let s = match self.state {
            None => self.sampler.initial(&mut self.rng),
            Some(s) => self.sampler.next(s, &mut self.rng),
        };
        self.state = Some(s);
        Some(s)
    }
}

/// `steps` consecutive rewards of a stationary path.
pub fn sample_rewards(model: &UserModel, steps: usize, seed: u64) -> Vec<i64> {
    let r = model.net_gen();
    ChainPath::new(model, seed)
        .take(steps)
        .map(|s| r[s])
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct SimStats {
    pub steps: u64,
    pub burn_in: u64,
    pub seed: u64,
    pub loss_events: u64,
    pub empty_events: u64,
    pub lolp_estimate: f64,
    /// Batch-means standard error of the LOLP estimate.
    pub std_error: f64,
    /// 95% half-width, `1.96 × std_error`.
    pub ci_half_width: f64,
    pub batches: usize,
}

/// Monte Carlo LOLP: empty battery at time 0, background state drawn from
/// `π`, the first `burn_in` steps discarded.
pub fn simulate_chain(
    model: &UserModel,
    capacity: u64,
    steps: u64,
    burn_in: u64,
    seed: u64,
) -> Result<SimStats> {
    if steps <= burn_in {
        return Err(Error::Domain(format!(
            "no samples after burn-in ({steps} steps, {burn_in} burn-in)"
        )));
    }
    let kept = steps - burn_in;
    if kept < 2 {
        return Err(Error::Domain(
            "need at least two samples after burn-in".into(),
        ));
    }
    let batches = BATCHES.min(kept as usize);
    let r = model.net_gen();
    let cap = capacity as i64;
    let mut path = ChainPath::new(model, seed);

    let mut b = 0i64;
    for _ in 0..burn_in {
        let s = path.next().unwrap();
        b = (b + r[s]).clamp(0, cap);
    }
    let mut batch_losses = vec![0u64; batches];
    let mut empty_events = 0u64;
    for (k, slot) in batch_losses.iter_mut().enumerate() {
        let lo = kept * k as u64 / batches as u64;
        let hi = kept * (k as u64 + 1) / batches as u64;
        for _ in lo..hi {
            let s = path.next().unwrap();
            let z = b + r[s];
            if z < 0 {
                *slot += 1;
            }
            if b == 0 {
                empty_events += 1;
            }
            b = z.clamp(0, cap);
        }
    }

    let loss_events: u64 = batch_losses.iter().sum();
    let estimate = loss_events as f64 / kept as f64;
    let means: Vec<f64> = batch_losses
        .iter()
        .enumerate()
        .map(|(k, &l)| {
            let size = kept * (k as u64 + 1) / batches as u64 - kept * k as u64 / batches as u64;
            l as f64 / size as f64
        })
        .collect();
    let mean_of_means = means.iter().sum::<f64>() / batches as f64;
    let var = means
        .iter()
        .map(|m| (m - mean_of_means) * (m - mean_of_means))
        .sum::<f64>()
        / (batches - 1) as f64;
    let std_error = libm::sqrt(var / batches as f64);
    Ok(SimStats {
        steps,
        burn_in,
        seed,
        loss_events,
        empty_events,
        lolp_estimate: estimate,
        std_error,
        ci_half_width: Z_95 * std_error,
        batches,
    })
}

/// Fraction of steps with `b(k) + net(k) < 0` for a real-valued energy
/// series, starting at occupancy `b0`.
pub fn trace_lolp(net: &[f64], capacity: f64, b0: f64) -> f64 {
    let mut b = b0;
    let mut losses = 0usize;
    for &x in net {
        let z = b + x;
        if z < 0.0 {
            losses += 1;
        }
        b = z.clamp(0.0, capacity);
    }
    losses as f64 / net.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRun {
    pub lolp: f64,
    pub loss_events: usize,
    /// `b(0), …, b(n)`: one sample longer than the input.
    pub occupancy: TraceSeries,
    /// Loss flag per input step.
    pub losses: Vec<bool>,
}

/// Drives a battery with a net-generation trace. Power traces are converted
/// to energy per step first, so capacity and `b0` are in the energy unit of
/// the trace (MJ for power inputs).
pub fn simulate_trace(net: &TraceSeries, capacity: f64, b0: f64) -> Result<TraceRun> {
    if net.is_empty() {
        return Err(Error::Domain("empty trace".into()));
    }
    if !(capacity >= 0.0) || !capacity.is_finite() {
        return Err(Error::Domain(format!(
            "capacity {capacity} must be finite and ≥ 0"
        )));
    }
    if !(0.0..=capacity).contains(&b0) {
        return Err(Error::Domain(format!(
            "initial occupancy {b0} outside [0, {capacity}]"
        )));
    }
    let energy = net.to_energy();
    let mut b = b0;
    let mut path = Vec::with_capacity(energy.len() + 1);
    let mut losses = Vec::with_capacity(energy.len());
    path.push(b);
    for &x in energy.values() {
        let z = b + x;
        losses.push(z < 0.0);
        b = z.clamp(0.0, capacity);
        path.push(b);
    }
    let loss_events = losses.iter().filter(|&&l| l).count();
    let occupancy = TraceSeries::new(
        energy.location(),
        energy.start(),
        energy.cadence_secs(),
        path,
        energy.unit(),
    )?;
    Ok(TraceRun {
        lolp: loss_events as f64 / energy.len() as f64,
        loss_events,
        occupancy,
        losses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{product_chain, RawChain};
    use alloc::string::ToString;

    fn chain(p: Vec<Vec<f64>>, r: Vec<f64>) -> UserModel {
        UserModel::new((0..r.len()).map(|i| i.to_string()).collect(), p, r).unwrap()
    }

    fn e2() -> UserModel {
        chain(vec![vec![0.4, 0.6], vec![0.4, 0.6]], vec![-1.0, 1.0])
    }

    /// Reflecting ±1 walk: detailed balance on levels gives the exact LOLP
    /// `0.4 · π(0)` with `π(b) ∝ 1.5^b`.
    fn e2_lolp_closed_form(capacity: u64) -> f64 {
        let z: f64 = (0..=capacity).map(|b| 1.5f64.powi(b as i32)).sum();
        0.4 / z
    }

    #[test]
    fn step_examples() {
        assert_eq!(step(5, -10, 20), 0);
        assert_eq!(step(15, 10, 20), 20);
        assert_eq!(step(7, 3, 20), 10);
    }

    #[test]
    #[should_panic]
    fn step_out_of_range_is_contract_violation() {
        step(21, 0, 20);
    }

    #[test]
    fn e2_zero_capacity() {
        let d = exact_stationary(&e2(), 0, 1000).unwrap();
        assert!((d.lolp - 0.4).abs() < 1e-15);
        assert!((d.empty_prob - 1.0).abs() < 1e-15);
    }

    #[test]
    fn e2_matches_birth_death_formula() {
        for cap in [1u64, 2, 5, 17, 60] {
            let d = exact_stationary(&e2(), cap, 10_000).unwrap();
            let expected = e2_lolp_closed_form(cap);
            assert!(((d.lolp - expected) / expected).abs() < 1e-12, "B={cap}");
            assert!((d.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn capacity_cap_enforced() {
        assert!(matches!(
            exact_stationary(&e2(), 100, 50),
            Err(Error::Capacity { .. })
        ));
    }

    #[test]
    fn transient_states_get_no_mass() {
        // With r = (−1, +2) and B = 3 every level is recurrent; with
        // r = (−2, +2) from empty only even levels are.
        let m = chain(vec![vec![0.5, 0.5], vec![0.5, 0.5]], vec![-2.0, 2.0]);
        let d = exact_stationary(&m, 4, 1000).unwrap();
        for b in [1u64, 3] {
            assert_eq!(d.prob(b, 0) + d.prob(b, 1), 0.0);
        }
        assert!(d.support < 10);
    }

    #[test]
    fn reverse_system_negates() {
        let rev = reverse_system(&e2());
        assert_eq!(rev.net_gen(), &[1, -1]);
        assert!((crate::chain::drift(&rev) + 0.2).abs() < 1e-14);
        assert_eq!(reverse_system(&rev), e2());
    }

    #[test]
    fn reversal_identity_e2() {
        let d = exact_stationary(&e2(), 5, 1000).unwrap();
        let r = exact_stationary(&reverse_system(&e2()), 5, 1000).unwrap();
        assert!((d.empty_prob - r.full_prob).abs() < 1e-12);
    }

    #[test]
    fn empty_bound_on_joint() {
        let joint = product_chain(&[e2(), e2()], 100).unwrap();
        for cap in 0..8 {
            let d = exact_stationary(joint.model(), cap, 1000).unwrap();
            assert!(d.empty_bound(joint.model()).holds, "B={cap}");
        }
    }

    #[test]
    fn needs_a_deficit_state() {
        let m = UserModel::from_raw_unchecked(RawChain {
            states: vec!["a".into()],
            transition: vec![vec![1.0]],
            net_gen: vec![1.0],
        })
        .unwrap();
        assert!(matches!(
            exact_stationary(&m, 3, 100),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn simulation_is_deterministic() {
        let a = simulate_chain(&e2(), 3, 20_000, 1_000, 7).unwrap();
        let b = simulate_chain(&e2(), 3, 20_000, 1_000, 7).unwrap();
        assert_eq!(a, b);
        let c = simulate_chain(&e2(), 3, 20_000, 1_000, 8).unwrap();
        assert_ne!(a.loss_events, c.loss_events);
    }

    #[test]
    fn simulation_needs_samples() {
        assert!(simulate_chain(&e2(), 3, 100, 100, 1).is_err());
        assert!(simulate_chain(&e2(), 3, 10, 20, 1).is_err());
    }

    #[test]
    fn simulation_e2_zero_capacity() {
        let s = simulate_chain(&e2(), 0, 1_000_000, 100_000, 42).unwrap();
        assert!((s.lolp_estimate - 0.4).abs() < 3.0 * s.std_error.max(1e-4));
        assert_eq!(s.batches, BATCHES);
        assert!((0.0..=1.0).contains(&s.lolp_estimate));
    }

    #[test]
    fn sampled_rewards_follow_pi() {
        let r = sample_rewards(&e2(), 200_000, 3);
        let deficits = r.iter().filter(|&&x| x < 0).count() as f64 / r.len() as f64;
        assert!((deficits - 0.4).abs() < 0.005);
    }

    #[test]
    fn trace_examples() {
        let net = TraceSeries::synthetic("t", vec![1.0, -1.0, -1.0, 1.0]).unwrap();
        let run = simulate_trace(&net, 1.0, 0.0).unwrap();
        assert_eq!(run.occupancy.values(), &[0.0, 1.0, 0.0, 0.0, 1.0]);
        assert_eq!(run.losses, vec![false, false, true, false]);
        assert_eq!(run.lolp, 0.25);

        let up = TraceSeries::synthetic("t", vec![0.5; 10]).unwrap();
        assert_eq!(simulate_trace(&up, 1.0, 0.0).unwrap().lolp, 0.0);

        let alt = TraceSeries::synthetic("t", vec![-1.0, 1.0, -1.0, 1.0]).unwrap();
        assert_eq!(simulate_trace(&alt, 0.0, 0.0).unwrap().lolp, 0.5);
        assert_eq!(trace_lolp(alt.values(), 0.0, 0.0), 0.5);
    }

    #[test]
    fn trace_errors() {
        let empty = TraceSeries::synthetic("t", vec![]).unwrap();
        assert!(simulate_trace(&empty, 1.0, 0.0).is_err());
        let net = TraceSeries::synthetic("t", vec![1.0]).unwrap();
        assert!(simulate_trace(&net, 1.0, 2.0).is_err());
        assert!(simulate_trace(&net, -1.0, 0.0).is_err());
    }
}
