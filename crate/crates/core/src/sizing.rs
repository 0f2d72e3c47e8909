//! Smallest battery meeting a LOLP target, and the empirical decay slope of
//! `log LOLP` in the battery size.
//!
//! Both searches rely on capacity monotonicity: for a fixed net-generation
//! path started empty, a larger battery holds at least as much energy at
//! every step, so the LOLP can only fall as the capacity grows. The same
//! holds for Monte Carlo estimates that share a seed, since the background
//! path does not depend on the capacity.

use alloc::format;
use alloc::vec::Vec;

use crate::battery::{exact_stationary, simulate_chain, trace_lolp};
use crate::chain::{drift, UserModel};
use crate::ldp::decay_rate;
use crate::trace::TraceSeries;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Method {
    Exact,
    MonteCarlo,
    Trace,
}

/// How chain LOLPs are evaluated during a sizing search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ChainLolp {
    Exact {
        cap: usize,
    },
    MonteCarlo {
        steps: u64,
        burn_in: u64,
        seed: u64,
        cap: usize,
    },
}

impl ChainLolp {
    pub fn exact() -> Self {
        ChainLolp::Exact {
            cap: crate::DEFAULT_SOLVER_CAP,
        }
    }

    fn method(&self) -> Method {
        match self {
            ChainLolp::Exact { .. } => Method::Exact,
            ChainLolp::MonteCarlo { .. } => Method::MonteCarlo,
        }
    }

    fn eval(&self, model: &UserModel, capacity: u64) -> Result<f64> {
        match *self {
            ChainLolp::Exact { cap } => Ok(exact_stationary(model, capacity, cap)?.lolp),
            ChainLolp::MonteCarlo {
                steps,
                burn_in,
                seed,
                cap,
            } => {
                let levels = capacity as usize + 1;
                if levels.saturating_mul(model.len()) > cap {
                    return Err(Error::Capacity {
                        what: "battery search range",
                        requested: levels.saturating_mul(model.len()),
                        cap,
                    });
                }
                Ok(simulate_chain(model, capacity, steps, burn_in, seed)?.lolp_estimate)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct SizingResult {
    pub epsilon: f64,
    pub method: Method,
    /// Smallest capacity on the search grid with `LOLP ≤ ε`.
    pub b_star: f64,
    pub lolp_at_star: f64,
    /// LOLP one grid step below `b_star`, when `b_star > 0`.
    pub lolp_below: Option<f64>,
    /// Grid spacing: one energy unit for chains.
    pub resolution: f64,
    /// Last `(infeasible, feasible)` pair of the search.
    pub bracket: (f64, f64),
    /// Every `(capacity, LOLP)` evaluated, in order.
    pub evaluations: Vec<(f64, f64)>,
    /// `log(1/ε) / λ`, for chains.
    pub ld_estimate: Option<f64>,
}

/// Doubling then bisection over grid indices `k`, given a monotone `lolp(k)`.
/// `k_max`, when given, is known to be the last index worth trying.
fn grid_search(
    epsilon: f64,
    k_max: Option<u64>,
    mut lolp: impl FnMut(u64) -> Result<f64>,
) -> Result<(u64, Vec<(u64, f64)>)> {
    let mut evals: Vec<(u64, f64)> = Vec::new();
    let mut eval = |k: u64, evals: &mut Vec<(u64, f64)>| -> Result<f64> {
        if let Some(&(_, v)) = evals.iter().find(|(x, _)| *x == k) {
            return Ok(v);
        }
        let v = lolp(k)?;
        evals.push((k, v));
        Ok(v)
    };
    if eval(0, &mut evals)? <= epsilon {
        return Ok((0, evals));
    }
    let mut lo = 0u64;
    let mut hi = 1u64;
    loop {
        if let Some(max) = k_max {
            if hi >= max {
                hi = max;
                let v = eval(hi, &mut evals)?;
                if v > epsilon {
                    return Err(Error::Infeasible {
                        epsilon,
                        cap: hi as f64,
                        lolp_at_cap: v,
                    });
                }
                break;
            }
        }
        if eval(hi, &mut evals)? <= epsilon {
            break;
        }
        lo = hi;
        hi = hi.checked_mul(2).ok_or(Error::Infeasible {
            epsilon,
            cap: hi as f64,
            lolp_at_cap: f64::NAN,
        })?;
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if eval(mid, &mut evals)? <= epsilon {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok((hi, evals))
}

fn finish(
    epsilon: f64,
    method: Method,
    resolution: f64,
    k_star: u64,
    evals: Vec<(u64, f64)>,
    ld_estimate: Option<f64>,
) -> SizingResult {
    let lookup = |k: u64| evals.iter().find(|(x, _)| *x == k).map(|e| e.1);
    let lolp_at_star = lookup(k_star).expect("b_star was evaluated");
    let lolp_below = k_star.checked_sub(1).and_then(lookup);
    SizingResult {
        epsilon,
        method,
        b_star: k_star as f64 * resolution,
        lolp_at_star,
        lolp_below,
        resolution,
        bracket: (
            k_star.saturating_sub(1) as f64 * resolution,
            k_star as f64 * resolution,
        ),
        evaluations: evals
            .iter()
            .map(|&(k, v)| (k as f64 * resolution, v))
            .collect(),
        ld_estimate,
    }
}

/// Smallest integer capacity with `LOLP ≤ ε` for a chain with positive drift.
pub fn min_battery_chain(model: &UserModel, epsilon: f64, how: ChainLolp) -> Result<SizingResult> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::Domain(format!(
            "target ε = {epsilon} must lie in (0, 1)"
        )));
    }
    let delta = drift(model);
    if !(delta > 0.0) {
        return Err(Error::Domain(format!(
            "drift {delta} is not positive; no finite battery meets a LOLP target in general"
        )));
    }
    let (k_star, evals) = grid_search(epsilon, None, |k| how.eval(model, k))?;
    let ld_estimate = decay_rate(model).ok().map(|d| d.battery_estimate(epsilon));
    Ok(finish(
        epsilon,
        how.method(),
        1.0,
        k_star,
        evals,
        ld_estimate,
    ))
}

/// Smallest multiple of `resolution` with trace LOLP `≤ ε`, battery starting
/// empty. Capacities are in the trace's energy unit (MJ for power traces).
///
/// Once the capacity reaches the total surplus energy the upper clamp can no
/// longer bind, so the search stops there and reports
/// [`Error::Infeasible`] if the target is still missed.
pub fn min_battery_trace(net: &TraceSeries, epsilon: f64, resolution: f64) -> Result<SizingResult> {
    if net.is_empty() {
        return Err(Error::Domain("empty trace".into()));
    }
    if !(epsilon > 0.0) {
        return Err(Error::Domain(format!(
            "target ε = {epsilon} must be positive"
        )));
    }
    if !(resolution > 0.0) || !resolution.is_finite() {
        return Err(Error::Domain(format!(
            "resolution {resolution} must be positive"
        )));
    }
    let energy = net.to_energy();
    let values = energy.values();
    let mean = energy.mean();
    if !(mean > 0.0) {
        log::warn!(
            "{}: mean net generation {mean} is not positive; the target may be infeasible",
            net.location()
        );
    }
    let surplus: f64 = values.iter().filter(|&&x| x > 0.0).sum();
    let k_max = libm::ceil(surplus / resolution).max(1.0) as u64;
    let (k_star, evals) = grid_search(epsilon, Some(k_max), |k| {
        Ok(trace_lolp(values, k as f64 * resolution, 0.0))
    })?;
    let mut result = finish(epsilon, Method::Trace, resolution, k_star, evals, None);
    if k_star > 0 && result.lolp_below.is_none() {
        result.lolp_below = Some(trace_lolp(values, (k_star - 1) as f64 * resolution, 0.0));
    }
    Ok(result)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points_used: usize,
    /// Capacities skipped because their LOLP was zero.
    pub excluded: Vec<f64>,
}

/// Least squares fit of `log lolp` against capacity. Points with zero LOLP
/// are excluded.
pub fn fit_log_lolp(points: &[(f64, f64)]) -> Result<SlopeFit> {
    let mut excluded = Vec::new();
    let mut xy = Vec::with_capacity(points.len());
    for &(b, l) in points {
        if l > 0.0 {
            xy.push((b, libm::log(l)));
        } else {
            log::warn!("capacity {b}: LOLP is zero, excluded from the slope fit");
            excluded.push(b);
        }
    }
    let n = xy.len() as f64;
    if xy.len() < 2 {
        return Err(Error::Domain(
            "slope fit needs at least two positive LOLP values".into(),
        ));
    }
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / n;
    let my = xy.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = xy.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = xy.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = xy.iter().map(|p| (p.1 - my) * (p.1 - my)).sum();
    if !(sxx > 0.0) {
        return Err(Error::Domain(
            "slope fit needs two distinct capacities".into(),
        ));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy > 0.0 {
        sxy * sxy / (sxx * syy)
    } else {
        1.0
    };
    Ok(SlopeFit {
        slope,
        intercept,
        r_squared,
        points_used: xy.len(),
        excluded,
    })
}

/// Slope of `log LOLP_exact(B)` over integer `B ∈ [b_lo, b_hi]`.
pub fn decay_slope(model: &UserModel, b_lo: u64, b_hi: u64, cap: usize) -> Result<SlopeFit> {
    if b_hi <= b_lo {
        return Err(Error::Domain(format!(
            "empty capacity range [{b_lo}, {b_hi}]"
        )));
    }
    let points = (b_lo..=b_hi)
        .map(|b| exact_stationary(model, b, cap).map(|d| (b as f64, d.lolp)))
        .collect::<Result<Vec<_>>>()?;
    fit_log_lolp(&points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    fn e2() -> UserModel {
        UserModel::new(
            (0..2).map(|i| i.to_string()).collect(),
            vec![vec![0.4, 0.6], vec![0.4, 0.6]],
            vec![-1.0, 1.0],
        )
        .unwrap()
    }

    fn periodic(reps: usize) -> TraceSeries {
        let values = [1.0, -1.0, -1.0, 1.0].repeat(reps);
        TraceSeries::synthetic("p", values).unwrap()
    }

    #[test]
    fn e2_target_met_without_battery() {
        let s = min_battery_chain(&e2(), 0.4, ChainLolp::exact()).unwrap();
        assert_eq!(s.b_star, 0.0);
        assert_eq!(s.lolp_below, None);
    }

    #[test]
    fn e2_one_percent_matches_scan() {
        let s = min_battery_chain(&e2(), 0.01, ChainLolp::exact()).unwrap();
        let scan = (0..=60u64)
            .find(|&b| exact_stationary(&e2(), b, 10_000).unwrap().lolp <= 0.01)
            .unwrap();
        assert_eq!(s.b_star, scan as f64);
        assert!(s.lolp_at_star <= 0.01);
        assert!(s.lolp_below.unwrap() > 0.01);
        assert!(s.ld_estimate.unwrap() > s.b_star);
    }

    #[test]
    fn chain_sizing_rejects_bad_targets() {
        assert!(min_battery_chain(&e2(), 0.0, ChainLolp::exact()).is_err());
        assert!(min_battery_chain(&e2(), 1.0, ChainLolp::exact()).is_err());
    }

    #[test]
    fn monte_carlo_sizing_agrees_with_exact_nearby() {
        let how = ChainLolp::MonteCarlo {
            steps: 400_000,
            burn_in: 10_000,
            seed: 11,
            cap: 100_000,
        };
        let mc = min_battery_chain(&e2(), 0.05, how).unwrap();
        let exact = min_battery_chain(&e2(), 0.05, ChainLolp::exact()).unwrap();
        assert!((mc.b_star - exact.b_star).abs() <= 1.0);
        assert_eq!(mc.method, Method::MonteCarlo);
    }

    #[test]
    fn trace_sizing_examples() {
        let t = periodic(25);
        let s = min_battery_trace(&t, 0.25, 1.0).unwrap();
        assert_eq!(s.b_star, 1.0);
        assert_eq!(s.lolp_at_star, 0.25);
        let s = min_battery_trace(&t, 0.2, 1.0).unwrap();
        assert_eq!(s.b_star, 2.0);
        assert!(s.lolp_below.unwrap() > 0.2);
        let s = min_battery_trace(&t, 1.0, 1.0).unwrap();
        assert_eq!(s.b_star, 0.0);
    }

    #[test]
    fn infeasible_trace_target() {
        // Never any surplus: the battery never charges.
        let t = TraceSeries::synthetic("d", vec![-1.0; 10]).unwrap();
        assert!(matches!(
            min_battery_trace(&t, 0.5, 1.0),
            Err(Error::Infeasible { .. })
        ));
    }

    #[test]
    fn slope_of_e2() {
        let fit = decay_slope(&e2(), 20, 60, 100_000).unwrap();
        let lambda = 1.5f64.ln();
        assert!(((fit.slope + lambda) / lambda).abs() < 0.05);
        assert!(fit.r_squared > 0.999);
    }

    #[test]
    fn constant_lolp_has_zero_slope() {
        let points: Vec<(f64, f64)> = (0..5).map(|b| (b as f64, 0.1)).collect();
        let fit = fit_log_lolp(&points).unwrap();
        assert_eq!(fit.slope, 0.0);
    }

    #[test]
    fn zero_lolp_points_excluded() {
        let fit = fit_log_lolp(&[(0.0, 0.5), (1.0, 0.25), (2.0, 0.0)]).unwrap();
        assert_eq!(fit.excluded, vec![2.0]);
        assert!((fit.slope + 2f64.ln()).abs() < 1e-12);
        assert!(fit_log_lolp(&[(0.0, 0.5), (1.0, 0.0)]).is_err());
    }
}
