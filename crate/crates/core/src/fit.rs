//! Quantise-and-count fitting of a Markov user model to a net-generation
//! trace.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::chain::{validate, Check, RawChain, UserModel, ValidationReport};
use crate::trace::TraceSeries;
use crate::{Error, Result};

pub const DEFAULT_BINS: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub enum Binning {
    /// `k` bins with (near) equal occupancy, edges at sample quantiles.
    Quantile(usize),
    /// Explicit increasing edges; samples outside are clamped to the end bins.
    Edges(Vec<f64>),
    /// One state per distinct sample value.
    Distinct,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub binning: Binning,
    /// Energy per integer reward unit, in the trace's energy unit.
    pub granularity: f64,
    /// Additive smoothing `α` on transition counts.
    pub smoothing: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            binning: Binning::Quantile(DEFAULT_BINS),
            granularity: 1.0,
            smoothing: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct FitReport {
    /// Bin edges before empty bins were dropped (empty for distinct binning).
    pub edges: Vec<f64>,
    /// Representative net value of each kept state.
    pub centers: Vec<f64>,
    /// Transition counts between kept states.
    pub counts: Vec<Vec<u64>>,
    pub chain: RawChain,
    pub validation: ValidationReport,
    pub smoothing: f64,
    pub granularity: f64,
    /// Indices of bins dropped for having no samples.
    pub dropped_bins: Vec<usize>,
}

impl FitReport {
    pub fn smoothed(&self) -> bool {
        self.smoothing > 0.0
    }

    pub fn self_loops_ok(&self) -> bool {
        self.validation.passed(Check::SelfLoops)
    }

    pub fn deficit_ok(&self) -> bool {
        self.validation.passed(Check::DeficitState)
    }

    pub fn model(&self) -> Result<UserModel> {
        self.validation.clone().into_result()?;
        UserModel::from_raw(self.chain.clone())
    }
}

fn quantile_edges(sorted: &[f64], bins: usize) -> Vec<f64> {
    let n = sorted.len();
    let mut edges: Vec<f64> = (0..=bins)
        .map(|i| sorted[libm::round((i * (n - 1)) as f64 / bins as f64) as usize])
        .collect();
    edges.dedup();
    edges
}

fn locate(edges: &[f64], x: f64) -> usize {
    // Last bin is closed on the right.
    let bins = edges.len() - 1;
    edges
        .partition_point(|&e| e <= x)
        .saturating_sub(1)
        .min(bins - 1)
}

pub fn fit_dtmc(net: &TraceSeries, opts: &FitOptions) -> Result<FitReport> {
    let values = net.values();
    if values.len() < 2 {
        return Err(Error::Domain("fitting needs at least two samples".into()));
    }
    if !(opts.granularity > 0.0) || !opts.granularity.is_finite() {
        return Err(Error::Domain(format!(
            "granularity {} must be positive",
            opts.granularity
        )));
    }
    if !(opts.smoothing >= 0.0) || !opts.smoothing.is_finite() {
        return Err(Error::Domain(format!(
            "smoothing {} must be ≥ 0",
            opts.smoothing
        )));
    }

    if matches!(opts.binning, Binning::Quantile(k) if k < 2) {
        return Err(Error::Domain("fitting needs at least two bins".into()));
    }

    let (edges, bin_of, centers): (Vec<f64>, Vec<usize>, Vec<f64>) = match &opts.binning {
        Binning::Distinct => {
            let mut distinct = values.to_vec();
            distinct.sort_by(f64::total_cmp);
            distinct.dedup();
            let bin_of = values
                .iter()
                .map(|v| distinct.binary_search_by(|d| d.total_cmp(v)).unwrap())
                .collect();
            (Vec::new(), bin_of, distinct)
        }
        binning => {
            let edges = match binning {
                Binning::Quantile(k) => {
                    let mut sorted = values.to_vec();
                    sorted.sort_by(f64::total_cmp);
                    quantile_edges(&sorted, *k)
                }
                Binning::Edges(e) => {
                    if e.len() < 3 {
                        return Err(Error::Domain("fitting needs at least two bins".into()));
                    }
                    if e.windows(2).any(|w| !(w[0] < w[1])) {
                        return Err(Error::Domain(
                            "bin edges must be strictly increasing".into(),
                        ));
                    }
                    e.clone()
                }
                Binning::Distinct => unreachable!(),
            };
            if edges.len() < 2 {
                return Err(Error::Domain(
                    "all samples are equal; nothing to bin".into(),
                ));
            }
            let bin_of = values.iter().map(|&v| locate(&edges, v)).collect();
            let centers = edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
            (edges, bin_of, centers)
        }
    };

    let bins = centers.len();
    let mut occupancy = vec![0u64; bins];
    for &b in &bin_of {
        occupancy[b] += 1;
    }
    let dropped: Vec<usize> = (0..bins).filter(|&b| occupancy[b] == 0).collect();
    for &b in &dropped {
        log::warn!("bin {b} has no samples and is dropped");
    }
    let mut state_of = vec![usize::MAX; bins];
    let mut kept_centers = Vec::new();
    for b in (0..bins).filter(|&b| occupancy[b] > 0) {
        state_of[b] = kept_centers.len();
        kept_centers.push(centers[b]);
    }
    let m = kept_centers.len();
    if m < 2 {
        return Err(Error::Domain(format!(
            "fit produced {m} state(s); a chain needs at least two"
        )));
    }

    let mut counts = vec![vec![0u64; m]; m];
    for w in bin_of.windows(2) {
        counts[state_of[w[0]]][state_of[w[1]]] += 1;
    }
    let alpha = opts.smoothing;
    let transition: Vec<Vec<f64>> = counts
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let total = row.iter().sum::<u64>() as f64 + alpha * m as f64;
            if total == 0.0 {
                log::warn!("state {i} is never left in the trace; giving it a self-loop");
                let mut r = vec![0.0; m];
                r[i] = 1.0;
                r
            } else {
                row.iter().map(|&c| (c as f64 + alpha) / total).collect()
            }
        })
        .collect();
    let net_gen: Vec<f64> = kept_centers
        .iter()
        .map(|c| libm::round(c / opts.granularity))
        .collect();
    let states: Vec<String> = kept_centers.iter().map(|c| format!("{c:.6}")).collect();
    let chain = RawChain {
        states,
        transition,
        net_gen,
    };
    let validation = validate(&chain)?;
    if !validation.accepted() {
        let failed: Vec<String> = validation
            .outcomes
            .iter()
            .filter(|o| !o.passed)
            .map(|o| format!("{}", o.check))
            .collect();
        log::warn!("fitted chain fails: {}", failed.join(", "));
    }
    Ok(FitReport {
        edges,
        centers: kept_centers,
        counts,
        chain,
        validation,
        smoothing: alpha,
        granularity: opts.granularity,
        dropped_bins: dropped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(values: Vec<f64>) -> TraceSeries {
        TraceSeries::synthetic("t", values).unwrap()
    }

    fn distinct(smoothing: f64) -> FitOptions {
        FitOptions {
            binning: Binning::Distinct,
            granularity: 1.0,
            smoothing,
        }
    }

    #[test]
    fn direct_counts() {
        let r = fit_dtmc(&series(vec![1.0, 1.0, 2.0, 1.0]), &distinct(0.0)).unwrap();
        assert_eq!(r.chain.transition, vec![vec![0.5, 0.5], vec![1.0, 0.0]]);
        assert_eq!(r.counts, vec![vec![1, 1], vec![1, 0]]);
        assert!(!r.self_loops_ok());
        assert!(!r.deficit_ok());
        assert!(!r.smoothed());
        assert!(r.model().is_err());
    }

    #[test]
    fn smoothing_restores_self_loops() {
        let r = fit_dtmc(&series(vec![1.0, 1.0, 2.0, 1.0]), &distinct(1.0)).unwrap();
        let row = &r.chain.transition[1];
        assert!((row[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((row[1] - 1.0 / 3.0).abs() < 1e-15);
        assert!(r.self_loops_ok());
    }

    #[test]
    fn quantile_bins_are_balanced() {
        let values: Vec<f64> = (0..800).map(|k| ((k * 37) % 800) as f64 - 300.0).collect();
        let r = fit_dtmc(&series(values), &FitOptions::default()).unwrap();
        assert_eq!(r.centers.len(), DEFAULT_BINS);
        let occupancy: Vec<u64> = r.counts.iter().map(|row| row.iter().sum()).collect();
        assert!(
            occupancy.iter().all(|&o| (95..=105).contains(&o)),
            "{occupancy:?}"
        );
        let total: u64 = occupancy.iter().sum();
        assert_eq!(total, 799);
        for row in &r.chain.transition {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_bins_are_dropped() {
        let r = fit_dtmc(
            &series(vec![0.5, 2.5, 0.5, 2.5, 0.5]),
            &FitOptions {
                binning: Binning::Edges(vec![0.0, 1.0, 2.0, 3.0]),
                ..FitOptions::default()
            },
        )
        .unwrap();
        assert_eq!(r.dropped_bins, vec![1]);
        assert_eq!(r.centers, vec![0.5, 2.5]);
        // Halves round away from zero.
        assert_eq!(r.chain.net_gen, vec![1.0, 3.0]);
    }

    #[test]
    fn single_state_and_tiny_inputs_rejected() {
        assert!(fit_dtmc(&series(vec![1.0, 1.0, 1.0]), &distinct(0.0)).is_err());
        assert!(fit_dtmc(&series(vec![1.0]), &distinct(0.0)).is_err());
        let one_bin = FitOptions {
            binning: Binning::Quantile(1),
            ..FitOptions::default()
        };
        assert!(fit_dtmc(&series(vec![1.0, 2.0]), &one_bin).is_err());
    }

    #[test]
    fn granularity_scales_rewards() {
        let r = fit_dtmc(
            &series(vec![-300.0, 600.0, -300.0, 600.0, 600.0]),
            &FitOptions {
                binning: Binning::Distinct,
                granularity: 300.0,
                smoothing: 0.0,
            },
        )
        .unwrap();
        assert_eq!(r.chain.net_gen, vec![-1.0, 2.0]);
    }
}
