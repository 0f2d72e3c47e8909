//! Worst-case battery requirement over subsets of locations.
//!
//! For every subset size `N` and target `ε`, every subset of `N` locations
//! shares one battery driven by the summed net generation; the study keeps
//! the largest minimal battery found. Ties go to the lexicographically
//! first subset.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use itertools::Itertools;

use crate::sizing::min_battery_trace;
use crate::trace::{check_aligned, constant_demand, mj_to_mwh, net_generation, TraceSeries, Unit};
use crate::{Error, Result};

/// Targets used when none are given.
pub const DEFAULT_EPSILONS: [f64; 4] = [0.01, 0.05, 0.10, 0.15];

/// Largest number of subsets of one size the study will enumerate.
pub const DEFAULT_SUBSET_CAP: u64 = 100_000;

#[derive(Debug, Clone, PartialEq)]
pub struct StudyOptions {
    /// Constant demand as a fraction of each location's mean generation.
    /// `None` means the inputs already are net generation.
    pub demand_fraction: Option<f64>,
    pub epsilons: Vec<f64>,
    /// Battery grid spacing in the energy unit of the traces. Defaults to
    /// the mean per-location demand over one step, or one unit for
    /// dimensionless net inputs.
    pub resolution: Option<f64>,
    pub subset_cap: u64,
}

impl Default for StudyOptions {
    fn default() -> Self {
        StudyOptions {
            demand_fraction: Some(crate::trace::DEFAULT_DEMAND_FRACTION),
            epsilons: DEFAULT_EPSILONS.to_vec(),
            resolution: None,
            subset_cap: DEFAULT_SUBSET_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StudyRow {
    pub n: usize,
    pub epsilon: f64,
    /// Indices into the location list of the subset attaining the maximum.
    pub subset: Vec<usize>,
    pub subset_ids: Vec<String>,
    /// Largest minimal battery over all subsets of size `n`.
    pub b_requirement: f64,
    /// The same in MWh when the traces are in MJ.
    pub b_requirement_mwh: Option<f64>,
    /// LOLP of the worst subset at its minimal battery.
    pub lolp_at_requirement: f64,
    pub subsets_evaluated: u64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StudyTable {
    pub locations: Vec<String>,
    pub demand_fraction: Option<f64>,
    pub epsilons: Vec<f64>,
    pub resolution: f64,
    pub unit: Unit,
    /// Ordered by `n`, then by position in `epsilons`.
    pub rows: Vec<StudyRow>,
}

impl StudyTable {
    pub fn row(&self, n: usize, epsilon: f64) -> Option<&StudyRow> {
        self.rows.iter().find(|r| r.n == n && r.epsilon == epsilon)
    }
}

fn binomial(n: u64, k: u64) -> u64 {
    let k = k.min(n - k);
    (0..k).fold(1u64, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

pub fn scaling_study(locations: &[TraceSeries], opts: &StudyOptions) -> Result<StudyTable> {
    if locations.is_empty() {
        return Err(Error::Domain(
            "the study needs at least one location".into(),
        ));
    }
    if opts.epsilons.is_empty() {
        return Err(Error::Domain(
            "the study needs at least one LOLP target".into(),
        ));
    }
    if let Some(e) = opts.epsilons.iter().find(|&&e| !(e > 0.0 && e < 1.0)) {
        return Err(Error::Domain(format!("target ε = {e} must lie in (0, 1)")));
    }
    check_aligned(locations)?;

    let energy: Vec<TraceSeries> = locations.iter().map(TraceSeries::to_energy).collect();
    let unit = energy[0].unit();
    let nets: Vec<Vec<f64>> = match opts.demand_fraction {
        Some(f) => energy
            .iter()
            .map(|t| net_generation(t, f).map(|n| n.values().to_vec()))
            .collect::<Result<_>>()?,
        None => energy.iter().map(|t| t.values().to_vec()).collect(),
    };
    let resolution = match (opts.resolution, opts.demand_fraction) {
        (Some(r), _) => r,
        (None, Some(f)) => {
            let total = energy
                .iter()
                .map(|t| constant_demand(t, f))
                .sum::<Result<f64>>()?;
            total / energy.len() as f64
        }
        (None, None) if unit == Unit::EnergyUnits => 1.0,
        (None, None) => {
            return Err(Error::Domain(
                "net inputs in physical units need an explicit resolution".into(),
            ))
        }
    };
    if !(resolution > 0.0) || !resolution.is_finite() {
        return Err(Error::Domain(format!(
            "resolution {resolution} must be positive"
        )));
    }

    let ids: Vec<String> = locations
        .iter()
        .map(|t| String::from(t.location()))
        .collect();
    let template = &energy[0];
    let count = locations.len();
    let mut rows = Vec::with_capacity(count * opts.epsilons.len());
    for n in 1..=count {
        let subsets = binomial(count as u64, n as u64);
        if subsets > opts.subset_cap {
            return Err(Error::Capacity {
                what: "subset enumeration",
                requested: subsets as usize,
                cap: opts.subset_cap as usize,
            });
        }
        // Per target: (requirement, lolp, subset).
        let mut best: Vec<Option<(f64, f64, Vec<usize>)>> = vec![None; opts.epsilons.len()];
        for subset in (0..count).combinations(n) {
            let mut sum = nets[subset[0]].clone();
            for &i in &subset[1..] {
                for (acc, v) in sum.iter_mut().zip(&nets[i]) {
                    *acc += v;
                }
            }
            let series = TraceSeries::new(
                "subset",
                template.start(),
                template.cadence_secs(),
                sum,
                unit,
            )?;
            for (slot, &eps) in best.iter_mut().zip(&opts.epsilons) {
                let sized = min_battery_trace(&series, eps, resolution)?;
                let better = slot.as_ref().is_none_or(|(b, _, _)| sized.b_star > *b);
                if better {
                    *slot = Some((sized.b_star, sized.lolp_at_star, subset.clone()));
                }
            }
        }
        for (slot, &eps) in best.into_iter().zip(&opts.epsilons) {
            let (b, lolp, subset) = slot.expect("at least one subset per size");
            rows.push(StudyRow {
                n,
                epsilon: eps,
                subset_ids: subset.iter().map(|&i| ids[i].clone()).collect(),
                subset,
                b_requirement: b,
                b_requirement_mwh: (unit == Unit::EnergyMj).then(|| mj_to_mwh(b)),
                lolp_at_requirement: lolp,
                subsets_evaluated: subsets,
            });
        }
    }
    Ok(StudyTable {
        locations: ids,
        demand_fraction: opts.demand_fraction,
        epsilons: opts.epsilons.clone(),
        resolution,
        unit,
        rows,
    })
}
