//! Uniformly sampled power and energy series, constant-demand net generation
//! and aggregation across locations.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::{Error, Result};

/// Sampling interval of the wind traces, in seconds.
pub const DEFAULT_CADENCE_SECS: u32 = 300;

/// Constant demand as a fraction of mean generation.
pub const DEFAULT_DEMAND_FRACTION: f64 = 0.6;

pub const SECONDS_PER_HOUR: f64 = 3600.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Unit {
    /// Average power over the step, MW.
    PowerMw,
    /// Energy per step, MJ.
    EnergyMj,
    /// Dimensionless energy units per step (synthetic and chain-derived series).
    EnergyUnits,
}

impl Unit {
    pub fn is_energy(self) -> bool {
        !matches!(self, Unit::PowerMw)
    }
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Unit::PowerMw => "MW",
            Unit::EnergyMj => "MJ",
            Unit::EnergyUnits => "units",
        })
    }
}

/// A series sampled at `start + k · cadence` seconds (Unix time, UTC).
///
/// Timestamps are implied by `start` and `cadence`, so they are strictly
/// increasing with constant spacing by construction.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct TraceSeries {
    location: String,
    start: i64,
    cadence_secs: u32,
    values: Vec<f64>,
    unit: Unit,
}

impl TraceSeries {
    pub fn new(
        location: impl Into<String>,
        start: i64,
        cadence_secs: u32,
        values: Vec<f64>,
        unit: Unit,
    ) -> Result<Self> {
        if cadence_secs == 0 {
            return Err(Error::Domain("cadence must be positive".into()));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("sample {k} is not finite")));
        }
        Ok(TraceSeries {
            location: location.into(),
            start,
            cadence_secs,
            values,
            unit,
        })
    }

    /// Dimensionless energy-per-step series, five-minute cadence from t = 0.
    pub fn synthetic(location: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        Self::new(location, 0, DEFAULT_CADENCE_SECS, values, Unit::EnergyUnits)
    }

    pub fn location(&self) -> &str {
        &self.location
    }

    pub fn start(&self) -> i64 {
        self.start
    }

    pub fn cadence_secs(&self) -> u32 {
        self.cadence_secs
    }

    pub fn unit(&self) -> Unit {
        self.unit
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn timestamp(&self, k: usize) -> i64 {
        self.start + k as i64 * self.cadence_secs as i64
    }

    /// Timestamp one past the last sample.
    pub fn end(&self) -> i64 {
        self.timestamp(self.len())
    }

    pub fn mean(&self) -> f64 {
        if self.values.is_empty() {
            return f64::NAN;
        }
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn with_location(mut self, location: impl Into<String>) -> Self {
        self.location = location.into();
        self
    }

    pub(crate) fn with_values(&self, values: Vec<f64>, unit: Unit) -> Self {
        TraceSeries {
            location: self.location.clone(),
            start: self.start,
            cadence_secs: self.cadence_secs,
            values,
            unit,
        }
    }

    /// Energy per step. Power in MW becomes MJ by multiplying with the
    /// cadence in seconds; energy series are returned unchanged.
    pub fn to_energy(&self) -> TraceSeries {
        match self.unit {
            Unit::PowerMw => {
                let dt = self.cadence_secs as f64;
                self.with_values(self.values.iter().map(|v| v * dt).collect(), Unit::EnergyMj)
            }
            _ => self.clone(),
        }
    }

    /// Inverse of [`to_energy`](Self::to_energy) for MJ series.
    pub fn to_power(&self) -> Result<TraceSeries> {
        match self.unit {
            Unit::PowerMw => Ok(self.clone()),
            Unit::EnergyMj => {
                let dt = self.cadence_secs as f64;
                Ok(self.with_values(self.values.iter().map(|v| v / dt).collect(), Unit::PowerMw))
            }
            Unit::EnergyUnits => Err(Error::Domain(
                "dimensionless energy series have no power equivalent".into(),
            )),
        }
    }
}

/// Constant demand `fraction × mean(trace)`, in the trace's unit.
pub fn constant_demand(trace: &TraceSeries, demand_fraction: f64) -> Result<f64> {
    if !(demand_fraction > 0.0 && demand_fraction < 1.0) {
        return Err(Error::Domain(format!(
            "demand fraction {demand_fraction} must lie in (0, 1)"
        )));
    }
    if trace.is_empty() {
        return Err(Error::Domain("empty trace".into()));
    }
    let mean = trace.mean();
    if !(mean > 0.0) {
        return Err(Error::Domain(format!(
            "mean generation {mean} must be positive to derive a demand"
        )));
    }
    Ok(demand_fraction * mean)
}

/// Generation minus a constant demand of `demand_fraction × mean`.
/// The result has mean `(1 − demand_fraction) · mean > 0`.
pub fn net_generation(trace: &TraceSeries, demand_fraction: f64) -> Result<TraceSeries> {
    let demand = constant_demand(trace, demand_fraction)?;
    Ok(trace.with_values(
        trace.values.iter().map(|g| g - demand).collect(),
        trace.unit,
    ))
}

/// Pointwise sum over the common time range.
pub fn aggregate(traces: &[TraceSeries]) -> Result<TraceSeries> {
    let first = traces
        .first()
        .ok_or_else(|| Error::Domain("nothing to aggregate".into()))?;
    let cadence = first.cadence_secs as i64;
    for t in &traces[1..] {
        if t.cadence_secs != first.cadence_secs {
            return Err(Error::Alignment(format!(
                "{} has cadence {} s, {} has {} s",
                t.location, t.cadence_secs, first.location, first.cadence_secs
            )));
        }
        if t.unit != first.unit {
            return Err(Error::Alignment(format!(
                "{} is in {}, {} is in {}",
                t.location, t.unit, first.location, first.unit
            )));
        }
        if (t.start - first.start).rem_euclid(cadence) != 0 {
            return Err(Error::Alignment(format!(
                "{} samples fall between the sampling instants of {}",
                t.location, first.location
            )));
        }
    }
    let start = traces.iter().map(|t| t.start).max().unwrap();
    let end = traces.iter().map(|t| t.end()).min().unwrap();
    if end <= start {
        return Err(Error::Alignment("traces share no common time range".into()));
    }
    let len = ((end - start) / cadence) as usize;
    let mut values = alloc::vec![0.0; len];
    for t in traces {
        let offset = ((start - t.start) / cadence) as usize;
        for (acc, v) in values.iter_mut().zip(&t.values[offset..offset + len]) {
            *acc += v;
        }
    }
    let location = traces
        .iter()
        .map(|t| t.location.as_str())
        .collect::<Vec<_>>()
        .join("+");
    TraceSeries::new(location, start, first.cadence_secs, values, first.unit)
}

/// Requires identical start, cadence, length and unit. The error names the
/// first trace that differs from the first one.
pub fn check_aligned(traces: &[TraceSeries]) -> Result<()> {
    let Some(first) = traces.first() else {
        return Ok(());
    };
    for t in &traces[1..] {
        let mismatch = if t.start != first.start {
            Some(format!("starts at {} instead of {}", t.start, first.start))
        } else if t.cadence_secs != first.cadence_secs {
            Some(format!(
                "cadence {} s instead of {} s",
                t.cadence_secs, first.cadence_secs
            ))
        } else if t.len() != first.len() {
            Some(format!("{} samples instead of {}", t.len(), first.len()))
        } else if t.unit != first.unit {
            Some(format!("unit {} instead of {}", t.unit, first.unit))
        } else {
            None
        };
        if let Some(what) = mismatch {
            return Err(Error::Alignment(format!(
                "{} is not aligned with {}: {what}",
                t.location, first.location
            )));
        }
    }
    Ok(())
}

/// Decimates by an integer factor. Power keeps every `factor`-th sample;
/// energy per step is summed over each block so totals are conserved. A
/// trailing partial block is dropped.
pub fn resample(trace: &TraceSeries, factor: usize) -> Result<TraceSeries> {
    if factor < 1 {
        return Err(Error::Domain("resampling factor must be at least 1".into()));
    }
    let cadence = u32::try_from(factor as u64 * trace.cadence_secs as u64)
        .map_err(|_| Error::Domain("resampled cadence overflows".into()))?;
    let blocks = trace.values.chunks_exact(factor);
    let values: Vec<f64> = match trace.unit {
        Unit::PowerMw => blocks.map(|b| b[0]).collect(),
        Unit::EnergyMj | Unit::EnergyUnits => blocks.map(|b| b.iter().sum()).collect(),
    };
    TraceSeries::new(
        trace.location.clone(),
        trace.start,
        cadence,
        values,
        trace.unit,
    )
}

pub fn mj_to_mwh(mj: f64) -> f64 {
    mj / SECONDS_PER_HOUR
}

/// Hours a full battery of `battery_mj` sustains a constant draw of `demand_mw`.
pub fn autonomy_hours(battery_mj: f64, demand_mw: f64) -> f64 {
    battery_mj / demand_mw / SECONDS_PER_HOUR
}
