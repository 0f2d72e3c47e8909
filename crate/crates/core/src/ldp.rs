//! Scaled cumulant generating function `Λ(θ)` of the negated net generation
//! and the LOLP decay rate `λ = sup{θ > 0 : Λ(θ) < 0}`.
//!
//! `Λ(θ) = log ρ(M(θ))` where `M(θ)(s, s') = P*(s, s') · exp(−θ r(s))` and
//! `P*` is the time-reversed transition matrix. `Λ` is convex with
//! `Λ(0) = 0` and `Λ'(0) = −Δ`, so for positive drift it has exactly one
//! positive root, which is `λ`.

use alloc::vec::Vec;

use crate::chain::{drift, product_chain, time_reverse, UserModel};
use crate::matrix::SparseMatrix;
use crate::perron::spectral_radius;
use crate::{Error, Result, DEFAULT_STATE_CAP};

/// Bisection stops once the bracket is this narrow relative to `max(1, θ)`.
pub const ROOT_TOL: f64 = 1e-12;

/// Largest `θ · max|r|` the bracketing search will try.
pub const MAX_TILT_EXPONENT: f64 = 700.0;

/// Row factors are floored here so that extreme tilts do not underflow
/// rows to zero and break irreducibility; the floor shifts `ρ` by a
/// relative amount of this order.
const MIN_ROW_FACTOR: f64 = 1e-150;

/// `M(θ) = e^{log_scale} · scaled`. Rows are normalised so that the largest
/// row factor is one, which keeps the Perron iteration in range for any
/// tilt.
#[derive(Debug, Clone, PartialEq)]
pub struct TiltedMatrix {
    pub scaled: SparseMatrix,
    pub log_scale: f64,
}

impl TiltedMatrix {
    pub fn entry(&self, s: usize, s2: usize) -> f64 {
        self.scaled.get(s, s2) * libm::exp(self.log_scale)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let factor = libm::exp(self.log_scale);
        self.scaled
            .to_dense()
            .into_iter()
            .map(|row| row.into_iter().map(|v| v * factor).collect())
            .collect()
    }
}

/// `Λ` is finite for every real tilt; negative tilts are accepted so that
/// derivatives at zero can be taken by central differences.
fn check_theta(theta: f64) -> Result<()> {
    if !theta.is_finite() {
        return Err(Error::Domain(alloc::format!(
            "tilt θ = {theta} must be finite"
        )));
    }
    Ok(())
}

fn tilt(reversed: &UserModel, theta: f64) -> TiltedMatrix {
    let exponents: Vec<f64> = reversed
        .net_gen()
        .iter()
        .map(|&r| -theta * r as f64)
        .collect();
    let log_scale = exponents.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let factors: Vec<f64> = exponents
        .iter()
        .map(|e| libm::exp(e - log_scale).max(MIN_ROW_FACTOR))
        .collect();
    TiltedMatrix {
        scaled: reversed.transition().scale_rows(&factors),
        log_scale,
    }
}

pub fn tilted_matrix(model: &UserModel, theta: f64) -> Result<TiltedMatrix> {
    check_theta(theta)?;
    Ok(tilt(&time_reverse(model), theta))
}

/// `Λ(θ)` evaluator that reuses the time reversal across calls.
#[derive(Debug, Clone)]
pub struct Cgf {
    reversed: UserModel,
}

impl Cgf {
    pub fn new(model: &UserModel) -> Self {
        Cgf {
            reversed: time_reverse(model),
        }
    }

    pub fn eval(&self, theta: f64) -> Result<f64> {
        check_theta(theta)?;
        if theta == 0.0 {
            return Ok(0.0);
        }
        let m = tilt(&self.reversed, theta);
        let root = spectral_radius(&m.scaled)?;
        Ok(m.log_scale + libm::log(root.rho))
    }
}

pub fn scaled_cgf(model: &UserModel, theta: f64) -> Result<f64> {
    Cgf::new(model).eval(theta)
}

/// Samples of `Λ` on a grid of tilts.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct CgfCurve {
    pub points: Vec<(f64, f64)>,
}

impl CgfCurve {
    pub fn sample(model: &UserModel, thetas: &[f64]) -> Result<Self> {
        let cgf = Cgf::new(model);
        let points = thetas
            .iter()
            .map(|&t| cgf.eval(t).map(|v| (t, v)))
            .collect::<Result<_>>()?;
        Ok(CgfCurve { points })
    }

    /// Checks `Λ((a+b)/2) ≤ (Λ(a)+Λ(b))/2 + tol` for every sampled pair whose
    /// midpoint was also sampled.
    pub fn is_midpoint_convex(&self, tol: f64) -> bool {
        let lookup = |t: f64| {
            self.points
                .iter()
                .find(|(x, _)| (x - t).abs() <= 1e-12 * t.abs().max(1.0))
                .map(|p| p.1)
        };
        for (i, &(a, fa)) in self.points.iter().enumerate() {
            for &(b, fb) in &self.points[i + 1..] {
                if let Some(fm) = lookup(0.5 * (a + b)) {
                    if fm > 0.5 * (fa + fb) + tol {
                        return false;
                    }
                }
            }
        }
        true
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct DecayResult {
    /// Decay rate per energy unit.
    pub lambda: f64,
    /// Final bisection bracket `(θ_lo, θ_hi)` with `Λ(θ_lo) < 0 < Λ(θ_hi)`.
    pub bracket: (f64, f64),
    /// CGF evaluations spent bracketing and bisecting.
    pub iterations: usize,
    /// `|Λ(λ)|`.
    pub residual: f64,
}

impl DecayResult {
    /// Large-deviations battery estimate `log(1/ε) / λ`.
    pub fn battery_estimate(&self, epsilon: f64) -> f64 {
        libm::log(1.0 / epsilon) / self.lambda
    }
}

/// Positive root of `Λ` for a model with positive drift.
pub fn decay_rate(model: &UserModel) -> Result<DecayResult> {
    let delta = drift(model);
    if !(delta > 0.0) {
        return Err(Error::Domain(alloc::format!(
            "drift {delta} is not positive; the LOLP does not decay"
        )));
    }
    let cgf = Cgf::new(model);
    let max_r = model.max_abs_reward() as f64;
    let mut evals = 0usize;
    let mut eval = |t: f64| {
        evals += 1;
        cgf.eval(t)
    };

    let var = model.reward_variance();
    let start = if var > 0.0 {
        delta / var
    } else {
        1.0 / max_r.max(1.0)
    };

    let (mut lo, mut hi);
    let at_start = eval(start)?;
    if at_start < 0.0 {
        lo = start;
        hi = 2.0 * start;
        loop {
            if hi * max_r > MAX_TILT_EXPONENT {
                return Err(Error::Numerical {
                    what: "decay-rate bracketing exceeded the tilt cap",
                    residual: hi,
                });
            }
            if eval(hi)? > 0.0 {
                break;
            }
            lo = hi;
            hi *= 2.0;
        }
    } else if at_start > 0.0 {
        hi = start;
        lo = 0.5 * start;
        let mut halvings = 0;
        while eval(lo)? >= 0.0 {
            hi = lo;
            lo *= 0.5;
            halvings += 1;
            if halvings > 200 {
                return Err(Error::Numerical {
                    what: "decay-rate bracketing found no negative CGF value",
                    residual: lo,
                });
            }
        }
    } else {
        return Ok(DecayResult {
            lambda: start,
            bracket: (start, start),
            iterations: evals,
            residual: 0.0,
        });
    }

    while hi - lo > ROOT_TOL * lo.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if eval(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let lambda = 0.5 * (lo + hi);
    let residual = eval(lambda)?.abs();
    Ok(DecayResult {
        lambda,
        bracket: (lo, hi),
        iterations: evals,
        residual,
    })
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct DecayBound {
    pub joint: DecayResult,
    pub per_user: Vec<DecayResult>,
    pub min_user_lambda: f64,
    /// `λ_joint ≥ min_i λ_i − 1e-9`.
    pub bound_satisfied: bool,
    /// `λ_joint` exceeds the slowest user's rate by more than the root
    /// tolerance.
    pub strict: bool,
}

/// Joint decay rate of independent users against their standalone rates.
pub fn decay_rate_bound(users: &[UserModel]) -> Result<DecayBound> {
    let per_user = users.iter().map(decay_rate).collect::<Result<Vec<_>>>()?;
    let joint = if users.len() == 1 {
        per_user[0].clone()
    } else {
        decay_rate(product_chain(users, DEFAULT_STATE_CAP)?.model())?
    };
    let min_user_lambda = per_user
        .iter()
        .map(|d| d.lambda)
        .fold(f64::INFINITY, f64::min);
    let slack = 1e-9;
    Ok(DecayBound {
        bound_satisfied: joint.lambda >= min_user_lambda - slack,
        strict: joint.lambda > min_user_lambda + slack,
        joint,
        per_user,
        min_user_lambda,
    })
}
