//! Perron root of non-negative irreducible matrices with a positive diagonal.
//!
//! Power iteration is bracketed by the Collatz–Wielandt bounds
//! `min_i (Mx)_i / x_i ≤ ρ(M) ≤ max_i (Mx)_i / x_i`, valid for every positive
//! `x`. The iteration normally stops once the bracket is tight, so the
//! returned root carries a certified relative error. For reducible input
//! (e.g. a diagonal matrix) the bracket need not close; there the iteration
//! also stops once the max-norm growth factor has stopped changing, and the
//! reported `gap` stays wide.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::matrix::SparseMatrix;
use crate::{Error, Result};

pub const MAX_ITERATIONS: usize = 100_000;

/// Target relative width of the Collatz–Wielandt bracket.
pub const BRACKET_TOL: f64 = 1e-13;

/// Widest bracket still accepted once rounding stalls the iteration.
pub const STALL_TOL: f64 = 1e-11;

/// Relative change of the growth factor treated as stable.
const STABLE_TOL: f64 = 1e-15;
const STABLE_RUN: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct PerronRoot {
    pub rho: f64,
    /// Positive right eigenvector, normalised to sum to one.
    pub vector: Vec<f64>,
    pub iterations: usize,
    /// Final relative bracket width.
    pub gap: f64,
}

pub fn spectral_radius(m: &SparseMatrix) -> Result<PerronRoot> {
    let n = m.dim();
    if n == 0 {
        return Err(Error::Domain("empty matrix".into()));
    }
    for i in 0..n {
        if !(m.get(i, i) > 0.0) {
            return Err(Error::Domain(format!("diagonal entry {i} is not positive")));
        }
        if let Some((j, v)) = m.row(i).find(|&(_, v)| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::Domain(format!(
                "entry ({i},{j}) = {v} is not a finite non-negative number"
            )));
        }
    }

    let mut x = vec![1.0; n];
    let mut y = vec![0.0; n];
    let mut best_gap = f64::INFINITY;
    let mut since_improvement = 0;
    let mut prev_top = f64::NAN;
    let mut stable = 0;
    for it in 1..=MAX_ITERATIONS {
        m.mul_vec(&x, &mut y);
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        let mut top = 0.0f64;
        for (yi, xi) in y.iter().zip(&x) {
            let ratio = yi / xi;
            lo = lo.min(ratio);
            hi = hi.max(ratio);
            top = top.max(*yi);
        }
        if !(hi > 0.0) || !hi.is_finite() || !(lo > 0.0) {
            return Err(Error::Numerical {
                what: "Perron iteration (matrix not irreducible?)",
                residual: hi - lo,
            });
        }
        let gap = (hi - lo) / hi;
        if gap < best_gap * 0.999 {
            best_gap = gap;
            since_improvement = 0;
        } else {
            since_improvement += 1;
        }
        for (xi, yi) in x.iter_mut().zip(&y) {
            *xi = yi / top;
        }
        if (top - prev_top).abs() <= STABLE_TOL * top {
            stable += 1;
        } else {
            stable = 0;
        }
        prev_top = top;
        let stalled = since_improvement > 64 && gap <= STALL_TOL;
        let certified = gap <= BRACKET_TOL || stalled;
        if certified || stable >= STABLE_RUN {
            let total: f64 = x.iter().sum();
            x.iter_mut().for_each(|v| *v /= total);
            return Ok(PerronRoot {
                rho: if certified { 0.5 * (lo + hi) } else { top },
                vector: x,
                iterations: it,
                gap,
            });
        }
    }
    Err(Error::Numerical {
        what: "Perron iteration did not converge",
        residual: best_gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn radius(rows: &[Vec<f64>]) -> f64 {
        spectral_radius(&SparseMatrix::from_dense(rows).unwrap())
            .unwrap()
            .rho
    }

    #[test]
    fn diagonal() {
        assert!((radius(&[vec![2.0, 0.0], vec![0.0, 3.0]]) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn tilted_e2_at_root_has_unit_radius() {
        let a = 1.5;
        let rows = [vec![0.4 * a, 0.6 / a], vec![0.4 * a, 0.6 / a]];
        assert!((radius(&rows) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn stochastic_matrices_have_unit_radius() {
        let rows = [
            vec![0.5, 0.3, 0.2],
            vec![0.1, 0.8, 0.1],
            vec![0.25, 0.25, 0.5],
        ];
        assert!((radius(&rows) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn matches_closed_form_2x2() {
        // Eigenvalues of [[a, b], [c, d]]: (a + d)/2 ± sqrt(((a - d)/2)^2 + bc).
        let (a, b, c, d) = (0.7, 2.0, 0.3, 1.1);
        let expected = 0.5 * (a + d) + libm::sqrt(0.25 * (a - d) * (a - d) + b * c);
        let got = radius(&[vec![a, b], vec![c, d]]);
        assert!(((got - expected) / expected).abs() < 1e-12);
    }

    #[test]
    fn rejects_zero_diagonal_and_negative_entries() {
        let m = SparseMatrix::from_dense(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert!(matches!(spectral_radius(&m), Err(Error::Domain(_))));
        let m = SparseMatrix::from_dense(&[vec![1.0, -1.0], vec![1.0, 1.0]]).unwrap();
        assert!(matches!(spectral_radius(&m), Err(Error::Domain(_))));
    }

    #[test]
    fn eigenvector_is_positive_and_normalised() {
        let root =
            spectral_radius(&SparseMatrix::from_dense(&[vec![0.7, 2.0], vec![0.3, 1.1]]).unwrap())
                .unwrap();
        assert!(root.vector.iter().all(|&v| v > 0.0));
        assert!((root.vector.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }
}
