use alloc::vec::Vec;

/// Solves `A x = b` in place by Gaussian elimination with partial pivoting.
/// `a` is row-major `n × n`. Returns `None` for a numerically singular system.
pub(crate) fn solve_dense(mut a: Vec<f64>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    debug_assert_eq!(a.len(), n * n);
    for col in 0..n {
        let (pivot, max) =
            (col..n)
                .map(|r| (r, a[r * n + col].abs()))
                .fold(
                    (col, -1.0),
                    |best, cur| if cur.1 > best.1 { cur } else { best },
                );
        if !(max > 1e-300) {
            return None;
        }
        if pivot != col {
            for k in 0..n {
                a.swap(col * n + k, pivot * n + k);
            }
            b.swap(col, pivot);
        }
        let diag = a[col * n + col];
        for r in col + 1..n {
            let factor = a[r * n + col] / diag;
            if factor != 0.0 {
                for k in col..n {
                    a[r * n + k] -= factor * a[col * n + k];
                }
                b[r] -= factor * b[col];
            }
        }
    }
    for col in (0..n).rev() {
        let tail: f64 = (col + 1..n).map(|k| a[col * n + k] * b[k]).sum();
        b[col] = (b[col] - tail) / a[col * n + col];
    }
    Some(b)
}

/// Stationary law of an irreducible stochastic matrix given in banded form
/// by Grassmann–Taksar–Heyman state reduction.
///
/// `band` holds rows of width `2w + 1`, entry `(i, j)` at
/// `i * (2w + 1) + (j + w - i)`. Diagonal entries are never read. The
/// reduction is subtraction-free, so small probabilities keep full relative
/// accuracy, and fill-in stays inside the band.
pub(crate) fn gth_banded(band: &mut [f64], n: usize, w: usize) -> Option<Vec<f64>> {
    let width = 2 * w + 1;
    let idx = |i: usize, j: usize| i * width + (j + w - i);
    for k in (1..n).rev() {
        let lo = k.saturating_sub(w);
        let s: f64 = (lo..k).map(|j| band[idx(k, j)]).sum();
        if !(s > 0.0) {
            return None;
        }
        for i in lo..k {
            band[idx(i, k)] /= s;
        }
        for i in lo..k {
            let aik = band[idx(i, k)];
            if aik == 0.0 {
                continue;
            }
            for j in lo..k {
                if j != i {
                    let akj = band[idx(k, j)];
                    if akj != 0.0 {
                        band[idx(i, j)] += aik * akj;
                    }
                }
            }
        }
    }
    let mut pi = Vec::with_capacity(n);
    pi.push(1.0);
    for k in 1..n {
        let lo = k.saturating_sub(w);
        let v: f64 = (lo..k).map(|i| pi[i] * band[idx(i, k)]).sum();
        pi.push(v);
    }
    let total: f64 = pi.iter().sum();
    if !(total.is_finite() && total > 0.0) {
        return None;
    }
    pi.iter_mut().for_each(|p| *p /= total);
    Some(pi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn solves_small_system() {
        let x = solve_dense(vec![2.0, 1.0, 1.0, 3.0], vec![3.0, 5.0]).unwrap();
        assert!((x[0] - 0.8).abs() < 1e-14);
        assert!((x[1] - 1.4).abs() < 1e-14);
    }

    #[test]
    fn singular_detected() {
        assert!(solve_dense(vec![1.0, 2.0, 2.0, 4.0], vec![1.0, 2.0]).is_none());
    }

    #[test]
    fn gth_birth_death() {
        // Reflecting walk on {0,1,2}: up 0.6, down 0.4. Detailed balance gives
        // π ∝ (1, 1.5, 2.25).
        let w = 1;
        let n = 3;
        let width = 2 * w + 1;
        let mut band = vec![0.0; n * width];
        let mut set = |i: usize, j: usize, v: f64| band[i * width + (j + w - i)] = v;
        set(0, 0, 0.4);
        set(0, 1, 0.6);
        set(1, 0, 0.4);
        set(1, 2, 0.6);
        set(2, 1, 0.4);
        set(2, 2, 0.6);
        let pi = gth_banded(&mut band, n, w).unwrap();
        let z = 1.0 + 1.5 + 2.25;
        for (p, e) in pi.iter().zip([1.0 / z, 1.5 / z, 2.25 / z]) {
            assert!((p - e).abs() < 1e-15);
        }
    }
}
