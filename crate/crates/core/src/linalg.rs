//! Small dense linear-algebra helpers shared by the physics modules.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Eigen-decomposition of a real symmetric matrix.
///
/// Eigenvalues are ascending. Each eigenvector column is normalised and its
/// largest-magnitude component is made positive, so results do not depend on
/// the sign the solver happened to pick.
pub fn sym_eigen(h: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = h.nrows();
    if n == 0 || h.ncols() != n {
        return Err(Error::validation("matrix must be square and non-empty"));
    }
    if h.iter().any(|x| !x.is_finite()) {
        return Err(Error::numeric("non-finite entry in symmetric matrix"));
    }
    let eig = h.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::<f64>::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(i).into_owned();
        fix_phase_real(&mut col);
        vectors.set_column(k, &col);
    }
    Ok((values, vectors))
}

fn fix_phase_real(v: &mut DVector<f64>) {
    let mut best = 0;
    for i in 0..v.len() {
        // Small tolerance so near-ties resolve to the lowest index consistently.
        if v[i].abs() > v[best].abs() * (1.0 + 1e-12) {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.neg_mut();
    }
    let norm = v.norm();
    if norm > 0.0 {
        *v /= norm;
    }
}

/// Minimum-cost perfect matching on a square cost matrix.
///
/// Returns `assign[row] = col`. O(n^3) shortest augmenting path
/// (Jonker-Volgenant style potentials).
pub fn hungarian(cost: &DMatrix<f64>) -> Vec<usize> {
    let n = cost.nrows();
    assert_eq!(n, cost.ncols(), "hungarian needs a square matrix");
    if n == 0 {
        return Vec::new();
    }
    // 1-based arrays with a virtual column 0.
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0usize; n];
    for j in 1..=n {
        if p[j] > 0 {
            assign[p[j] - 1] = j - 1;
        }
    }
    assign
}

/// Eigenpairs of a general complex matrix.
#[derive(Debug, Clone)]
pub struct ComplexEigen {
    pub values: Vec<C64>,
    /// Right eigenvectors as unit-norm columns, same order as `values`.
    pub vectors: DMatrix<C64>,
}

/// Complex Schur decomposition followed by triangular back-substitution.
pub fn complex_eigen(m: &DMatrix<C64>) -> Result<ComplexEigen> {
    let n = m.nrows();
    if n == 0 || m.ncols() != n {
        return Err(Error::validation("matrix must be square and non-empty"));
    }
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::numeric("non-finite entry in complex matrix"));
    }
    let schur = nalgebra::linalg::Schur::try_new(m.clone(), 1e-15, 10_000)
        .ok_or_else(|| Error::numeric("complex Schur decomposition did not converge"))?;
    let (q, t) = schur.unpack();
    let scale = t.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1e-300);
    let tiny = scale * 1e-14;
    let mut x = DMatrix::<C64>::zeros(n, n);
    let mut values = Vec::with_capacity(n);
    for k in 0..n {
        let lam = t[(k, k)];
        values.push(lam);
        x[(k, k)] = C64::new(1.0, 0.0);
        for i in (0..k).rev() {
            let mut acc = C64::new(0.0, 0.0);
            for j in (i + 1)..=k {
                acc += t[(i, j)] * x[(j, k)];
            }
            let mut den = t[(i, i)] - lam;
            if den.norm() < tiny {
                den = C64::new(tiny, 0.0);
            }
            x[(i, k)] = -acc / den;
        }
    }
    let mut vectors = &q * x;
    for k in 0..n {
        let norm = vectors.column(k).norm();
        if norm > 0.0 {
            let mut col = vectors.column_mut(k);
            col /= C64::new(norm, 0.0);
        }
    }
    Ok(ComplexEigen { values, vectors })
}

/// Lift a real matrix into the complex field.
pub fn to_complex(m: &DMatrix<f64>) -> DMatrix<C64> {
    m.map(|x| C64::new(x, 0.0))
}

/// Linear-interpolation percentile of a sample (`q` in percent).
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    if sorted.len() == 1 {
        return sorted[0];
    }
    let pos = (q / 100.0).clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_force_min(cost: &DMatrix<f64>) -> f64 {
        fn rec(cost: &DMatrix<f64>, row: usize, used: &mut Vec<bool>) -> f64 {
            let n = cost.nrows();
            if row == n {
                return 0.0;
            }
            let mut best = f64::INFINITY;
            for c in 0..n {
                if !used[c] {
                    used[c] = true;
                    best = best.min(cost[(row, c)] + rec(cost, row + 1, used));
                    used[c] = false;
                }
            }
            best
        }
        rec(cost, 0, &mut vec![false; cost.nrows()])
    }

    #[test]
    fn hungarian_matches_brute_force() {
        let vals = [
            4.0, 1.0, 3.0, 2.0, 0.0, 5.0, 3.0, 2.0, 2.0, 7.0, 1.0, 6.0, 4.0, 2.0, 5.0, 3.0,
        ];
        let cost = DMatrix::from_row_slice(4, 4, &vals);
        let a = hungarian(&cost);
        let total: f64 = a.iter().enumerate().map(|(r, &c)| cost[(r, c)]).sum();
        assert!((total - brute_force_min(&cost)).abs() < 1e-12);
        let mut seen = a.clone();
        seen.sort();
        assert_eq!(seen, vec![0, 1, 2, 3]);
    }

    #[test]
    fn sym_eigen_sorted_and_phase_fixed() {
        let h = DMatrix::from_row_slice(3, 3, &[2.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 2.0]);
        let (vals, vecs) = sym_eigen(&h).unwrap();
        assert!(vals.windows(2).all(|w| w[0] <= w[1]));
        for k in 0..3 {
            let col = vecs.column(k);
            let imax = col.iamax();
            assert!(col[imax] > 0.0);
            let r = &h * col - col * vals[k];
            assert!(r.norm() < 1e-12);
        }
    }

    #[test]
    fn complex_eigen_reconstructs() {
        let m = DMatrix::from_row_slice(
            3,
            3,
            &[
                C64::new(1.0, -0.1),
                C64::new(0.3, 0.0),
                C64::new(0.0, 0.0),
                C64::new(0.3, 0.0),
                C64::new(1.2, -0.02),
                C64::new(0.1, 0.0),
                C64::new(0.0, 0.0),
                C64::new(0.1, 0.0),
                C64::new(0.7, 0.0),
            ],
        );
        let e = complex_eigen(&m).unwrap();
        for k in 0..3 {
            let v = e.vectors.column(k);
            let r = &m * v - v * e.values[k];
            assert!(r.norm() < 1e-12, "residual {}", r.norm());
        }
    }

    #[test]
    fn percentile_interpolates() {
        let s = [0.0, 1.0, 2.0, 3.0, 4.0];
        assert_eq!(percentile(&s, 50.0), 2.0);
        assert!((percentile(&s, 12.5) - 0.5).abs() < 1e-12);
    }
}
