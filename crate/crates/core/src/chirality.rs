//! Chiral (one-sided) localisation of dressed modes about the coupling point.
//!
//! Sites are 1-based. For a qubit on site `site` of a homogeneous chain the
//! dressed state vanishes on `site` itself whenever omega_q hits an eigenvalue
//! of the left segment 1..site-1 or the right segment site+1..N, giving
//! ladders omega_0 + 2J cos(m pi / site), m = 1..site-1, and
//! omega_0 + 2J cos(p pi / (N - site + 1)), p = 1..N-site.
//! (Counting sites from 0 with s0 = site - 1 gives the familiar
//! cos(m pi/(s0+1)) and cos(p pi/(N-s0)) forms.)

use crate::error::{Error, Result};
use crate::lattice::{CouplingProfile, DressedSpectrum, LatticeModel, TightBindingParams};
use crate::modes::ModeBasis;

#[derive(Debug, Clone, PartialEq)]
pub struct Ladders {
    pub left: Vec<f64>,
    pub right: Vec<f64>,
}

impl Ladders {
    pub fn all(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.left.iter().chain(&self.right).copied().collect();
        v.sort_by(f64::total_cmp);
        v
    }
}

pub fn localized_frequencies(n: usize, site: usize, j: f64, omega0: f64) -> Result<Ladders> {
    if site == 0 || site >= n {
        return Err(Error::validation(format!("coupling site must satisfy 1 <= site < N, got {site}")));
    }
    let pi = std::f64::consts::PI;
    let left = (1..site).map(|m| omega0 + 2.0 * j * (m as f64 * pi / site as f64).cos()).collect();
    let right = (1..=n - site)
        .map(|p| omega0 + 2.0 * j * (p as f64 * pi / (n - site + 1) as f64).cos())
        .collect();
    Ok(Ladders { left, right })
}

/// Homogeneous chain with on-site omega0 and hopping j.
pub fn homogeneous_chain(omega0: f64, j: f64) -> TightBindingParams {
    TightBindingParams { omega_r: omega0, j1: j, j2: j, j_long: vec![], z_r: None, c_sigma: None }
}

/// Q = (sum_{s <= site} |c_s|^2 - sum_{s > site} |c_s|^2) / sum_s |c_s|^2 over
/// the photonic amplitudes `c` (any trailing qubit entry must be excluded).
pub fn chirality_quantifier(c: &[f64], site: usize) -> Result<f64> {
    if site == 0 || site > c.len() {
        return Err(Error::validation("reference site outside the array"));
    }
    let left: f64 = c[..site].iter().map(|x| x * x).sum();
    let right: f64 = c[site..].iter().map(|x| x * x).sum();
    let total = left + right;
    if total == 0.0 {
        return Err(Error::numeric("state has no photonic weight"));
    }
    Ok((left - right) / total)
}

/// Q of every tracked branch at every grid point: `result[label][k]`.
pub fn chirality_map(spec: &DressedSpectrum, site: usize) -> Result<Vec<Vec<f64>>> {
    let n_sites = spec.n_modes() - 1;
    (0..spec.n_modes())
        .map(|l| {
            spec.points
                .iter()
                .zip(&spec.branch)
                .map(|(p, b)| {
                    let col = p.vectors.column(b[l]);
                    chirality_quantifier(&col.as_slice()[..n_sites], site)
                })
                .collect()
        })
        .collect()
}

/// Distance to a bath pole below which the Green's function is rejected.
pub const POLE_GUARD: f64 = 1e-6;

/// Resolvent of the bare array, G_B(z) = sum_n |phi_n><phi_n| / (z - Omega_n).
#[derive(Debug, Clone)]
pub struct BathGreen<'a> {
    pub basis: &'a ModeBasis,
}

impl<'a> BathGreen<'a> {
    pub fn new(basis: &'a ModeBasis) -> Self {
        BathGreen { basis }
    }

    /// <a|G_B(z)|b> for real z and real site vectors a, b.
    pub fn element(&self, a: &[f64], b: &[f64], z: f64) -> Result<f64> {
        let d = &self.basis.d;
        let mut acc = 0.0;
        for (n, &om) in self.basis.omega.iter().enumerate() {
            if (z - om).abs() < POLE_GUARD {
                return Err(Error::numeric(format!(
                    "frequency {z} is within {POLE_GUARD} of bath pole {om} (mode {})",
                    n + 1
                )));
            }
            let col = d.column(n);
            let pa: f64 = col.iter().zip(a).map(|(x, y)| x * y).sum();
            let pb: f64 = col.iter().zip(b).map(|(x, y)| x * y).sum();
            acc += pa * pb / (z - om);
        }
        Ok(acc)
    }
}

/// Normalised effective cavity |chi> = sum_s g_s |s> / g_bar and g_bar.
pub fn effective_cavity(profile: &CouplingProfile, n: usize) -> Result<(Vec<f64>, f64)> {
    let g = profile.dense(n)?;
    let g_bar = profile.g_bar();
    if g_bar == 0.0 {
        return Err(Error::validation("coupling profile is identically zero"));
    }
    Ok((g.iter().map(|x| x / g_bar).collect(), g_bar))
}

/// Bare qubit frequency that places a dressed level at `omega_bs`:
/// omega_q = omega_bs - g_bar^2 <chi|G_B(omega_bs)|chi>.
pub fn giant_atom_qubit_frequency(
    basis: &ModeBasis,
    profile: &CouplingProfile,
    omega_bs: f64,
) -> Result<f64> {
    let (chi, g_bar) = effective_cavity(profile, basis.d.nrows())?;
    let gb = BathGreen::new(basis).element(&chi, &chi, omega_bs)?;
    Ok(omega_bs - g_bar * g_bar * gb)
}

/// Dressed-mode localisation found near one ladder frequency.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ChiralPeak {
    pub ladder: f64,
    /// -1 for the left ladder, +1 for the right.
    pub side: i8,
    /// Tracked label with the largest |Q| around the ladder frequency.
    pub label: usize,
    /// Grid argmax of |Q| for that label between the neighbouring ladder
    /// frequencies.
    pub grid_omega: f64,
    pub offset_steps: f64,
    /// |Q| after golden-section refinement around the grid argmax.
    pub q_max: f64,
    pub omega_refined: f64,
}

fn q_near(model: &LatticeModel, omega_q: f64, reference: &[f64], site: usize) -> Result<f64> {
    let p = model.diagonalize(omega_q)?;
    let best = (0..p.dim())
        .max_by(|&a, &b| {
            let oa: f64 = p.vectors.column(a).iter().zip(reference).map(|(x, y)| x * y).sum();
            let ob: f64 = p.vectors.column(b).iter().zip(reference).map(|(x, y)| x * y).sum();
            oa.abs().total_cmp(&ob.abs())
        })
        .unwrap();
    let col = p.vectors.column(best);
    chirality_quantifier(&col.as_slice()[..model.n], site)
}

/// Locate the |Q| maximum belonging to every ladder frequency on a uniform
/// sweep of `model`, then refine it off-grid.
pub fn chiral_peaks(model: &LatticeModel, spec: &DressedSpectrum, site: usize, ladders: &Ladders) -> Result<Vec<ChiralPeak>> {
    let grid = &spec.grid;
    if grid.len() < 3 {
        return Err(Error::validation("chirality sweep needs at least three points"));
    }
    let step = (grid[grid.len() - 1] - grid[0]) / (grid.len() - 1) as f64;
    let q = chirality_map(spec, site)?;
    let mut all: Vec<(f64, i8)> =
        ladders.left.iter().map(|&w| (w, -1)).chain(ladders.right.iter().map(|&w| (w, 1))).collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let nearest = |w: f64| -> usize {
        (0..grid.len()).min_by(|&a, &b| (grid[a] - w).abs().total_cmp(&(grid[b] - w).abs())).unwrap()
    };
    let mut out = Vec::with_capacity(all.len());
    for (i, &(ladder, side)) in all.iter().enumerate() {
        let lo_w = if i > 0 { 0.5 * (all[i - 1].0 + ladder) } else { grid[0] };
        let hi_w = if i + 1 < all.len() { 0.5 * (all[i + 1].0 + ladder) } else { grid[grid.len() - 1] };
        let k0 = nearest(ladder);
        let near = k0.saturating_sub(2)..(k0 + 3).min(grid.len());
        let label = (0..q.len())
            .max_by(|&a, &b| {
                let qa = near.clone().map(|k| q[a][k].abs()).fold(0.0, f64::max);
                let qb = near.clone().map(|k| q[b][k].abs()).fold(0.0, f64::max);
                qa.total_cmp(&qb)
            })
            .unwrap();
        let k = (0..grid.len())
            .filter(|&k| grid[k] >= lo_w && grid[k] <= hi_w)
            .max_by(|&a, &b| q[label][a].abs().total_cmp(&q[label][b].abs()))
            .unwrap_or(k0);
        let reference: Vec<f64> = spec.points[k].vectors.column(spec.branch[k][label]).iter().copied().collect();
        // Golden section on |Q| over one grid step either side.
        let r = (5f64.sqrt() - 1.0) / 2.0;
        let (mut a, mut b) = (grid[k] - step, grid[k] + step);
        let mut x1 = b - r * (b - a);
        let mut x2 = a + r * (b - a);
        let mut f1 = q_near(model, x1, &reference, site)?.abs();
        let mut f2 = q_near(model, x2, &reference, site)?.abs();
        for _ in 0..80 {
            if f1 < f2 {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + r * (b - a);
                f2 = q_near(model, x2, &reference, site)?.abs();
            } else {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - r * (b - a);
                f1 = q_near(model, x1, &reference, site)?.abs();
            }
        }
        let (omega_refined, q_max) = if f1 > f2 { (x1, f1) } else { (x2, f2) };
        let q_max = q_max.max(q[label][k].abs());
        out.push(ChiralPeak {
            ladder,
            side,
            label,
            grid_omega: grid[k],
            offset_steps: (grid[k] - ladder).abs() / step,
            q_max,
            omega_refined,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const J: f64 = 0.25;

    #[test]
    fn ladder_sizes() {
        let l = localized_frequencies(20, 11, J, 28.0 * J).unwrap();
        assert_eq!((l.left.len(), l.right.len()), (10, 9));
        assert!(localized_frequencies(20, 20, J, 7.0).is_err());
        assert!(localized_frequencies(20, 0, J, 7.0).is_err());
    }

    #[test]
    fn small_atom_node_condition() {
        // <site|G_B|site> vanishes on the ladder, so the dressed level equals
        // the bare qubit frequency there.
        let n = 20;
        let site = 11;
        let tb = homogeneous_chain(7.0, J);
        let profile = CouplingProfile::single(site, 0.3).unwrap();
        let m = LatticeModel::new(n, tb, profile.clone(), None).unwrap();
        let basis = ModeBasis::from_model(&m).unwrap();
        let mut e = vec![0.0; n];
        e[site - 1] = 1.0;
        let green = BathGreen::new(&basis);
        for w in localized_frequencies(n, site, J, 7.0).unwrap().all() {
            assert!(green.element(&e, &e, w).unwrap().abs() < 1e-10);
            let wq = giant_atom_qubit_frequency(&basis, &profile, w).unwrap();
            assert!((wq - w).abs() < 1e-10);
        }
    }

    #[test]
    fn quantifier_sign_and_range() {
        assert_eq!(chirality_quantifier(&[1.0, 0.0, 0.0], 1).unwrap(), 1.0);
        assert_eq!(chirality_quantifier(&[0.0, 0.0, 1.0], 1).unwrap(), -1.0);
        assert_eq!(chirality_quantifier(&[1.0, 0.0, 1.0], 2).unwrap(), 0.0);
        assert!(chirality_quantifier(&[0.0, 0.0], 1).is_err());
    }

    #[test]
    fn pole_is_rejected() {
        let m = LatticeModel::new(
            6,
            homogeneous_chain(7.0, J),
            CouplingProfile::single(2, 0.1).unwrap(),
            None,
        )
        .unwrap();
        let basis = ModeBasis::from_model(&m).unwrap();
        let e = vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let pole = basis.omega[2];
        assert!(matches!(BathGreen::new(&basis).element(&e, &e, pole), Err(Error::Numeric(_))));
    }
}
