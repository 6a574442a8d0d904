//! Bare-array normal modes, qubit-mode couplings G_n and participation ratios.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::lattice::{CouplingProfile, DressedSpectrum, LatticeModel};
use crate::linalg::sym_eigen;

/// Normal modes of the photonic block, ascending in frequency. Mode n (1-based
/// in prose) is column n-1 of `d`.
#[derive(Debug, Clone)]
pub struct ModeBasis {
    pub omega: Vec<f64>,
    /// `d[(s, n)]`: amplitude of mode n on site s (0-based both).
    pub d: DMatrix<f64>,
}

impl ModeBasis {
    pub fn from_cavity(h: &DMatrix<f64>) -> Result<Self> {
        let (omega, d) = sym_eigen(h)?;
        Ok(ModeBasis { omega, d })
    }

    pub fn from_model(model: &LatticeModel) -> Result<Self> {
        Self::from_cavity(&model.cavity_hamiltonian())
    }

    pub fn len(&self) -> usize {
        self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }

    /// Delta Omega_n = Omega_n - Omega_{n-1}; entry k is the gap between
    /// modes k and k+1 (0-based).
    pub fn spacings(&self) -> Vec<f64> {
        self.omega.windows(2).map(|w| w[1] - w[0]).collect()
    }
}

/// G_n = sum_s d_{s,n} g_s.
pub fn mode_couplings(profile: &CouplingProfile, basis: &ModeBasis) -> Result<Vec<f64>> {
    let g = profile.dense(basis.d.nrows())?;
    Ok((0..basis.len())
        .map(|n| basis.d.column(n).iter().zip(&g).map(|(d, g)| d * g).sum())
        .collect())
}

#[derive(Debug, Clone)]
pub struct SuperstrongMetrics {
    /// mean(|G_n|, |G_{n-1}|) / Delta Omega_n, one per spacing (N-1 entries).
    pub per_spacing: Vec<f64>,
    /// |G_n| / mean(Delta Omega_n, Delta Omega_{n+1}), one per mode; the end
    /// modes use their single neighbouring spacing.
    pub per_mode: Vec<f64>,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        if num == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        num / den
    }
}

pub fn superstrong_metrics(g: &[f64], omega: &[f64]) -> Result<SuperstrongMetrics> {
    if g.len() != omega.len() || g.len() < 2 {
        return Err(Error::validation("need matching G and Omega with at least two modes"));
    }
    let spacing: Vec<f64> = omega.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    let per_spacing = (0..spacing.len())
        .map(|k| ratio(0.5 * (g[k].abs() + g[k + 1].abs()), spacing[k]))
        .collect();
    let n = g.len();
    let per_mode = (0..n)
        .map(|k| {
            let den = match k {
                0 => spacing[0],
                _ if k == n - 1 => spacing[n - 2],
                _ => 0.5 * (spacing[k - 1] + spacing[k]),
            };
            ratio(g[k].abs(), den)
        })
        .collect();
    Ok(SuperstrongMetrics { per_spacing, per_mode })
}

/// |u_m|^2 along each tracked branch: `result[label][grid_index]`.
pub fn participation_direct(spec: &DressedSpectrum) -> Vec<Vec<f64>> {
    (0..spec.n_modes()).map(|l| spec.tracked_weights(l)).collect()
}

/// d omega~_m / d omega_q along each tracked branch by finite differences:
/// central in the interior, second-order one-sided at the two ends.
pub fn participation_hellmann_feynman(spec: &DressedSpectrum) -> Result<Vec<Vec<f64>>> {
    let x = &spec.grid;
    if x.len() < 3 {
        return Err(Error::validation("finite differences need at least three grid points"));
    }
    Ok((0..spec.n_modes()).map(|l| derivative(x, &spec.tracked_freqs(l))).collect())
}

/// Second-order finite-difference derivative on a possibly non-uniform grid.
pub fn derivative(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut out = vec![0.0; n];
    // Three-point Lagrange derivative at x[j] using nodes i0, i0+1, i0+2.
    let lagrange = |i0: usize, j: usize| -> f64 {
        let (a, b, c) = (x[i0], x[i0 + 1], x[i0 + 2]);
        let t = x[j];
        y[i0] * ((t - b) + (t - c)) / ((a - b) * (a - c))
            + y[i0 + 1] * ((t - a) + (t - c)) / ((b - a) * (b - c))
            + y[i0 + 2] * ((t - a) + (t - b)) / ((c - a) * (c - b))
    };
    for j in 0..n {
        let i0 = j.saturating_sub(1).min(n - 3);
        out[j] = lagrange(i0, j);
    }
    out
}

/// Two passbands and whatever lies between them.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct BandStructure {
    /// 0-based index ranges into the ascending spectrum.
    pub lower: std::ops::Range<usize>,
    pub midgap: std::ops::Range<usize>,
    pub upper: std::ops::Range<usize>,
    /// Upper-band bottom minus lower-band top.
    pub middle_gap: f64,
    pub lower_width: f64,
    pub upper_width: f64,
}

/// Split an ascending spectrum into clusters of modes closer than three
/// median spacings; the two largest clusters are the bands.
pub fn band_structure(omega: &[f64]) -> Result<BandStructure> {
    if omega.len() < 4 {
        return Err(Error::validation("band analysis needs at least four modes"));
    }
    let mut gaps: Vec<f64> = omega.windows(2).map(|w| w[1] - w[0]).collect();
    if gaps.iter().any(|g| *g < 0.0) {
        return Err(Error::validation("spectrum must be ascending"));
    }
    let mut sorted = gaps.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    let mut clusters = vec![0..1];
    for (k, g) in gaps.drain(..).enumerate() {
        if g > 3.0 * median {
            clusters.push(k + 1..k + 2);
        } else {
            clusters.last_mut().unwrap().end = k + 2;
        }
    }
    if clusters.len() < 2 {
        return Err(Error::numeric("spectrum has no gap"));
    }
    let mut by_size: Vec<usize> = (0..clusters.len()).collect();
    by_size.sort_by_key(|&i| std::cmp::Reverse(clusters[i].len()));
    let (a, b) = (by_size[0].min(by_size[1]), by_size[0].max(by_size[1]));
    let lower = clusters[a].clone();
    let upper = clusters[b].clone();
    Ok(BandStructure {
        midgap: lower.end..upper.start,
        middle_gap: omega[upper.start] - omega[lower.end - 1],
        lower_width: omega[lower.end - 1] - omega[lower.start],
        upper_width: omega[upper.end - 1] - omega[upper.start],
        lower,
        upper,
    })
}

/// Sorted dressed pair (m, m+1) at the grid point where |u_m|^2 |u_{m+1}|^2
/// peaks, with the spacing there.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct PairMaximum {
    /// 0-based sorted index of the lower member.
    pub lower: usize,
    pub omega_q: f64,
    pub spacing: f64,
    pub weight: f64,
}

pub fn interaction_maxima(spec: &DressedSpectrum) -> Vec<PairMaximum> {
    let dim = spec.n_modes();
    (0..dim.saturating_sub(1))
        .map(|m| {
            let (k, weight) = spec
                .points
                .iter()
                .map(|p| p.atomic_weight(m) * p.atomic_weight(m + 1))
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap();
            let p = &spec.points[k];
            PairMaximum { lower: m, omega_q: p.omega_q, spacing: p.freqs[m + 1] - p.freqs[m], weight }
        })
        .collect()
}
