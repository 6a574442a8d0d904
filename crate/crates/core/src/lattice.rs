//! Tight-binding single-excitation Hamiltonian of the array plus the
//! multi-point coupled transmon, and dressed-spectrum sweeps.
//!
//! Index convention: sites are 1-based in the public API (1..=N); in matrices
//! site s sits at row s-1 and the qubit occupies the last row, N.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{hungarian, sym_eigen};

/// Transmon with a SQUID loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QubitParams {
    pub e_j0: f64,
    pub e_c: f64,
    /// Flux in units of the flux quantum.
    pub flux: f64,
}

impl QubitParams {
    pub fn table_device() -> Self {
        QubitParams { e_j0: 36.39, e_c: 0.318, flux: 0.0 }
    }

    pub fn max_frequency(&self) -> f64 {
        (8.0 * self.e_c * self.e_j0).sqrt() - self.e_c
    }

    /// Flux (principal branch, 0..0.5) that puts the qubit at `omega_q`.
    pub fn flux_for_frequency(&self, omega_q: f64) -> Result<f64> {
        let top = self.max_frequency();
        if !(omega_q > -self.e_c && omega_q <= top) {
            return Err(Error::validation(format!(
                "qubit frequency {omega_q} outside the tunable range (.., {top:.4}]"
            )));
        }
        let c = (omega_q + self.e_c).powi(2) / (8.0 * self.e_c * self.e_j0);
        Ok(c.clamp(0.0, 1.0).acos() / std::f64::consts::PI)
    }
}

/// Below this |cos(pi Phi)| the transmon expression is not usable.
const FLUX_NODE_TOL: f64 = 1e-9;

/// omega_q = sqrt(8 E_C E_J0 |cos(pi Phi)|) - E_C.
pub fn qubit_frequency(q: &QubitParams) -> Result<f64> {
    if !(q.e_j0 > 0.0 && q.e_c > 0.0) {
        return Err(Error::validation("E_J0 and E_C must be positive"));
    }
    if q.e_j0 / q.e_c < 20.0 {
        log::warn!("E_J/E_C = {:.1} is outside the transmon regime", q.e_j0 / q.e_c);
    }
    let c = (std::f64::consts::PI * q.flux).cos().abs();
    if c < FLUX_NODE_TOL {
        return Err(Error::numeric(format!(
            "flux {} sits on a node of cos(pi Phi); frequency undefined",
            q.flux
        )));
    }
    let w = (8.0 * q.e_c * q.e_j0 * c).sqrt() - q.e_c;
    if w <= 0.0 {
        return Err(Error::numeric(format!("non-positive qubit frequency at flux {}", q.flux)));
    }
    Ok(w)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TightBindingParams {
    pub omega_r: f64,
    pub j1: f64,
    pub j2: f64,
    /// Hopping at distance q = 2, 3, ... (entry k is q = k + 2).
    pub j_long: Vec<f64>,
    pub z_r: Option<f64>,
    pub c_sigma: Option<f64>,
}

impl TightBindingParams {
    /// Fitted parameters of the 44-site device.
    pub fn table_device() -> Self {
        TightBindingParams {
            omega_r: 7.749,
            j1: 0.2588,
            j2: 0.3705,
            j_long: vec![0.0475, 0.0127, 0.00519, 0.0021],
            z_r: Some(789.0),
            c_sigma: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.omega_r, self.j1, self.j2].into_iter().chain(self.j_long.iter().copied());
        if all.clone().any(|v| !v.is_finite()) {
            return Err(Error::validation("tight-binding parameters must be finite"));
        }
        if self.omega_r <= 0.0 {
            return Err(Error::validation("omega_r must be positive"));
        }
        Ok(())
    }

    /// Hopping between 0-based sites i and j.
    pub fn hopping(&self, i: usize, j: usize) -> f64 {
        let d = i.abs_diff(j);
        match d {
            0 => 0.0,
            1 => {
                if i.min(j) % 2 == 0 {
                    self.j1
                } else {
                    self.j2
                }
            }
            _ => self.j_long.get(d - 2).copied().unwrap_or(0.0),
        }
    }
}

/// Qubit-to-site couplings g_s on a contiguous window of sites.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingProfile {
    /// First coupled site, 1-based.
    pub start: usize,
    pub g: Vec<f64>,
}

impl CouplingProfile {
    /// Seven-site profile of the device: a Gaussian envelope centred at site
    /// 22.4 (sigma 1.5 sites), deliberately off the array's inversion centre.
    pub fn table_device() -> Self {
        CouplingProfile {
            start: 19,
            g: vec![0.0199, 0.0723, 0.1682, 0.2509, 0.2400, 0.1472, 0.0579],
        }
    }

    pub fn new(start: usize, g: Vec<f64>) -> Result<Self> {
        if start == 0 {
            return Err(Error::validation("coupling sites are 1-based"));
        }
        if g.is_empty() || g.iter().any(|x| !x.is_finite()) {
            return Err(Error::validation("coupling profile must be non-empty and finite"));
        }
        Ok(CouplingProfile { start, g })
    }

    pub fn from_map(map: &BTreeMap<usize, f64>) -> Result<Self> {
        let (&first, _) = map
            .iter()
            .next()
            .ok_or_else(|| Error::validation("empty coupling profile"))?;
        let (&last, _) = map.iter().next_back().unwrap();
        if last - first + 1 != map.len() {
            return Err(Error::validation("coupled sites must form a contiguous window"));
        }
        Self::new(first, map.values().copied().collect())
    }

    pub fn single(site: usize, g: f64) -> Result<Self> {
        Self::new(site, vec![g])
    }

    /// Truncated Gaussian of `width` sites around `center`, scaled to `g_bar`.
    pub fn truncated_gaussian(center: usize, width: usize, sigma: f64, g_bar: f64) -> Result<Self> {
        if width == 0 || width % 2 == 0 || center <= width / 2 {
            return Err(Error::validation("gaussian window must be odd and start at site >= 1"));
        }
        let half = (width / 2) as isize;
        let mut g: Vec<f64> = (-half..=half)
            .map(|d| (-(d as f64).powi(2) / (2.0 * sigma * sigma)).exp())
            .collect();
        let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        g.iter_mut().for_each(|x| *x *= g_bar / norm);
        Self::new(center - width / 2, g)
    }

    pub fn end(&self) -> usize {
        self.start + self.g.len() - 1
    }

    pub fn sites(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.g.iter().enumerate().map(move |(k, &g)| (self.start + k, g))
    }

    /// Collective coupling sqrt(sum g_s^2).
    pub fn g_bar(&self) -> f64 {
        self.g.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Site nearest to the g^2-weighted centre of the window.
    pub fn center_site(&self) -> usize {
        let w: f64 = self.g.iter().map(|x| x * x).sum();
        if w == 0.0 {
            return self.start + (self.g.len() - 1) / 2;
        }
        let c: f64 = self.sites().map(|(s, g)| s as f64 * g * g).sum::<f64>() / w;
        c.round() as usize
    }

    pub fn scaled(&self, factor: f64) -> Self {
        CouplingProfile { start: self.start, g: self.g.iter().map(|x| x * factor).collect() }
    }

    pub fn dense(&self, n: usize) -> Result<Vec<f64>> {
        if self.end() > n {
            return Err(Error::validation(format!(
                "coupling window {}..={} lies outside the array 1..={n}",
                self.start,
                self.end()
            )));
        }
        let mut v = vec![0.0; n];
        for (s, g) in self.sites() {
            v[s - 1] = g;
        }
        Ok(v)
    }
}

/// Static site-frequency offsets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisorderRealization {
    pub delta: Vec<f64>,
    pub sigma: f64,
    pub seed: Option<u64>,
}

/// Fabrication spread of the site frequencies (GHz).
pub const DEFAULT_DISORDER_SIGMA: f64 = 0.0218;

impl DisorderRealization {
    pub fn none(n: usize) -> Self {
        DisorderRealization { delta: vec![0.0; n], sigma: 0.0, seed: None }
    }

    pub fn gaussian(n: usize, sigma: f64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::gaussian_from_rng(n, sigma, &mut rng).map(|mut d| {
            d.seed = Some(seed);
            d
        })
    }

    pub fn gaussian_from_rng(n: usize, sigma: f64, rng: &mut ChaCha8Rng) -> Result<Self> {
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(Error::validation("disorder sigma must be non-negative"));
        }
        let delta = if sigma == 0.0 {
            vec![0.0; n]
        } else {
            let dist = Normal::new(0.0, sigma).map_err(|e| Error::validation(e.to_string()))?;
            (0..n).map(|_| dist.sample(rng)).collect()
        };
        Ok(DisorderRealization { delta, sigma, seed: None })
    }
}

/// Array + qubit model from which Hamiltonians at any qubit frequency are built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeModel {
    pub n: usize,
    pub tb: TightBindingParams,
    pub profile: CouplingProfile,
    pub disorder: DisorderRealization,
}

impl LatticeModel {
    pub fn new(
        n: usize,
        tb: TightBindingParams,
        profile: CouplingProfile,
        disorder: Option<DisorderRealization>,
    ) -> Result<Self> {
        if n < 2 {
            return Err(Error::validation("array needs at least two sites"));
        }
        tb.validate()?;
        profile.dense(n)?;
        let disorder = disorder.unwrap_or_else(|| DisorderRealization::none(n));
        if disorder.delta.len() != n {
            return Err(Error::validation(format!(
                "disorder has {} entries for {n} sites",
                disorder.delta.len()
            )));
        }
        Ok(LatticeModel { n, tb, profile, disorder })
    }

    /// Photonic block only (N x N).
    pub fn cavity_hamiltonian(&self) -> DMatrix<f64> {
        let n = self.n;
        DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                self.tb.omega_r + self.disorder.delta[i]
            } else {
                self.tb.hopping(i, j)
            }
        })
    }

    /// Full (N+1) x (N+1) single-excitation Hamiltonian; qubit is the last index.
    pub fn hamiltonian(&self, omega_q: f64) -> DMatrix<f64> {
        let n = self.n;
        let mut h = DMatrix::<f64>::zeros(n + 1, n + 1);
        h.view_mut((0, 0), (n, n)).copy_from(&self.cavity_hamiltonian());
        for (s, g) in self.profile.sites() {
            h[(s - 1, n)] = g;
            h[(n, s - 1)] = g;
        }
        h[(n, n)] = omega_q;
        h
    }

    pub fn diagonalize(&self, omega_q: f64) -> Result<DressedPoint> {
        if !omega_q.is_finite() {
            return Err(Error::validation("qubit frequency must be finite"));
        }
        let (freqs, vectors) = sym_eigen(&self.hamiltonian(omega_q))?;
        Ok(DressedPoint { omega_q, freqs, vectors })
    }
}

/// Eigen-decomposition of H at one qubit frequency (ascending order).
#[derive(Debug, Clone)]
pub struct DressedPoint {
    pub omega_q: f64,
    pub freqs: Vec<f64>,
    /// Columns are eigenvectors; the last row is the qubit amplitude u_m.
    pub vectors: DMatrix<f64>,
}

impl DressedPoint {
    pub fn dim(&self) -> usize {
        self.freqs.len()
    }

    /// |u_m|^2 for sorted mode index m (0-based).
    pub fn atomic_weight(&self, m: usize) -> f64 {
        let last = self.dim() - 1;
        self.vectors[(last, m)].powi(2)
    }

    /// Index of the mode with the largest qubit content.
    pub fn most_atomic(&self) -> usize {
        (0..self.dim())
            .max_by(|&a, &b| self.atomic_weight(a).total_cmp(&self.atomic_weight(b)))
            .unwrap()
    }
}

/// Dressed spectrum on a qubit-frequency grid with branch tracking.
#[derive(Debug, Clone)]
pub struct DressedSpectrum {
    pub grid: Vec<f64>,
    pub points: Vec<DressedPoint>,
    /// `branch[k][l]` is the sorted index at grid point k of the branch that
    /// carries label l (labels are the sorted order at the first point).
    pub branch: Vec<Vec<usize>>,
    pub warnings: Vec<String>,
}

/// Overlap gap below which a tracking decision is reported as ambiguous.
pub const TRACK_AMBIGUITY: f64 = 1e-3;

impl DressedSpectrum {
    pub fn n_modes(&self) -> usize {
        self.points.first().map(|p| p.dim()).unwrap_or(0)
    }

    pub fn tracked_freqs(&self, label: usize) -> Vec<f64> {
        self.points.iter().zip(&self.branch).map(|(p, b)| p.freqs[b[label]]).collect()
    }

    pub fn tracked_weights(&self, label: usize) -> Vec<f64> {
        self.points.iter().zip(&self.branch).map(|(p, b)| p.atomic_weight(b[label])).collect()
    }
}

/// Diagonalise on every grid point and follow branches by eigenvector overlap.
pub fn sweep_and_track(model: &LatticeModel, grid: &[f64]) -> Result<DressedSpectrum> {
    if grid.is_empty() {
        return Err(Error::validation("empty qubit-frequency grid"));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::validation("qubit-frequency grid must be strictly increasing"));
    }
    let points: Vec<DressedPoint> =
        grid.par_iter().map(|&w| model.diagonalize(w)).collect::<Result<_>>()?;
    let (branch, warnings) = track_points(&points);
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(DressedSpectrum { grid: grid.to_vec(), points, branch, warnings })
}

fn track_points(points: &[DressedPoint]) -> (Vec<Vec<usize>>, Vec<String>) {
    let dim = points[0].dim();
    let mut branch = vec![(0..dim).collect::<Vec<usize>>()];
    let mut warnings = Vec::new();
    for k in 1..points.len() {
        let (a, b) = (&points[k - 1], &points[k]);
        let overlap = (a.vectors.transpose() * &b.vectors).map(f64::abs);
        let spread = (b.freqs[dim - 1] - b.freqs[0]).abs().max(1e-12);
        // Frequency proximity only breaks ties between equal overlaps.
        let cost = DMatrix::from_fn(dim, dim, |i, j| {
            -overlap[(i, j)] + 1e-9 * (a.freqs[i] - b.freqs[j]).abs() / spread
        });
        let assign = hungarian(&cost);
        for i in 0..dim {
            let chosen = overlap[(i, assign[i])];
            let runner_up = (0..dim)
                .filter(|&j| j != assign[i])
                .map(|j| overlap[(i, j)])
                .fold(0.0, f64::max);
            if chosen - runner_up < TRACK_AMBIGUITY {
                warnings.push(format!(
                    "ambiguous branch assignment between omega_q = {:.6} and {:.6} (overlaps {:.4}, {:.4})",
                    a.omega_q, b.omega_q, chosen, runner_up
                ));
            }
        }
        let prev = &branch[k - 1];
        branch.push(prev.iter().map(|&s| assign[s]).collect());
    }
    (branch, warnings)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table_model() -> LatticeModel {
        let profile = CouplingProfile::new(20, vec![0.1; 5]).unwrap();
        LatticeModel::new(44, TightBindingParams::table_device(), profile, None).unwrap()
    }

    #[test]
    fn transmon_frequency_table_point() {
        let w = qubit_frequency(&QubitParams::table_device()).unwrap();
        assert!((w - 9.29).abs() / 9.29 < 0.01);
        let q = QubitParams { flux: 0.5, ..QubitParams::table_device() };
        assert!(matches!(qubit_frequency(&q), Err(Error::Numeric(_))));
    }

    #[test]
    fn flux_inverse_roundtrip() {
        let q = QubitParams::table_device();
        for w in [7.0, 7.8, 8.6, 9.2] {
            let flux = q.flux_for_frequency(w).unwrap();
            let back = qubit_frequency(&QubitParams { flux, ..q }).unwrap();
            assert!((back - w).abs() < 1e-10);
        }
    }

    #[test]
    fn hamiltonian_layout() {
        let m = table_model();
        let h = m.hamiltonian(8.0);
        assert_eq!(h.nrows(), 45);
        assert_eq!(h, h.transpose());
        assert_eq!(h[(0, 1)], 0.2588);
        assert_eq!(h[(1, 2)], 0.3705);
        assert_eq!(h[(0, 5)], 0.0021);
        assert_eq!(h[(0, 6)], 0.0);
        assert_eq!(h[(19, 44)], 0.1);
        assert_eq!(h[(18, 44)], 0.0);
        assert_eq!(h[(44, 44)], 8.0);
    }

    #[test]
    fn profile_outside_array_rejected() {
        let profile = CouplingProfile::new(42, vec![0.1; 5]).unwrap();
        let r = LatticeModel::new(44, TightBindingParams::table_device(), profile, None);
        assert!(matches!(r, Err(Error::Validation(_))));
    }

    #[test]
    fn contiguous_map_required() {
        let mut m = BTreeMap::new();
        m.insert(3, 0.1);
        m.insert(5, 0.1);
        assert!(CouplingProfile::from_map(&m).is_err());
        m.insert(4, 0.2);
        let p = CouplingProfile::from_map(&m).unwrap();
        assert_eq!(p.start, 3);
        assert_eq!(p.center_site(), 4);
    }

    #[test]
    fn zero_coupling_spectrum_is_bare_plus_qubit() {
        let mut m = table_model();
        m.profile = m.profile.scaled(0.0);
        let (bare, _) = sym_eigen(&m.cavity_hamiltonian()).unwrap();
        let p = m.diagonalize(7.9).unwrap();
        let mut expected = bare.clone();
        expected.push(7.9);
        expected.sort_by(f64::total_cmp);
        for (a, b) in p.freqs.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn disorder_is_seeded() {
        let a = DisorderRealization::gaussian(44, 0.0218, 7).unwrap();
        let b = DisorderRealization::gaussian(44, 0.0218, 7).unwrap();
        let c = DisorderRealization::gaussian(44, 0.0218, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.delta, c.delta);
    }

    #[test]
    fn tracking_follows_uncoupled_crossing() {
        // Qubit coupled to nothing: its branch must keep unit qubit weight while
        // crossing the whole band.
        let mut m = table_model();
        m.profile = m.profile.scaled(0.0);
        let grid: Vec<f64> = (0..200).map(|k| 6.8 + 0.01 * k as f64).collect();
        let spec = sweep_and_track(&m, &grid).unwrap();
        let label = 0; // qubit is lowest at 6.8 GHz
        let w = spec.tracked_weights(label);
        assert!(w.iter().all(|&x| (x - 1.0).abs() < 1e-12));
        let f = spec.tracked_freqs(label);
        for (a, b) in f.iter().zip(&grid) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
