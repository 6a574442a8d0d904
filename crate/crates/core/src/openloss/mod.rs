//! Losses: non-Hermitian Hamiltonian, per-mode decay rates and chirality
//! ratios, reflection fitting, disorder ensembles and qubit loss budgets.
//!
//! All rates are kappa/2pi in GHz. The dissipative part of every model is a
//! real symmetric Kossakowski matrix Gamma (one per channel) and
//! H_NH = H - (i/2) Gamma.

pub mod ensemble;
pub mod purcell;
pub mod reflection;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{complex_eigen, hungarian, sym_eigen, to_complex, C64};

/// Off-diagonal port coupling between the two outermost sites of a port.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CrossTerm {
    /// 2 sqrt(kappa kappa'): the dissipative cross-term as written in the
    /// device model. The port block is then not positive semi-definite.
    Verbatim,
    /// sqrt(kappa kappa'): a single collective jump operator per port.
    Textbook,
}

impl CrossTerm {
    pub fn factor(self) -> f64 {
        match self {
            CrossTerm::Verbatim => 2.0,
            CrossTerm::Textbook => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossModel {
    pub kappa_int: f64,
    pub kappa_q: f64,
    pub kappa_ext_l: f64,
    pub kappa_ext_r: f64,
    /// Leakage of the second site into the left port.
    pub kappa_ext_lp: f64,
    pub kappa_ext_rp: f64,
    pub cross: CrossTerm,
}

/// kappa/2pi (GHz) for an energy-relaxation time in ns.
pub fn rate_from_t1(t1_ns: f64) -> f64 {
    1.0 / (2.0 * std::f64::consts::PI * t1_ns)
}

/// Inverse of [`rate_from_t1`].
pub fn t1_from_rate(rate: f64) -> f64 {
    1.0 / (2.0 * std::f64::consts::PI * rate)
}

impl LossModel {
    pub fn table_device() -> Self {
        LossModel {
            kappa_int: 590e-6,
            kappa_q: rate_from_t1(871.0),
            kappa_ext_l: 11.12e-3,
            kappa_ext_r: 13.67e-3,
            kappa_ext_lp: 28.70e-6,
            kappa_ext_rp: 52.64e-6,
            cross: CrossTerm::Verbatim,
        }
    }

    pub fn lossless() -> Self {
        LossModel {
            kappa_int: 0.0,
            kappa_q: 0.0,
            kappa_ext_l: 0.0,
            kappa_ext_r: 0.0,
            kappa_ext_lp: 0.0,
            kappa_ext_rp: 0.0,
            cross: CrossTerm::Verbatim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("kappa_int", self.kappa_int),
            ("kappa_q", self.kappa_q),
            ("kappa_ext_L", self.kappa_ext_l),
            ("kappa_ext_R", self.kappa_ext_r),
            ("kappa'_ext_L", self.kappa_ext_lp),
            ("kappa'_ext_R", self.kappa_ext_rp),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::validation(format!("{name} must be non-negative, got {v}")));
            }
        }
        Ok(())
    }

    pub fn only_left(&self) -> Self {
        LossModel { kappa_int: 0.0, kappa_q: 0.0, kappa_ext_r: 0.0, kappa_ext_rp: 0.0, ..self.clone() }
    }

    pub fn only_right(&self) -> Self {
        LossModel { kappa_int: 0.0, kappa_q: 0.0, kappa_ext_l: 0.0, kappa_ext_lp: 0.0, ..self.clone() }
    }

    pub fn only_internal(&self) -> Self {
        LossModel {
            kappa_ext_l: 0.0,
            kappa_ext_r: 0.0,
            kappa_ext_lp: 0.0,
            kappa_ext_rp: 0.0,
            ..self.clone()
        }
    }

    /// Dissipators split by where the lost excitation ends up.
    pub fn channels(&self, n_sites: usize, has_qubit: bool) -> Result<Channels> {
        self.validate()?;
        if n_sites < 4 {
            return Err(Error::validation("port model needs at least four sites"));
        }
        let dim = n_sites + usize::from(has_qubit);
        let f = self.cross.factor();
        let port = |edge: usize, second: usize, k: f64, kp: f64| {
            let mut m = DMatrix::<f64>::zeros(dim, dim);
            m[(edge, edge)] = k;
            m[(second, second)] = kp;
            let c = f * (k * kp).sqrt();
            m[(edge, second)] = c;
            m[(second, edge)] = c;
            m
        };
        let left = port(0, 1, self.kappa_ext_l, self.kappa_ext_lp);
        let right = port(n_sites - 1, n_sites - 2, self.kappa_ext_r, self.kappa_ext_rp);
        let mut internal = DMatrix::<f64>::zeros(dim, dim);
        for s in 0..n_sites {
            internal[(s, s)] = self.kappa_int;
        }
        if has_qubit {
            internal[(n_sites, n_sites)] = self.kappa_q;
        }
        Ok(Channels { left, right, internal })
    }
}

/// Kossakowski matrices of the left port, right port and internal losses.
#[derive(Debug, Clone)]
pub struct Channels {
    pub left: DMatrix<f64>,
    pub right: DMatrix<f64>,
    pub internal: DMatrix<f64>,
}

impl Channels {
    pub fn total(&self) -> DMatrix<f64> {
        &self.left + &self.right + &self.internal
    }
}

fn infer_qubit(h: &DMatrix<f64>, n_sites: usize) -> Result<bool> {
    match h.nrows() {
        d if d == n_sites => Ok(false),
        d if d == n_sites + 1 => Ok(true),
        d => Err(Error::validation(format!(
            "Hamiltonian dimension {d} does not match {n_sites} sites (with or without qubit)"
        ))),
    }
}

/// H - (i/2) Gamma for the given losses.
pub fn build_non_hermitian(h: &DMatrix<f64>, loss: &LossModel, n_sites: usize) -> Result<DMatrix<C64>> {
    let has_qubit = infer_qubit(h, n_sites)?;
    let gamma = loss.channels(n_sites, has_qubit)?.total();
    Ok(non_hermitian_from(h, &gamma))
}

pub fn non_hermitian_from(h: &DMatrix<f64>, gamma: &DMatrix<f64>) -> DMatrix<C64> {
    let mut m = to_complex(h);
    for (z, g) in m.iter_mut().zip(gamma.iter()) {
        z.im -= 0.5 * g;
    }
    m
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModeRates {
    /// Hermitian eigenfrequency.
    pub omega: f64,
    /// Real part of the lossy eigenvalue.
    pub omega_nh: f64,
    pub gamma_total: f64,
    pub gamma_int: f64,
    pub gamma_ext_l: f64,
    pub gamma_ext_r: f64,
}

impl ModeRates {
    pub fn chi_db(&self) -> f64 {
        chi_db(self.gamma_ext_r, self.gamma_ext_l)
    }
}

/// 10 log10(gamma_R / gamma_L); a vanishing (or negative) rate maps to +-inf.
pub fn chi_db(gamma_r: f64, gamma_l: f64) -> f64 {
    match (gamma_r > 0.0, gamma_l > 0.0) {
        (true, true) => 10.0 * (gamma_r / gamma_l).log10(),
        (true, false) => f64::INFINITY,
        (false, true) => f64::NEG_INFINITY,
        (false, false) => f64::NAN,
    }
}

/// Decay rates -2 Im(lambda) of `h - (i/2) gamma`, assigned to the Hermitian
/// eigenvectors `herm` (columns) by maximum-overlap matching. Also returns the
/// matched real parts.
fn matched_rates(h: &DMatrix<f64>, gamma: &DMatrix<f64>, herm: &DMatrix<f64>) -> Result<(Vec<f64>, Vec<f64>)> {
    let dim = h.nrows();
    if gamma.iter().all(|&g| g == 0.0) {
        return Ok((vec![0.0; dim], vec![f64::NAN; dim]));
    }
    let ce = complex_eigen(&non_hermitian_from(h, gamma))?;
    let herm_c = to_complex(herm);
    let ov = herm_c.transpose() * &ce.vectors;
    let cost = DMatrix::from_fn(dim, dim, |m, k| -ov[(m, k)].norm_sqr());
    let assign = hungarian(&cost);
    let rates = assign.iter().map(|&k| -2.0 * ce.values[k].im).collect();
    let re = assign.iter().map(|&k| ce.values[k].re).collect();
    Ok((rates, re))
}

/// Per-mode rates from four diagonalisations: all losses, left port only,
/// right port only and internal losses only. Modes are in ascending
/// Hermitian order.
pub fn extract_mode_rates(h: &DMatrix<f64>, loss: &LossModel, n_sites: usize) -> Result<Vec<ModeRates>> {
    let has_qubit = infer_qubit(h, n_sites)?;
    let ch = loss.channels(n_sites, has_qubit)?;
    let (omega, herm) = sym_eigen(h)?;
    let (total, re) = matched_rates(h, &ch.total(), &herm)?;
    let (left, _) = matched_rates(h, &ch.left, &herm)?;
    let (right, _) = matched_rates(h, &ch.right, &herm)?;
    let (int, _) = matched_rates(h, &ch.internal, &herm)?;
    Ok((0..omega.len())
        .map(|m| ModeRates {
            omega: omega[m],
            omega_nh: if re[m].is_nan() { omega[m] } else { re[m] },
            gamma_total: total[m],
            gamma_int: int[m],
            gamma_ext_l: left[m],
            gamma_ext_r: right[m],
        })
        .collect())
}

/// First-order rates v_m^T Gamma v_m for the Hermitian modes.
pub fn first_order_rates(h: &DMatrix<f64>, gamma: &DMatrix<f64>) -> Result<Vec<f64>> {
    let (_, v) = sym_eigen(h)?;
    Ok((0..v.ncols())
        .map(|m| {
            let c = v.column(m);
            (c.transpose() * gamma * c)[(0, 0)]
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{CouplingProfile, LatticeModel, TightBindingParams};

    fn device() -> LatticeModel {
        LatticeModel::new(44, TightBindingParams::table_device(), CouplingProfile::table_device(), None)
            .unwrap()
    }

    #[test]
    fn non_hermitian_layout() {
        let m = device();
        let loss = LossModel::table_device();
        let nh = build_non_hermitian(&m.hamiltonian(8.0), &loss, 44).unwrap();
        let k = loss.kappa_int;
        assert!((nh[(0, 0)].im + 0.5 * (k + loss.kappa_ext_l)).abs() < 1e-15);
        assert!((nh[(1, 1)].im + 0.5 * (k + loss.kappa_ext_lp)).abs() < 1e-15);
        assert!((nh[(43, 43)].im + 0.5 * (k + loss.kappa_ext_r)).abs() < 1e-15);
        assert!((nh[(42, 42)].im + 0.5 * (k + loss.kappa_ext_rp)).abs() < 1e-15);
        assert!((nh[(20, 20)].im + 0.5 * k).abs() < 1e-15);
        assert!((nh[(44, 44)].im + 0.5 * loss.kappa_q).abs() < 1e-15);
        let cross = (loss.kappa_ext_l * loss.kappa_ext_lp).sqrt();
        assert!((nh[(0, 1)].im + cross).abs() < 1e-15);
        assert_eq!(nh[(0, 1)].re, 0.2588);
        // Complex symmetric.
        assert_eq!(nh, nh.transpose());
    }

    #[test]
    fn textbook_cross_term_halves_coupling() {
        let loss = LossModel { cross: CrossTerm::Textbook, ..LossModel::table_device() };
        let ch = loss.channels(44, false).unwrap();
        let c = (loss.kappa_ext_l * loss.kappa_ext_lp).sqrt();
        assert!((ch.left[(0, 1)] - c).abs() < 1e-15);
        // Rank one: a single collective jump operator.
        let eig = ch.left.clone().symmetric_eigen();
        let nonzero = eig.eigenvalues.iter().filter(|x| x.abs() > 1e-12).count();
        assert_eq!(nonzero, 1);
    }

    #[test]
    fn uniform_internal_loss_is_uniform() {
        // Only kappa_int on every site: each photonic mode decays at kappa_int.
        let m = device();
        let loss = LossModel { kappa_int: 1e-3, ..LossModel::lossless() };
        let rates = extract_mode_rates(&m.cavity_hamiltonian(), &loss, 44).unwrap();
        for r in &rates {
            assert!((r.gamma_total - 1e-3).abs() < 1e-12);
            assert!((r.gamma_int - 1e-3).abs() < 1e-12);
            assert_eq!(r.gamma_ext_l, 0.0);
        }
    }

    #[test]
    fn rates_sum_and_match_first_order() {
        let m = device();
        let loss = LossModel::table_device();
        let h = m.hamiltonian(8.9);
        let rates = extract_mode_rates(&h, &loss, 44).unwrap();
        let fo = first_order_rates(&h, &loss.channels(44, true).unwrap().total()).unwrap();
        for (k, r) in rates.iter().enumerate() {
            assert!(r.gamma_total >= -1e-12, "mode {k} gains energy");
            // The two edge modes are nearly degenerate (splitting << kappa) and
            // mix under the losses; the rest are well isolated.
            if (r.omega - 7.688).abs() < 1e-3 {
                continue;
            }
            let sum = r.gamma_int + r.gamma_ext_l + r.gamma_ext_r;
            assert!(((sum - r.gamma_total) / r.gamma_total).abs() < 0.02, "mode {k}");
            assert!(((fo[k] - r.gamma_total) / r.gamma_total).abs() < 0.01, "mode {k}");
        }
    }

    #[test]
    fn chi_sentinels() {
        assert_eq!(chi_db(1.0, 0.0), f64::INFINITY);
        assert_eq!(chi_db(0.0, 1.0), f64::NEG_INFINITY);
        assert!((chi_db(10.0, 1.0) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn mirror_symmetry_swaps_ports() {
        // A symmetric chain with symmetric losses has gamma_L = gamma_R.
        let tb = TightBindingParams { j1: 0.3, j2: 0.3, j_long: vec![], ..TightBindingParams::table_device() };
        let m = LatticeModel::new(10, tb, CouplingProfile::single(1, 0.0).unwrap(), None).unwrap();
        let loss = LossModel { kappa_ext_r: 0.01112, kappa_ext_rp: 28.7e-6, ..LossModel::table_device() };
        for r in extract_mode_rates(&m.cavity_hamiltonian(), &loss, 10).unwrap() {
            assert!((r.gamma_ext_l - r.gamma_ext_r).abs() < 1e-9);
        }
    }

    #[test]
    fn t1_conversion_roundtrip() {
        assert!((t1_from_rate(rate_from_t1(871.0)) - 871.0).abs() < 1e-9);
    }
}
