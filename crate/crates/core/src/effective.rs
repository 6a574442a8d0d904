//! Second-order Schrieffer-Wolff elimination of the qubit.
//!
//! Detunings are Delta_n = Omega_n - omega_q. A mode above the qubit
//! (Delta_n > 0) is pushed up by G_n^2 / Delta_n and the qubit is pushed down
//! by the same amount; photon-photon exchange through the virtual qubit is
//! G_n G_n' (Delta_n + Delta_n') / (2 Delta_n Delta_n').

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::sym_eigen;
use crate::modes::ModeBasis;

/// Above this |G_n / Delta_n| the dispersive expansion is flagged.
pub const DISPERSIVE_GUARD: f64 = 0.3;

#[derive(Debug, Clone)]
pub struct EffectiveModel {
    pub omega_q: f64,
    pub omega_q_eff: f64,
    /// Photonic block: diagonal Omega_n^eff, off-diagonal G_nn'.
    pub photonic: DMatrix<f64>,
    pub delta: Vec<f64>,
    pub max_ratio: f64,
    pub warnings: Vec<String>,
}

impl EffectiveModel {
    pub fn omega_eff(&self) -> Vec<f64> {
        (0..self.photonic.nrows()).map(|n| self.photonic[(n, n)]).collect()
    }

    pub fn within_guard(&self) -> bool {
        self.max_ratio <= DISPERSIVE_GUARD
    }
}

/// Build the effective photonic Hamiltonian from bare modes and couplings.
pub fn schrieffer_wolff(omega: &[f64], g: &[f64], omega_q: f64) -> Result<EffectiveModel> {
    if omega.len() != g.len() || omega.is_empty() {
        return Err(Error::validation("mode frequencies and couplings must match"));
    }
    let n = omega.len();
    let delta: Vec<f64> = omega.iter().map(|w| w - omega_q).collect();
    for (k, d) in delta.iter().enumerate() {
        if d.abs() < 1e-12 {
            return Err(Error::numeric(format!(
                "bare mode {} is resonant with the qubit; dispersive model undefined",
                k + 1
            )));
        }
    }
    let max_ratio = g.iter().zip(&delta).map(|(g, d)| (g / d).abs()).fold(0.0, f64::max);
    let mut warnings = Vec::new();
    if max_ratio > DISPERSIVE_GUARD {
        let msg = format!(
            "max |G/Delta| = {max_ratio:.3} exceeds {DISPERSIVE_GUARD}; effective model is outside its validity range"
        );
        log::warn!("{msg}");
        warnings.push(msg);
    }
    let photonic = DMatrix::from_fn(n, n, |a, b| {
        if a == b {
            omega[a] + g[a] * g[a] / delta[a]
        } else {
            g[a] * g[b] * (delta[a] + delta[b]) / (2.0 * delta[a] * delta[b])
        }
    });
    let omega_q_eff = omega_q - g.iter().zip(&delta).map(|(g, d)| g * g / d).sum::<f64>();
    Ok(EffectiveModel { omega_q, omega_q_eff, photonic, delta, max_ratio, warnings })
}

pub fn schrieffer_wolff_from_basis(
    basis: &ModeBasis,
    g: &[f64],
    omega_q: f64,
) -> Result<EffectiveModel> {
    schrieffer_wolff(&basis.omega, g, omega_q)
}

/// Eigenvalues of the effective photonic block, ascending.
pub fn effective_spectrum(model: &EffectiveModel) -> Result<Vec<f64>> {
    Ok(sym_eigen(&model.photonic)?.0)
}
