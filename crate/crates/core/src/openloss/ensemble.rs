//! Statistics of mode rates over static site-frequency disorder.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{extract_mode_rates, LossModel, ModeRates};
use crate::error::{Error, Result};
use crate::lattice::{CouplingProfile, DisorderRealization, LatticeModel, TightBindingParams};
use crate::linalg::percentile;

/// Percentile band reported around the ensemble mean.
pub const P_LO: f64 = 18.57;
pub const P_HI: f64 = 84.13;
pub const MIN_REALIZATIONS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BandStat {
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
}

impl BandStat {
    fn from_samples(mut v: Vec<f64>) -> Self {
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        v.sort_by(f64::total_cmp);
        BandStat { mean, lo: percentile(&v, P_LO), hi: percentile(&v, P_HI) }
    }

    /// Percentile band width relative to the mean.
    pub fn relative_width(&self) -> f64 {
        (self.hi - self.lo) / self.mean.abs()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeStats {
    /// 1-based ascending mode index.
    pub mode: usize,
    pub omega: BandStat,
    pub gamma_total: BandStat,
    pub gamma_int: BandStat,
    pub gamma_ext_l: BandStat,
    pub gamma_ext_r: BandStat,
}

#[derive(Debug, Clone)]
pub struct EnsembleSpec {
    pub n_sites: usize,
    pub tb: TightBindingParams,
    pub loss: LossModel,
    pub sigma: f64,
    pub realizations: usize,
    pub seed: u64,
    /// Include the qubit at this bare frequency; `None` analyses the bare array.
    pub qubit: Option<(CouplingProfile, f64)>,
}

/// Disorder for realisation `index`: an independent ChaCha stream per index,
/// so results do not depend on scheduling.
pub fn realization_disorder(n: usize, sigma: f64, seed: u64, index: u64) -> Result<DisorderRealization> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let mut d = DisorderRealization::gaussian_from_rng(n, sigma, &mut rng)?;
    d.seed = Some(seed);
    Ok(d)
}

pub fn disorder_ensemble(spec: &EnsembleSpec) -> Result<Vec<ModeStats>> {
    if spec.realizations < MIN_REALIZATIONS {
        return Err(Error::validation(format!(
            "ensemble needs at least {MIN_REALIZATIONS} realisations, got {}",
            spec.realizations
        )));
    }
    let samples: Vec<Vec<ModeRates>> = (0..spec.realizations as u64)
        .into_par_iter()
        .map(|i| {
            let dis = realization_disorder(spec.n_sites, spec.sigma, spec.seed, i)?;
            let (profile, wq) = match &spec.qubit {
                Some((p, w)) => (p.clone(), Some(*w)),
                None => (CouplingProfile::single(1, 0.0)?, None),
            };
            let model = LatticeModel::new(spec.n_sites, spec.tb.clone(), profile, Some(dis))?;
            let h = match wq {
                Some(w) => model.hamiltonian(w),
                None => model.cavity_hamiltonian(),
            };
            extract_mode_rates(&h, &spec.loss, spec.n_sites)
        })
        .collect::<Result<_>>()?;
    let n_modes = samples[0].len();
    Ok((0..n_modes)
        .map(|m| {
            let col = |f: fn(&ModeRates) -> f64| {
                BandStat::from_samples(samples.iter().map(|s| f(&s[m])).collect())
            };
            ModeStats {
                mode: m + 1,
                omega: col(|r| r.omega),
                gamma_total: col(|r| r.gamma_total),
                gamma_int: col(|r| r.gamma_int),
                gamma_ext_l: col(|r| r.gamma_ext_l),
                gamma_ext_r: col(|r| r.gamma_ext_r),
            }
        })
        .collect())
}
