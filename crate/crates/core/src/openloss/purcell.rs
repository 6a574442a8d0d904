//! Qubit relaxation budget (drive line, readout resonator, array modes) and
//! the AC-Stark photon-number model used for gain calibration.
//!
//! Rates are gamma/2pi in GHz as elsewhere; SI is used only inside the
//! formulas that mix impedances, capacitances and powers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;
const HBAR: f64 = 1.054_571_817e-34;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PurcellParams {
    /// Drive-line coupling capacitance, fF.
    pub c_c: f64,
    /// Total qubit capacitance, fF.
    pub c_sigma: f64,
    /// Drive-line impedance, ohm.
    pub z0: f64,
    pub g_ro: f64,
    pub omega_ro: f64,
    pub gamma_ro_ext: f64,
    pub gamma_ro_int: f64,
}

impl PurcellParams {
    pub fn table_device() -> Self {
        PurcellParams {
            c_c: 0.5,
            c_sigma: 60.9,
            z0: 50.0,
            g_ro: 0.089,
            omega_ro: 4.6,
            gamma_ro_ext: 1.64e-3,
            gamma_ro_int: 0.33e-3,
        }
    }
}

/// Drive-line decay omega_q^2 Z0 C_c^2 / C_Sigma, returned as gamma/2pi in GHz.
pub fn drive_rate(p: &PurcellParams, omega_q: f64) -> f64 {
    let w = TWO_PI * omega_q * 1e9;
    let gamma = w * w * p.z0 * (p.c_c * 1e-15).powi(2) / (p.c_sigma * 1e-15);
    gamma / (TWO_PI * 1e9)
}

/// Readout-resonator Purcell decay (gamma_ext + gamma_int)(g/Delta)^2.
pub fn readout_rate(p: &PurcellParams, omega_q: f64) -> Result<f64> {
    let delta = omega_q - p.omega_ro;
    if delta == 0.0 {
        return Err(Error::numeric("qubit resonant with the readout resonator"));
    }
    Ok((p.gamma_ro_ext + p.gamma_ro_int) * (p.g_ro / delta).powi(2))
}

/// Decay through the array modes, sum_n gamma_n (G_n / Delta_n)^2.
pub fn cca_rate(g: &[f64], omega: &[f64], gamma: &[f64], omega_q: f64) -> Result<f64> {
    if g.len() != omega.len() || g.len() != gamma.len() {
        return Err(Error::validation("G, Omega and gamma must have equal length"));
    }
    let mut acc = 0.0;
    for ((g, w), k) in g.iter().zip(omega).zip(gamma) {
        let d = w - omega_q;
        if d == 0.0 {
            return Err(Error::numeric("qubit resonant with an array mode"));
        }
        acc += k * (g / d).powi(2);
    }
    Ok(acc)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PurcellBudget {
    pub omega_q: f64,
    pub drive: f64,
    pub readout: f64,
    pub cca: f64,
}

impl PurcellBudget {
    pub fn total(&self) -> f64 {
        self.drive + self.readout + self.cca
    }

    /// T1 (ns) limited by one channel rate.
    pub fn t1(rate: f64) -> f64 {
        if rate > 0.0 {
            1.0 / (TWO_PI * rate)
        } else {
            f64::INFINITY
        }
    }
}

/// Array-mode data for the CCA channel: couplings, frequencies and total
/// mode linewidths.
pub struct CcaModes<'a> {
    pub g: &'a [f64],
    pub omega: &'a [f64],
    pub gamma: &'a [f64],
}

pub fn purcell_budget(p: &PurcellParams, omega_q: f64, cca: Option<&CcaModes>) -> Result<PurcellBudget> {
    if !(omega_q > 0.0) {
        return Err(Error::validation("qubit frequency must be positive"));
    }
    let cca = match cca {
        Some(m) => cca_rate(m.g, m.omega, m.gamma, omega_q)?,
        None => 0.0,
    };
    Ok(PurcellBudget { omega_q, drive: drive_rate(p, omega_q), readout: readout_rate(p, omega_q)?, cca })
}

/// Dispersive read of one array mode driven through a port.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcStarkParams {
    /// Mode frequency, GHz.
    pub omega_mode: f64,
    /// Dispersive shift chi/2pi, GHz (shift is 2 chi n).
    pub chi: f64,
    /// External rate of the driven port and of the opposite port.
    pub gamma_port: f64,
    pub gamma_other: f64,
    /// gamma_int as a function of intracavity photon number, (n, gamma) pairs
    /// sorted by n; linearly interpolated and clamped at the ends.
    pub gamma_int_table: Vec<(f64, f64)>,
    /// Line attenuation between source and device, dB.
    pub attenuation_db: f64,
}

impl AcStarkParams {
    /// Mode 31 of the device at the calibration point, driven from the left
    /// line.
    pub fn mode31_example() -> Self {
        AcStarkParams {
            omega_mode: 7.74,
            chi: -498e-6,
            gamma_port: 0.8e-3,
            gamma_other: 0.3e-3,
            gamma_int_table: vec![(0.0, 0.9e-3), (10.0, 0.8e-3), (100.0, 0.6e-3), (1000.0, 0.59e-3)],
            attenuation_db: 104.59,
        }
    }

    pub fn gamma_int(&self, n: f64) -> f64 {
        let t = &self.gamma_int_table;
        if n <= t[0].0 {
            return t[0].1;
        }
        for w in t.windows(2) {
            if n <= w[1].0 {
                let f = (n - w[0].0) / (w[1].0 - w[0].0);
                return w[0].1 + f * (w[1].1 - w[0].1);
            }
        }
        t[t.len() - 1].1
    }

    fn validate(&self) -> Result<()> {
        if self.gamma_int_table.is_empty() {
            return Err(Error::validation("gamma_int table is empty"));
        }
        if self.gamma_int_table.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::validation("gamma_int table must be sorted by photon number"));
        }
        if !(self.omega_mode > 0.0 && self.gamma_port >= 0.0 && self.gamma_other >= 0.0) {
            return Err(Error::validation("mode frequency and rates must be positive"));
        }
        Ok(())
    }
}

pub fn dbm_to_watt(p_dbm: f64) -> f64 {
    1e-3 * 10f64.powf(p_dbm / 10.0)
}

/// Mean photon number for source power `p_source` (W), solved self-consistently
/// because gamma_int depends on n.
pub fn photon_number(p: &AcStarkParams, p_source: f64) -> Result<f64> {
    p.validate()?;
    if !(p_source >= 0.0) {
        return Err(Error::validation("input power must be non-negative"));
    }
    let p_in = p_source * 10f64.powf(-p.attenuation_db / 10.0);
    let flux = p_in / (HBAR * TWO_PI * p.omega_mode * 1e9);
    let ang = |g: f64| TWO_PI * 1e9 * g;
    let f = |n: f64| {
        let half = 0.5 * ang(p.gamma_int(n) + p.gamma_port + p.gamma_other);
        ang(p.gamma_port) * flux / (half * half)
    };
    let mut n = f(0.0);
    for _ in 0..10_000 {
        let next = 0.5 * (n + f(n));
        if (next - n).abs() <= 1e-12 * next.abs().max(1e-30) {
            return Ok(next);
        }
        n = next;
    }
    Err(Error::numeric("photon-number fixed point did not converge"))
}

/// (photon number, qubit frequency shift 2 chi n in GHz).
pub fn ac_stark_shift(p: &AcStarkParams, p_source: f64) -> Result<(f64, f64)> {
    let n = photon_number(p, p_source)?;
    Ok((n, 2.0 * p.chi * n))
}
