//! Lumped-element description of the coupled-cavity array and its reduction
//! to tight-binding parameters.
//!
//! Units: inductance in nH, capacitance in fF, frequencies in GHz
//! (ordinary, not angular), impedance in ohm.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::TightBindingParams;

/// How the diagonal of the capacitance matrix is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiagonalMode {
    /// Row sum of the attached capacitances; edge sites see fewer neighbours.
    SiteDependent,
    /// Every site gets the bulk value C_g + C1 + C2 + 2 sum(C_long).
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircuitParams {
    pub n: usize,
    pub l_g: f64,
    pub c_g: f64,
    /// Intra-cell coupling, bonds (1,2), (3,4), ...
    pub c1: f64,
    /// Inter-cell coupling, bonds (2,3), (4,5), ...
    pub c2: f64,
    /// Stray couplings; entry k acts between sites at distance k + 2.
    pub c_long: Vec<f64>,
    pub diagonal: DiagonalMode,
}

/// Tight-binding reduction together with any validity warnings.
#[derive(Debug, Clone)]
pub struct Reduction {
    pub params: TightBindingParams,
    /// C_i / C_Sigma for C1, C2 and the long-range terms, in that order.
    pub beta: Vec<f64>,
    pub warnings: Vec<String>,
}

/// Coupling ratio above which the first-order reduction is flagged.
pub const BETA_WARN: f64 = 0.2;

impl CircuitParams {
    /// Measured lumped values of the 44-site device.
    pub fn table_device() -> Self {
        CircuitParams {
            n: 44,
            l_g: 16.80,
            c_g: 23.04,
            c1: 1.84,
            c2: 2.72,
            c_long: vec![0.38, 0.13, 0.0],
            diagonal: DiagonalMode::SiteDependent,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 4 || self.n % 2 != 0 {
            return Err(Error::validation(format!(
                "array length must be even and >= 4, got {}",
                self.n
            )));
        }
        for (name, v) in [("L_g", self.l_g), ("C_g", self.c_g)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::validation(format!("{name} must be positive, got {v}")));
            }
        }
        let couplings = [self.c1, self.c2].into_iter().chain(self.c_long.iter().copied());
        for v in couplings {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::validation(format!(
                    "coupling capacitances must be non-negative, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Coupling capacitance between 0-based sites i and j.
    fn coupling(&self, i: usize, j: usize) -> f64 {
        let d = i.abs_diff(j);
        match d {
            0 => 0.0,
            1 => {
                if i.min(j) % 2 == 0 {
                    self.c1
                } else {
                    self.c2
                }
            }
            _ => self.c_long.get(d - 2).copied().unwrap_or(0.0),
        }
    }

    /// Bulk total capacitance of one site.
    pub fn c_sigma(&self) -> f64 {
        self.c_g + self.c1 + self.c2 + 2.0 * self.c_long.iter().sum::<f64>()
    }
}

/// Maxwell capacitance matrix (fF).
pub fn build_capacitance_matrix(p: &CircuitParams) -> Result<DMatrix<f64>> {
    p.validate()?;
    let n = p.n;
    let mut c = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                c[(i, j)] = -p.coupling(i, j);
            }
        }
    }
    for i in 0..n {
        c[(i, i)] = match p.diagonal {
            DiagonalMode::SiteDependent => {
                p.c_g + (0..n).filter(|&j| j != i).map(|j| p.coupling(i, j)).sum::<f64>()
            }
            DiagonalMode::Uniform => p.c_sigma(),
        };
    }
    Ok(c)
}

/// 1/(2 pi sqrt(L C)) in GHz for L in nH and C in fF.
pub fn lc_frequency(l_nh: f64, c_ff: f64) -> f64 {
    1.0e3 / (2.0 * std::f64::consts::PI * (l_nh * c_ff).sqrt())
}

/// Normal-mode frequencies (GHz, ascending) of the full circuit, from the
/// eigenvalues of C^-1 L^-1 with L = L_g times identity.
pub fn exact_cca_frequencies(p: &CircuitParams) -> Result<Vec<f64>> {
    let c = build_capacitance_matrix(p)?;
    let eig = c.symmetric_eigen();
    let cmax = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let mut freqs = Vec::with_capacity(p.n);
    for &ck in eig.eigenvalues.iter() {
        if !(ck > cmax * 1e-12) {
            return Err(Error::numeric(format!(
                "capacitance matrix is singular or indefinite (eigenvalue {ck:e} fF)"
            )));
        }
        freqs.push(lc_frequency(p.l_g, ck));
    }
    freqs.sort_by(f64::total_cmp);
    Ok(freqs)
}

/// First-order reduction to a tight-binding chain.
pub fn derive_tight_binding(p: &CircuitParams) -> Result<Reduction> {
    p.validate()?;
    let c_sigma = p.c_sigma();
    let omega_r = lc_frequency(p.l_g, c_sigma);
    let z_r = 1.0e3 * (p.l_g / c_sigma).sqrt();
    let mut beta = vec![p.c1 / c_sigma, p.c2 / c_sigma];
    beta.extend(p.c_long.iter().map(|c| c / c_sigma));
    let mut warnings = Vec::new();
    for (k, b) in beta.iter().enumerate() {
        if *b > BETA_WARN {
            warnings.push(format!(
                "coupling ratio #{k} = {b:.3} exceeds {BETA_WARN}; first-order reduction is inaccurate"
            ));
        }
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    let params = TightBindingParams {
        omega_r,
        j1: omega_r * beta[0] / 2.0,
        j2: omega_r * beta[1] / 2.0,
        j_long: beta[2..].iter().map(|b| omega_r * b / 2.0).collect(),
        z_r: Some(z_r),
        c_sigma: Some(c_sigma),
    };
    Ok(Reduction { params, beta, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn homogeneous(n: usize) -> CircuitParams {
        CircuitParams {
            n,
            l_g: 16.8,
            c_g: 25.0,
            c1: 0.8,
            c2: 0.8,
            c_long: vec![],
            diagonal: DiagonalMode::Uniform,
        }
    }

    #[test]
    fn matrix_structure() {
        let p = CircuitParams::table_device();
        let c = build_capacitance_matrix(&p).unwrap();
        assert_eq!(c[(0, 1)], -1.84);
        assert_eq!(c[(1, 2)], -2.72);
        assert_eq!(c[(2, 3)], -1.84);
        assert_eq!(c[(0, 2)], -0.38);
        assert_eq!(c[(0, 3)], -0.13);
        assert_eq!(c[(0, 4)], 0.0);
        assert_eq!(c, c.transpose());
        // Edge site has only one nearest neighbour and one of each stray.
        assert!((c[(0, 0)] - (23.04 + 1.84 + 0.38 + 0.13)).abs() < 1e-12);
        assert!((c[(20, 20)] - p.c_sigma()).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_lengths_and_values() {
        let mut p = CircuitParams::table_device();
        p.n = 7;
        assert!(matches!(build_capacitance_matrix(&p), Err(Error::Validation(_))));
        p.n = 2;
        assert!(matches!(build_capacitance_matrix(&p), Err(Error::Validation(_))));
        let mut p = CircuitParams::table_device();
        p.l_g = 0.0;
        assert!(derive_tight_binding(&p).is_err());
    }

    #[test]
    fn homogeneous_chain_follows_cosine_band() {
        // Uniform diagonal: C = C_S (1 - beta T) so the exact modes are
        // omega_r (1 - 2 beta cos k)^-1/2.
        let p = homogeneous(12);
        let freqs = exact_cca_frequencies(&p).unwrap();
        let red = derive_tight_binding(&p).unwrap();
        let (wr, j) = (red.params.omega_r, red.params.j1);
        let beta = red.beta[0];
        let mut tb: Vec<f64> = (1..=12)
            .map(|k| wr + 2.0 * j * (k as f64 * std::f64::consts::PI / 13.0).cos())
            .collect();
        tb.sort_by(f64::total_cmp);
        for (a, b) in freqs.iter().zip(&tb) {
            assert!(((a - b) / b).abs() <= 3.0 * beta * beta);
        }
        let mut exact: Vec<f64> = (1..=12)
            .map(|k| wr / (1.0 - 2.0 * beta * (k as f64 * std::f64::consts::PI / 13.0).cos()).sqrt())
            .collect();
        exact.sort_by(f64::total_cmp);
        for (a, b) in freqs.iter().zip(&exact) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_coupling_gives_zero_hopping() {
        let mut p = homogeneous(8);
        p.c1 = 0.0;
        let red = derive_tight_binding(&p).unwrap();
        assert_eq!(red.params.j1, 0.0);
        let mut q = CircuitParams::table_device();
        q.c_long = vec![0.0; 3];
        let red = derive_tight_binding(&q).unwrap();
        assert!(red.params.j_long.iter().all(|&j| j == 0.0));
    }

    #[test]
    fn large_beta_warns() {
        let mut p = homogeneous(8);
        p.c1 = 20.0;
        let red = derive_tight_binding(&p).unwrap();
        assert!(!red.warnings.is_empty());
    }

    #[test]
    fn table_lc_scale() {
        // Bulk site: C_Sigma = 28.62 fF, L_g = 16.8 nH.
        let red = derive_tight_binding(&CircuitParams::table_device()).unwrap();
        assert!((red.params.c_sigma.unwrap() - 28.62).abs() < 1e-9);
        assert!((red.params.omega_r - 7.2580).abs() < 1e-3);
    }
}
