//! Single-mode reflection model for each port and a joint two-port fit.
//!
//! S_pp(omega) = A_p e^{-i alpha_p} (1 - gamma_p e^{i phi_p} /
//!               (i (omega - omega~) + (gamma_L + gamma_R + gamma_int) / 2))

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::C64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Port {
    Left,
    Right,
}

/// Baseline amplitude, phase offset and impedance-mismatch angle of a port.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Baseline {
    pub amplitude: f64,
    pub alpha: f64,
    pub phi: f64,
}

impl Default for Baseline {
    fn default() -> Self {
        Baseline { amplitude: 1.0, alpha: 0.0, phi: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResonanceParams {
    pub omega: f64,
    pub gamma_l: f64,
    pub gamma_r: f64,
    pub gamma_int: f64,
    pub left: Baseline,
    pub right: Baseline,
}

impl ResonanceParams {
    pub fn gamma_total(&self) -> f64 {
        self.gamma_l + self.gamma_r + self.gamma_int
    }

    pub fn s(&self, port: Port, omega: f64) -> C64 {
        let (b, g) = match port {
            Port::Left => (self.left, self.gamma_l),
            Port::Right => (self.right, self.gamma_r),
        };
        let den = C64::new(0.5 * self.gamma_total(), omega - self.omega);
        let inner = C64::new(1.0, 0.0) - C64::from_polar(g, b.phi) / den;
        C64::from_polar(b.amplitude, -b.alpha) * inner
    }
}

pub fn reflection_spectrum(p: &ResonanceParams, port: Port, omegas: &[f64]) -> Vec<C64> {
    omegas.iter().map(|&w| p.s(port, w)).collect()
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub params: ResonanceParams,
    pub rms_residual: f64,
    pub iterations: usize,
}

const NPAR: usize = 10;

fn pack(p: &ResonanceParams) -> [f64; NPAR] {
    [
        p.omega,
        p.gamma_l,
        p.gamma_r,
        p.gamma_int,
        p.left.amplitude,
        p.left.alpha,
        p.left.phi,
        p.right.amplitude,
        p.right.alpha,
        p.right.phi,
    ]
}

fn unpack(x: &[f64]) -> ResonanceParams {
    ResonanceParams {
        omega: x[0],
        gamma_l: x[1],
        gamma_r: x[2],
        gamma_int: x[3],
        left: Baseline { amplitude: x[4], alpha: x[5], phi: x[6] },
        right: Baseline { amplitude: x[7], alpha: x[8], phi: x[9] },
    }
}

fn residuals(x: &[f64], w: &[f64], sl: &[C64], sr: &[C64]) -> DVector<f64> {
    let p = unpack(x);
    let n = w.len();
    let mut r = DVector::<f64>::zeros(4 * n);
    for k in 0..n {
        let dl = p.s(Port::Left, w[k]) - sl[k];
        let dr = p.s(Port::Right, w[k]) - sr[k];
        r[4 * k] = dl.re;
        r[4 * k + 1] = dl.im;
        r[4 * k + 2] = dr.re;
        r[4 * k + 3] = dr.im;
    }
    r
}

/// Baseline from the trace ends and dip geometry from the magnitude.
struct TraceSeed {
    baseline: Baseline,
    min_index: usize,
    depth_ratio: f64,
    fwhm: f64,
}

fn seed_trace(w: &[f64], s: &[C64]) -> TraceSeed {
    let n = w.len();
    let edge = (n / 10).max(1);
    let ends: Vec<C64> = s[..edge].iter().chain(&s[n - edge..]).copied().collect();
    let mean: C64 = ends.iter().sum::<C64>() / ends.len() as f64;
    let amplitude = ends.iter().map(|z| z.norm()).sum::<f64>() / ends.len() as f64;
    let mag: Vec<f64> = s.iter().map(|z| z.norm()).collect();
    let min_index = (0..n).min_by(|&a, &b| mag[a].total_cmp(&mag[b])).unwrap();
    let depth = amplitude - mag[min_index];
    let half = amplitude - 0.5 * depth;
    let mut lo = min_index;
    while lo > 0 && mag[lo] < half {
        lo -= 1;
    }
    let mut hi = min_index;
    while hi + 1 < n && mag[hi] < half {
        hi += 1;
    }
    let step = (w[n - 1] - w[0]) / (n - 1) as f64;
    TraceSeed {
        baseline: Baseline { amplitude, alpha: -mean.arg(), phi: 0.0 },
        min_index,
        depth_ratio: (mag[min_index] / amplitude).clamp(0.0, 1.0),
        fwhm: (w[hi] - w[lo]).max(step),
    }
}

/// Joint complex least-squares fit of both reflection traces, seeded from
/// the minimum of the traces and their half-prominence widths.
pub fn fit_reflection(omegas: &[f64], s_ll: &[C64], s_rr: &[C64]) -> Result<FitResult> {
    let n = omegas.len();
    if n < 16 || s_ll.len() != n || s_rr.len() != n {
        return Err(Error::validation("reflection fit needs two traces of >= 16 matching points"));
    }
    if omegas.windows(2).any(|p| !(p[1] > p[0])) {
        return Err(Error::validation("frequency axis must be strictly increasing"));
    }
    let sl = seed_trace(omegas, s_ll);
    let sr = seed_trace(omegas, s_rr);
    let deeper = if sl.depth_ratio <= sr.depth_ratio { &sl } else { &sr };
    let omega0 = omegas[deeper.min_index];
    let total = 0.5 * (sl.fwhm + sr.fwhm);
    let mut best: Option<FitResult> = None;
    // The dip depth leaves the under/over-coupled branch open for each port.
    for (bl, br) in [(-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0), (1.0, 1.0)] {
        let gl = 0.5 * total * (1.0 + bl * sl.depth_ratio);
        let gr = 0.5 * total * (1.0 + br * sr.depth_ratio);
        if gl + gr >= total * 1.05 {
            continue;
        }
        let gi = (total - gl - gr).max(0.02 * total);
        let start = ResonanceParams {
            omega: omega0,
            gamma_l: gl,
            gamma_r: gr,
            gamma_int: gi,
            left: sl.baseline,
            right: sr.baseline,
        };
        let fit = levenberg_marquardt(&pack(&start), omegas, s_ll, s_rr)?;
        if best.as_ref().map_or(true, |b| fit.rms_residual < b.rms_residual) {
            best = Some(fit);
        }
    }
    best.ok_or_else(|| Error::numeric("no admissible starting point for the reflection fit"))
}

fn levenberg_marquardt(x0: &[f64; NPAR], w: &[f64], sl: &[C64], sr: &[C64]) -> Result<FitResult> {
    let scale_w = (w[w.len() - 1] - w[0]).abs();
    let mut x = x0.to_vec();
    let mut r = residuals(&x, w, sl, sr);
    let mut cost = r.norm_squared();
    let mut lambda = 1e-3;
    let mut iterations = 0;
    for it in 0..500 {
        iterations = it + 1;
        let mut jac = DMatrix::<f64>::zeros(r.len(), NPAR);
        for j in 0..NPAR {
            let h = match j {
                0..=3 => 1e-7 * scale_w,
                _ => 1e-7,
            };
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            let d = (residuals(&xp, w, sl, sr) - residuals(&xm, w, sl, sr)) / (2.0 * h);
            jac.set_column(j, &d);
        }
        let jtj = jac.transpose() * &jac;
        let jtr = jac.transpose() * &r;
        let mut improved = false;
        for _ in 0..20 {
            let mut a = jtj.clone();
            for d in 0..NPAR {
                a[(d, d)] += lambda * jtj[(d, d)].max(1e-30);
            }
            let Some(step) = a.lu().solve(&(-&jtr)) else {
                lambda *= 10.0;
                continue;
            };
            let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            let rt = residuals(&trial, w, sl, sr);
            let ct = rt.norm_squared();
            if ct.is_finite() && ct < cost {
                let rel = (cost - ct) / cost.max(1e-300);
                x = trial;
                r = rt;
                cost = ct;
                lambda = (lambda / 3.0).max(1e-12);
                improved = true;
                if rel < 1e-13 {
                    return Ok(finish(x, cost, r.len(), iterations));
                }
                break;
            }
            lambda *= 4.0;
        }
        if !improved {
            break;
        }
    }
    Ok(finish(x, cost, r.len(), iterations))
}

fn finish(mut x: Vec<f64>, cost: f64, m: usize, iterations: usize) -> FitResult {
    // Negative amplitudes are equivalent to a pi phase shift.
    for (amp, alpha) in [(4, 5), (7, 8)] {
        if x[amp] < 0.0 {
            x[amp] = -x[amp];
            x[alpha] += std::f64::consts::PI;
        }
        x[alpha] = (x[alpha] + std::f64::consts::PI).rem_euclid(2.0 * std::f64::consts::PI)
            - std::f64::consts::PI;
    }
    FitResult { params: unpack(&x), rms_residual: (cost / m as f64).sqrt(), iterations }
}

/// One synthetic fit: the drawn resonance, the fit and relative errors of
/// omega~ and of (gamma_L, gamma_R, gamma_int).
#[derive(Debug, Clone)]
pub struct RoundTrip {
    pub truth: ResonanceParams,
    pub fit: ResonanceParams,
    pub omega_error: f64,
    pub gamma_error: [f64; 3],
}

/// Resonance drawn in the range of the measured device modes.
pub fn random_resonance<R: Rng>(rng: &mut R) -> ResonanceParams {
    let log_uniform = |rng: &mut R, lo: f64, hi: f64| (rng.random_range(lo.ln()..hi.ln())).exp();
    let pi = std::f64::consts::PI;
    let baseline = |rng: &mut R| Baseline {
        amplitude: rng.random_range(0.5..1.5),
        alpha: rng.random_range(-pi..pi),
        phi: rng.random_range(-0.3..0.3),
    };
    ResonanceParams {
        omega: rng.random_range(7.2..8.6),
        gamma_l: log_uniform(rng, 0.2e-3, 2e-3),
        gamma_r: log_uniform(rng, 0.2e-3, 2e-3),
        gamma_int: log_uniform(rng, 0.3e-3, 1e-3),
        left: baseline(rng),
        right: baseline(rng),
    }
}

/// Complex Gaussian noise, `level` times the baseline amplitude per quadrature.
fn add_noise<R: Rng>(trace: &mut [C64], level: f64, amplitude: f64, rng: &mut R) -> Result<()> {
    let dist = Normal::new(0.0, level * amplitude).map_err(|e| Error::validation(format!("noise level: {e}")))?;
    for z in trace.iter_mut() {
        *z += C64::new(dist.sample(rng), dist.sample(rng));
    }
    Ok(())
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

/// Draw, synthesise both port traces over +-6 linewidths, add noise and fit.
/// Draw k uses ChaCha stream k of `seed`, so results do not depend on the
/// worker count.
pub fn fit_roundtrip(draws: usize, noise: f64, points: usize, seed: u64) -> Result<Vec<RoundTrip>> {
    if draws == 0 {
        return Err(Error::validation("need at least one draw"));
    }
    if !(noise >= 0.0) {
        return Err(Error::validation("noise level must be non-negative"));
    }
    (0..draws as u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k);
            let truth = random_resonance(&mut rng);
            let span = 6.0 * truth.gamma_total();
            let w: Vec<f64> = (0..points)
                .map(|i| truth.omega - span + 2.0 * span * i as f64 / (points.max(2) - 1) as f64)
                .collect();
            let mut sl = reflection_spectrum(&truth, Port::Left, &w);
            let mut sr = reflection_spectrum(&truth, Port::Right, &w);
            add_noise(&mut sl, noise, truth.left.amplitude, &mut rng)?;
            add_noise(&mut sr, noise, truth.right.amplitude, &mut rng)?;
            let fit = fit_reflection(&w, &sl, &sr)?.params;
            Ok(RoundTrip {
                omega_error: rel(fit.omega, truth.omega),
                gamma_error: [
                    rel(fit.gamma_l, truth.gamma_l),
                    rel(fit.gamma_r, truth.gamma_r),
                    rel(fit.gamma_int, truth.gamma_int),
                ],
                truth,
                fit,
            })
        })
        .collect()
}
