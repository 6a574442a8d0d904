//! FFT maps, spectrograms and two-port transmission.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::lattice::LatticeModel;
use crate::linalg::{complex_eigen, C64};
use crate::openloss::{build_non_hermitian, LossModel};

pub const MIN_FFT_SAMPLES: usize = 16;
pub const ZERO_PAD: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Window {
    Hann,
    Rectangular,
}

impl Window {
    fn weights(self, n: usize) -> Vec<f64> {
        match self {
            Window::Rectangular => vec![1.0; n],
            Window::Hann => (0..n)
                .map(|k| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * k as f64 / (n - 1) as f64).cos())
                .collect(),
        }
    }
}

/// One-sided magnitude spectrum of a real series sampled at `dt`, after mean
/// removal, windowing and zero padding to `pad` times the length.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub freqs: Vec<f64>,
    pub magnitude: Vec<f64>,
    /// Padded bin width, 1/(pad n dt).
    pub bin: f64,
}

fn prepared(x: &[f64], window: Window, pad: usize) -> Vec<C64> {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let w = window.weights(n);
    let mut buf = vec![C64::new(0.0, 0.0); n * pad.max(1)];
    for k in 0..n {
        buf[k] = C64::new((x[k] - mean) * w[k], 0.0);
    }
    buf
}

pub fn spectrum(x: &[f64], dt: f64, window: Window, pad: usize) -> Result<Spectrum> {
    if x.len() < MIN_FFT_SAMPLES {
        return Err(Error::validation(format!("FFT needs at least {MIN_FFT_SAMPLES} samples, got {}", x.len())));
    }
    if !(dt > 0.0) {
        return Err(Error::validation("sample interval must be positive"));
    }
    let mut buf = prepared(x, window, pad);
    let m = buf.len();
    FftPlanner::new().plan_fft_forward(m).process(&mut buf);
    let half = m / 2 + 1;
    let bin = 1.0 / (m as f64 * dt);
    Ok(Spectrum {
        freqs: (0..half).map(|k| k as f64 * bin).collect(),
        magnitude: buf[..half].iter().map(|z| z.norm()).collect(),
        bin,
    })
}

/// Relative mismatch between the energies of the prepared (windowed, padded)
/// series and of its full DFT.
pub fn parseval_residual(x: &[f64], window: Window, pad: usize) -> f64 {
    let mut buf = prepared(x, window, pad);
    let e_t: f64 = buf.iter().map(|z| z.norm_sqr()).sum();
    let m = buf.len();
    FftPlanner::new().plan_fft_forward(m).process(&mut buf);
    let e_f: f64 = buf.iter().map(|z| z.norm_sqr()).sum::<f64>() / m as f64;
    (e_t - e_f).abs() / e_t.max(f64::MIN_POSITIVE)
}

impl Spectrum {
    /// Frequency of the largest bin at or above `f_min`.
    pub fn peak(&self, f_min: f64) -> Option<f64> {
        (0..self.freqs.len())
            .filter(|&k| self.freqs[k] >= f_min)
            .max_by(|&a, &b| self.magnitude[a].total_cmp(&self.magnitude[b]))
            .map(|k| self.freqs[k])
    }

    /// Local maxima above `rel` times the global maximum, strongest first.
    pub fn peaks(&self, rel: f64) -> Vec<f64> {
        let top = self.magnitude.iter().cloned().fold(0.0, f64::max);
        let m = &self.magnitude;
        let mut idx: Vec<usize> =
            (1..m.len() - 1).filter(|&k| m[k] >= m[k - 1] && m[k] > m[k + 1] && m[k] >= rel * top).collect();
        idx.sort_by(|&a, &b| m[b].total_cmp(&m[a]));
        idx.into_iter().map(|k| self.freqs[k]).collect()
    }
}

/// Per-column spectra of a map holding one time series per column.
pub fn fft_map(columns: &[Vec<f64>], dt: f64) -> Result<Vec<Spectrum>> {
    columns.par_iter().map(|c| spectrum(c, dt, Window::Hann, ZERO_PAD)).collect()
}

#[derive(Debug, Clone)]
pub struct Spectrogram {
    /// Window centres, ns.
    pub times: Vec<f64>,
    /// Two-sided frequency axis (ascending), GHz.
    pub freqs: Vec<f64>,
    /// `magnitude[t][f]`.
    pub magnitude: Vec<Vec<f64>>,
}

impl Spectrogram {
    pub fn ridge(&self) -> Vec<f64> {
        self.magnitude
            .iter()
            .map(|row| {
                let k = (0..row.len()).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
                self.freqs[k]
            })
            .collect()
    }
}

/// Sliding Hann-window FFT of a complex record (e.g. a down-converted field).
pub fn spectrogram(record: &[C64], dt: f64, window: f64, step: f64) -> Result<Spectrogram> {
    if !(dt > 0.0 && window > 0.0 && step > 0.0) {
        return Err(Error::validation("spectrogram intervals must be positive"));
    }
    let wn = (window / dt).round() as usize;
    let sn = ((step / dt).round() as usize).max(1);
    if wn < MIN_FFT_SAMPLES || record.len() <= wn {
        return Err(Error::validation(format!(
            "record of {} samples is not longer than the {wn}-sample window",
            record.len()
        )));
    }
    let m = wn * ZERO_PAD;
    let fft = FftPlanner::new().plan_fft_forward(m);
    let w = Window::Hann.weights(wn);
    let starts: Vec<usize> = (0..=(record.len() - wn)).step_by(sn).collect();
    let magnitude: Vec<Vec<f64>> = starts
        .par_iter()
        .map(|&s| {
            let mut buf = vec![C64::new(0.0, 0.0); m];
            for k in 0..wn {
                buf[k] = record[s + k] * w[k];
            }
            fft.process(&mut buf);
            // Reorder to ascending frequency.
            (0..m).map(|k| buf[(k + m / 2) % m].norm()).collect()
        })
        .collect();
    let bin = 1.0 / (m as f64 * dt);
    Ok(Spectrogram {
        times: starts.iter().map(|&s| (s as f64 + 0.5 * (wn - 1) as f64) * dt).collect(),
        freqs: (0..m).map(|k| (k as f64 - (m / 2) as f64) * bin).collect(),
        magnitude,
    })
}

/// Port vectors sqrt(kappa) on the two outermost sites of each side.
fn port_vectors(loss: &LossModel, n: usize, dim: usize) -> (DVector<C64>, DVector<C64>) {
    let mut l = DVector::zeros(dim);
    let mut r = DVector::zeros(dim);
    l[0] = C64::new(loss.kappa_ext_l.sqrt(), 0.0);
    l[1] = C64::new(loss.kappa_ext_lp.sqrt(), 0.0);
    r[n - 1] = C64::new(loss.kappa_ext_r.sqrt(), 0.0);
    r[n - 2] = C64::new(loss.kappa_ext_rp.sqrt(), 0.0);
    (l, r)
}

/// S21(omega_p) = -i p_R^T (omega_p - H_NH)^{-1} p_L at one qubit frequency.
pub fn transmission(model: &LatticeModel, loss: &LossModel, omega_q: f64, probes: &[f64]) -> Result<Vec<C64>> {
    let h = model.hamiltonian(omega_q);
    let hnh = build_non_hermitian(&h, loss, model.n)?;
    let (pl, pr) = port_vectors(loss, model.n, h.nrows());
    let eig = complex_eigen(&hnh)?;
    // H_NH is complex symmetric: G = sum v v^T / ((v^T v)(omega - lambda)).
    let mut terms = Vec::with_capacity(eig.values.len());
    let mut well_conditioned = true;
    for k in 0..eig.values.len() {
        let v = eig.vectors.column(k);
        let norm = v.iter().map(|z| z * z).sum::<C64>();
        if norm.norm() < 1e-8 {
            well_conditioned = false;
            break;
        }
        let a = v.iter().zip(pr.iter()).map(|(x, y)| x * y).sum::<C64>();
        let b = v.iter().zip(pl.iter()).map(|(x, y)| x * y).sum::<C64>();
        terms.push((eig.values[k], a * b / norm));
    }
    let mi = C64::new(0.0, -1.0);
    if well_conditioned {
        return Ok(probes.iter().map(|&w| mi * terms.iter().map(|(lam, c)| c / (w - lam)).sum::<C64>()).collect());
    }
    let d = h.nrows();
    probes
        .iter()
        .map(|&w| {
            let a = DMatrix::from_fn(d, d, |i, j| if i == j { C64::new(w, 0.0) } else { C64::new(0.0, 0.0) }) - &hnh;
            let x = a.lu().solve(&pl).ok_or_else(|| Error::numeric("singular resolvent in transmission"))?;
            Ok(mi * pr.iter().zip(x.iter()).map(|(p, z)| p * z).sum::<C64>())
        })
        .collect()
}

/// `map[q][p]` over qubit and probe grids.
pub fn transmission_map(model: &LatticeModel, loss: &LossModel, probes: &[f64], qubits: &[f64]) -> Result<Vec<Vec<C64>>> {
    for (name, g) in [("probe", probes), ("qubit", qubits)] {
        if g.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::validation(format!("{name} grid must be strictly increasing")));
        }
    }
    qubits.par_iter().map(|&wq| transmission(model, loss, wq, probes)).collect()
}

/// Local maxima of |S21| along the probe axis, ignoring those below
/// `RIDGE_FLOOR` times the row maximum (rounding ripples far from any mode).
pub fn ridges(row: &[C64], probes: &[f64]) -> Vec<f64> {
    let m: Vec<f64> = row.iter().map(|z| z.norm()).collect();
    let floor = RIDGE_FLOOR * m.iter().cloned().fold(0.0, f64::max);
    (1..m.len().saturating_sub(1))
        .filter(|&k| m[k] > m[k - 1] && m[k] >= m[k + 1] && m[k] > floor)
        .map(|k| probes[k])
        .collect()
}

pub const RIDGE_FLOOR: f64 = 1e-6;
