//! Experiment-level sequences: quench scans, parametric SWAP and directional
//! emission.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{evolve, propagate, EvolveOptions, InitialState, OpenSystem, Tolerances, Trajectory};
use super::{Envelope, PulseSchedule, Segment};
use crate::error::{Error, Result};
use crate::lattice::{sweep_and_track, DressedPoint, LatticeModel};
use crate::linalg::{sym_eigen, C64};
use crate::openloss::{extract_mode_rates, LossModel};

fn with_qubit(sys: &OpenSystem, omega_q: f64) -> DMatrix<f64> {
    let mut h = sys.h.clone();
    h[(sys.qubit, sys.qubit)] = omega_q;
    h
}

fn complexify(v: &[f64]) -> DVector<C64> {
    DVector::from_iterator(v.len(), v.iter().map(|&x| C64::new(x, 0.0)))
}

fn overlap2(a: &DVector<f64>, psi: &DVector<C64>) -> f64 {
    a.iter().zip(psi.iter()).map(|(x, z)| z * *x).sum::<C64>().norm_sqr()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Readout {
    /// |<q|psi>|^2 of the bare qubit.
    BareQubit,
    /// Population of the most qubit-like eigenstate at the idle frequency,
    /// which is also the prepared state.
    DressedQubit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuenchConfig {
    pub omega_init: f64,
    pub targets: Vec<f64>,
    /// Hold times, ns, sorted.
    pub holds: Vec<f64>,
    pub ramp_time: f64,
    pub readout: Readout,
}

#[derive(Debug, Clone, Serialize)]
pub struct QuenchMap {
    pub targets: Vec<f64>,
    pub holds: Vec<f64>,
    /// `p_e[target][hold]`.
    pub p_e: Vec<Vec<f64>>,
}

/// Displace, hold for each tau, return and read out; one independent
/// evolution per target frequency.
pub fn quench_scan(sys: &OpenSystem, cfg: &QuenchConfig, tol: Tolerances) -> Result<QuenchMap> {
    if !(cfg.ramp_time > 0.0) {
        return Err(Error::validation("ramp time must be positive"));
    }
    if cfg.holds.is_empty() || cfg.holds.windows(2).any(|w| !(w[1] > w[0])) || cfg.holds[0] < 0.0 {
        return Err(Error::validation("hold times must be non-negative and strictly increasing"));
    }
    let d = sys.dim();
    let (_, v) = sym_eigen(&with_qubit(sys, cfg.omega_init))?;
    let readout: DVector<f64> = match cfg.readout {
        Readout::BareQubit => {
            let mut e = DVector::zeros(d);
            e[sys.qubit] = 1.0;
            e
        }
        Readout::DressedQubit => {
            let m = (0..d).max_by(|&a, &b| v[(sys.qubit, a)].abs().total_cmp(&v[(sys.qubit, b)].abs())).unwrap();
            v.column(m).into_owned()
        }
    };
    let psi0 = complexify(readout.as_slice());
    let omega_ref = cfg.omega_init;
    let t_max = *cfg.holds.last().unwrap();
    let p_e = cfg
        .targets
        .par_iter()
        .map(|&target| -> Result<Vec<f64>> {
            let up = PulseSchedule::new(vec![Segment::Ramp { start: cfg.omega_init, end: target, duration: cfg.ramp_time }])?;
            let psi1 = propagate(sys, &up, &psi0, &[cfg.ramp_time], tol, omega_ref)?.remove(0);
            let hold = PulseSchedule::hold(target, t_max.max(1e-9))?;
            let held = propagate(sys, &hold, &psi1, &cfg.holds, tol, omega_ref)?;
            // Row vector r^T U_down, built from the propagated basis.
            let down = PulseSchedule::new(vec![Segment::Ramp { start: target, end: cfg.omega_init, duration: cfg.ramp_time }])?;
            let mut row = DVector::<C64>::zeros(d);
            for j in 0..d {
                let mut e = DVector::zeros(d);
                e[j] = C64::new(1.0, 0.0);
                let u = propagate(sys, &down, &e, &[cfg.ramp_time], tol, omega_ref)?.remove(0);
                row[j] = readout.iter().zip(u.iter()).map(|(r, z)| z * *r).sum();
            }
            Ok(held.iter().map(|psi| row.iter().zip(psi.iter()).map(|(r, z)| r * z).sum::<C64>().norm_sqr()).collect())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(QuenchMap { targets: cfg.targets.clone(), holds: cfg.holds.clone(), p_e })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwapPulse {
    pub center: f64,
    pub frequency: f64,
    pub amplitude: f64,
    pub duration: f64,
    pub envelope: Envelope,
}

impl SwapPulse {
    pub fn segment(&self) -> Segment {
        Segment::Sine {
            center: self.center,
            amplitude: self.amplitude,
            mod_frequency: self.frequency,
            duration: self.duration,
            envelope: self.envelope,
        }
    }
}

/// Supergaussian of order 2 whose width is a quarter of the pulse.
pub fn default_envelope(duration: f64) -> Envelope {
    Envelope::SuperGaussian { order: 2, width: duration / 4.0 }
}

fn envelope_area(env: Envelope, duration: f64) -> f64 {
    let n = 4000;
    let h = duration / n as f64;
    (0..=n)
        .map(|k| {
            let w = if k == 0 || k == n { 0.5 } else { 1.0 };
            w * env.value(k as f64 * h, duration)
        })
        .sum::<f64>()
        * h
}

/// First-sideband estimate: modulation at the dressed difference and an
/// amplitude that makes the rotating-wave coupling A u_s u_t / 2 complete a
/// half swap cycle over the envelope.
pub fn swap_estimate(point: &DressedPoint, source: usize, target: usize, duration: f64, envelope: Envelope) -> SwapPulse {
    let q = point.dim() - 1;
    let uu = (point.vectors[(q, source)] * point.vectors[(q, target)]).abs().max(1e-12);
    SwapPulse {
        center: point.omega_q,
        frequency: (point.freqs[target] - point.freqs[source]).abs(),
        amplitude: 1.0 / (2.0 * uu * envelope_area(envelope, duration)),
        duration,
        envelope,
    }
}

/// Population in the source and target states after the pulse.
pub fn swap_transfer(
    sys: &OpenSystem,
    pulse: &SwapPulse,
    source: &DVector<f64>,
    target: &DVector<f64>,
    tol: Tolerances,
) -> Result<(f64, f64)> {
    let sched = PulseSchedule::new(vec![pulse.segment()])?;
    let psi0 = complexify(source.as_slice());
    let psi = propagate(sys, &sched, &psi0, &[pulse.duration], tol, pulse.center)?.remove(0);
    Ok((overlap2(source, &psi), overlap2(target, &psi)))
}

/// Remaining source population on a (frequency, amplitude) grid:
/// `map[f][a]`.
pub fn swap_scan(
    sys: &OpenSystem,
    base: &SwapPulse,
    source: &DVector<f64>,
    target: &DVector<f64>,
    freqs: &[f64],
    amps: &[f64],
    tol: Tolerances,
) -> Result<Vec<Vec<f64>>> {
    let cells: Vec<(usize, usize)> = (0..freqs.len()).flat_map(|i| (0..amps.len()).map(move |j| (i, j))).collect();
    let vals = cells
        .par_iter()
        .map(|&(i, j)| {
            let p = SwapPulse { frequency: freqs[i], amplitude: amps[j], ..*base };
            swap_transfer(sys, &p, source, target, tol).map(|r| r.0)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(vals.chunks(amps.len()).map(|c| c.to_vec()).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SwapCalibration {
    pub pulse: SwapPulse,
    pub fidelity: f64,
    pub evaluations: usize,
}

fn golden_max(mut lo: f64, mut hi: f64, iters: usize, mut f: impl FnMut(f64) -> Result<f64>) -> Result<(f64, f64)> {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - r * (hi - lo);
    let mut b = lo + r * (hi - lo);
    let (mut fa, mut fb) = (f(a)?, f(b)?);
    for _ in 0..iters {
        if fa < fb {
            lo = a;
            a = b;
            fa = fb;
            b = lo + r * (hi - lo);
            fb = f(b)?;
        } else {
            hi = b;
            b = a;
            fb = fa;
            a = hi - r * (hi - lo);
            fa = f(a)?;
        }
    }
    Ok(if fa > fb { (a, fa) } else { (b, fb) })
}

/// Number of amplitudes in the coarse calibration scan.
const SWAP_COARSE: usize = 24;

/// Maximise the transfer fidelity. A coarse log-spaced amplitude scan comes
/// first because the sideband estimate ignores the Bessel-type saturation of
/// strong modulation and can be off by several times; golden-section
/// searches in amplitude and modulation frequency then refine the best cell.
pub fn calibrate_swap(
    sys: &OpenSystem,
    estimate: &SwapPulse,
    source: &DVector<f64>,
    target: &DVector<f64>,
    max_amplitude: f64,
    tol: Tolerances,
) -> Result<SwapCalibration> {
    if !(max_amplitude > 0.0) {
        return Err(Error::validation("maximum SWAP amplitude must be positive"));
    }
    let mut pulse = *estimate;
    let a_min = (estimate.amplitude / 4.0).min(max_amplitude / 8.0);
    let ratio = (max_amplitude / a_min).powf(1.0 / (SWAP_COARSE - 1) as f64);
    let amps: Vec<f64> = (0..SWAP_COARSE).map(|k| a_min * ratio.powi(k as i32)).collect();
    let coarse = amps
        .par_iter()
        .map(|&a| swap_transfer(sys, &SwapPulse { amplitude: a, ..pulse }, source, target, tol).map(|r| r.1))
        .collect::<Result<Vec<f64>>>()?;
    let mut evals = SWAP_COARSE;
    let k = (0..SWAP_COARSE).max_by(|&i, &j| coarse[i].total_cmp(&coarse[j])).unwrap();
    let mut fid = coarse[k];
    pulse.amplitude = amps[k];
    let (mut a_lo, mut a_hi) = (amps[k.saturating_sub(1)], amps[(k + 1).min(SWAP_COARSE - 1)]);
    // Frequency window: a few sideband linewidths of the pulse.
    let df = 2.0 / estimate.duration;
    for round in 0..3 {
        let (a, fa) = golden_max(a_lo, a_hi, 14, |a| {
            evals += 1;
            swap_transfer(sys, &SwapPulse { amplitude: a, ..pulse }, source, target, tol).map(|r| r.1)
        })?;
        if fa > fid {
            pulse.amplitude = a;
            fid = fa;
        }
        let span = df / (1 << round) as f64;
        let (f, ff) = golden_max(pulse.frequency - span, pulse.frequency + span, 14, |f| {
            evals += 1;
            swap_transfer(sys, &SwapPulse { frequency: f, ..pulse }, source, target, tol).map(|r| r.1)
        })?;
        if ff > fid {
            pulse.frequency = f;
            fid = ff;
        }
        a_lo = pulse.amplitude * 0.8;
        a_hi = (pulse.amplitude * 1.25).min(max_amplitude);
    }
    Ok(SwapCalibration { pulse, fidelity: fid, evaluations: evals })
}

#[derive(Debug, Clone, Serialize)]
pub struct OptimalPoint {
    pub omega_q: f64,
    pub chi_db: f64,
    /// Sorted (0-based) index of the tracked branch at the optimum.
    pub sorted_index: usize,
    pub curve: Vec<(f64, f64)>,
}

/// Extremum of |chi_db| along the branch with 1-based `label` (sorted order
/// at `omega_start`), searched inside `window`.
pub fn optimal_emission_point(
    model: &LatticeModel,
    loss: &LossModel,
    omega_start: f64,
    label: usize,
    window: (f64, f64),
    step: f64,
) -> Result<OptimalPoint> {
    if !(step > 0.0) || !(window.1 > window.0) || window.0 < omega_start {
        return Err(Error::validation("emission window must lie above the start frequency and step must be positive"));
    }
    let n = ((window.1 - omega_start) / step).round() as usize;
    let grid: Vec<f64> = (0..=n).map(|k| omega_start + k as f64 * step).collect();
    let spec = sweep_and_track(model, &grid)?;
    if label == 0 || label > spec.n_modes() {
        return Err(Error::validation(format!("mode label {label} outside 1..={}", spec.n_modes())));
    }
    let inside: Vec<usize> = (0..grid.len()).filter(|&k| grid[k] >= window.0 - 1e-12).collect();
    let curve = inside
        .par_iter()
        .map(|&k| {
            let h = model.hamiltonian(grid[k]);
            let rates = extract_mode_rates(&h, loss, model.n)?;
            Ok((grid[k], rates[spec.branch[k][label - 1]].chi_db()))
        })
        .collect::<Result<Vec<(f64, f64)>>>()?;
    let best = (0..curve.len())
        .filter(|&i| !curve[i].1.is_nan())
        .max_by(|&a, &b| curve[a].1.abs().total_cmp(&curve[b].1.abs()));
    let Some(i) = best else {
        return Err(Error::numeric("no finite chirality ratio in the emission window"));
    };
    if i == 0 || i + 1 == curve.len() || curve[i].1 == 0.0 {
        return Err(Error::numeric(format!(
            "no chirality extremum inside ({}, {}) GHz for mode {label}",
            window.0, window.1
        )));
    }
    let k = inside[i];
    Ok(OptimalPoint { omega_q: grid[k], chi_db: curve[i].1, sorted_index: spec.branch[k][label - 1], curve })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmissionConfig {
    pub omega_start: f64,
    /// 1-based dressed label at `omega_start`.
    pub target_label: usize,
    pub swap_duration: f64,
    pub envelope: Option<Envelope>,
    pub ramp_time: f64,
    pub window: (f64, f64),
    pub scan_step: f64,
    /// Hold at the emission point after the ramp, ns.
    pub tail: f64,
    /// Idle time before the SWAP, ns.
    pub prep_delay: f64,
    pub max_swap_amplitude: f64,
    /// Skip the calibration and use (frequency, amplitude) directly.
    pub swap_override: Option<(f64, f64)>,
    /// Start from the upper bound state at the emission point and omit the ramp.
    pub ideal: bool,
}

impl EmissionConfig {
    pub fn table_device(target_label: usize) -> Self {
        EmissionConfig {
            omega_start: 7.56,
            target_label,
            swap_duration: 160.0,
            envelope: None,
            ramp_time: 120.0,
            window: (8.0, 9.0),
            scan_step: 0.002,
            tail: 2000.0,
            prep_delay: 0.0,
            max_swap_amplitude: 0.5,
            swap_override: None,
            ideal: false,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EmissionResult {
    pub trajectory: Trajectory,
    pub eta: f64,
    pub n_l: f64,
    pub n_r: f64,
    pub optimal: OptimalPoint,
    pub swap: SwapCalibration,
    pub schedule: PulseSchedule,
    /// End times of preparation, SWAP and ramp.
    pub swap_end: f64,
    pub ramp_end: f64,
}

pub fn emission_protocol(
    model: &LatticeModel,
    loss: &LossModel,
    cfg: &EmissionConfig,
    opts: &EvolveOptions,
) -> Result<EmissionResult> {
    for (name, v) in [("swap duration", cfg.swap_duration), ("tail", cfg.tail)] {
        if !(v > 0.0) {
            return Err(Error::validation(format!("{name} must be positive")));
        }
    }
    if !cfg.ideal && !(cfg.ramp_time > 0.0) {
        return Err(Error::validation("ramp time must be positive"));
    }
    let sys = OpenSystem::from_lattice(model, loss)?;
    let optimal =
        optimal_emission_point(model, loss, cfg.omega_start, cfg.target_label, cfg.window, cfg.scan_step)?;
    let envelope = cfg.envelope.unwrap_or_else(|| default_envelope(cfg.swap_duration));
    let idle = if cfg.ideal { optimal.omega_q } else { cfg.omega_start };
    let point = model.diagonalize(idle)?;
    let (src, tgt) = if cfg.ideal {
        (point.dim() - 1, optimal.sorted_index)
    } else {
        (point.most_atomic(), cfg.target_label - 1)
    };
    if src == tgt {
        return Err(Error::validation("SWAP source and target are the same dressed state"));
    }
    let source = point.vectors.column(src).into_owned();
    let target = point.vectors.column(tgt).into_owned();
    let estimate = swap_estimate(&point, src, tgt, cfg.swap_duration, envelope);
    // Calibrate the coherent transfer; with losses on, the target decays
    // during the pulse and a longer, more selective pulse would be penalised.
    let lossless = OpenSystem::closed(sys.h.clone(), sys.qubit)?;
    let swap = match cfg.swap_override {
        Some((f, a)) => {
            let pulse = SwapPulse { frequency: f, amplitude: a, ..estimate };
            let (_, fid) = swap_transfer(&lossless, &pulse, &source, &target, opts.tol)?;
            SwapCalibration { pulse, fidelity: fid, evaluations: 1 }
        }
        None => calibrate_swap(&lossless, &estimate, &source, &target, cfg.max_swap_amplitude, opts.tol)?,
    };
    let mut segs = Vec::new();
    if cfg.prep_delay > 0.0 {
        segs.push(Segment::Hold { omega_q: idle, duration: cfg.prep_delay });
    }
    segs.push(swap.pulse.segment());
    let swap_end = cfg.prep_delay.max(0.0) + cfg.swap_duration;
    let mut ramp_end = swap_end;
    if !cfg.ideal {
        segs.push(Segment::Ramp { start: idle, end: optimal.omega_q, duration: cfg.ramp_time });
        ramp_end += cfg.ramp_time;
    }
    segs.push(Segment::Hold { omega_q: optimal.omega_q, duration: cfg.tail });
    let schedule = PulseSchedule::new(segs)?;
    let init = InitialState::half_superposition(source.as_slice())?;
    let trajectory = evolve(&sys, &schedule, &init, opts)?;
    let (n_l, n_r) = trajectory.photons();
    Ok(EmissionResult { eta: trajectory.eta(), n_l, n_r, trajectory, optimal, swap, schedule, swap_end, ramp_end })
}
