//! Time-domain engine for the single-excitation sector under flux schedules.
//!
//! Two backends share one interface. `NonHermitian` propagates the amplitude
//! vector with H - (i/2) Gamma and keeps the ground amplitude fixed;
//! `Lindblad` integrates the full density matrix of the {ground, one
//! excitation} space. Both integrate the per-channel loss fluxes alongside the
//! state so that every lost quantum is accounted for.
//!
//! Frequencies in GHz, time in ns, evolution exp(-i 2 pi H t). The state is
//! carried in a frame rotating at `omega_ref`, which only changes the phase
//! of the output-field records.

pub mod integrate;
pub mod protocols;
pub mod schedule;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::LatticeModel;
use crate::linalg::C64;
use crate::openloss::{Channels, LossModel};
pub use integrate::Tolerances;
use integrate::Dopri;
pub use schedule::{Envelope, PulseSchedule, Segment};

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;
/// Allowed drift of Tr(rho) on the Lindblad backend. The trace is a linear
/// invariant, which Runge-Kutta steps keep up to rounding.
pub const TRACE_DRIFT: f64 = 1e-8;
/// Allowed drift of |c0|^2 + |psi|^2 + lost on the amplitude backend. This
/// balance is quadratic in the state, so integrator error accumulates in it.
pub const BALANCE_DRIFT: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    NonHermitian,
    Lindblad,
}

/// One-excitation Hamiltonian plus dissipators and port read-out.
#[derive(Debug, Clone)]
pub struct OpenSystem {
    /// Static part; the qubit diagonal is replaced by the schedule.
    pub h: DMatrix<f64>,
    pub qubit: usize,
    pub channels: Channels,
    /// a_out,port = sum c_s a_s with c_s = sqrt(kappa_s) (GHz^1/2).
    pub out_l: Vec<(usize, f64)>,
    pub out_r: Vec<(usize, f64)>,
}

impl OpenSystem {
    pub fn from_lattice(model: &LatticeModel, loss: &LossModel) -> Result<Self> {
        let n = model.n;
        let h = model.hamiltonian(0.0);
        let channels = loss.channels(n, true)?;
        Ok(OpenSystem {
            h,
            qubit: n,
            channels,
            out_l: vec![(0, loss.kappa_ext_l.sqrt()), (1, loss.kappa_ext_lp.sqrt())],
            out_r: vec![(n - 1, loss.kappa_ext_r.sqrt()), (n - 2, loss.kappa_ext_rp.sqrt())],
        })
    }

    /// Lossless system with the given Hamiltonian.
    pub fn closed(h: DMatrix<f64>, qubit: usize) -> Result<Self> {
        let d = h.nrows();
        if h.ncols() != d || qubit >= d {
            return Err(Error::validation("Hamiltonian must be square and contain the qubit index"));
        }
        let z = DMatrix::zeros(d, d);
        Ok(OpenSystem {
            h,
            qubit,
            channels: Channels { left: z.clone(), right: z.clone(), internal: z },
            out_l: vec![],
            out_r: vec![],
        })
    }

    pub fn dim(&self) -> usize {
        self.h.nrows()
    }

    fn validate(&self) -> Result<()> {
        let d = self.dim();
        for m in [&self.channels.left, &self.channels.right, &self.channels.internal] {
            if m.nrows() != d || m.ncols() != d {
                return Err(Error::validation("loss channel dimension differs from the Hamiltonian"));
            }
        }
        if self.out_l.iter().chain(&self.out_r).any(|&(s, _)| s >= d) {
            return Err(Error::validation("output port refers to a site outside the system"));
        }
        Ok(())
    }
}

/// c0 |ground> + sum psi_i |i>.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialState {
    pub ground: C64,
    pub psi: DVector<C64>,
}

impl InitialState {
    pub fn new(ground: C64, psi: DVector<C64>) -> Result<Self> {
        let norm = ground.norm_sqr() + psi.norm_squared();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::validation(format!("initial state has norm {norm}")));
        }
        Ok(InitialState { ground, psi })
    }

    /// Qubit fully excited.
    pub fn excited_qubit(dim: usize, qubit: usize) -> Self {
        let mut psi = DVector::zeros(dim);
        psi[qubit] = C64::new(1.0, 0.0);
        InitialState { ground: C64::new(0.0, 0.0), psi }
    }

    /// (|ground> + |v>)/sqrt 2 for a real normalised vector v.
    pub fn half_superposition(v: &[f64]) -> Result<Self> {
        let n: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n == 0.0 {
            return Err(Error::validation("zero state vector"));
        }
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let psi = DVector::from_iterator(v.len(), v.iter().map(|x| C64::new(s * x / n, 0.0)));
        InitialState::new(C64::new(s, 0.0), psi)
    }

    pub fn excitation(&self) -> f64 {
        self.psi.norm_squared()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvolveOptions {
    pub backend: Backend,
    pub tol: Tolerances,
    /// Spacing of the reporting grid, ns.
    pub report_dt: f64,
    /// Frame frequency; `None` uses the mean diagonal of H.
    pub omega_ref: Option<f64>,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        EvolveOptions { backend: Backend::NonHermitian, tol: Tolerances::default(), report_dt: 1.0, omega_ref: None }
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub omega_q: Vec<f64>,
    pub p_e: Vec<f64>,
    /// `site_pop[k][s]` for all non-qubit indices s in system order.
    pub site_pop: Vec<Vec<f64>>,
    pub n_l: Vec<f64>,
    pub n_r: Vec<f64>,
    /// Integrated internal loss, qubit relaxation included.
    pub n_int: Vec<f64>,
    #[serde(skip)]
    pub a_out_l: Vec<C64>,
    #[serde(skip)]
    pub a_out_r: Vec<C64>,
    /// Total probability (trace of rho, or |c0|^2 + |psi|^2 + lost).
    pub trace: Vec<f64>,
    pub initial_excitation: f64,
    pub omega_ref: f64,
    #[serde(skip)]
    pub final_psi: Option<DVector<C64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn intensity_l(&self) -> Vec<f64> {
        self.a_out_l.iter().map(|a| a.norm_sqr()).collect()
    }

    pub fn intensity_r(&self) -> Vec<f64> {
        self.a_out_r.iter().map(|a| a.norm_sqr()).collect()
    }

    /// Largest violation of P_e + sum n_s + N_L + N_R + N_int = initial excitation.
    pub fn continuity_residual(&self) -> f64 {
        (0..self.len())
            .map(|k| {
                let s = self.p_e[k] + self.site_pop[k].iter().sum::<f64>() + self.n_l[k] + self.n_r[k] + self.n_int[k];
                (s - self.initial_excitation).abs()
            })
            .fold(0.0, f64::max)
    }

    pub fn photons(&self) -> (f64, f64) {
        (*self.n_l.last().unwrap_or(&0.0), *self.n_r.last().unwrap_or(&0.0))
    }

    pub fn eta(&self) -> f64 {
        let (l, r) = self.photons();
        directionality(l, r)
    }
}

/// (L - R)/(L + R); NaN when nothing was emitted.
pub fn directionality(l: f64, r: f64) -> f64 {
    if l + r > 0.0 {
        (l - r) / (l + r)
    } else {
        f64::NAN
    }
}

type Triplets = Vec<(usize, usize, f64)>;

fn triplets(m: &DMatrix<f64>) -> Triplets {
    let mut v = Vec::new();
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if m[(i, j)] != 0.0 {
                v.push((i, j, m[(i, j)]));
            }
        }
    }
    v
}

/// Sparse generator K = -i 2 pi (H - omega_ref) - pi Gamma without the
/// qubit diagonal, and the loss triplets for the three flux accumulators.
struct Generator {
    k: Vec<(usize, usize, C64)>,
    q: usize,
    omega_ref: f64,
    loss: [Triplets; 3],
}

impl Generator {
    fn new(sys: &OpenSystem, omega_ref: f64) -> Self {
        let d = sys.dim();
        let gamma = sys.channels.total();
        let mut k = Vec::new();
        for j in 0..d {
            for i in 0..d {
                let mut h = sys.h[(i, j)];
                if i == j {
                    h = if i == sys.qubit { 0.0 } else { h - omega_ref };
                }
                let z = C64::new(-std::f64::consts::PI * gamma[(i, j)], -TWO_PI * h);
                if z != C64::new(0.0, 0.0) {
                    k.push((i, j, z));
                }
            }
        }
        Generator {
            k,
            q: sys.qubit,
            omega_ref,
            loss: [triplets(&sys.channels.left), triplets(&sys.channels.right), triplets(&sys.channels.internal)],
        }
    }

    fn qubit_term(&self, omega_q: f64) -> C64 {
        C64::new(0.0, -TWO_PI * (omega_q - self.omega_ref))
    }
}

fn field(coeffs: &[(usize, f64)], amp: impl Fn(usize) -> C64) -> C64 {
    let s = TWO_PI.sqrt();
    coeffs.iter().map(|&(i, c)| amp(i) * (c * s)).sum()
}

/// Reporting times and the schedule breakpoints (where the RHS kinks).
fn time_grid(schedule: &PulseSchedule, dt: f64) -> Result<(Vec<f64>, Vec<bool>)> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::validation("report interval must be positive"));
    }
    let total = schedule.duration();
    let n = (total / dt + 1e-9).floor() as usize;
    let mut pts: Vec<(f64, bool)> = (0..=n).map(|k| (k as f64 * dt, true)).collect();
    if (total - n as f64 * dt).abs() > 1e-9 {
        pts.push((total, true));
    }
    for b in schedule.boundaries() {
        if pts.iter().all(|p| (p.0 - b).abs() > 1e-9) {
            pts.push((b, false));
        }
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok((pts.iter().map(|p| p.0).collect(), pts.iter().map(|p| p.1).collect()))
}

fn is_boundary(schedule: &PulseSchedule, t: f64) -> bool {
    schedule.boundaries().iter().any(|b| (b - t).abs() < 1e-9)
}

/// Integrate the schedule from t = 0.
pub fn evolve(sys: &OpenSystem, schedule: &PulseSchedule, init: &InitialState, opts: &EvolveOptions) -> Result<Trajectory> {
    sys.validate()?;
    let d = sys.dim();
    if init.psi.len() != d {
        return Err(Error::validation(format!("initial state has dimension {}, system {d}", init.psi.len())));
    }
    let omega_ref = opts.omega_ref.unwrap_or_else(|| {
        let mut s: f64 = (0..d).filter(|&i| i != sys.qubit).map(|i| sys.h[(i, i)]).sum();
        s += schedule.omega_q(0.0);
        s / d as f64
    });
    let gen = Generator::new(sys, omega_ref);
    match opts.backend {
        Backend::NonHermitian => evolve_nh(sys, &gen, schedule, init, opts),
        Backend::Lindblad => evolve_lindblad(sys, &gen, schedule, init, opts),
    }
}

fn push_common(traj: &mut Trajectory, sys: &OpenSystem, t: f64, omega_q: f64, pops: Vec<f64>, acc: [f64; 3]) {
    traj.t.push(t);
    traj.omega_q.push(omega_q);
    traj.p_e.push(pops[sys.qubit]);
    traj.site_pop.push(pops.iter().enumerate().filter(|(i, _)| *i != sys.qubit).map(|(_, p)| *p).collect());
    traj.n_l.push(acc[0]);
    traj.n_r.push(acc[1]);
    traj.n_int.push(acc[2]);
}

fn check_trace(tr: f64, t: f64, limit: f64) -> Result<()> {
    if (tr - 1.0).abs() > limit {
        return Err(Error::numeric(format!("probability drifted to {tr:.9} at t = {t:.3} ns")));
    }
    Ok(())
}

fn evolve_nh(
    sys: &OpenSystem,
    gen: &Generator,
    schedule: &PulseSchedule,
    init: &InitialState,
    opts: &EvolveOptions,
) -> Result<Trajectory> {
    let d = sys.dim();
    let c0 = init.ground;
    let mut y: Vec<C64> = init.psi.iter().copied().collect();
    y.extend([C64::new(0.0, 0.0); 3]);
    let rhs = |t: f64, y: &[C64], dy: &mut [C64]| {
        for z in dy.iter_mut() {
            *z = C64::new(0.0, 0.0);
        }
        for &(i, j, v) in &gen.k {
            dy[i] += v * y[j];
        }
        dy[gen.q] += gen.qubit_term(schedule.omega_q(t)) * y[gen.q];
        for (ch, trip) in gen.loss.iter().enumerate() {
            let mut acc = 0.0;
            for &(i, j, g) in trip {
                acc += g * (y[i].conj() * y[j]).re;
            }
            dy[d + ch] = C64::new(TWO_PI * acc, 0.0);
        }
    };
    let mut solver = Dopri::new(rhs, d + 3, opts.tol);
    let (times, report) = time_grid(schedule, opts.report_dt)?;
    let mut traj = Trajectory { initial_excitation: init.excitation(), omega_ref: gen.omega_ref, ..Default::default() };
    let record = |traj: &mut Trajectory, t: f64, y: &[C64]| -> Result<()> {
        let pops: Vec<f64> = y[..d].iter().map(|z| z.norm_sqr()).collect();
        let acc = [y[d].re, y[d + 1].re, y[d + 2].re];
        let tr = c0.norm_sqr() + pops.iter().sum::<f64>() + acc.iter().sum::<f64>();
        check_trace(tr, t, BALANCE_DRIFT)?;
        traj.trace.push(tr);
        traj.a_out_l.push(field(&sys.out_l, |i| y[i] * c0.conj()));
        traj.a_out_r.push(field(&sys.out_r, |i| y[i] * c0.conj()));
        push_common(traj, sys, t, schedule.omega_q(t), pops, acc);
        Ok(())
    };
    record(&mut traj, 0.0, &y)?;
    for w in 1..times.len() {
        solver.advance(times[w - 1], times[w], &mut y)?;
        if is_boundary(schedule, times[w]) {
            solver.reset();
        }
        if report[w] {
            record(&mut traj, times[w], &y)?;
        }
    }
    traj.final_psi = Some(DVector::from_column_slice(&y[..d]));
    Ok(traj)
}

fn evolve_lindblad(
    sys: &OpenSystem,
    gen: &Generator,
    schedule: &PulseSchedule,
    init: &InitialState,
    opts: &EvolveOptions,
) -> Result<Trajectory> {
    let d = sys.dim();
    let g = d; // ground index
    let dd = d + 1;
    let mut full = DVector::<C64>::zeros(dd);
    full.rows_mut(0, d).copy_from(&init.psi);
    full[g] = init.ground;
    let rho0 = &full * full.adjoint();
    // Column-major rho, then the three accumulators.
    let mut y: Vec<C64> = rho0.iter().copied().collect();
    y.extend([C64::new(0.0, 0.0); 3]);
    let idx = move |i: usize, j: usize| i + j * dd;
    let total_loss = triplets(&sys.channels.total());
    let rhs = |t: f64, y: &[C64], dy: &mut [C64]| {
        for z in dy.iter_mut() {
            *z = C64::new(0.0, 0.0);
        }
        let qt = gen.qubit_term(schedule.omega_q(t));
        // K rho + rho K^dagger; K vanishes on the ground row and column.
        for &(i, j, v) in gen.k.iter().chain(std::iter::once(&(gen.q, gen.q, qt))) {
            let vc = v.conj();
            for c in 0..dd {
                dy[idx(i, c)] += v * y[idx(j, c)];
                dy[idx(c, i)] += y[idx(c, j)] * vc;
            }
        }
        // Jumps return the excitation to the ground state.
        let mut jump = 0.0;
        for &(i, j, gm) in &total_loss {
            jump += gm * y[idx(j, i)].re;
        }
        dy[idx(g, g)] += C64::new(TWO_PI * jump, 0.0);
        for (ch, trip) in gen.loss.iter().enumerate() {
            let mut acc = 0.0;
            for &(i, j, gm) in trip {
                acc += gm * y[idx(j, i)].re;
            }
            dy[dd * dd + ch] = C64::new(TWO_PI * acc, 0.0);
        }
    };
    let mut solver = Dopri::new(rhs, dd * dd + 3, opts.tol);
    let (times, report) = time_grid(schedule, opts.report_dt)?;
    let mut traj = Trajectory { initial_excitation: init.excitation(), omega_ref: gen.omega_ref, ..Default::default() };
    let record = |traj: &mut Trajectory, t: f64, y: &[C64]| -> Result<()> {
        let pops: Vec<f64> = (0..d).map(|i| y[idx(i, i)].re).collect();
        let n = dd * dd;
        let acc = [y[n].re, y[n + 1].re, y[n + 2].re];
        let tr = pops.iter().sum::<f64>() + y[idx(g, g)].re;
        check_trace(tr, t, TRACE_DRIFT)?;
        traj.trace.push(tr);
        traj.a_out_l.push(field(&sys.out_l, |i| y[idx(i, g)]));
        traj.a_out_r.push(field(&sys.out_r, |i| y[idx(i, g)]));
        push_common(traj, sys, t, schedule.omega_q(t), pops, acc);
        Ok(())
    };
    record(&mut traj, 0.0, &y)?;
    for w in 1..times.len() {
        solver.advance(times[w - 1], times[w], &mut y)?;
        if is_boundary(schedule, times[w]) {
            solver.reset();
        }
        if report[w] {
            record(&mut traj, times[w], &y)?;
        }
    }
    Ok(traj)
}

/// Scale each port's photon record by Gamma = gamma_sim / gamma_meas.
pub fn rescale_emission(traj: &Trajectory, ratio_l: f64, ratio_r: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    for r in [ratio_l, ratio_r] {
        if !(r.is_finite() && r > 0.0) {
            return Err(Error::validation(format!("rescaling ratio must be positive and finite, got {r}")));
        }
    }
    Ok((traj.n_l.iter().map(|x| x * ratio_l).collect(), traj.n_r.iter().map(|x| x * ratio_r).collect()))
}

/// Ratios gamma_sim / gamma_meas per port; a zero measured rate is an error.
pub fn rescale_ratios(sim: (f64, f64), meas: (f64, f64)) -> Result<(f64, f64)> {
    if !(sim.0 > 0.0 && sim.1 > 0.0) {
        return Err(Error::validation("simulated rates must be positive"));
    }
    if !(meas.0 > 0.0 && meas.1 > 0.0) {
        return Err(Error::validation("measured rates must be positive"));
    }
    Ok((sim.0 / meas.0, sim.1 / meas.1))
}

/// Amplitude propagation without bookkeeping: the states at each of the
/// sorted `times` (ns, within the schedule).
pub fn propagate(
    sys: &OpenSystem,
    schedule: &PulseSchedule,
    psi0: &DVector<C64>,
    times: &[f64],
    tol: Tolerances,
    omega_ref: f64,
) -> Result<Vec<DVector<C64>>> {
    sys.validate()?;
    let d = sys.dim();
    if psi0.len() != d {
        return Err(Error::validation("state dimension differs from the system"));
    }
    if times.windows(2).any(|w| w[1] < w[0]) || times.first().is_some_and(|&t| t < 0.0) {
        return Err(Error::validation("propagation times must be sorted and non-negative"));
    }
    let gen = Generator::new(sys, omega_ref);
    let rhs = |t: f64, y: &[C64], dy: &mut [C64]| {
        for z in dy.iter_mut() {
            *z = C64::new(0.0, 0.0);
        }
        for &(i, j, v) in &gen.k {
            dy[i] += v * y[j];
        }
        dy[gen.q] += gen.qubit_term(schedule.omega_q(t)) * y[gen.q];
    };
    let mut solver = Dopri::new(rhs, d, tol);
    let mut stops: Vec<(f64, Option<usize>)> = times.iter().enumerate().map(|(k, &t)| (t, Some(k))).collect();
    for b in schedule.boundaries() {
        if b < *times.last().unwrap_or(&0.0) {
            stops.push((b, None));
        }
    }
    stops.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut y: Vec<C64> = psi0.iter().copied().collect();
    let mut out = vec![DVector::zeros(d); times.len()];
    let mut t = 0.0;
    for (ts, k) in stops {
        if ts > t {
            solver.advance(t, ts, &mut y)?;
            t = ts;
            if is_boundary(schedule, t) {
                solver.reset();
            }
        }
        if let Some(k) = k {
            out[k] = DVector::from_column_slice(&y);
        }
    }
    Ok(out)
}
