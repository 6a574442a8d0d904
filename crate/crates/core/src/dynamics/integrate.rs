//! Adaptive Dormand-Prince 5(4) stepping for complex state vectors.

use crate::error::{Error, Result};
use crate::linalg::C64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
    pub h_init: f64,
    pub h_min: f64,
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { rtol: 1e-10, atol: 1e-13, h_init: 1e-3, h_min: 1e-12, h_max: 1.0, max_steps: 50_000_000 }
    }
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// Fifth-order weights are the last row of A; these are fifth minus fourth.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Integrator state carried across calls so that step-size history survives
/// between report points.
pub struct Dopri<F> {
    f: F,
    tol: Tolerances,
    h: f64,
    k: Vec<Vec<C64>>,
    tmp: Vec<C64>,
    fsal_valid: bool,
    pub steps: usize,
    pub rejected: usize,
}

impl<F> Dopri<F>
where
    F: FnMut(f64, &[C64], &mut [C64]),
{
    pub fn new(f: F, dim: usize, tol: Tolerances) -> Self {
        Dopri {
            f,
            tol,
            h: tol.h_init,
            k: vec![vec![C64::new(0.0, 0.0); dim]; 7],
            tmp: vec![C64::new(0.0, 0.0); dim],
            fsal_valid: false,
            steps: 0,
            rejected: 0,
        }
    }

    /// Forget the derivative cached from the previous step; required when
    /// the right-hand side has a discontinuity at the current time.
    pub fn reset(&mut self) {
        self.fsal_valid = false;
    }

    /// Advance `y` from `t0` to exactly `t1`.
    pub fn advance(&mut self, t0: f64, t1: f64, y: &mut [C64]) -> Result<()> {
        let dim = y.len();
        let mut t = t0;
        if !self.fsal_valid {
            (self.f)(t, y, &mut self.k[0]);
            self.fsal_valid = true;
        }
        let mut y_new = vec![C64::new(0.0, 0.0); dim];
        while t < t1 {
            if self.steps >= self.tol.max_steps {
                return Err(Error::numeric("integrator exceeded its step budget"));
            }
            let remaining = t1 - t;
            let mut h = self.h.min(self.tol.h_max);
            let last = h >= remaining * (1.0 - 1e-12);
            if last {
                h = remaining;
            }
            for s in 1..7 {
                for i in 0..dim {
                    let mut acc = y[i];
                    for (j, a) in A[s].iter().enumerate().take(s) {
                        if *a != 0.0 {
                            acc += self.k[j][i] * (h * a);
                        }
                    }
                    self.tmp[i] = acc;
                }
                (self.f)(t + C[s] * h, &self.tmp, &mut self.k[s]);
            }
            // The last stage was evaluated at the fifth-order solution (FSAL).
            let mut err = 0.0;
            for i in 0..dim {
                y_new[i] = self.tmp[i];
                let mut e = C64::new(0.0, 0.0);
                for (j, w) in E.iter().enumerate() {
                    if *w != 0.0 {
                        e += self.k[j][i] * (h * w);
                    }
                }
                let sc = self.tol.atol + self.tol.rtol * y[i].norm().max(y_new[i].norm());
                err += (e.norm() / sc).powi(2);
            }
            let err = (err / dim as f64).sqrt();
            if !err.is_finite() {
                return Err(Error::numeric("non-finite state during integration"));
            }
            if err <= 1.0 {
                t = if last { t1 } else { t + h };
                y.copy_from_slice(&y_new);
                self.k.swap(0, 6);
                self.steps += 1;
                let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                if !last || fac < 1.0 {
                    self.h = h * fac;
                }
            } else {
                self.rejected += 1;
                self.h = h * (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
                if self.h < self.tol.h_min {
                    return Err(Error::numeric(format!("step size collapsed to {:.3e} ns at t = {t:.6} ns", self.h)));
                }
            }
        }
        Ok(())
    }
}
