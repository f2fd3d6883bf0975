//! Explicit Runge-Kutta steppers.
//!
//! The independent variable here is a non-decreasing parameter `s`; callers
//! that integrate backward in time negate the vector field instead of
//! stepping with negative `h`.

use thiserror::Error;

/// Right-hand side `dy/ds = f(s, y)`.
pub type Rhs<'a> = dyn Fn(f64, &[f64], &mut [f64]) + 'a;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OdeError {
    #[error("non-finite state at s = {s}")]
    NonFinite { s: f64, last: Vec<f64> },
    #[error("step size underflow at s = {s}")]
    StepUnderflow { s: f64, last: Vec<f64> },
}

// Dormand-Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
// B minus the embedded 4th-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Scratch space for one stepper.
#[derive(Debug, Clone)]
pub struct Workspace {
    k: [Vec<f64>; 7],
    tmp: Vec<f64>,
}

impl Workspace {
    pub fn new(dim: usize) -> Self {
        Self {
            k: std::array::from_fn(|_| vec![0.0; dim]),
            tmp: vec![0.0; dim],
        }
    }
}

/// One classical RK4 step.
pub fn rk4_step(f: &Rhs<'_>, s: f64, y: &[f64], h: f64, ws: &mut Workspace, out: &mut [f64]) {
    let n = y.len();
    let [k1, k2, k3, k4, ..] = &mut ws.k;
    f(s, y, k1);
    for i in 0..n {
        ws.tmp[i] = y[i] + 0.5 * h * k1[i];
    }
    f(s + 0.5 * h, &ws.tmp, k2);
    for i in 0..n {
        ws.tmp[i] = y[i] + 0.5 * h * k2[i];
    }
    f(s + 0.5 * h, &ws.tmp, k3);
    for i in 0..n {
        ws.tmp[i] = y[i] + h * k3[i];
    }
    f(s + h, &ws.tmp, k4);
    for i in 0..n {
        out[i] = y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

/// One Dormand-Prince step. Writes the 5th-order solution to `out` and the
/// local error estimate to `err`.
pub fn dp5_step(
    f: &Rhs<'_>,
    s: f64,
    y: &[f64],
    h: f64,
    ws: &mut Workspace,
    out: &mut [f64],
    err: &mut [f64],
) {
    let n = y.len();
    for stage in 0..7 {
        for i in 0..n {
            let mut acc = y[i];
            for j in 0..stage {
                acc += h * A[stage][j] * ws.k[j][i];
            }
            ws.tmp[i] = acc;
        }
        f(s + C[stage] * h, &ws.tmp, &mut ws.k[stage]);
    }
    for i in 0..n {
        let mut sol = y[i];
        let mut e = 0.0;
        for stage in 0..7 {
            sol += h * B[stage] * ws.k[stage][i];
            e += h * E[stage] * ws.k[stage][i];
        }
        out[i] = sol;
        err[i] = e;
    }
}

/// Weighted RMS error norm; a step is acceptable when this is at most 1.
pub fn error_norm(y: &[f64], y_new: &[f64], err: &[f64], abs_tol: f64, rel_tol: f64) -> f64 {
    let n = y.len().max(1) as f64;
    let sum: f64 = y
        .iter()
        .zip(y_new)
        .zip(err)
        .map(|((a, b), e)| {
            let scale = abs_tol + rel_tol * a.abs().max(b.abs());
            (e / scale).powi(2)
        })
        .sum();
    (sum / n).sqrt()
}

/// Adaptive Dormand-Prince driver over an increasing parameter.
pub struct Adaptive<'f> {
    f: &'f Rhs<'f>,
    pub s: f64,
    pub y: Vec<f64>,
    h: f64,
    abs_tol: f64,
    rel_tol: f64,
    ws: Workspace,
    scratch: (Vec<f64>, Vec<f64>),
    /// Size of the last accepted step.
    pub last_h: f64,
    /// Error norm of the last accepted step.
    pub last_err: f64,
    pub accepted: usize,
    pub rejected: usize,
}

impl<'f> Adaptive<'f> {
    pub fn new(f: &'f Rhs<'f>, s0: f64, y0: Vec<f64>, abs_tol: f64, rel_tol: f64) -> Self {
        let n = y0.len();
        // Rough initial step from the 5th-root tolerance scaling.
        let h = (abs_tol.max(rel_tol)).powf(0.2) * 0.1;
        Self {
            f,
            s: s0,
            y: y0,
            h,
            abs_tol,
            rel_tol,
            ws: Workspace::new(n),
            scratch: (vec![0.0; n], vec![0.0; n]),
            last_h: 0.0,
            last_err: 0.0,
            accepted: 0,
            rejected: 0,
        }
    }

    /// Takes one accepted step without passing `s_end`, landing on it exactly
    /// when it is within reach.
    pub fn step_toward(&mut self, s_end: f64) -> Result<(), OdeError> {
        loop {
            let remaining = s_end - self.s;
            let mut h = self.h.min(remaining);
            let lands = h >= remaining * (1.0 - 1e-12);
            if lands {
                h = remaining;
            }
            if h <= f64::EPSILON * self.s.abs().max(1.0) && !lands {
                return Err(OdeError::StepUnderflow {
                    s: self.s,
                    last: self.y.clone(),
                });
            }
            let (ref mut y_new, ref mut err) = self.scratch;
            dp5_step(self.f, self.s, &self.y, h, &mut self.ws, y_new, err);
            if y_new.iter().any(|v| !v.is_finite()) {
                if h < 1e-300 {
                    return Err(OdeError::NonFinite {
                        s: self.s,
                        last: self.y.clone(),
                    });
                }
                self.h = 0.25 * h;
                self.rejected += 1;
                if self.rejected > 10_000 + 100 * self.accepted {
                    return Err(OdeError::NonFinite {
                        s: self.s,
                        last: self.y.clone(),
                    });
                }
                continue;
            }
            let e = error_norm(&self.y, y_new, err, self.abs_tol, self.rel_tol);
            let factor = if e == 0.0 {
                5.0
            } else {
                (0.9 * e.powf(-0.2)).clamp(0.2, 5.0)
            };
            if e <= 1.0 {
                self.s = if lands { s_end } else { self.s + h };
                std::mem::swap(&mut self.y, y_new);
                self.last_h = h;
                self.last_err = e;
                self.accepted += 1;
                // Keep the proposed step when we only shortened it to land.
                self.h = if lands { self.h.max(h) } else { h * factor };
                return Ok(());
            }
            self.rejected += 1;
            self.h = h * factor.min(1.0);
            if self.h <= f64::EPSILON * self.s.abs().max(1.0) {
                return Err(OdeError::StepUnderflow {
                    s: self.s,
                    last: self.y.clone(),
                });
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rotation(_: f64, y: &[f64], out: &mut [f64]) {
        out[0] = y[1];
        out[1] = -y[0];
    }

    #[test]
    fn tableau_rows_are_consistent() {
        for stage in 1..7 {
            let row: f64 = A[stage].iter().sum();
            assert!((row - C[stage]).abs() < 1e-15, "row {stage}");
        }
        assert!((B.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(E.iter().sum::<f64>().abs() < 1e-15);
    }

    #[test]
    fn dp5_is_fifth_order() {
        // Global error over [0, 1] on y' = y should drop by ~2^5 when h halves.
        let f = |_: f64, y: &[f64], out: &mut [f64]| out[0] = y[0];
        let run = |n: usize| {
            let h = 1.0 / n as f64;
            let mut ws = Workspace::new(1);
            let mut y = vec![1.0];
            let mut out = vec![0.0];
            let mut err = vec![0.0];
            for i in 0..n {
                dp5_step(&f, i as f64 * h, &y, h, &mut ws, &mut out, &mut err);
                y.copy_from_slice(&out);
            }
            (y[0] - 1f64.exp()).abs()
        };
        let ratio = run(10) / run(20);
        assert!(ratio > 25.0 && ratio < 40.0, "ratio {ratio}");
    }

    #[test]
    fn rk4_is_fourth_order() {
        let f = |_: f64, y: &[f64], out: &mut [f64]| out[0] = y[0];
        let run = |n: usize| {
            let h = 1.0 / n as f64;
            let mut ws = Workspace::new(1);
            let mut y = vec![1.0];
            let mut out = vec![0.0];
            for i in 0..n {
                rk4_step(&f, i as f64 * h, &y, h, &mut ws, &mut out);
                y.copy_from_slice(&out);
            }
            (y[0] - 1f64.exp()).abs()
        };
        let ratio = run(10) / run(20);
        assert!(ratio > 14.0 && ratio < 18.0, "ratio {ratio}");
    }

    #[test]
    fn adaptive_lands_exactly_and_is_accurate() {
        let f: &Rhs<'_> = &rotation;
        let mut st = Adaptive::new(f, 0.0, vec![1.0, 0.0], 1e-12, 1e-12);
        let end = std::f64::consts::TAU;
        while st.s < end {
            st.step_toward(end).unwrap();
        }
        assert_eq!(st.s, end);
        assert!((st.y[0] - 1.0).abs() < 1e-9);
        assert!(st.y[1].abs() < 1e-9);
    }

    #[test]
    fn blow_up_is_reported() {
        // y' = y^2 from y(0) = 1 blows up at s = 1.
        let f = |_: f64, y: &[f64], out: &mut [f64]| out[0] = y[0] * y[0];
        let f: &Rhs<'_> = &f;
        let mut st = Adaptive::new(f, 0.0, vec![1.0], 1e-10, 1e-10);
        let mut res = Ok(());
        while st.s < 2.0 && res.is_ok() {
            res = st.step_toward(2.0);
        }
        assert!(res.is_err());
        assert!(st.s < 1.0 + 1e-6);
    }
}
