//! Trajectories of the evolution vector field, the projection onto the
//! `t = 0` slice along those trajectories, and flows of first integrals
//! inside a fixed-time slice.

use std::fmt::Write as _;

use thiserror::Error;

use crate::field::{Arity, ScalarField};
use crate::ode::{rk4_step, Adaptive, OdeError, Rhs, Workspace};
use crate::point::{CoreError, PhasePoint};
use crate::system::TDSystem;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FlowError {
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("invalid step control: {0}")]
    InvalidControl(String),
    #[error("step budget of {steps} exhausted; last good point {last}")]
    Divergence { steps: usize, last: PhasePoint },
    #[error("integration blew up near {last}")]
    BlowUp { last: PhasePoint },
    #[error("flow is not complete on this ray: {reason}")]
    Incomplete { reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    /// Classical fixed-step RK4. The step is shrunk slightly so that an
    /// integer number of steps lands on the target.
    Rk4 { step: f64 },
    /// Adaptive Dormand-Prince 5(4).
    Rk45 { abs_tol: f64, rel_tol: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepControl {
    pub method: Method,
    pub max_steps: usize,
}

impl StepControl {
    pub fn rk4(step: f64, max_steps: usize) -> Result<Self, FlowError> {
        Self {
            method: Method::Rk4 { step },
            max_steps,
        }
        .validated()
    }

    pub fn rk45(abs_tol: f64, rel_tol: f64, max_steps: usize) -> Result<Self, FlowError> {
        Self {
            method: Method::Rk45 { abs_tol, rel_tol },
            max_steps,
        }
        .validated()
    }

    /// `rk45` with equal absolute and relative tolerance and a generous
    /// step budget.
    pub fn precise(tol: f64) -> Self {
        Self::rk45(tol, tol, 10_000_000).expect("positive tolerance")
    }

    pub fn validated(self) -> Result<Self, FlowError> {
        if self.max_steps == 0 {
            return Err(FlowError::InvalidControl("max_steps must be at least 1".into()));
        }
        let ok = match self.method {
            Method::Rk4 { step } => step.is_finite() && step > 0.0,
            Method::Rk45 { abs_tol, rel_tol } => {
                abs_tol.is_finite() && rel_tol.is_finite() && abs_tol > 0.0 && rel_tol > 0.0
            }
        };
        if ok {
            Ok(self)
        } else {
            Err(FlowError::InvalidControl(
                "step and tolerances must be positive and finite".into(),
            ))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepStats {
    pub steps: usize,
    pub max_step: f64,
    /// Largest normalized local error estimate of an accepted step
    /// (`None` for fixed-step RK4).
    pub est_error: Option<f64>,
}

/// A sampled trajectory. Points are strictly monotone in `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub points: Vec<PhasePoint>,
    /// Co-integrated auxiliary state at each point (empty rows if the
    /// system has none).
    pub aux: Vec<Vec<f64>>,
    pub aux_names: Vec<String>,
    pub system_label: String,
    pub step_stats: StepStats,
}

impl Trajectory {
    pub fn first(&self) -> &PhasePoint {
        &self.points[0]
    }

    pub fn last(&self) -> &PhasePoint {
        self.points.last().expect("trajectories are never empty")
    }

    /// CSV with header `t,q1..qm,p1..pm` and 17 significant digits.
    pub fn to_csv(&self) -> String {
        let m = self.first().dim();
        let mut out = String::from("t");
        for k in 1..=m {
            let _ = write!(out, ",q{k}");
        }
        for k in 1..=m {
            let _ = write!(out, ",p{k}");
        }
        out.push('\n');
        for x in &self.points {
            out.push_str(&format_row(x.to_flat().iter().copied()));
        }
        out
    }
}

/// One CSV row of `{:.16e}` numbers.
pub fn format_row(values: impl Iterator<Item = f64>) -> String {
    let mut row = values
        .map(|v| format!("{v:.16e}"))
        .collect::<Vec<_>>()
        .join(",");
    row.push('\n');
    row
}

struct Run {
    samples: Vec<(f64, Vec<f64>)>,
    end: (f64, Vec<f64>),
    stats: StepStats,
}

enum DriveError {
    Budget { t: f64, y: Vec<f64>, steps: usize },
    BlowUp { t: f64, y: Vec<f64> },
}

/// Integrates `dy/dt = f(t, y)` from `t0` to `t_end` in either direction.
/// Backward runs integrate the negated field over an increasing parameter.
fn drive(
    f: &Rhs<'_>,
    t0: f64,
    y0: Vec<f64>,
    t_end: f64,
    ctl: &StepControl,
    record: bool,
) -> Result<Run, DriveError> {
    let span = (t_end - t0).abs();
    let dir = if t_end >= t0 { 1.0 } else { -1.0 };
    let time = |s: f64| if s == span { t_end } else { t0 + dir * s };
    let g = move |s: f64, y: &[f64], out: &mut [f64]| {
        f(t0 + dir * s, y, out);
        if dir < 0.0 {
            out.iter_mut().for_each(|v| *v = -*v);
        }
    };
    let g: &Rhs<'_> = &g;
    let mut samples = Vec::new();
    let mut stats = StepStats::default();
    if span == 0.0 {
        return Ok(Run {
            samples,
            end: (t0, y0),
            stats,
        });
    }
    match ctl.method {
        Method::Rk4 { step } => {
            let n = (span / step).ceil().max(1.0) as usize;
            let h = span / n as f64;
            let mut ws = Workspace::new(y0.len());
            let mut y = y0;
            let mut next = vec![0.0; y.len()];
            for i in 0..n {
                if i >= ctl.max_steps {
                    return Err(DriveError::Budget {
                        t: time(i as f64 * h),
                        y,
                        steps: i,
                    });
                }
                let s = i as f64 * h;
                rk4_step(g, s, &y, h, &mut ws, &mut next);
                if next.iter().any(|v| !v.is_finite()) {
                    return Err(DriveError::BlowUp { t: time(s), y });
                }
                std::mem::swap(&mut y, &mut next);
                let s_new = if i + 1 == n { span } else { (i + 1) as f64 * h };
                if record {
                    samples.push((time(s_new), y.clone()));
                }
            }
            stats.steps = n;
            stats.max_step = h;
            Ok(Run {
                samples,
                end: (t_end, y),
                stats,
            })
        }
        Method::Rk45 { abs_tol, rel_tol } => {
            let mut st = Adaptive::new(g, 0.0, y0, abs_tol, rel_tol);
            let mut est: f64 = 0.0;
            while st.s < span {
                if st.accepted >= ctl.max_steps {
                    return Err(DriveError::Budget {
                        t: time(st.s),
                        y: st.y.clone(),
                        steps: st.accepted,
                    });
                }
                if let Err(e) = st.step_toward(span) {
                    let (s, last) = match e {
                        OdeError::NonFinite { s, last } | OdeError::StepUnderflow { s, last } => {
                            (s, last)
                        }
                    };
                    return Err(DriveError::BlowUp { t: time(s), y: last });
                }
                stats.max_step = stats.max_step.max(st.last_h);
                est = est.max(st.last_err);
                if record {
                    samples.push((time(st.s), st.y.clone()));
                }
            }
            stats.steps = st.accepted;
            stats.est_error = Some(est);
            Ok(Run {
                samples,
                end: (t_end, st.y),
                stats,
            })
        }
    }
}

fn point_from(t: f64, y: &[f64], m: usize) -> PhasePoint {
    let clean: Vec<f64> = y[..2 * m]
        .iter()
        .map(|v| if v.is_finite() { *v } else { f64::MAX })
        .collect();
    PhasePoint::from_state(t, &clean).expect("finite by construction")
}

fn flow_error(e: DriveError, m: usize) -> FlowError {
    match e {
        DriveError::Budget { t, y, steps } => FlowError::Divergence {
            steps,
            last: point_from(t, &y, m),
        },
        DriveError::BlowUp { t, y } => FlowError::BlowUp {
            last: point_from(t, &y, m),
        },
    }
}

/// Right-hand side of Hamilton's equations on the state `[q, p, aux]`.
fn hamilton_rhs(sys: &TDSystem) -> impl Fn(f64, &[f64], &mut [f64]) + '_ {
    let m = sys.m();
    let h = sys.hamiltonian();
    let aux = sys.auxiliary();
    move |t, y, out| {
        let mut flat = Vec::with_capacity(2 * m + 1);
        flat.push(t);
        flat.extend_from_slice(&y[..2 * m]);
        if flat.iter().any(|v| !v.is_finite()) {
            out.fill(f64::NAN);
            return;
        }
        let g = h.gradient_at(&flat);
        for k in 0..m {
            out[k] = g[1 + m + k];
            out[m + k] = -g[1 + k];
        }
        if let Some(aux) = aux {
            aux.rhs(t, &y[2 * m..], &mut out[2 * m..]);
        }
    }
}

fn aux_state_at(sys: &TDSystem, t: f64, ctl: &StepControl) -> Result<Vec<f64>, FlowError> {
    let Some(aux) = sys.auxiliary() else {
        return Ok(Vec::new());
    };
    let init = aux.initial_state();
    if t == 0.0 {
        return Ok(init);
    }
    let f = |s: f64, y: &[f64], out: &mut [f64]| aux.rhs(s, y, out);
    drive(&f, 0.0, init, t, ctl, false)
        .map(|run| run.end.1)
        .map_err(|_| FlowError::Incomplete {
            reason: format!("auxiliary state could not be integrated to t = {t}"),
        })
}

/// Integrates the evolution field from `x0` to `t_target`, sampling every
/// accepted step. Auxiliary components of the system are co-integrated with
/// the same step control.
pub fn integrate(
    sys: &TDSystem,
    x0: &PhasePoint,
    t_target: f64,
    ctl: &StepControl,
) -> Result<Trajectory, FlowError> {
    let ctl = ctl.validated()?;
    let m = sys.m();
    if x0.dim() != m {
        return Err(CoreError::Dimension {
            expected: m,
            found: x0.dim(),
        }
        .into());
    }
    if !t_target.is_finite() {
        return Err(CoreError::NonFinite {
            what: "t_target".into(),
        }
        .into());
    }
    let aux0 = aux_state_at(sys, x0.t(), &ctl)?;
    let mut y0 = x0.state();
    y0.extend_from_slice(&aux0);
    let rhs = hamilton_rhs(sys);
    let run = drive(&rhs, x0.t(), y0, t_target, &ctl, true).map_err(|e| flow_error(e, m))?;

    let mut points = Vec::with_capacity(run.samples.len() + 1);
    let mut aux = Vec::with_capacity(run.samples.len() + 1);
    points.push(x0.clone());
    aux.push(aux0);
    for (t, y) in &run.samples {
        points.push(PhasePoint::from_state(*t, &y[..2 * m])?);
        aux.push(y[2 * m..].to_vec());
    }
    Ok(Trajectory {
        points,
        aux,
        aux_names: sys.auxiliary().map(|a| a.names()).unwrap_or_default(),
        system_label: sys.label().to_string(),
        step_stats: run.stats,
    })
}

/// Endpoint of the evolution flow from `x0` to time `t`, without sampling.
pub fn flow_to(
    sys: &TDSystem,
    x0: &PhasePoint,
    t: f64,
    ctl: &StepControl,
) -> Result<PhasePoint, FlowError> {
    let m = sys.m();
    if x0.dim() != m {
        return Err(CoreError::Dimension {
            expected: m,
            found: x0.dim(),
        }
        .into());
    }
    if x0.t() == t {
        return Ok(x0.clone());
    }
    // Auxiliary components do not feed back into (q, p); skip them here.
    let h = sys.hamiltonian();
    let rhs = move |t: f64, y: &[f64], out: &mut [f64]| {
        let mut flat = Vec::with_capacity(2 * m + 1);
        flat.push(t);
        flat.extend_from_slice(y);
        if flat.iter().any(|v| !v.is_finite()) {
            out.fill(f64::NAN);
            return;
        }
        let g = h.gradient_at(&flat);
        for k in 0..m {
            out[k] = g[1 + m + k];
            out[m + k] = -g[1 + k];
        }
    };
    let run = drive(&rhs, x0.t(), x0.state(), t, ctl, false).map_err(|e| flow_error(e, m))?;
    Ok(PhasePoint::from_state(t, &run.end.1)?)
}

/// Image of a point under the projection onto the `t = 0` slice, with the
/// error observed when flowing it forward again.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub point: PhasePoint,
    pub round_trip_error: f64,
}

/// Moves `x` along its trajectory back to `t = 0`. Failure to get there is
/// reported as [`FlowError::Incomplete`].
pub fn project_to_initial_slice(
    sys: &TDSystem,
    x: &PhasePoint,
    ctl: &StepControl,
) -> Result<PhasePoint, FlowError> {
    if x.t() == 0.0 {
        return Ok(x.clone());
    }
    flow_to(sys, x, 0.0, ctl).map_err(|e| match e {
        FlowError::Divergence { .. } | FlowError::BlowUp { .. } => FlowError::Incomplete {
            reason: format!("backward integration from t = {} failed: {e}", x.t()),
        },
        other => other,
    })
}

/// The initial-data projection together with its round-trip error
/// `|flow(xi(x), t) - x|_max`.
pub fn initial_data_projection(
    sys: &TDSystem,
    x: &PhasePoint,
    ctl: &StepControl,
) -> Result<Projection, FlowError> {
    let point = project_to_initial_slice(sys, x, ctl)?;
    if x.t() == 0.0 {
        return Ok(Projection {
            point,
            round_trip_error: 0.0,
        });
    }
    let back = flow_to(sys, &point, x.t(), ctl)?;
    Ok(Projection {
        round_trip_error: back.distance(x),
        point,
    })
}

/// Flow of the Hamiltonian vector field of `f` inside the slice of fixed
/// `t`, for parameter `tau` (negative values run backward).
pub fn slice_flow(
    f: &ScalarField,
    x: &PhasePoint,
    tau: f64,
    ctl: &StepControl,
) -> Result<PhasePoint, FlowError> {
    let m = x.dim();
    if f.arity() != Arity::Vertical {
        return Err(CoreError::Arity {
            expected: "vertical",
            found: f.arity().name(),
        }
        .into());
    }
    if f.m() != m {
        return Err(CoreError::Dimension {
            expected: f.m(),
            found: m,
        }
        .into());
    }
    if tau == 0.0 {
        return Ok(x.clone());
    }
    let t = x.t();
    let rhs = |_: f64, y: &[f64], out: &mut [f64]| slice_rhs(f, t, y, out);
    let run = drive(&rhs, 0.0, x.state(), tau, ctl, false).map_err(|e| match e {
        DriveError::Budget { .. } | DriveError::BlowUp { .. } => FlowError::Incomplete {
            reason: format!("slice flow of {} did not reach tau = {tau}", f.label()),
        },
    })?;
    Ok(PhasePoint::from_state(t, &run.end.1)?)
}

/// `dq = d_p F`, `dp = -d_q F` at fixed `t`. Extra trailing components of
/// `y`/`out` are left to the caller.
pub(crate) fn slice_rhs(f: &ScalarField, t: f64, y: &[f64], out: &mut [f64]) {
    let m = f.m();
    let mut flat = Vec::with_capacity(2 * m + 1);
    flat.push(t);
    flat.extend_from_slice(&y[..2 * m]);
    if flat.iter().any(|v| !v.is_finite()) {
        out.fill(f64::NAN);
        return;
    }
    let g = f.gradient_at(&flat);
    for k in 0..m {
        out[k] = g[1 + m + k];
        out[m + k] = -g[1 + k];
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Coordinate;
    use std::f64::consts::TAU;

    fn quad(label: &str, wq: f64) -> ScalarField {
        ScalarField::analytic(
            Arity::Vertical,
            1,
            label,
            move |x| 0.5 * (x[2] * x[2] + wq * x[1] * x[1]),
            move |x, out| {
                out[0] = 0.0;
                out[1] = wq * x[1];
                out[2] = x[2];
            },
        )
    }

    fn free() -> TDSystem {
        let p = ScalarField::coordinate(Arity::Vertical, 1, Coordinate::P(0));
        TDSystem::new("free", quad("p^2/2", 0.0), vec![p]).unwrap()
    }

    fn harmonic() -> TDSystem {
        TDSystem::new("harmonic", quad("H", 1.0), vec![quad("H", 1.0)]).unwrap()
    }

    #[test]
    fn free_particle_rk4_is_exact() {
        let x0 = PhasePoint::new_1d(0.0, 0.0, 3.0).unwrap();
        let ctl = StepControl::rk4(0.01, 1000).unwrap();
        let traj = integrate(&free(), &x0, 1.0, &ctl).unwrap();
        let end = traj.last();
        assert_eq!(end.t(), 1.0);
        assert!((end.q()[0] - 3.0).abs() < 1e-12);
        assert!((end.p()[0] - 3.0).abs() < 1e-12);
        assert_eq!(traj.points.len(), 101);
        assert_eq!(traj.first(), &x0);
    }

    #[test]
    fn harmonic_returns_after_one_period() {
        let x0 = PhasePoint::new_1d(0.0, 1.0, 0.0).unwrap();
        let traj = integrate(&harmonic(), &x0, TAU, &StepControl::precise(1e-10)).unwrap();
        let end = traj.last();
        assert!((end.t() - TAU).abs() < 1e-12);
        assert!((end.q()[0] - 1.0).abs() < 1e-8);
        assert!(end.p()[0].abs() < 1e-8);
        for w in traj.points.windows(2) {
            assert!(w[1].t() > w[0].t());
        }
    }

    #[test]
    fn zero_span_gives_single_point() {
        let x0 = PhasePoint::new_1d(0.5, 1.0, 2.0).unwrap();
        let traj = integrate(&harmonic(), &x0, 0.5, &StepControl::precise(1e-10)).unwrap();
        assert_eq!(traj.points, vec![x0]);
    }

    #[test]
    fn backward_runs_are_strictly_decreasing() {
        let x0 = PhasePoint::new_1d(1.0, 1.0, 0.0).unwrap();
        let traj = integrate(&harmonic(), &x0, -1.0, &StepControl::precise(1e-10)).unwrap();
        assert_eq!(traj.last().t(), -1.0);
        for w in traj.points.windows(2) {
            assert!(w[1].t() < w[0].t());
        }
        let expected_q = (-2.0f64).cos();
        assert!((traj.last().q()[0] - expected_q).abs() < 1e-8);
    }

    #[test]
    fn step_budget_reports_divergence() {
        let x0 = PhasePoint::new_1d(0.0, 1.0, 0.0).unwrap();
        let ctl = StepControl::rk4(0.01, 10).unwrap();
        match integrate(&harmonic(), &x0, 1.0, &ctl) {
            Err(FlowError::Divergence { steps, last }) => {
                assert_eq!(steps, 10);
                assert!((last.t() - 0.1).abs() < 1e-12);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn blow_up_reports_incomplete_projection() {
        // q' = q^2 from H = p q^2.
        let h2 = ScalarField::analytic(
            Arity::Vertical,
            1,
            "p q^2",
            |x| x[2] * x[1] * x[1],
            |x, out| {
                out[0] = 0.0;
                out[1] = 2.0 * x[2] * x[1];
                out[2] = x[1] * x[1];
            },
        );
        let sys = TDSystem::new("blowup", h2.clone(), vec![h2]).unwrap();
        // q' = q^2 backward from q = -1 at t = 2 reaches -inf at t = 1.
        let x = PhasePoint::new_1d(2.0, -1.0, 1.0).unwrap();
        let err = initial_data_projection(&sys, &x, &StepControl::precise(1e-10)).unwrap_err();
        assert!(matches!(err, FlowError::Incomplete { .. }), "{err:?}");
    }

    #[test]
    fn free_particle_projection() {
        let x = PhasePoint::new_1d(1.0, 1.0, 1.0).unwrap();
        let proj = initial_data_projection(&free(), &x, &StepControl::precise(1e-12)).unwrap();
        assert_eq!(proj.point.t(), 0.0);
        assert!(proj.point.q()[0].abs() < 1e-12);
        assert!((proj.point.p()[0] - 1.0).abs() < 1e-12);
        assert!(proj.round_trip_error < 1e-12);
    }

    #[test]
    fn projection_is_identity_on_initial_slice() {
        let x = PhasePoint::new_1d(0.0, 0.3, -0.2).unwrap();
        let proj = initial_data_projection(&harmonic(), &x, &StepControl::precise(1e-12)).unwrap();
        assert_eq!(proj.point, x);
        assert_eq!(proj.round_trip_error, 0.0);
    }

    #[test]
    fn slice_flow_examples() {
        let ctl = StepControl::precise(1e-12);
        let x = PhasePoint::new_1d(0.7, 1.0, 0.0).unwrap();
        let f = quad("F", 1.0);
        let back = slice_flow(&f, &x, TAU, &ctl).unwrap();
        assert_eq!(back.t(), 0.7);
        assert!(back.distance(&x) < 1e-8);
        assert_eq!(slice_flow(&f, &x, 0.0, &ctl).unwrap(), x);

        let p = ScalarField::coordinate(Arity::Vertical, 1, Coordinate::P(0));
        let x = PhasePoint::new_1d(0.3, 0.0, 1.0).unwrap();
        let moved = slice_flow(&p, &x, 1.0, &ctl).unwrap();
        assert!((moved.q()[0] - 1.0).abs() < 1e-12);
        assert_eq!(moved.p()[0], 1.0);
        assert_eq!(moved.t(), 0.3);
    }

    #[test]
    fn slice_flow_conserves_its_generator() {
        let ctl = StepControl::precise(1e-12);
        let f = quad("F", 4.0);
        let x = PhasePoint::new_1d(2.0, 0.4, -1.1).unwrap();
        let y = slice_flow(&f, &x, 3.3, &ctl).unwrap();
        assert!((f.eval(&y).unwrap() - f.eval(&x).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn csv_layout() {
        let x0 = PhasePoint::new(0.0, vec![1.0, 2.0], vec![3.0, 4.0]).unwrap();
        let traj = Trajectory {
            points: vec![x0],
            aux: vec![vec![]],
            aux_names: vec![],
            system_label: "x".into(),
            step_stats: StepStats::default(),
        };
        let csv = traj.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("t,q1,q2,p1,p2"));
        let row = lines.next().unwrap();
        assert_eq!(row.split(',').count(), 5);
        assert!(row.starts_with("0.0000000000000000e0,1.0000000000000000e0"));
    }
}
