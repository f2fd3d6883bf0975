//! Initial-data charts and their angle shifts.

use std::fmt;
use std::fmt::Write as _;
use std::sync::Arc;

use super::loops::{slice_coordinates, slice_point, LoopOptions, Slice};
use super::{wrap_angle, AaError, ActionFunction};
use crate::field::{Arity, ScalarField};
use crate::flow::{flow_to, format_row, project_to_initial_slice, StepControl};
use crate::point::{CoreError, PhasePoint};
use crate::system::TDSystem;
use crate::verify::SampleRegion;

#[derive(Debug, Clone, PartialEq)]
pub enum ChartKind {
    /// Coordinates constant along trajectories.
    InitialData,
    /// Angles advanced by `t * grad S(I)`; holds the labels of `S`.
    Shifted(Vec<String>),
    /// The same shift applied as the time-direction canonical
    /// transformation with generating data `F_0(I)`.
    Ww26(Vec<String>),
}

impl fmt::Display for ChartKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChartKind::InitialData => write!(f, "initial_data"),
            ChartKind::Shifted(l) => write!(f, "shifted({})", l.join(" + ")),
            ChartKind::Ww26(l) => write!(f, "ww26({})", l.join(" + ")),
        }
    }
}

/// Chart coordinates `(t, I, phi)` with angles in `[0, 2pi)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartPoint {
    pub t: f64,
    pub actions: Vec<f64>,
    pub angles: Vec<f64>,
}

impl ChartPoint {
    pub fn new(t: f64, actions: Vec<f64>, angles: Vec<f64>) -> Result<Self, CoreError> {
        if actions.len() != angles.len() || actions.is_empty() {
            return Err(CoreError::Dimension {
                expected: actions.len(),
                found: angles.len(),
            });
        }
        Ok(Self { t, actions, angles })
    }

    pub fn m(&self) -> usize {
        self.actions.len()
    }
}

/// CSV with header `t,I1..Im,phi1..phim`, one row per chart point.
pub fn chart_csv(points: &[ChartPoint]) -> String {
    let m = points.first().map_or(1, ChartPoint::m);
    let mut out = String::from("t");
    for k in 1..=m {
        let _ = write!(out, ",I{k}");
    }
    for k in 1..=m {
        let _ = write!(out, ",phi{k}");
    }
    out.push('\n');
    for cp in points {
        let row = std::iter::once(cp.t)
            .chain(cp.actions.iter().copied())
            .chain(cp.angles.iter().copied());
        out.push_str(&format_row(row));
    }
    out
}

/// An action-angle chart of a separable system.
#[derive(Clone)]
pub struct ActionAngleChart {
    sys: TDSystem,
    kind: ChartKind,
    domain: SampleRegion,
    ctl: StepControl,
    opts: Vec<LoopOptions>,
    slices: Vec<ScalarField>,
    shifts: Vec<Arc<dyn ActionFunction>>,
    angle_scale: f64,
}

impl fmt::Debug for ActionAngleChart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ActionAngleChart")
            .field("system", &self.sys.label())
            .field("kind", &self.kind)
            .field("domain", &self.domain)
            .finish()
    }
}

/// Restriction of degree `k`'s integral to `(q_k, p_k)` with the other
/// coordinates set to zero.
fn restricted(f: &ScalarField, m: usize, k: usize) -> ScalarField {
    let embed = move |x: &[f64]| {
        let mut flat = vec![0.0; 2 * m + 1];
        flat[0] = x[0];
        flat[1 + k] = x[1];
        flat[1 + m + k] = x[2];
        flat
    };
    let fv = f.clone();
    let fg = f.clone();
    ScalarField::analytic(
        Arity::Vertical,
        1,
        format!("{}|deg{}", f.label(), k + 1),
        move |x| fv.value_at(&embed(x)),
        move |x, out| {
            let g = fg.gradient_at(&embed(x));
            out[0] = g[0];
            out[1] = g[1 + k];
            out[2] = g[1 + m + k];
        },
    )
}

impl ActionAngleChart {
    pub fn m(&self) -> usize {
        self.sys.m()
    }

    pub fn kind(&self) -> &ChartKind {
        &self.kind
    }

    pub fn domain(&self) -> &SampleRegion {
        &self.domain
    }

    pub fn system(&self) -> &TDSystem {
        &self.sys
    }

    pub fn step_control(&self) -> &StepControl {
        &self.ctl
    }

    /// Degree `k`'s integral restricted to `(q_k, p_k)` on the `t = 0`
    /// slice, as a 1-DOF field.
    pub fn slice_field(&self, k: usize) -> &ScalarField {
        &self.slices[k]
    }

    /// Tracing options of degree `k` (center included).
    pub fn loop_options(&self, k: usize) -> &LoopOptions {
        &self.opts[k]
    }

    /// Value of the chart Hamiltonian `S(I)`: zero for initial-data charts,
    /// the sum of all shifts otherwise.
    pub fn chart_hamiltonian(&self, actions: &[f64]) -> f64 {
        self.shifts.iter().map(|s| s.value(actions)).sum()
    }

    /// `grad S(I)`, the angle rates of the chart.
    pub fn frequencies(&self, actions: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.m()];
        for s in &self.shifts {
            for (o, g) in out.iter_mut().zip(s.gradient(actions)) {
                *o += g;
            }
        }
        out
    }

    /// Scales every angle by `factor`. The result is not canonical unless
    /// `factor` is 1; it exists to exercise the canonicity check.
    pub fn with_angle_scale(mut self, factor: f64) -> Self {
        self.angle_scale = factor;
        self
    }

    fn check_dim(&self, m: usize) -> Result<(), AaError> {
        if m != self.m() {
            return Err(CoreError::Dimension {
                expected: self.m(),
                found: m,
            }
            .into());
        }
        Ok(())
    }

    /// `(t, I, phi)` of a phase-space point.
    pub fn forward(&self, x: &PhasePoint) -> Result<ChartPoint, AaError> {
        self.check_dim(x.dim())?;
        let base = project_to_initial_slice(&self.sys, x, &self.ctl)?;
        let mut actions = Vec::with_capacity(self.m());
        let mut angles = Vec::with_capacity(self.m());
        for k in 0..self.m() {
            let s = Slice::new(&self.slices[k], 0.0)?;
            let c = slice_coordinates(&s, base.q()[k], base.p()[k], &self.opts[k])?;
            actions.push(c.action);
            angles.push(c.angle * self.angle_scale);
        }
        let rates = self.frequencies(&actions);
        for (a, w) in angles.iter_mut().zip(rates) {
            *a = wrap_angle(*a + x.t() * w);
        }
        Ok(ChartPoint {
            t: x.t(),
            actions,
            angles,
        })
    }

    /// Phase-space point with the given chart coordinates.
    pub fn inverse(&self, cp: &ChartPoint) -> Result<PhasePoint, AaError> {
        self.check_dim(cp.m())?;
        let rates = self.frequencies(&cp.actions);
        let mut q = Vec::with_capacity(self.m());
        let mut p = Vec::with_capacity(self.m());
        for k in 0..self.m() {
            let angle = wrap_angle((cp.angles[k] - cp.t * rates[k]) / self.angle_scale);
            let s = Slice::new(&self.slices[k], 0.0)?;
            let (qk, pk) = slice_point(&s, cp.actions[k], angle, &self.opts[k])?;
            q.push(qk);
            p.push(pk);
        }
        let base = PhasePoint::new(0.0, q, p)?;
        Ok(flow_to(&self.sys, &base, cp.t, &self.ctl)?)
    }
}

/// Initial-data chart with default tracing options (centers taken from the
/// system's degree metadata).
pub fn build_initial_data_chart(
    sys: &TDSystem,
    region: &SampleRegion,
    ctl: &StepControl,
) -> Result<ActionAngleChart, AaError> {
    let opts = LoopOptions::default();
    build_initial_data_chart_with(sys, region, ctl, &opts)
}

/// As [`build_initial_data_chart`]; `opts.center` is replaced per degree.
///
/// The chart is probed at the first sample of `region`, so level sets that
/// are open or sit on a separatrix are reported here rather than at first
/// use.
pub fn build_initial_data_chart_with(
    sys: &TDSystem,
    region: &SampleRegion,
    ctl: &StepControl,
    opts: &LoopOptions,
) -> Result<ActionAngleChart, AaError> {
    let ctl = ctl.validated()?;
    if !sys.is_separable() {
        return Err(AaError::NotSeparable(format!(
            "{} does not declare per-degree integrals on the t = 0 slice",
            sys.label()
        )));
    }
    for (k, d) in sys.degrees().iter().enumerate() {
        if !d.compact {
            return Err(AaError::NonCompact(format!(
                "degree {} of {}: the level sets of F{} are not compact",
                k + 1,
                sys.label(),
                k + 1
            )));
        }
    }
    let m = sys.m();
    if region.m() != m {
        return Err(CoreError::Dimension {
            expected: m,
            found: region.m(),
        }
        .into());
    }
    region.validate()?;
    let chart = ActionAngleChart {
        sys: sys.clone(),
        kind: ChartKind::InitialData,
        domain: region.clone(),
        ctl,
        opts: sys
            .degrees()
            .iter()
            .map(|d| opts.with_center(d.center))
            .collect(),
        slices: (0..m).map(|k| restricted(&sys.integrals()[k], m, k)).collect(),
        shifts: Vec::new(),
        angle_scale: 1.0,
    };
    let probe = region.clone().with_count(1).samples(Some(sys))?;
    chart.forward(&probe[0])?;
    Ok(chart)
}

fn with_shift(chart: &ActionAngleChart, s: Arc<dyn ActionFunction>, ww26: bool) -> ActionAngleChart {
    let mut out = chart.clone();
    out.shifts.push(s);
    let labels = out.shifts.iter().map(|s| s.label()).collect();
    out.kind = if ww26 {
        ChartKind::Ww26(labels)
    } else {
        ChartKind::Shifted(labels)
    };
    out
}

/// Chart in which the Hamiltonian is `h_of_i(I)`: `phi = phi_bar + t grad h(I)`,
/// actions unchanged. Shifting an already shifted chart composes the shifts.
pub fn shift_chart(chart: &ActionAngleChart, h_of_i: Arc<dyn ActionFunction>) -> ActionAngleChart {
    with_shift(chart, h_of_i, false)
}

/// Canonical transformation along the time direction:
/// `phi' = phi + t grad F_0(I)`, `I' = I`. Identical to [`shift_chart`] on the
/// vertical coordinates; the lifted action `I_0' = I_0 - F_0(I)` is implicit.
pub fn transform_ww26(chart: &ActionAngleChart, f0: Arc<dyn ActionFunction>) -> ActionAngleChart {
    with_shift(chart, f0, true)
}
