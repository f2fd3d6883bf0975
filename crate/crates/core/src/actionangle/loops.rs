//! Level-curve tracing for 1-DOF slice fields.
//!
//! The curve `F(t, q, p) = level` is followed with the slice flow
//! `q' = d_p F`, `p' = -d_q F`, carrying `A' = p d_p F` so that `A` ends up
//! as the loop integral of `p dq`. Crossings of the section
//! `{p = 0, q > center}` are located with a Newton iteration on the step
//! fraction of the Dormand-Prince step that straddles them.

use std::f64::consts::TAU;

use super::AaError;
use crate::field::ScalarField;
use crate::ode::{dp5_step, Adaptive, Rhs, Workspace};
use crate::point::CoreError;

/// Settings for level-curve tracing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoopOptions {
    /// Absolute and relative tolerance of the tracing integrator.
    pub tol: f64,
    /// Largest flow parameter before giving up on a return.
    pub param_cap: f64,
    /// Curves leaving this max-norm distance from the center are treated
    /// as unbounded.
    pub escape_radius: f64,
    /// `q` coordinate of the elliptic equilibrium.
    pub center: f64,
    /// Levels closer than this to a critical value of the slice field on
    /// `p = 0` are rejected.
    pub separatrix_guard: f64,
}

impl Default for LoopOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            param_cap: 1000.0,
            escape_radius: 1e3,
            center: 0.0,
            separatrix_guard: 1e-3,
        }
    }
}

impl LoopOptions {
    pub fn with_center(mut self, center: f64) -> Self {
        self.center = center;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_param_cap(mut self, cap: f64) -> Self {
        self.param_cap = cap;
        self
    }
}

/// A 1-DOF field frozen at time `t`.
#[derive(Clone, Copy)]
pub(crate) struct Slice<'a> {
    f: &'a ScalarField,
    t: f64,
}

impl<'a> Slice<'a> {
    pub(crate) fn new(f: &'a ScalarField, t: f64) -> Result<Self, AaError> {
        if f.m() != 1 {
            return Err(CoreError::Dimension {
                expected: 1,
                found: f.m(),
            }
            .into());
        }
        if !t.is_finite() {
            return Err(CoreError::NonFinite { what: "t".into() }.into());
        }
        Ok(Self { f, t })
    }

    fn value(&self, q: f64, p: f64) -> f64 {
        self.f.value_at(&[self.t, q, p])
    }

    /// `(d_q F, d_p F)`.
    fn grad(&self, q: f64, p: f64) -> (f64, f64) {
        let g = self.f.gradient_at(&[self.t, q, p]);
        (g[1], g[2])
    }

    fn rhs(&self, y: &[f64], out: &mut [f64]) {
        if !(y[0].is_finite() && y[1].is_finite()) {
            out.fill(f64::NAN);
            return;
        }
        let (fq, fp) = self.grad(y[0], y[1]);
        out[0] = fp;
        out[1] = -fq;
        if out.len() > 2 {
            out[2] = y[1] * fp;
        }
    }
}

/// Result of following a curve to the section.
#[derive(Debug, Clone, Copy)]
struct Hit {
    tau: f64,
    q: f64,
    /// Loop integral of `p dq` accumulated on the way.
    area: f64,
}

fn bisect(mut lo: f64, mut hi: f64, g: impl Fn(f64) -> f64) -> f64 {
    // Invariant: g(lo) < 0 <= g(hi).
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo.min(hi) || mid >= lo.max(hi) {
            break;
        }
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if g(lo).abs() < g(hi).abs() {
        lo
    } else {
        hi
    }
}

/// Rightmost crossing `q_r > center` of the level curve with `p = 0`,
/// found by an outward scan from the center. `hint` is a nearby estimate
/// tried first.
pub(crate) fn turning_point(
    s: &Slice<'_>,
    level: f64,
    opts: &LoopOptions,
    hint: Option<f64>,
) -> Result<f64, AaError> {
    let c = opts.center;
    let g = |d: f64| s.value(c + d, 0.0) - level;
    let g0 = g(0.0);
    if g0 > 0.0 {
        return Err(AaError::Domain(format!(
            "level {level} lies below the value {} at the center q = {c}",
            g0 + level
        )));
    }
    if g0 == 0.0 {
        return Err(AaError::Separatrix {
            level,
            critical: level,
            guard: opts.separatrix_guard,
        });
    }
    if let Some(h) = hint {
        let d = h - c;
        if d > 0.0 {
            let lo = d * (1.0 - 1e-6) - 1e-12;
            let hi = d * (1.0 + 1e-6) + 1e-12;
            if lo > 0.0 && g(lo) < 0.0 && g(hi) >= 0.0 {
                return Ok(c + bisect(lo, hi, g));
            }
        }
    }
    let mut d: f64 = 0.0;
    loop {
        let step = 0.01 * (d / 10.0).max(1.0);
        let next = d + step;
        if next > opts.escape_radius {
            return Err(AaError::NonCompact(format!(
                "level curve {level} does not cross p = 0 within distance {} of the center",
                opts.escape_radius
            )));
        }
        let v = g(next);
        if v.is_nan() {
            return Err(AaError::Domain(format!("slice field is not finite at q = {}", c + next)));
        }
        if v >= 0.0 {
            return Ok(c + bisect(d, next, g));
        }
        d = next;
    }
}

/// Critical values of the slice field along `p = 0` in `[lo, hi]`.
pub(crate) fn critical_points(s: &Slice<'_>, lo: f64, hi: f64) -> Vec<(f64, f64)> {
    const N: usize = 512;
    let fq = |q: f64| s.grad(q, 0.0).0;
    let xs: Vec<f64> = (0..=N).map(|i| lo + (hi - lo) * i as f64 / N as f64).collect();
    let vs: Vec<f64> = xs.iter().map(|&q| fq(q)).collect();
    let mut out = Vec::new();
    for i in 0..N {
        let root = if vs[i] == 0.0 {
            Some(xs[i])
        } else if vs[i] * vs[i + 1] < 0.0 {
            let sign = vs[i].signum();
            // Orient so the bracket invariant g(lo) < 0 holds.
            Some(bisect(xs[i], xs[i + 1], |q| -sign * fq(q)))
        } else {
            None
        };
        if let Some(q) = root {
            let (_, fp) = s.grad(q, 0.0);
            if fp.abs() < 1e-8 {
                out.push((q, s.value(q, 0.0)));
            }
        }
    }
    out
}

/// Rejects levels near critical values other than the center's own.
fn separatrix_guard(s: &Slice<'_>, level: f64, q_r: f64, opts: &LoopOptions) -> Result<(), AaError> {
    let c = opts.center;
    let d = q_r - c;
    for (q, value) in critical_points(s, c - 2.0 * d - 0.5, c + 2.0 * d + 0.5) {
        if (q - c).abs() < 0.5 * d {
            continue;
        }
        if (value - level).abs() < opts.separatrix_guard {
            return Err(AaError::Separatrix {
                level,
                critical: value,
                guard: opts.separatrix_guard,
            });
        }
    }
    Ok(())
}

/// Reference point of the level curve, after the separatrix guard.
pub(crate) fn reference_point(
    s: &Slice<'_>,
    level: f64,
    opts: &LoopOptions,
    hint: Option<f64>,
) -> Result<f64, AaError> {
    if !level.is_finite() {
        return Err(CoreError::NonFinite { what: "level".into() }.into());
    }
    let q_r = turning_point(s, level, opts, hint)?;
    separatrix_guard(s, level, q_r, opts)?;
    Ok(q_r)
}

/// Follows the curve from `(q, p)` to the next crossing of the section.
fn trace_to_section(s: &Slice<'_>, q: f64, p: f64, opts: &LoopOptions) -> Result<Hit, AaError> {
    let c = opts.center;
    let rhs = |_: f64, y: &[f64], out: &mut [f64]| s.rhs(y, out);
    let f: &Rhs<'_> = &rhs;
    let mut st = Adaptive::new(f, 0.0, vec![q, p, 0.0], opts.tol, opts.tol);
    let mut ws = Workspace::new(3);
    let mut out = vec![0.0; 3];
    let mut err = vec![0.0; 3];
    loop {
        let (s_a, y_a) = (st.s, st.y.clone());
        if s_a >= opts.param_cap {
            return Err(AaError::PeriodNotFound(format!(
                "no return to the section within flow parameter {}",
                opts.param_cap
            )));
        }
        st.step_toward(opts.param_cap).map_err(|e| {
            AaError::NonCompact(format!("level curve could not be followed: {e}"))
        })?;
        let y_b = &st.y;
        if (y_b[0] - c).abs().max(y_b[1].abs()) > opts.escape_radius {
            return Err(AaError::NonCompact(format!(
                "level curve leaves distance {} of the center",
                opts.escape_radius
            )));
        }
        let (pa, pb) = (y_a[1], y_b[1]);
        let crossed = pa != 0.0 && (pb == 0.0 || pa.signum() != pb.signum());
        if !crossed {
            continue;
        }
        // Newton on the step fraction, one Dormand-Prince step per iterate.
        let h = st.s - s_a;
        let mut delta = h * pa / (pa - pb);
        for _ in 0..30 {
            dp5_step(f, s_a, &y_a, delta, &mut ws, &mut out, &mut err);
            let (fq, _) = s.grad(out[0], out[1]);
            if fq == 0.0 {
                break;
            }
            // p' = -d_q F
            let next = (delta + out[1] / fq).clamp(0.0, h);
            let done = (next - delta).abs() <= 1e-15 * h;
            delta = next;
            if done {
                break;
            }
        }
        dp5_step(f, s_a, &y_a, delta, &mut ws, &mut out, &mut err);
        if out[0] > c {
            return Ok(Hit {
                tau: s_a + delta,
                q: out[0],
                area: out[2],
            });
        }
    }
}

/// Period and action of the loop through the reference point `(q_r, 0)`.
pub(crate) fn loop_from_reference(
    s: &Slice<'_>,
    q_r: f64,
    opts: &LoopOptions,
) -> Result<(f64, f64), AaError> {
    let hit = trace_to_section(s, q_r, 0.0, opts)?;
    if !(hit.tau > 0.0) {
        return Err(AaError::PeriodNotFound("degenerate loop".into()));
    }
    Ok((hit.tau, hit.area.abs() / TAU))
}

/// Action-angle data of one point on a 1-DOF slice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct SliceCoordinates {
    pub level: f64,
    pub action: f64,
    pub angle: f64,
    pub period: f64,
}

pub(crate) fn slice_coordinates(
    s: &Slice<'_>,
    q: f64,
    p: f64,
    opts: &LoopOptions,
) -> Result<SliceCoordinates, AaError> {
    let level = s.value(q, p);
    let on_section = p == 0.0 && q > opts.center;
    let (tau_hit, hint) = if on_section {
        (0.0, q)
    } else {
        let hit = trace_to_section(s, q, p, opts)?;
        (hit.tau, hit.q)
    };
    let q_r = reference_point(s, level, opts, Some(hint))?;
    let (period, action) = loop_from_reference(s, q_r, opts)?;
    let angle = super::wrap_angle(TAU * (period - tau_hit) / period);
    Ok(SliceCoordinates {
        level,
        action,
        angle,
        period,
    })
}

/// Loop data at a level: `(q_r, period, action)`.
fn loop_at_level(s: &Slice<'_>, level: f64, opts: &LoopOptions) -> Result<(f64, f64, f64), AaError> {
    let q_r = reference_point(s, level, opts, None)?;
    let (period, action) = loop_from_reference(s, q_r, opts)?;
    Ok((q_r, period, action))
}

/// Level whose loop has the given action, by safeguarded Newton iteration
/// using `dI/dlevel = T / 2pi`. Returns `(level, q_r, period)`.
fn level_for_action(s: &Slice<'_>, action: f64, opts: &LoopOptions) -> Result<(f64, f64, f64), AaError> {
    if !(action > 0.0 && action.is_finite()) {
        return Err(AaError::Domain(format!("action must be positive, got {action}")));
    }
    let bottom = s.value(opts.center, 0.0);
    let mut lo = bottom;
    let mut hi: Option<f64> = None;
    let mut level = bottom + action;
    let mut best: Option<(f64, f64, f64, f64)> = None;
    for _ in 0..100 {
        match loop_at_level(s, level, opts) {
            Ok((q_r, period, a)) => {
                let miss = a - action;
                if best.is_none_or(|b| miss.abs() < b.3.abs()) {
                    best = Some((level, q_r, period, miss));
                }
                if miss.abs() <= 1e-13 * action.max(1.0) {
                    break;
                }
                if miss < 0.0 {
                    lo = lo.max(level);
                } else {
                    hi = Some(hi.map_or(level, |h: f64| h.min(level)));
                }
                let mut next = level - miss * TAU / period;
                let inside = next > lo && hi.is_none_or(|h| next < h);
                if !inside {
                    next = match hi {
                        Some(h) => 0.5 * (lo + h),
                        None => level + 2.0 * (level - lo),
                    };
                }
                if (next - level).abs() <= 4.0 * f64::EPSILON * level.abs().max(1.0) {
                    break;
                }
                level = next;
            }
            Err(AaError::Domain(_)) if level <= bottom => {
                level = 0.5 * (lo + level.max(lo));
            }
            Err(_) => {
                // Treat failures as overshooting into the unbounded region.
                hi = Some(hi.map_or(level, |h: f64| h.min(level)));
                let h = hi.unwrap_or(level);
                if h - lo <= 1e-14 * h.abs().max(1.0) {
                    break;
                }
                level = 0.5 * (lo + h);
            }
        }
    }
    match best {
        Some((level, q_r, period, miss)) if miss.abs() <= 1e-9 * action.max(1.0) => Ok((level, q_r, period)),
        _ => Err(AaError::Domain(format!("no closed level curve with action {action}"))),
    }
}

/// Point with the given action and angle on the slice.
pub(crate) fn slice_point(
    s: &Slice<'_>,
    action: f64,
    angle: f64,
    opts: &LoopOptions,
) -> Result<(f64, f64), AaError> {
    let (_, q_r, period) = level_for_action(s, action, opts)?;
    let tau = super::wrap_angle(angle) / TAU * period;
    if tau == 0.0 {
        return Ok((q_r, 0.0));
    }
    let rhs = |_: f64, y: &[f64], out: &mut [f64]| s.rhs(y, out);
    let f: &Rhs<'_> = &rhs;
    let mut st = Adaptive::new(f, 0.0, vec![q_r, 0.0], opts.tol, opts.tol);
    while st.s < tau {
        st.step_toward(tau)
            .map_err(|e| AaError::Domain(format!("slice flow failed: {e}")))?;
    }
    Ok((st.y[0], st.y[1]))
}

fn quad_options(tol: f64) -> Result<LoopOptions, AaError> {
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(AaError::Domain(format!("tolerance must be positive, got {tol}")));
    }
    Ok(LoopOptions::default().with_tol((0.01 * tol).clamp(1e-14, 1e-6)))
}

/// Action `|loop integral of p dq| / 2pi` of the level curve `F = level`
/// on the slice at time `t`. The tracing tolerance is a hundredth of
/// `quad_tol`.
pub fn action_integral(f: &ScalarField, t: f64, level: f64, quad_tol: f64) -> Result<f64, AaError> {
    action_integral_with(f, t, level, &quad_options(quad_tol)?)
}

pub fn action_integral_with(f: &ScalarField, t: f64, level: f64, opts: &LoopOptions) -> Result<f64, AaError> {
    let s = Slice::new(f, t)?;
    loop_at_level(&s, level, opts).map(|(_, _, a)| a)
}

/// Period of the slice flow of `F` on the level curve `F = level`. Levels
/// caught by the separatrix guard are reported as
/// [`AaError::PeriodNotFound`], since the period diverges there.
pub fn period(f: &ScalarField, t: f64, level: f64, tol: f64) -> Result<f64, AaError> {
    period_with(f, t, level, &quad_options(tol)?)
}

pub fn period_with(f: &ScalarField, t: f64, level: f64, opts: &LoopOptions) -> Result<f64, AaError> {
    let s = Slice::new(f, t)?;
    match loop_at_level(&s, level, opts) {
        Ok((_, period, _)) => Ok(period),
        Err(AaError::Separatrix { level, critical, .. }) => Err(AaError::PeriodNotFound(format!(
            "level {level} is too close to the separatrix at {critical}; the period diverges there"
        ))),
        Err(e) => Err(e),
    }
}

/// Actions and periods of a 1-DOF slice field over a list of levels.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionProfile {
    pub levels: Vec<f64>,
    pub actions: Vec<f64>,
    pub periods: Vec<f64>,
}

impl ActionProfile {
        pub fn compute(f: &ScalarField, t: f64, levels: &[f64], opts: &LoopOptions) -> Result<Self, AaError> {
        let s = Slice::new(f, t)?;
        let mut actions = Vec::with_capacity(levels.len());
        let mut periods = Vec::with_capacity(levels.len());
        for &level in levels {
            let (_, period, action) = loop_at_level(&s, level, opts)?;
            actions.push(action);
            periods.push(period);
        }
        Ok(Self {
            levels: levels.to_vec(),
            actions,
            periods,
        })
    }

    /// Whether actions strictly increase with level (levels sorted first).
    pub fn is_strictly_increasing(&self) -> bool {
        let mut pairs: Vec<(f64, f64)> = self.levels.iter().copied().zip(self.actions.iter().copied()).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        pairs.windows(2).all(|w| w[1].0 > w[0].0 && w[1].1 > w[0].1)
    }
}
