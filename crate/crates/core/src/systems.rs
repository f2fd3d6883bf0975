//! Built-in systems with analytic gradients.
//!
//! | name             | H                              | integrals                       |
//! |------------------|--------------------------------|---------------------------------|
//! | `free_particle`  | `sum p_k^2 / 2`                | `p_k` (non-compact)             |
//! | `harmonic`       | `(p^2 + omega^2 q^2) / 2`      | `H`                             |
//! | `pendulum`       | `p^2 / 2 - cos q`              | `H` (compact below `H = 1`)     |
//! | `td_oscillator`  | `(p^2 + w2(t) q^2) / 2`        | Ermakov-Lewis invariant         |
//! | `separable_2dof` | sum of two oscillators         | per-degree energies             |
//! | `adversarial`    | `(p1^2 + p2^2) / 2`            | `q1`, `p1` (not a CIS)          |
//! | `custom`         | expression                     | expressions                     |
//!
//! For `td_oscillator`, `w2(t) = omega0^2 + a sin(b t)` with `|a| < omega0^2`.

use std::collections::BTreeMap;
use std::sync::Arc;

use thiserror::Error;

use crate::expr::{vertical_field, ExprError};
use crate::field::{Arity, Coordinate, ScalarField};
use crate::ode::{Adaptive, Rhs};
use crate::point::CoreError;
use crate::system::{Auxiliary, DegreeInfo, TDSystem};
use crate::verify::SampleRegion;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SystemError {
    #[error("unknown system '{0}'")]
    UnknownSystem(String),
    #[error("system '{system}' has no parameter '{name}'")]
    UnknownParameter { system: String, name: String },
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: String, reason: String },
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Core(#[from] CoreError),
}

/// Expressions for a user-defined system over `t, q1.., p1..`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CustomSystem {
    pub hamiltonian: String,
    pub integrals: Vec<String>,
    /// Per-degree compactness; when present the system is declared
    /// separable (integral `k` depends only on `(q_k, p_k)` at `t = 0`).
    pub compact: Option<Vec<bool>>,
    pub centers: Option<Vec<f64>>,
}

/// Name plus parameter assignments of a system.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SystemSpec {
    pub name: String,
    pub params: BTreeMap<String, f64>,
    pub custom: Option<CustomSystem>,
}

impl SystemSpec {
    pub fn new(name: &str) -> Self {
        Self {
            name: name.to_string(),
            ..Self::default()
        }
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }

    pub fn harmonic(omega: f64) -> Self {
        Self::new("harmonic").with("omega", omega)
    }

    pub fn separable_2dof(omega1: f64, omega2: f64) -> Self {
        Self::new("separable_2dof")
            .with("omega1", omega1)
            .with("omega2", omega2)
    }

    /// `w2(t) = omega0^2 + a sin(b t)`.
    pub fn td_oscillator(omega0: f64, a: f64, b: f64) -> Self {
        Self::new("td_oscillator")
            .with("omega0", omega0)
            .with("a", a)
            .with("b", b)
    }

    pub fn free_particle(dof: usize) -> Self {
        Self::new("free_particle").with("dof", dof as f64)
    }

    fn param(&self, key: &str, default: f64) -> f64 {
        self.params.get(key).copied().unwrap_or(default)
    }

    fn allow(&self, keys: &[&str]) -> Result<(), SystemError> {
        for k in self.params.keys() {
            if !keys.contains(&k.as_str()) {
                return Err(SystemError::UnknownParameter {
                    system: self.name.clone(),
                    name: k.clone(),
                });
            }
        }
        if self.custom.is_some() && self.name != "custom" {
            return Err(SystemError::InvalidParameter {
                name: "custom".into(),
                reason: format!("expressions are only accepted by the 'custom' system, not '{}'", self.name),
            });
        }
        Ok(())
    }
}

/// Names accepted by [`make_system`].
pub const SYSTEM_NAMES: &[&str] = &[
    "free_particle",
    "harmonic",
    "pendulum",
    "td_oscillator",
    "separable_2dof",
    "adversarial",
    "custom",
];

fn positive(name: &str, v: f64) -> Result<f64, SystemError> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(SystemError::InvalidParameter {
            name: name.into(),
            reason: format!("must be positive and finite, got {v}"),
        })
    }
}

pub fn make_system(spec: &SystemSpec) -> Result<TDSystem, SystemError> {
    match spec.name.as_str() {
        "free_particle" => {
            spec.allow(&["dof"])?;
            let dof = spec.param("dof", 1.0);
            if !(dof >= 1.0 && dof.fract() == 0.0 && dof <= 64.0) {
                return Err(SystemError::InvalidParameter {
                    name: "dof".into(),
                    reason: format!("must be an integer in 1..=64, got {dof}"),
                });
            }
            Ok(free_particle(dof as usize)?)
        }
        "harmonic" => {
            spec.allow(&["omega"])?;
            Ok(harmonic(positive("omega", spec.param("omega", 1.0))?)?)
        }
        "pendulum" => {
            spec.allow(&[])?;
            Ok(pendulum()?)
        }
        "td_oscillator" => {
            spec.allow(&["omega0", "a", "b"])?;
            let omega0 = positive("omega0", spec.param("omega0", 1.0))?;
            let a = spec.param("a", 0.1);
            let b = spec.param("b", 1.0);
            if !(a.is_finite() && a.abs() < omega0 * omega0) {
                return Err(SystemError::InvalidParameter {
                    name: "a".into(),
                    reason: format!("need |a| < omega0^2 = {}, got {a}", omega0 * omega0),
                });
            }
            if !b.is_finite() {
                return Err(SystemError::InvalidParameter {
                    name: "b".into(),
                    reason: "must be finite".into(),
                });
            }
            Ok(td_oscillator(SineModulation { omega0, a, b })?)
        }
        "separable_2dof" => {
            spec.allow(&["omega1", "omega2"])?;
            let w1 = positive("omega1", spec.param("omega1", 1.0))?;
            let w2 = positive("omega2", spec.param("omega2", 2.0))?;
            Ok(separable_oscillators(&[w1, w2])?)
        }
        "adversarial" => {
            spec.allow(&[])?;
            Ok(adversarial()?)
        }
        "custom" => {
            spec.allow(&[])?;
            let Some(custom) = &spec.custom else {
                return Err(SystemError::InvalidParameter {
                    name: "custom".into(),
                    reason: "the custom system needs a hamiltonian and integrals".into(),
                });
            };
            custom_system(custom)
        }
        other => Err(SystemError::UnknownSystem(other.to_string())),
    }
}

/// Default sampling region: avoids the known critical sets of each system.
pub fn default_region(sys: &TDSystem) -> SampleRegion {
    let m = sys.m();
    let mut region = SampleRegion::boxed(m, [0.0, 2.0], [-1.5, 1.5], [-1.5, 1.5]);
    let label = sys.label();
    if label.starts_with("pendulum") {
        region.q_box = vec![[-2.5, 2.5]];
        region.p_box = vec![[-1.2, 1.2]];
        region.level_range = Some([-0.95, -0.1]);
    } else if label.starts_with("free_particle") || label.starts_with("adversarial") {
        region.t_range = [0.0, 1.0];
        region.q_box = vec![[-2.0, 2.0]; m];
        region.p_box = vec![[-2.0, 2.0]; m];
    } else {
        region.level_range = Some([0.05, 2.0]);
    }
    region
}

fn quadratic_energy(label: String, m: usize, degree: Option<usize>, omegas: Vec<f64>) -> ScalarField {
    // sum over the selected degrees of (p^2 + w^2 q^2)/2
    let degrees: Vec<usize> = match degree {
        Some(k) => vec![k],
        None => (0..m).collect(),
    };
    let d2 = degrees.clone();
    let w2 = omegas.clone();
    ScalarField::analytic(
        Arity::Vertical,
        m,
        label,
        move |x| {
            degrees
                .iter()
                .map(|&k| 0.5 * (x[1 + m + k].powi(2) + (omegas[k] * x[1 + k]).powi(2)))
                .sum()
        },
        move |x, out| {
            out.fill(0.0);
            for &k in &d2 {
                out[1 + k] = w2[k] * w2[k] * x[1 + k];
                out[1 + m + k] = x[1 + m + k];
            }
        },
    )
}

pub fn free_particle(dof: usize) -> Result<TDSystem, CoreError> {
    let h = quadratic_energy("sum p^2/2".into(), dof, None, vec![0.0; dof]);
    let integrals = (0..dof)
        .map(|k| ScalarField::coordinate(Arity::Vertical, dof, Coordinate::P(k)))
        .collect();
    TDSystem::new(format!("free_particle(dof={dof})"), h, integrals)?
        .with_separable_degrees(vec![
            DegreeInfo {
                compact: false,
                center: 0.0
            };
            dof
        ])
        .map(TDSystem::autonomous)
}

pub fn harmonic(omega: f64) -> Result<TDSystem, CoreError> {
    let h = quadratic_energy(format!("(p^2+{omega}^2 q^2)/2"), 1, None, vec![omega]);
    TDSystem::new(format!("harmonic(omega={omega})"), h.clone(), vec![h])?
        .with_separable_degrees(vec![DegreeInfo::default()])
        .map(TDSystem::autonomous)
}

pub fn pendulum() -> Result<TDSystem, CoreError> {
    let h = ScalarField::analytic(
        Arity::Vertical,
        1,
        "p^2/2-cos q",
        |x| 0.5 * x[2] * x[2] - x[1].cos(),
        |x, out| {
            out[0] = 0.0;
            out[1] = x[1].sin();
            out[2] = x[2];
        },
    );
    TDSystem::new("pendulum", h.clone(), vec![h])?
        .with_separable_degrees(vec![DegreeInfo::default()])
        .map(TDSystem::autonomous)
}

pub fn separable_oscillators(omegas: &[f64]) -> Result<TDSystem, CoreError> {
    let m = omegas.len();
    let h = quadratic_energy("sum (p^2+w^2 q^2)/2".into(), m, None, omegas.to_vec());
    let integrals = (0..m)
        .map(|k| quadratic_energy(format!("E{}", k + 1), m, Some(k), omegas.to_vec()))
        .collect();
    let ws: Vec<String> = omegas.iter().map(|w| w.to_string()).collect();
    TDSystem::new(format!("separable_2dof(omega={})", ws.join(",")), h, integrals)?
        .with_separable_degrees(vec![DegreeInfo::default(); m])
        .map(TDSystem::autonomous)
}

pub fn adversarial() -> Result<TDSystem, CoreError> {
    let h = quadratic_energy("sum p^2/2".into(), 2, None, vec![0.0; 2]);
    let q1 = ScalarField::coordinate(Arity::Vertical, 2, Coordinate::Q(0));
    let p1 = ScalarField::coordinate(Arity::Vertical, 2, Coordinate::P(0));
    TDSystem::new("adversarial(q1,p1)", h, vec![q1, p1]).map(TDSystem::autonomous)
}

fn custom_system(c: &CustomSystem) -> Result<TDSystem, SystemError> {
    let m = c.integrals.len();
    if m == 0 {
        return Err(SystemError::InvalidParameter {
            name: "integrals".into(),
            reason: "at least one integral is required".into(),
        });
    }
    let h = vertical_field(&c.hamiltonian, m)?;
    let integrals = c
        .integrals
        .iter()
        .map(|s| vertical_field(s, m))
        .collect::<Result<Vec<_>, _>>()?;
    let mut sys = TDSystem::new(format!("custom({})", c.hamiltonian), h, integrals)?;
    if let Some(compact) = &c.compact {
        let centers = c.centers.clone().unwrap_or_else(|| vec![0.0; m]);
        if compact.len() != m || centers.len() != m {
            return Err(SystemError::InvalidParameter {
                name: "compact".into(),
                reason: format!("need one compactness flag and center per degree ({m})"),
            });
        }
        sys = sys.with_separable_degrees(
            compact
                .iter()
                .zip(centers)
                .map(|(&compact, center)| DegreeInfo { compact, center })
                .collect(),
        )?;
    }
    Ok(sys)
}

/// `w2(t)` together with its time derivative.
pub trait FrequencyProfile: Send + Sync {
    fn omega_squared(&self, t: f64) -> (f64, f64);
    fn label(&self) -> String;
}

/// `w2(t) = omega0^2 + a sin(b t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SineModulation {
    pub omega0: f64,
    pub a: f64,
    pub b: f64,
}

impl FrequencyProfile for SineModulation {
    fn omega_squared(&self, t: f64) -> (f64, f64) {
        let (s, c) = (self.b * t).sin_cos();
        (self.omega0 * self.omega0 + self.a * s, self.a * self.b * c)
    }

    fn label(&self) -> String {
        format!("omega0={},a={},b={}", self.omega0, self.a, self.b)
    }
}

/// Solution of the Ermakov equation `rho'' + w2(t) rho = rho^-3` with
/// `rho(0) = w2(0)^(-1/4)`, `rho'(0) = 0`.
///
/// Values are produced from checkpoints every [`RhoSolution::SPACING`] in
/// `[-HORIZON, HORIZON]` plus one short high-accuracy integration, so the
/// result depends only on `t`.
pub struct RhoSolution {
    profile: Arc<dyn FrequencyProfile>,
    checkpoints: Vec<(f64, [f64; 2])>,
}

impl RhoSolution {
    pub const SPACING: f64 = 0.5;
    pub const HORIZON: f64 = 40.0;
    const TOL: f64 = 1e-13;

    pub fn new(profile: Arc<dyn FrequencyProfile>) -> Self {
        let (w2, _) = profile.omega_squared(0.0);
        let start = [w2.powf(-0.25), 0.0];
        let n = (Self::HORIZON / Self::SPACING) as i64;
        let mut forward = vec![(0.0, start)];
        let mut backward = Vec::new();
        let mut state = start;
        for i in 1..=n {
            let t0 = (i - 1) as f64 * Self::SPACING;
            let t1 = i as f64 * Self::SPACING;
            state = ermakov_step(profile.as_ref(), t0, state, t1);
            forward.push((t1, state));
        }
        state = start;
        for i in 1..=n {
            let t0 = -((i - 1) as f64) * Self::SPACING;
            let t1 = -(i as f64) * Self::SPACING;
            state = ermakov_step(profile.as_ref(), t0, state, t1);
            backward.push((t1, state));
        }
        backward.reverse();
        backward.extend(forward);
        Self {
            profile,
            checkpoints: backward,
        }
    }

    /// `(rho, rho')` at `t`.
    pub fn eval(&self, t: f64) -> [f64; 2] {
        let n = self.checkpoints.len() as i64;
        let offset = (n - 1) / 2;
        let idx = ((t / Self::SPACING).round() as i64 + offset).clamp(0, n - 1) as usize;
        let (tc, state) = self.checkpoints[idx];
        if tc == t {
            return state;
        }
        ermakov_step(self.profile.as_ref(), tc, state, t)
    }

    /// `rho''` from the Ermakov equation.
    pub fn second_derivative(&self, t: f64, rho: f64) -> f64 {
        let (w2, _) = self.profile.omega_squared(t);
        -w2 * rho + rho.powi(-3)
    }
}

fn ermakov_rhs(profile: &dyn FrequencyProfile, t: f64, y: &[f64], out: &mut [f64]) {
    let (w2, _) = profile.omega_squared(t);
    out[0] = y[1];
    out[1] = -w2 * y[0] + y[0].powi(-3);
}

fn ermakov_step(profile: &dyn FrequencyProfile, t0: f64, state: [f64; 2], t1: f64) -> [f64; 2] {
    let dir = if t1 >= t0 { 1.0 } else { -1.0 };
    let span = (t1 - t0).abs();
    let f = |s: f64, y: &[f64], out: &mut [f64]| {
        ermakov_rhs(profile, t0 + dir * s, y, out);
        if dir < 0.0 {
            out[0] = -out[0];
            out[1] = -out[1];
        }
    };
    let f: &Rhs<'_> = &f;
    let mut st = Adaptive::new(f, 0.0, state.to_vec(), RhoSolution::TOL, RhoSolution::TOL);
    while st.s < span {
        if st.step_toward(span).is_err() {
            return [f64::NAN, f64::NAN];
        }
    }
    [st.y[0], st.y[1]]
}

/// Co-integrated `(rho, rho')` for trajectories of the oscillator.
struct ErmakovAux {
    profile: Arc<dyn FrequencyProfile>,
}

impl Auxiliary for ErmakovAux {
    fn dim(&self) -> usize {
        2
    }
    fn names(&self) -> Vec<String> {
        vec!["rho".into(), "rho_dot".into()]
    }
    fn initial_state(&self) -> Vec<f64> {
        let (w2, _) = self.profile.omega_squared(0.0);
        vec![w2.powf(-0.25), 0.0]
    }
    fn rhs(&self, t: f64, state: &[f64], out: &mut [f64]) {
        ermakov_rhs(self.profile.as_ref(), t, state, out);
    }
}

/// Ermakov-Lewis invariant `((q/rho)^2 + (rho p - rho' q)^2) / 2`.
pub fn ermakov_lewis(q: f64, p: f64, rho: f64, rho_dot: f64) -> f64 {
    let u = q / rho;
    let v = rho * p - rho_dot * q;
    0.5 * (u * u + v * v)
}

/// The time-dependent oscillator with the whitelisted frequency family.
pub fn td_oscillator(modulation: SineModulation) -> Result<TDSystem, CoreError> {
    td_oscillator_with(Arc::new(modulation))
}

/// The time-dependent oscillator for an arbitrary frequency profile. Only
/// profiles keeping `w2` positive and bounded are expected to give a bounded
/// positive `rho`.
pub fn td_oscillator_with(profile: Arc<dyn FrequencyProfile>) -> Result<TDSystem, CoreError> {
    let hp = profile.clone();
    let gp = profile.clone();
    let h = ScalarField::analytic(
        Arity::Vertical,
        1,
        "(p^2+w2(t) q^2)/2",
        move |x| 0.5 * (x[2] * x[2] + hp.omega_squared(x[0]).0 * x[1] * x[1]),
        move |x, out| {
            let (w2, dw2) = gp.omega_squared(x[0]);
            out[0] = 0.5 * dw2 * x[1] * x[1];
            out[1] = w2 * x[1];
            out[2] = x[2];
        },
    );
    let rho = Arc::new(RhoSolution::new(profile.clone()));
    let rv = rho.clone();
    let invariant = ScalarField::analytic(
        Arity::Vertical,
        1,
        "ermakov_lewis",
        move |x| {
            let [r, rd] = rv.eval(x[0]);
            ermakov_lewis(x[1], x[2], r, rd)
        },
        move |x, out| {
            let (t, q, p) = (x[0], x[1], x[2]);
            let [r, rd] = rho.eval(t);
            let rdd = rho.second_derivative(t, r);
            let u = q / r;
            let v = r * p - rd * q;
            out[0] = u * (-q * rd / (r * r)) + v * (rd * p - rdd * q);
            out[1] = u / r - v * rd;
            out[2] = v * r;
        },
    );
    Ok(
        TDSystem::new(format!("td_oscillator({})", profile.label()), h, vec![invariant])?
            .with_separable_degrees(vec![DegreeInfo::default()])?
            .with_auxiliary(Arc::new(ErmakovAux { profile })),
    )
}
