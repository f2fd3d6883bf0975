//! Numerical time-dependent action-angle charts for separable systems.
//!
//! On the `t = 0` slice each integral `F_k` of a separable system depends
//! on `(q_k, p_k)` only, so every degree of freedom is a 1-DOF problem:
//!
//! * the action is `I = |loop integral of p dq| / 2pi` over the level curve
//!   `F_k = c`, accumulated while tracing the curve with the slice flow of
//!   `F_k`;
//! * the angle is `2pi tau / T`, where `tau` is the flow time from the
//!   reference point (the crossing of `{p = 0, q > center}`) and `T` the
//!   period.
//!
//! A point at time `t` is first carried back to `t = 0` along its
//! trajectory; the resulting initial-data coordinates are constant along
//! trajectories. Shifting the angles by `t * grad S(I)` turns the chart into
//! one where the Hamiltonian is `S(I)`.
//!
//! With the bracket convention `{p, q} = +1`, the canonical pairing of these
//! coordinates is `{I_i, phi_j} = delta_ij`.

mod chart;
mod checks;
mod loops;

use std::sync::Arc;

use thiserror::Error;

use crate::expr::CompiledExpr;
use crate::flow::FlowError;
use crate::point::CoreError;
use crate::verify::VerifyError;

pub use chart::{
    build_initial_data_chart, build_initial_data_chart_with, chart_csv, shift_chart,
    transform_ww26, ActionAngleChart, ChartKind, ChartPoint,
};
pub use checks::{
    chart_dynamics, check_canonicity, hamiltonian_in_chart, pulled_back, ChartDynamics,
    CANONICITY_STEP, IN_CHART_TOL,
};
pub use loops::{
    action_integral, action_integral_with, period, period_with, ActionProfile, LoopOptions,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AaError {
    #[error("non-compact level set: {0}")]
    NonCompact(String),
    #[error("separatrix: level {level} is within {guard:e} of the critical value {critical}")]
    Separatrix { level: f64, critical: f64, guard: f64 },
    #[error("period not found: {0}")]
    PeriodNotFound(String),
    #[error("system is not separable: {0}")]
    NotSeparable(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
}

/// A smooth function of the actions with exact gradient.
pub trait ActionFunction: Send + Sync {
    fn label(&self) -> String;
    fn value(&self, actions: &[f64]) -> f64;
    fn gradient(&self, actions: &[f64]) -> Vec<f64>;
}

impl ActionFunction for CompiledExpr {
    fn label(&self) -> String {
        self.source().to_string()
    }
    fn value(&self, actions: &[f64]) -> f64 {
        CompiledExpr::value(self, actions)
    }
    fn gradient(&self, actions: &[f64]) -> Vec<f64> {
        CompiledExpr::gradient(self, actions)
    }
}

type ValueFn = dyn Fn(&[f64]) -> f64 + Send + Sync;
type GradFn = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;

/// [`ActionFunction`] from a pair of closures.
#[derive(Clone)]
pub struct ActionFn {
    label: String,
    value: Arc<ValueFn>,
    grad: Arc<GradFn>,
}

impl ActionFn {
    pub fn new(
        label: impl Into<String>,
        value: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        grad: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            label: label.into(),
            value: Arc::new(value),
            grad: Arc::new(grad),
        }
    }

    /// `sum_k c_k I_k`.
    pub fn linear(coeffs: Vec<f64>) -> Self {
        let c2 = coeffs.clone();
        let label = coeffs
            .iter()
            .enumerate()
            .map(|(k, c)| format!("{c}*I{}", k + 1))
            .collect::<Vec<_>>()
            .join("+");
        Self::new(
            label,
            move |i| i.iter().zip(&coeffs).map(|(a, b)| a * b).sum(),
            move |_| c2.clone(),
        )
    }
}

impl ActionFunction for ActionFn {
    fn label(&self) -> String {
        self.label.clone()
    }
    fn value(&self, actions: &[f64]) -> f64 {
        (self.value)(actions)
    }
    fn gradient(&self, actions: &[f64]) -> Vec<f64> {
        (self.grad)(actions)
    }
}

/// Angle reduced to `[0, 2pi)`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(std::f64::consts::TAU);
    if w >= std::f64::consts::TAU {
        0.0
    } else {
        w
    }
}

/// Angle difference reduced to `(-pi, pi]`.
pub fn angle_difference(a: f64, b: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let d = (a - b).rem_euclid(TAU);
    if d > PI {
        d - TAU
    } else {
        d
    }
}
