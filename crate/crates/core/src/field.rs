//! Smooth scalar fields with exact first derivatives.
//!
//! Fields are evaluated on a flat coordinate layout:
//!
//! * vertical: `[t, q1..qm, p1..pm]`
//! * extended: `[t, q1..qm, p1..pm, p0]`
//!
//! The vertical layout is a prefix of the extended one, which makes the
//! pull-back along the bundle projection a matter of ignoring the last slot.
//!
//! Gradients are never computed by finite differences. Built-in systems
//! supply analytic gradients; user fields go through [`Dual`] numbers.

use std::fmt;
use std::sync::Arc;

use crate::dual::Dual;
use crate::point::{CoreError, ExtendedPoint, PhasePoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arity {
    /// A function on `(t, q, p)`.
    Vertical,
    /// A function on `(t, q, p0, p)`.
    Extended,
}

impl Arity {
    pub fn name(self) -> &'static str {
        match self {
            Arity::Vertical => "vertical",
            Arity::Extended => "extended",
        }
    }

    /// Length of the flat layout for `m` degrees of freedom.
    pub fn len(self, m: usize) -> usize {
        match self {
            Arity::Vertical => 2 * m + 1,
            Arity::Extended => 2 * m + 2,
        }
    }
}

/// Evaluation backend of a [`ScalarField`].
pub trait FieldFn: Send + Sync {
    fn value(&self, x: &[f64]) -> f64;
    /// Writes every first partial derivative into `out` (same layout as `x`).
    fn gradient(&self, x: &[f64], out: &mut [f64]);
}

struct Analytic<V, G> {
    value: V,
    grad: G,
}

impl<V, G> FieldFn for Analytic<V, G>
where
    V: Fn(&[f64]) -> f64 + Send + Sync,
    G: Fn(&[f64], &mut [f64]) + Send + Sync,
{
    fn value(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }
    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        (self.grad)(x, out)
    }
}

struct DualBacked<F>(F);

impl<F> FieldFn for DualBacked<F>
where
    F: Fn(&[Dual]) -> Dual + Send + Sync,
{
    fn value(&self, x: &[f64]) -> f64 {
        let consts: Vec<Dual> = x.iter().map(|&v| Dual::constant(v, 0)).collect();
        (self.0)(&consts).re
    }
    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let d = (self.0)(&Dual::seed(x));
        out.copy_from_slice(&d.eps);
    }
}

/// Pull-back of a vertical field to the extended phase space.
struct Pullback(Arc<dyn FieldFn>);

impl FieldFn for Pullback {
    fn value(&self, x: &[f64]) -> f64 {
        self.0.value(&x[..x.len() - 1])
    }
    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let n = x.len() - 1;
        self.0.gradient(&x[..n], &mut out[..n]);
        out[n] = 0.0;
    }
}

/// All first partial derivatives of a field at a point, in flat layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    m: usize,
    arity: Arity,
    values: Vec<f64>,
}

impl Gradient {
    pub fn d_t(&self) -> f64 {
        self.values[0]
    }
    pub fn d_q(&self, k: usize) -> f64 {
        self.values[1 + k]
    }
    pub fn d_p(&self, k: usize) -> f64 {
        self.values[1 + self.m + k]
    }
    /// Zero for vertical fields.
    pub fn d_p0(&self) -> f64 {
        match self.arity {
            Arity::Vertical => 0.0,
            Arity::Extended => self.values[2 * self.m + 1],
        }
    }
    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
    pub fn m(&self) -> usize {
        self.m
    }
}

/// A smooth real function on the momentum or homogeneous phase space.
#[derive(Clone)]
pub struct ScalarField {
    arity: Arity,
    m: usize,
    label: Arc<str>,
    inner: Arc<dyn FieldFn>,
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarField")
            .field("label", &self.label)
            .field("arity", &self.arity)
            .field("m", &self.m)
            .finish()
    }
}

/// A single coordinate function.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coordinate {
    T,
    Q(usize),
    P(usize),
    P0,
}

impl ScalarField {
    pub fn from_fn(arity: Arity, m: usize, label: impl Into<String>, inner: Arc<dyn FieldFn>) -> Self {
        Self {
            arity,
            m,
            label: Arc::from(label.into()),
            inner,
        }
    }

    /// A field with a hand-written gradient.
    pub fn analytic<V, G>(arity: Arity, m: usize, label: impl Into<String>, value: V, grad: G) -> Self
    where
        V: Fn(&[f64]) -> f64 + Send + Sync + 'static,
        G: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    {
        Self::from_fn(arity, m, label, Arc::new(Analytic { value, grad }))
    }

    /// A field whose gradient comes from forward-mode dual evaluation.
    pub fn dual<F>(arity: Arity, m: usize, label: impl Into<String>, f: F) -> Self
    where
        F: Fn(&[Dual]) -> Dual + Send + Sync + 'static,
    {
        Self::from_fn(arity, m, label, Arc::new(DualBacked(f)))
    }

    pub fn constant(arity: Arity, m: usize, c: f64) -> Self {
        Self::analytic(arity, m, format!("{c}"), move |_| c, |_, out| out.fill(0.0))
    }

    pub fn coordinate(arity: Arity, m: usize, c: Coordinate) -> Self {
        let (idx, label) = match c {
            Coordinate::T => (0, "t".to_string()),
            Coordinate::Q(k) => (1 + k, format!("q{}", k + 1)),
            Coordinate::P(k) => (1 + m + k, format!("p{}", k + 1)),
            Coordinate::P0 => {
                assert_eq!(arity, Arity::Extended, "p0 exists only on the extended space");
                (2 * m + 1, "p0".to_string())
            }
        };
        assert!(idx < arity.len(m), "coordinate out of range");
        Self::analytic(
            arity,
            m,
            label,
            move |x| x[idx],
            move |_, out| {
                out.fill(0.0);
                out[idx] = 1.0;
            },
        )
    }

    pub fn arity(&self) -> Arity {
        self.arity
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn with_label(&self, label: impl Into<String>) -> Self {
        Self {
            label: Arc::from(label.into()),
            ..self.clone()
        }
    }

    /// Raw evaluation on the flat layout. The caller guarantees the length.
    pub fn value_at(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.arity.len(self.m));
        self.inner.value(x)
    }

    /// Raw gradient on the flat layout.
    pub fn gradient_at(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.arity.len(self.m));
        let mut out = vec![0.0; x.len()];
        self.inner.gradient(x, &mut out);
        out
    }

    fn expect(&self, arity: Arity, m: usize) -> Result<(), CoreError> {
        if self.arity != arity {
            return Err(CoreError::Arity {
                expected: arity.name(),
                found: self.arity.name(),
            });
        }
        if self.m != m {
            return Err(CoreError::Dimension {
                expected: self.m,
                found: m,
            });
        }
        Ok(())
    }

    fn finite_gradient(&self, values: Vec<f64>) -> Result<Gradient, CoreError> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::NonFinite {
                what: format!("gradient of {}", self.label),
            });
        }
        Ok(Gradient {
            m: self.m,
            arity: self.arity,
            values,
        })
    }

    pub fn eval(&self, x: &PhasePoint) -> Result<f64, CoreError> {
        self.expect(Arity::Vertical, x.dim())?;
        Ok(self.inner.value(&x.to_flat()))
    }

    pub fn grad(&self, x: &PhasePoint) -> Result<Gradient, CoreError> {
        self.expect(Arity::Vertical, x.dim())?;
        self.finite_gradient(self.gradient_at(&x.to_flat()))
    }

    pub fn eval_ext(&self, x: &ExtendedPoint) -> Result<f64, CoreError> {
        self.expect(Arity::Extended, x.dim())?;
        Ok(self.inner.value(&x.to_flat()))
    }

    pub fn grad_ext(&self, x: &ExtendedPoint) -> Result<Gradient, CoreError> {
        self.expect(Arity::Extended, x.dim())?;
        self.finite_gradient(self.gradient_at(&x.to_flat()))
    }

    /// Pull-back along the projection that drops `p0`.
    pub fn pullback(&self) -> Result<ScalarField, CoreError> {
        if self.arity != Arity::Vertical {
            return Err(CoreError::Arity {
                expected: "vertical",
                found: self.arity.name(),
            });
        }
        Ok(Self {
            arity: Arity::Extended,
            m: self.m,
            label: Arc::from(format!("zeta*{}", self.label)),
            inner: Arc::new(Pullback(self.inner.clone())),
        })
    }
}

/// Outcome of comparing a field's gradient with central finite differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientCheck {
    /// Largest error relative to `max(1, |partial|)`.
    pub max_relative_error: f64,
    /// Flat index of the worst component.
    pub worst_component: usize,
}

/// Compares [`ScalarField::gradient_at`] with fourth-order central differences
/// of [`ScalarField::value_at`] at a flat point.
pub fn gradient_check(field: &ScalarField, x: &[f64]) -> GradientCheck {
    let exact = field.gradient_at(x);
    let mut worst = GradientCheck {
        max_relative_error: 0.0,
        worst_component: 0,
    };
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        let h = 1e-3 * (1.0 + x[i].abs());
        let mut at = |offset: f64| {
            probe[i] = x[i] + offset;
            let v = field.value_at(&probe);
            probe[i] = x[i];
            v
        };
        let fd = (8.0 * (at(h) - at(-h)) - (at(2.0 * h) - at(-2.0 * h))) / (12.0 * h);
        let err = (fd - exact[i]).abs() / exact[i].abs().max(1.0);
        if err > worst.max_relative_error || err.is_nan() {
            worst = GradientCheck {
                max_relative_error: err,
                worst_component: i,
            };
        }
    }
    worst
}
