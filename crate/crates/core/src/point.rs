//! Phase-space points.
//!
//! A [`PhasePoint`] lives in the momentum phase space with coordinates
//! `(t, q^1..q^m, p_1..p_m)`. An [`ExtendedPoint`] adds the momentum `p0`
//! conjugate to time. Both are immutable values: every operation that
//! "moves" a point returns a new one.
//!
//! Internally the degree index is 0-based. Reports and CSV headers use
//! 1-based names (`q1`, `p1`, ...).

use std::fmt;

use thiserror::Error;

/// Errors raised by the core data model and bracket operations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum CoreError {
    #[error("dimension mismatch: expected {expected} degrees of freedom, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("non-finite value in {what}")]
    NonFinite { what: String },
    #[error("field arity mismatch: expected {expected} field, found {found}")]
    Arity {
        expected: &'static str,
        found: &'static str,
    },
    #[error("invalid system: {0}")]
    InvalidSystem(String),
}

fn check_finite(what: &str, values: &[f64]) -> Result<(), CoreError> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(CoreError::NonFinite {
            what: what.to_string(),
        })
    }
}

/// A point `(t, q, p)` of the momentum phase space.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePoint {
    t: f64,
    q: Vec<f64>,
    p: Vec<f64>,
}

impl PhasePoint {
    pub fn new(t: f64, q: Vec<f64>, p: Vec<f64>) -> Result<Self, CoreError> {
        if q.len() != p.len() {
            return Err(CoreError::Dimension {
                expected: q.len(),
                found: p.len(),
            });
        }
        if q.is_empty() {
            return Err(CoreError::Dimension {
                expected: 1,
                found: 0,
            });
        }
        check_finite("phase point", &[t])?;
        check_finite("phase point", &q)?;
        check_finite("phase point", &p)?;
        Ok(Self { t, q, p })
    }

    /// One degree of freedom shorthand.
    pub fn new_1d(t: f64, q: f64, p: f64) -> Result<Self, CoreError> {
        Self::new(t, vec![q], vec![p])
    }

    /// Rebuilds a point from the flat layout `[t, q.., p..]`.
    pub fn from_flat(flat: &[f64]) -> Result<Self, CoreError> {
        if flat.len() < 3 || flat.len() % 2 == 0 {
            return Err(CoreError::Dimension {
                expected: flat.len().saturating_sub(1) / 2,
                found: flat.len(),
            });
        }
        let m = (flat.len() - 1) / 2;
        Self::new(flat[0], flat[1..=m].to_vec(), flat[m + 1..].to_vec())
    }

    /// Builds a point from a time and a state vector `[q.., p..]`.
    pub fn from_state(t: f64, state: &[f64]) -> Result<Self, CoreError> {
        let m = state.len() / 2;
        Self::new(t, state[..m].to_vec(), state[m..2 * m].to_vec())
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn p(&self) -> &[f64] {
        &self.p
    }

    /// Number of degrees of freedom `m`.
    pub fn dim(&self) -> usize {
        self.q.len()
    }

    /// Flat layout `[t, q.., p..]` used by scalar fields.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(1 + 2 * self.dim());
        out.push(self.t);
        out.extend_from_slice(&self.q);
        out.extend_from_slice(&self.p);
        out
    }

    /// State vector `[q.., p..]` without the time.
    pub fn state(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * self.dim());
        out.extend_from_slice(&self.q);
        out.extend_from_slice(&self.p);
        out
    }

    pub fn with_time(&self, t: f64) -> Result<Self, CoreError> {
        Self::new(t, self.q.clone(), self.p.clone())
    }

    /// Lifts the point to the extended phase space with the given `p0`.
    pub fn extend(&self, p0: f64) -> Result<ExtendedPoint, CoreError> {
        ExtendedPoint::new(self.t, self.q.clone(), p0, self.p.clone())
    }

    /// Max-norm distance over `(t, q, p)`.
    pub fn distance(&self, other: &PhasePoint) -> f64 {
        let dt = (self.t - other.t).abs();
        self.q
            .iter()
            .zip(&other.q)
            .chain(self.p.iter().zip(&other.p))
            .map(|(a, b)| (a - b).abs())
            .fold(dt, f64::max)
    }
}

impl fmt::Display for PhasePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t={:.16e}", self.t)?;
        for (k, q) in self.q.iter().enumerate() {
            write!(f, " q{}={:.16e}", k + 1, q)?;
        }
        for (k, p) in self.p.iter().enumerate() {
            write!(f, " p{}={:.16e}", k + 1, p)?;
        }
        Ok(())
    }
}

/// A point `(t, q, p0, p)` of the homogeneous phase space.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedPoint {
    t: f64,
    q: Vec<f64>,
    p0: f64,
    p: Vec<f64>,
}

impl ExtendedPoint {
    pub fn new(t: f64, q: Vec<f64>, p0: f64, p: Vec<f64>) -> Result<Self, CoreError> {
        check_finite("extended point", &[p0])?;
        let base = PhasePoint::new(t, q, p)?;
        Ok(Self {
            t: base.t,
            q: base.q,
            p0,
            p: base.p,
        })
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn p0(&self) -> f64 {
        self.p0
    }

    pub fn p(&self) -> &[f64] {
        &self.p
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    /// The bundle projection that forgets `p0`.
    pub fn project(&self) -> PhasePoint {
        PhasePoint {
            t: self.t,
            q: self.q.clone(),
            p: self.p.clone(),
        }
    }

    /// Flat layout `[t, q.., p.., p0]`; the vertical layout is a prefix.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 + 2 * self.dim());
        out.push(self.t);
        out.extend_from_slice(&self.q);
        out.extend_from_slice(&self.p);
        out.push(self.p0);
        out
    }
}

/// Components of a tangent vector. `dp0` is only present for vectors on the
/// extended phase space.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    pub dt: f64,
    pub dq: Vec<f64>,
    pub dp: Vec<f64>,
    pub dp0: Option<f64>,
}

impl TangentVector {
    /// Drops the `dp0` component.
    pub fn vertical(&self) -> TangentVector {
        TangentVector {
            dt: self.dt,
            dq: self.dq.clone(),
            dp: self.dp.clone(),
            dp0: None,
        }
    }

    /// Largest componentwise difference over `(dt, dq, dp)`.
    pub fn max_vertical_difference(&self, other: &TangentVector) -> f64 {
        let dt = (self.dt - other.dt).abs();
        self.dq
            .iter()
            .zip(&other.dq)
            .chain(self.dp.iter().zip(&other.dp))
            .map(|(a, b)| (a - b).abs())
            .fold(dt, f64::max)
    }
}
