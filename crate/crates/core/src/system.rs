//! Time-dependent Hamiltonian systems with declared first integrals.

use std::fmt;
use std::sync::Arc;

use crate::field::{Arity, ScalarField};
use crate::point::CoreError;

/// Extra ODE components integrated alongside `(q, p)`.
///
/// The time-dependent oscillator uses this for the Ermakov pair `(rho, rho')`.
pub trait Auxiliary: Send + Sync {
    fn dim(&self) -> usize;
    /// Labels for CSV/report columns.
    fn names(&self) -> Vec<String>;
    /// State at `t = 0`.
    fn initial_state(&self) -> Vec<f64>;
    fn rhs(&self, t: f64, state: &[f64], out: &mut [f64]);
}

/// Per-degree metadata used by the action-angle machinery.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegreeInfo {
    /// Whether the level sets of this degree's integral are compact on each
    /// time slice.
    pub compact: bool,
    /// Position of the elliptic equilibrium on the `t = 0` slice; the angle
    /// origin is the level curve's crossing of `{p = 0, q > center}`.
    pub center: f64,
}

impl Default for DegreeInfo {
    fn default() -> Self {
        Self {
            compact: true,
            center: 0.0,
        }
    }
}

/// A time-dependent Hamiltonian system `(H; F_1..F_m)`.
#[derive(Clone)]
pub struct TDSystem {
    label: String,
    m: usize,
    hamiltonian: ScalarField,
    integrals: Vec<ScalarField>,
    degrees: Vec<DegreeInfo>,
    separable: bool,
    autonomous: bool,
    aux: Option<Arc<dyn Auxiliary>>,
}

impl fmt::Debug for TDSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TDSystem")
            .field("label", &self.label)
            .field("m", &self.m)
            .field("integrals", &self.integrals)
            .field("degrees", &self.degrees)
            .field("separable", &self.separable)
            .field("autonomous", &self.autonomous)
            .finish()
    }
}

impl TDSystem {
    /// Builds a system. Fields must be vertical with matching `m`, and there
    /// must be exactly `m` integrals.
    pub fn new(
        label: impl Into<String>,
        hamiltonian: ScalarField,
        integrals: Vec<ScalarField>,
    ) -> Result<Self, CoreError> {
        let m = hamiltonian.m();
        if m == 0 {
            return Err(CoreError::InvalidSystem("m must be at least 1".into()));
        }
        for f in std::iter::once(&hamiltonian).chain(&integrals) {
            if f.arity() != Arity::Vertical {
                return Err(CoreError::Arity {
                    expected: "vertical",
                    found: f.arity().name(),
                });
            }
            if f.m() != m {
                return Err(CoreError::Dimension {
                    expected: m,
                    found: f.m(),
                });
            }
        }
        if integrals.len() != m {
            return Err(CoreError::InvalidSystem(format!(
                "{} integrals given for {m} degrees of freedom",
                integrals.len()
            )));
        }
        Ok(Self {
            label: label.into(),
            m,
            hamiltonian,
            integrals,
            degrees: vec![DegreeInfo::default(); m],
            separable: false,
            autonomous: false,
            aux: None,
        })
    }

    /// Declares that integral `k` depends only on `(q_k, p_k)` on the `t = 0`
    /// slice, with the given per-degree metadata.
    pub fn with_separable_degrees(mut self, degrees: Vec<DegreeInfo>) -> Result<Self, CoreError> {
        if degrees.len() != self.m {
            return Err(CoreError::Dimension {
                expected: self.m,
                found: degrees.len(),
            });
        }
        self.degrees = degrees;
        self.separable = true;
        Ok(self)
    }

    /// Marks the Hamiltonian as time independent.
    pub fn autonomous(mut self) -> Self {
        self.autonomous = true;
        self
    }

    pub fn with_auxiliary(mut self, aux: Arc<dyn Auxiliary>) -> Self {
        self.aux = Some(aux);
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn hamiltonian(&self) -> &ScalarField {
        &self.hamiltonian
    }

    pub fn integrals(&self) -> &[ScalarField] {
        &self.integrals
    }

    pub fn degrees(&self) -> &[DegreeInfo] {
        &self.degrees
    }

    pub fn is_separable(&self) -> bool {
        self.separable
    }

    pub fn is_autonomous(&self) -> bool {
        self.autonomous
    }

    pub fn auxiliary(&self) -> Option<&Arc<dyn Auxiliary>> {
        self.aux.as_ref()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Coordinate;

    #[test]
    fn integral_count_must_match_degrees() {
        let h = ScalarField::constant(Arity::Vertical, 2, 0.0);
        let p1 = ScalarField::coordinate(Arity::Vertical, 2, Coordinate::P(0));
        let err = TDSystem::new("bad", h, vec![p1]).unwrap_err();
        assert!(matches!(err, CoreError::InvalidSystem(_)));
    }

    #[test]
    fn extended_fields_are_rejected() {
        let h = ScalarField::constant(Arity::Extended, 1, 0.0);
        let f = ScalarField::constant(Arity::Vertical, 1, 0.0);
        assert!(matches!(
            TDSystem::new("bad", h, vec![f]),
            Err(CoreError::Arity { .. })
        ));
    }
}
