//! Numerical toolkit for time-dependent completely integrable Hamiltonian
//! systems.
//!
//! The crate covers:
//!
//! * the momentum phase space `(t, q, p)` and the homogeneous phase space
//!   `(t, q, p0, p)` with their Poisson brackets ([`mechanics`]);
//! * integration of Hamilton's equations and the projection of points onto
//!   the `t = 0` slice along trajectories ([`flow`]);
//! * sampling-based certification of integrability ([`verify`]);
//! * numerical time-dependent action-angle charts for separable systems
//!   ([`actionangle`]);
//! * a catalogue of built-in systems with analytic gradients ([`systems`]).
//!
//! Bracket sign convention: `{p, q} = +1`. See [`mechanics`].

pub mod actionangle;
pub mod dual;
pub mod expr;
pub mod field;
pub mod flow;
pub mod mechanics;
pub mod ode;
pub mod point;
pub mod poly;
pub mod system;
pub mod systems;
pub mod verify;

pub use field::{Arity, Coordinate, Gradient, ScalarField};
pub use flow::{StepControl, Trajectory};
pub use point::{CoreError, ExtendedPoint, PhasePoint, TangentVector};
pub use system::{DegreeInfo, TDSystem};
