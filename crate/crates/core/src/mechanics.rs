//! Poisson brackets, evolution vector fields and the autonomous lift.
//!
//! Sign convention: with `d^k = d/dp_k` and `d_k = d/dq^k`,
//!
//! ```text
//! {f, g}_V = d^k f d_k g - d_k f d^k g
//! ```
//!
//! so `{p, q} = +1`. Many textbooks use the opposite sign. With this
//! convention the derivative of `g` along the flow of `F` is `{F, g}`, and a
//! time-dependent first integral satisfies `d_t F + {H, F}_V = 0`.

use crate::field::{Arity, Gradient, ScalarField};
use crate::point::{CoreError, ExtendedPoint, PhasePoint, TangentVector};
use crate::system::TDSystem;

fn vertical_sum(df: &Gradient, dg: &Gradient, m: usize) -> f64 {
    let mut acc = 0.0;
    for k in 0..m {
        acc += df.d_p(k) * dg.d_q(k) - df.d_q(k) * dg.d_p(k);
    }
    acc
}

/// The canonical Poisson bracket on the momentum phase space.
pub fn poisson_v(f: &ScalarField, g: &ScalarField, x: &PhasePoint) -> Result<f64, CoreError> {
    let df = f.grad(x)?;
    let dg = g.grad(x)?;
    Ok(vertical_sum(&df, &dg, x.dim()))
}

/// The symplectic Poisson bracket on the homogeneous phase space, including
/// the `(t, p0)` pair.
///
/// For fields pulled back from the momentum phase space the time pair
/// contributes an exact zero, so the result is bit-identical to
/// [`poisson_v`] at the projected point.
pub fn poisson_t(f: &ScalarField, g: &ScalarField, x: &ExtendedPoint) -> Result<f64, CoreError> {
    let df = f.grad_ext(x)?;
    let dg = g.grad_ext(x)?;
    let time_pair = df.d_p0() * dg.d_t() - df.d_t() * dg.d_p0();
    Ok(vertical_sum(&df, &dg, x.dim()) + time_pair)
}

fn evolution_from(dh: &Gradient, m: usize) -> TangentVector {
    TangentVector {
        dt: 1.0,
        dq: (0..m).map(|k| dh.d_p(k)).collect(),
        dp: (0..m).map(|k| -dh.d_q(k)).collect(),
        dp0: None,
    }
}

/// The evolution vector field `d_t + d^k H d_k - d_k H d^k`.
pub fn gamma_h(sys: &TDSystem, x: &PhasePoint) -> Result<TangentVector, CoreError> {
    let dh = sys.hamiltonian().grad(x)?;
    Ok(evolution_from(&dh, x.dim()))
}

/// The autonomous Hamiltonian `H* = p0 + H` on the homogeneous phase space.
pub fn lift_hamiltonian(sys: &TDSystem) -> ScalarField {
    let h = sys.hamiltonian().clone();
    let h_grad = h.clone();
    let m = sys.m();
    ScalarField::analytic(
        Arity::Extended,
        m,
        format!("p0+{}", h.label()),
        move |x| x[2 * m + 1] + h.value_at(&x[..2 * m + 1]),
        move |x, out| {
            let g = h_grad.gradient_at(&x[..2 * m + 1]);
            out[..2 * m + 1].copy_from_slice(&g);
            out[2 * m + 1] = 1.0;
        },
    )
}

/// Hamiltonian vector field of `H*`; its `(dt, dq, dp)` part is exactly
/// [`gamma_h`] at the projected point and `dp0 = -d_t H`.
pub fn gamma_t(sys: &TDSystem, x: &ExtendedPoint) -> Result<TangentVector, CoreError> {
    let base = x.project();
    let dh = sys.hamiltonian().grad(&base)?;
    let mut v = evolution_from(&dh, base.dim());
    v.dp0 = Some(-dh.d_t());
    Ok(v)
}

/// The section `h_r` of the projection with `p0 = -H + r`.
pub fn section_h_r(sys: &TDSystem, r: f64, x: &PhasePoint) -> Result<ExtendedPoint, CoreError> {
    let h = sys.hamiltonian().eval(x)?;
    x.extend(-h + r)
}

/// Lie derivative of `F` along the evolution field: `d_t F + {H, F}_V`.
/// Vanishes identically for a first integral.
pub fn first_integral_residual(
    sys: &TDSystem,
    f: &ScalarField,
    x: &PhasePoint,
) -> Result<f64, CoreError> {
    let df = f.grad(x)?;
    let dh = sys.hamiltonian().grad(x)?;
    Ok(df.d_t() + vertical_sum(&dh, &df, x.dim()))
}
