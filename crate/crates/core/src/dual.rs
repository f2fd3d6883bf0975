//! Forward-mode dual numbers carrying a full gradient.
//!
//! A [`Dual`] holds a value and its partial derivatives with respect to every
//! input coordinate. Evaluating a function on seeded duals yields the exact
//! gradient in one pass, with no finite-difference step.

use std::ops::{Add, Div, Mul, Neg, Sub};

/// Scalar operations needed by expression evaluation, implemented for `f64`
/// and [`Dual`].
pub trait Real:
    Clone
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn constant_like(&self, value: f64) -> Self;
    fn value(&self) -> f64;
    fn sin(&self) -> Self;
    fn cos(&self) -> Self;
    fn exp(&self) -> Self;
    fn ln(&self) -> Self;
    fn sqrt(&self) -> Self;
    fn powi(&self, n: i32) -> Self;
    fn powf(&self, e: &Self) -> Self;
}

impl Real for f64 {
    fn constant_like(&self, value: f64) -> Self {
        value
    }
    fn value(&self) -> f64 {
        *self
    }
    fn sin(&self) -> Self {
        f64::sin(*self)
    }
    fn cos(&self) -> Self {
        f64::cos(*self)
    }
    fn exp(&self) -> Self {
        f64::exp(*self)
    }
    fn ln(&self) -> Self {
        f64::ln(*self)
    }
    fn sqrt(&self) -> Self {
        f64::sqrt(*self)
    }
    fn powi(&self, n: i32) -> Self {
        f64::powi(*self, n)
    }
    fn powf(&self, e: &Self) -> Self {
        f64::powf(*self, *e)
    }
}

/// Value plus gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Dual {
    pub re: f64,
    pub eps: Vec<f64>,
}

impl Dual {
    pub fn constant(re: f64, n: usize) -> Self {
        Self {
            re,
            eps: vec![0.0; n],
        }
    }

    /// The `i`-th independent variable out of `n`.
    pub fn variable(re: f64, i: usize, n: usize) -> Self {
        let mut eps = vec![0.0; n];
        eps[i] = 1.0;
        Self { re, eps }
    }

    /// Seeds every coordinate of `x` as an independent variable.
    pub fn seed(x: &[f64]) -> Vec<Dual> {
        let n = x.len();
        x.iter()
            .enumerate()
            .map(|(i, &v)| Dual::variable(v, i, n))
            .collect()
    }

    fn chain(&self, re: f64, slope: f64) -> Self {
        Self {
            re,
            eps: self.eps.iter().map(|d| d * slope).collect(),
        }
    }

    fn zip_with(&self, other: &Dual, re: f64, f: impl Fn(f64, f64) -> f64) -> Dual {
        debug_assert_eq!(self.eps.len(), other.eps.len());
        Dual {
            re,
            eps: self
                .eps
                .iter()
                .zip(&other.eps)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, rhs: Dual) -> Dual {
        self.zip_with(&rhs, self.re + rhs.re, |a, b| a + b)
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, rhs: Dual) -> Dual {
        self.zip_with(&rhs, self.re - rhs.re, |a, b| a - b)
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, rhs: Dual) -> Dual {
        let (u, v) = (self.re, rhs.re);
        self.zip_with(&rhs, u * v, |a, b| a * v + u * b)
    }
}

impl Div for Dual {
    type Output = Dual;
    fn div(self, rhs: Dual) -> Dual {
        let (u, v) = (self.re, rhs.re);
        self.zip_with(&rhs, u / v, |a, b| (a * v - u * b) / (v * v))
    }
}

impl Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        self.chain(-self.re, -1.0)
    }
}

impl Real for Dual {
    fn constant_like(&self, value: f64) -> Self {
        Dual::constant(value, self.eps.len())
    }
    fn value(&self) -> f64 {
        self.re
    }
    fn sin(&self) -> Self {
        self.chain(self.re.sin(), self.re.cos())
    }
    fn cos(&self) -> Self {
        self.chain(self.re.cos(), -self.re.sin())
    }
    fn exp(&self) -> Self {
        let e = self.re.exp();
        self.chain(e, e)
    }
    fn ln(&self) -> Self {
        self.chain(self.re.ln(), 1.0 / self.re)
    }
    fn sqrt(&self) -> Self {
        let s = self.re.sqrt();
        self.chain(s, 0.5 / s)
    }
    fn powi(&self, n: i32) -> Self {
        let slope = if n == 0 {
            0.0
        } else {
            f64::from(n) * self.re.powi(n - 1)
        };
        self.chain(self.re.powi(n), slope)
    }
    fn powf(&self, e: &Self) -> Self {
        // d(u^v) = u^v (v' ln u + v u' / u)
        let value = self.re.powf(e.re);
        let ln_u = self.re.ln();
        let (u, v) = (self.re, e.re);
        self.zip_with(e, value, |du, dv| {
            let mut d = 0.0;
            if du != 0.0 {
                d += v * u.powf(v - 1.0) * du;
            }
            if dv != 0.0 {
                d += value * ln_u * dv;
            }
            d
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_rule() {
        let x = Dual::seed(&[2.0, 3.0]);
        let f = x[0].clone() * x[1].clone() * x[1].clone();
        assert_eq!(f.re, 18.0);
        assert_eq!(f.eps, vec![9.0, 12.0]);
    }

    #[test]
    fn transcendental_derivatives() {
        let x = Dual::variable(0.7, 0, 1);
        assert!((x.sin().eps[0] - 0.7f64.cos()).abs() < 1e-15);
        assert!((x.exp().eps[0] - 0.7f64.exp()).abs() < 1e-15);
        assert!((x.ln().eps[0] - 1.0 / 0.7).abs() < 1e-15);
        assert!((x.sqrt().eps[0] - 0.5 / 0.7f64.sqrt()).abs() < 1e-15);
        assert!((x.powi(3).eps[0] - 3.0 * 0.49).abs() < 1e-15);
    }

    #[test]
    fn powf_with_constant_exponent_at_zero_base() {
        // x^2 at x = 0 must not produce NaN from ln(0).
        let x = Dual::variable(0.0, 0, 1);
        let two = x.constant_like(2.0);
        let y = x.powf(&two);
        assert_eq!(y.re, 0.0);
        assert_eq!(y.eps[0], 0.0);
    }

    #[test]
    fn quotient_rule() {
        let x = Dual::seed(&[1.0, 2.0]);
        let f = x[0].clone() / x[1].clone();
        assert_eq!(f.re, 0.5);
        assert_eq!(f.eps, vec![0.5, -0.25]);
    }
}
