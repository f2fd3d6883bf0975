//! Sparse multivariate polynomials over the flat coordinate layout.
//!
//! Used to generate random test fields and to form brackets and products
//! symbolically, so that bracket identities involving nested brackets can be
//! checked without second derivatives.

use std::collections::BTreeMap;

use rand::Rng;

use crate::field::{Arity, ScalarField};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Polynomial {
    nvars: usize,
    terms: BTreeMap<Vec<u32>, f64>,
}

impl Polynomial {
    pub fn zero(nvars: usize) -> Self {
        Self {
            nvars,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(nvars: usize, c: f64) -> Self {
        let mut p = Self::zero(nvars);
        p.add_term(vec![0; nvars], c);
        p
    }

    pub fn variable(nvars: usize, i: usize) -> Self {
        let mut e = vec![0; nvars];
        e[i] = 1;
        let mut p = Self::zero(nvars);
        p.add_term(e, 1.0);
        p
    }

    /// Random polynomial of total degree at most `degree` with coefficients
    /// uniform in `[-1, 1]`; each monomial is kept with probability `density`.
    pub fn random<R: Rng + ?Sized>(nvars: usize, degree: u32, density: f64, rng: &mut R) -> Self {
        let mut p = Self::zero(nvars);
        for e in monomials(nvars, degree) {
            if rng.random::<f64>() < density {
                p.add_term(e, rng.random_range(-1.0..1.0));
            }
        }
        p
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn add_term(&mut self, exponents: Vec<u32>, coeff: f64) {
        assert_eq!(exponents.len(), self.nvars);
        let slot = self.terms.entry(exponents).or_insert(0.0);
        *slot += coeff;
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(e, c)| {
                e.iter()
                    .zip(x)
                    .fold(*c, |acc, (&k, &v)| acc * v.powi(k as i32))
            })
            .sum()
    }

    pub fn derivative(&self, i: usize) -> Self {
        let mut out = Self::zero(self.nvars);
        for (e, c) in &self.terms {
            if e[i] > 0 {
                let mut d = e.clone();
                d[i] -= 1;
                out.add_term(d, c * f64::from(e[i]));
            }
        }
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (e, c) in &other.terms {
            out.add_term(e.clone(), *c);
        }
        out
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            nvars: self.nvars,
            terms: self.terms.iter().map(|(e, c)| (e.clone(), c * s)).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(-1.0))
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut out = Self::zero(self.nvars);
        for (ea, ca) in &self.terms {
            for (eb, cb) in &other.terms {
                let e = ea.iter().zip(eb).map(|(a, b)| a + b).collect();
                out.add_term(e, ca * cb);
            }
        }
        out
    }

    /// Symbolic bracket `sum_k d_pk f d_qk g - d_qk f d_pk g` over the given
    /// conjugate index pairs `(q_index, p_index)`.
    pub fn bracket(&self, other: &Self, pairs: &[(usize, usize)]) -> Self {
        let mut out = Self::zero(self.nvars);
        for &(qi, pi) in pairs {
            out = out
                .add(&self.derivative(pi).mul(&other.derivative(qi)))
                .sub(&self.derivative(qi).mul(&other.derivative(pi)));
        }
        out
    }

    /// Conjugate pairs of the vertical layout `[t, q.., p..]`.
    pub fn vertical_pairs(m: usize) -> Vec<(usize, usize)> {
        (0..m).map(|k| (1 + k, 1 + m + k)).collect()
    }

    /// Conjugate pairs of the extended layout `[t, q.., p.., p0]`,
    /// including `(t, p0)`.
    pub fn extended_pairs(m: usize) -> Vec<(usize, usize)> {
        let mut pairs = Self::vertical_pairs(m);
        pairs.push((0, 2 * m + 1));
        pairs
    }

    /// Wraps the polynomial as a field with an analytic gradient.
    pub fn to_field(&self, arity: Arity, m: usize) -> ScalarField {
        assert_eq!(arity.len(m), self.nvars, "layout length mismatch");
        let value = self.clone();
        let grads: Vec<Polynomial> = (0..self.nvars).map(|i| self.derivative(i)).collect();
        ScalarField::analytic(
            arity,
            m,
            "poly",
            move |x| value.eval(x),
            move |x, out| {
                for (o, g) in out.iter_mut().zip(&grads) {
                    *o = g.eval(x);
                }
            },
        )
    }
}

fn monomials(nvars: usize, degree: u32) -> Vec<Vec<u32>> {
    fn rec(prefix: &mut Vec<u32>, left: usize, budget: u32, out: &mut Vec<Vec<u32>>) {
        if left == 0 {
            out.push(prefix.clone());
            return;
        }
        for k in 0..=budget {
            prefix.push(k);
            rec(prefix, left - 1, budget - k, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::with_capacity(nvars), nvars, degree, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::gradient_check;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn monomial_count() {
        // C(n + d, d) monomials of degree <= d in n variables.
        assert_eq!(monomials(3, 3).len(), 20);
        assert_eq!(monomials(5, 3).len(), 56);
    }

    #[test]
    fn bracket_of_p_and_q() {
        let p = Polynomial::variable(3, 2);
        let q = Polynomial::variable(3, 1);
        let b = p.bracket(&q, &Polynomial::vertical_pairs(1));
        assert_eq!(b.eval(&[0.3, 0.1, 9.0]), 1.0);
    }

    #[test]
    fn polynomial_field_gradient_is_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let p = Polynomial::random(5, 3, 1.0, &mut rng);
        let f = p.to_field(Arity::Vertical, 2);
        let check = gradient_check(&f, &[0.1, -0.4, 0.8, 0.3, -0.9]);
        assert!(check.max_relative_error < 1e-9, "{check:?}");
    }
}
