//! Sparse multivariate polynomials with analytic first and second derivatives.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Monomial<T> {
    pub coef: T,
    pub powers: Vec<u32>,
}

impl<T: Real> Monomial<T> {
    pub fn degree(&self) -> u32 {
        self.powers.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Polynomial<T> {
    pub terms: Vec<Monomial<T>>,
}

fn ipow<T: Real>(x: T, p: u32) -> T {
    let mut acc = T::one();
    for _ in 0..p {
        acc *= x;
    }
    acc
}

/// `d^order/dx^order x^p` evaluated at x.
fn dpow<T: Real>(x: T, p: u32, order: u32) -> T {
    if order > p {
        return T::zero();
    }
    let mut c = T::one();
    for j in 0..order {
        c *= T::lit((p - j) as f64);
    }
    c * ipow(x, p - order)
}

impl<T: Real> Polynomial<T> {
    pub fn new(terms: Vec<Monomial<T>>) -> Self {
        Self { terms }
    }

    pub fn term(mut self, coef: T, powers: &[u32]) -> Self {
        self.terms.push(Monomial { coef, powers: powers.to_vec() });
        self
    }

    pub fn degree(&self) -> u32 {
        self.terms.iter().map(Monomial::degree).max().unwrap_or(0)
    }

    /// Number of variables every term must agree on, or an error.
    pub fn check_arity(&self, vars: usize) -> Result<()> {
        for t in &self.terms {
            if t.powers.len() != vars {
                return Err(Error::Dimension(format!(
                    "polynomial term has {} exponents, expected {vars}",
                    t.powers.len()
                )));
            }
        }
        Ok(())
    }

    pub fn value(&self, x: &DVector<T>) -> T {
        self.terms.iter().fold(T::zero(), |acc, t| {
            acc + t.coef * t.powers.iter().enumerate().fold(T::one(), |m, (i, &p)| m * ipow(x[i], p))
        })
    }

    pub fn gradient(&self, x: &DVector<T>) -> DVector<T> {
        let n = x.len();
        let mut g = DVector::zeros(n);
        for t in &self.terms {
            for a in 0..n {
                if t.powers[a] == 0 {
                    continue;
                }
                let mut m = t.coef;
                for (i, &p) in t.powers.iter().enumerate() {
                    m *= if i == a { dpow(x[i], p, 1) } else { ipow(x[i], p) };
                }
                g[a] += m;
            }
        }
        g
    }

    pub fn hessian(&self, x: &DVector<T>) -> DMatrix<T> {
        let n = x.len();
        let mut h = DMatrix::zeros(n, n);
        for t in &self.terms {
            for a in 0..n {
                for b in a..n {
                    let mut m = t.coef;
                    for (i, &p) in t.powers.iter().enumerate() {
                        let order = (i == a) as u32 + (i == b) as u32;
                        m *= dpow(x[i], p, order);
                    }
                    h[(a, b)] += m;
                    if a != b {
                        h[(b, a)] += m;
                    }
                }
            }
        }
        h
    }
}

/// All exponent vectors in `vars` variables with total degree <= `max_degree`,
/// graded then lexicographic (deterministic).
pub fn monomial_exponents(vars: usize, max_degree: u32) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    for d in 0..=max_degree {
        let mut cur = vec![0u32; vars];
        fill(&mut out, &mut cur, 0, d);
    }
    out
}

fn fill(out: &mut Vec<Vec<u32>>, cur: &mut Vec<u32>, pos: usize, remaining: u32) {
    if pos + 1 == cur.len() {
        cur[pos] = remaining;
        out.push(cur.clone());
        return;
    }
    if cur.is_empty() {
        return;
    }
    for p in (0..=remaining).rev() {
        cur[pos] = p;
        fill(out, cur, pos + 1, remaining - p);
    }
    cur[pos] = 0;
}
