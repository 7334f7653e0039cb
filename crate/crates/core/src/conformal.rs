//! Conformally Euclidean metrics `e^{2u} <.,.>` and their transformed curvature.
//!
//! Conventions: the curvature operator is `R(X,Y)Z = ∇_Y∇_X Z − ∇_X∇_Y Z + ∇_[X,Y] Z`
//! (the opposite of the more common sign), so the sectional curvature of the
//! plane spanned by orthonormal `X, Y` is `<R(X,Y)X, Y> / (|X|²|Y|² − <X,Y>²)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poly::Polynomial;
use crate::scalar::Real;

/// Closed-form conformal exponents available by name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FieldKind<T> {
    Zero,
    /// `u(x) = <a, x>`.
    Linear(Vec<T>),
    /// `u = ln(2 / (1 + |x|²))`: the round unit sphere in stereographic coordinates.
    RadialSpherical,
    /// `u = ln(2 / (1 − |x|²))` on the open unit ball: the Poincaré model.
    RadialHyperbolic,
    /// `u = Σ_j c_j |x|^{2j}`.
    RadialCustom(Vec<T>),
    Polynomial(Polynomial<T>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DiffMode<T> {
    Analytic,
    /// Central differences of `value` with the given step.
    FiniteDifference {
        step: T,
    },
}

pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// The conformal exponent `u` together with its derivatives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarField<T> {
    pub kind: FieldKind<T>,
    pub mode: DiffMode<T>,
}

/// Value, gradient and Hessian of a field at one point.
#[derive(Debug, Clone)]
pub struct FieldJet<T: Real> {
    pub value: T,
    pub grad: DVector<T>,
    pub hess: DMatrix<T>,
}

impl<T: Real> ScalarField<T> {
    pub fn new(kind: FieldKind<T>) -> Self {
        Self { kind, mode: DiffMode::Analytic }
    }

    pub fn zero() -> Self {
        Self::new(FieldKind::Zero)
    }

    pub fn with_mode(mut self, mode: DiffMode<T>) -> Self {
        self.mode = mode;
        self
    }

    pub fn finite_difference(self) -> Self {
        self.with_mode(DiffMode::FiniteDifference { step: T::lit(DEFAULT_FD_STEP) })
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.kind, FieldKind::Zero)
    }

    /// Depends on `|x|` only.
    pub fn is_radial(&self) -> bool {
        matches!(
            self.kind,
            FieldKind::Zero | FieldKind::RadialSpherical | FieldKind::RadialHyperbolic | FieldKind::RadialCustom(_)
        )
    }

    /// Whether `x` lies in the natural domain of the field.
    pub fn contains(&self, x: &DVector<T>) -> bool {
        if x.iter().any(|v| !v.is_finite()) {
            return false;
        }
        match &self.kind {
            FieldKind::RadialHyperbolic => x.norm_squared() < T::one(),
            _ => true,
        }
    }

    pub fn check(&self, x: &DVector<T>) -> Result<()> {
        match &self.kind {
            FieldKind::Linear(a) if a.len() != x.len() => {
                return Err(Error::Dimension(format!(
                    "linear field has {} coefficients, point has dimension {}",
                    a.len(),
                    x.len()
                )))
            }
            FieldKind::Polynomial(p) => p.check_arity(x.len())?,
            _ => {}
        }
        if !self.contains(x) {
            return Err(Error::Domain(format!("{:?}", x.as_slice())));
        }
        Ok(())
    }

    fn radial_profile(&self, s: T) -> Option<(T, T, T)> {
        let one = T::one();
        let two = T::lit(2.0);
        match &self.kind {
            FieldKind::RadialSpherical => {
                let d = one + s;
                Some((two.ln() - d.ln(), -one / d, one / (d * d)))
            }
            FieldKind::RadialHyperbolic => {
                let d = one - s;
                Some((two.ln() - d.ln(), one / d, one / (d * d)))
            }
            FieldKind::RadialCustom(c) => {
                let (mut f, mut f1, mut f2) = (T::zero(), T::zero(), T::zero());
                let mut sp = T::one();
                for (j, &cj) in c.iter().enumerate() {
                    f += cj * sp;
                    let jf = T::lit(j as f64);
                    if j >= 1 {
                        f1 += jf * cj * s.powi(j as i32 - 1);
                    }
                    if j >= 2 {
                        f2 += jf * (jf - one) * cj * s.powi(j as i32 - 2);
                    }
                    sp *= s;
                }
                Some((f, f1, f2))
            }
            _ => None,
        }
    }

    /// `u(x)`, without domain checks (NaN outside the hyperbolic ball).
    pub fn value(&self, x: &DVector<T>) -> T {
        match &self.kind {
            FieldKind::Zero => T::zero(),
            FieldKind::Linear(a) => a.iter().zip(x.iter()).fold(T::zero(), |acc, (&a, &x)| acc + a * x),
            FieldKind::Polynomial(p) => p.value(x),
            _ => self.radial_profile(x.norm_squared()).map(|(f, _, _)| f).unwrap_or(T::zero()),
        }
    }

    fn analytic_gradient(&self, x: &DVector<T>) -> DVector<T> {
        match &self.kind {
            FieldKind::Zero => DVector::zeros(x.len()),
            FieldKind::Linear(a) => DVector::from_column_slice(a),
            FieldKind::Polynomial(p) => p.gradient(x),
            _ => {
                let (_, f1, _) = self.radial_profile(x.norm_squared()).expect("radial field");
                x * (T::lit(2.0) * f1)
            }
        }
    }

    fn analytic_hessian(&self, x: &DVector<T>) -> DMatrix<T> {
        let n = x.len();
        match &self.kind {
            FieldKind::Zero | FieldKind::Linear(_) => DMatrix::zeros(n, n),
            FieldKind::Polynomial(p) => p.hessian(x),
            _ => {
                let (_, f1, f2) = self.radial_profile(x.norm_squared()).expect("radial field");
                DMatrix::identity(n, n) * (T::lit(2.0) * f1) + (x * x.transpose()) * (T::lit(4.0) * f2)
            }
        }
    }

    fn fd_gradient(&self, x: &DVector<T>, h: T) -> DVector<T> {
        let n = x.len();
        let two_h = T::lit(2.0) * h;
        DVector::from_fn(n, |i, _| {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            (self.value(&xp) - self.value(&xm)) / two_h
        })
    }

    fn fd_hessian(&self, x: &DVector<T>, h: T) -> DMatrix<T> {
        let n = x.len();
        let f0 = self.value(x);
        let shifted = |di: usize, si: T, dj: usize, sj: T| {
            let mut y = x.clone();
            y[di] += si * h;
            y[dj] += sj * h;
            self.value(&y)
        };
        let one = T::one();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            m[(i, i)] = (self.value(&xp) - T::lit(2.0) * f0 + self.value(&xm)) / (h * h);
            for j in (i + 1)..n {
                let v = (shifted(i, one, j, one) - shifted(i, one, j, -one) - shifted(i, -one, j, one)
                    + shifted(i, -one, j, -one))
                    / (T::lit(4.0) * h * h);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        (&m + m.transpose()) * T::lit(0.5)
    }

    pub fn gradient(&self, x: &DVector<T>) -> DVector<T> {
        match self.mode {
            DiffMode::Analytic => self.analytic_gradient(x),
            DiffMode::FiniteDifference { step } => self.fd_gradient(x, step),
        }
    }

    pub fn hessian(&self, x: &DVector<T>) -> DMatrix<T> {
        match self.mode {
            DiffMode::Analytic => self.analytic_hessian(x),
            DiffMode::FiniteDifference { step } => self.fd_hessian(x, step),
        }
    }

    /// Checked evaluation of value, gradient and Hessian.
    pub fn jet(&self, x: &DVector<T>) -> Result<FieldJet<T>> {
        self.check(x)?;
        Ok(FieldJet { value: self.value(x), grad: self.gradient(x), hess: self.hessian(x) })
    }
}

impl<T: Real> FieldJet<T> {
    /// `X(u)`.
    pub fn d(&self, v: &DVector<T>) -> T {
        self.grad.dot(v)
    }

    pub fn hess_form(&self, a: &DVector<T>, b: &DVector<T>) -> T {
        (&self.hess * b).dot(a)
    }

    /// `X(u) Y + Y(u) X − <X,Y> ∇u`: the difference `∇̃_X Y − ∇_X Y`.
    pub fn connection_correction(&self, x: &DVector<T>, y: &DVector<T>) -> DVector<T> {
        y * self.d(x) + x * self.d(y) - &self.grad * x.dot(y)
    }

    /// Curvature operator of `e^{2u}` times the flat metric, applied to (X, Y, Z).
    pub fn riemann(&self, x: &DVector<T>, y: &DVector<T>, z: &DVector<T>) -> DVector<T> {
        let (xu, yu, zu) = (self.d(x), self.d(y), self.d(z));
        let (xz, yz) = (x.dot(z), y.dot(z));
        let grad2 = self.grad.norm_squared();
        let hx = &self.hess * x;
        let hy = &self.hess * y;
        let hxz = hx.dot(z);
        let hyz = hy.dot(z);
        y * (xu * zu) - x * (yu * zu) - &self.grad * (xu * yz) + &self.grad * (yu * xz) - hy * xz + hx * yz
            - y * (xz * grad2)
            + x * (yz * grad2)
            - y * hxz
            + x * hyz
    }

    /// Sectional curvature of the plane of Euclid-orthonormal `X, Y`.
    pub fn sectional_curvature(&self, x: &DVector<T>, y: &DVector<T>) -> T {
        let (xu, yu) = (self.d(x), self.d(y));
        (xu * xu + yu * yu - self.grad.norm_squared() - self.hess_form(x, x) - self.hess_form(y, y))
            * (-T::lit(2.0) * self.value).exp()
    }
}

/// `g̃ = e^{2u} g` on R^n.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConformalMetric<T> {
    pub field: ScalarField<T>,
    pub dim: usize,
}

impl<T: Real> ConformalMetric<T> {
    pub fn new(field: ScalarField<T>, dim: usize) -> Self {
        Self { field, dim }
    }

    pub fn euclidean(dim: usize) -> Self {
        Self::new(ScalarField::zero(), dim)
    }

    pub fn jet(&self, x: &DVector<T>) -> Result<FieldJet<T>> {
        if x.len() != self.dim {
            return Err(Error::Dimension(format!("point of dimension {} in R^{}", x.len(), self.dim)));
        }
        self.field.jet(x)
    }

    /// `g̃_x(a, b)`.
    pub fn inner(&self, x: &DVector<T>, a: &DVector<T>, b: &DVector<T>) -> Result<T> {
        self.field.check(x)?;
        Ok((T::lit(2.0) * self.field.value(x)).exp() * a.dot(b))
    }
}

/// `∇̃_X Y − ∇_X Y` for constant extensions of X, Y at `x`.
pub fn connection_correction<T: Real>(
    field: &ScalarField<T>,
    x: &DVector<T>,
    a: &DVector<T>,
    b: &DVector<T>,
) -> Result<DVector<T>> {
    Ok(field.jet(x)?.connection_correction(a, b))
}

/// `R̃(X,Y)Z` of the conformally flat metric.
pub fn riemann<T: Real>(
    field: &ScalarField<T>,
    x: &DVector<T>,
    a: &DVector<T>,
    b: &DVector<T>,
    c: &DVector<T>,
) -> Result<DVector<T>> {
    Ok(field.jet(x)?.riemann(a, b, c))
}

/// Sectional curvature of `g̃` on the plane spanned by Euclid-orthonormal `X, Y`.
pub fn sectional_curvature<T: Real>(
    field: &ScalarField<T>,
    x: &DVector<T>,
    a: &DVector<T>,
    b: &DVector<T>,
) -> Result<T> {
    let tol = T::tol(1e-10, 64.0);
    if (a.norm_squared() - T::one()).abs() > tol || (b.norm_squared() - T::one()).abs() > tol || a.dot(b).abs() > tol {
        return Err(Error::Precondition("sectional curvature needs Euclid-orthonormal vectors".into()));
    }
    Ok(field.jet(x)?.sectional_curvature(a, b))
}

/// Density of the induced k-volume of `g̃` relative to the Euclidean one: `e^{k u}`.
pub fn volume_factor<T: Real>(field: &ScalarField<T>, x: &DVector<T>, k: usize) -> Result<T> {
    if k == 0 || k > x.len() {
        return Err(Error::Dimension(format!("volume factor for k = {k} in R^{}", x.len())));
    }
    field.check(x)?;
    Ok((T::lit(k as f64) * field.value(x)).exp())
}
