//! Small dense linear-algebra helpers used by the frame and shape-operator code.
//!
//! Dimensions here are desk scale (n <= 8), so everything works on
//! heap-allocated `DVector`/`DMatrix` and favours clarity over speed.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::scalar::Real;

pub fn unit<T: Real>(n: usize, i: usize) -> DVector<T> {
    let mut e = DVector::zeros(n);
    e[i] = T::one();
    e
}

/// Removes from `v` its components along the orthonormal vectors `basis`.
pub fn project_out<T: Real>(v: &DVector<T>, basis: &[DVector<T>]) -> DVector<T> {
    let mut w = v.clone();
    for b in basis {
        let c = w.dot(b);
        w.axpy(-c, b, T::one());
    }
    w
}

/// Orthogonal projection of `v` onto the span of the orthonormal vectors `basis`.
pub fn project_onto<T: Real>(v: &DVector<T>, basis: &[DVector<T>]) -> DVector<T> {
    let mut w = DVector::zeros(v.len());
    for b in basis {
        w.axpy(v.dot(b), b, T::one());
    }
    w
}

/// Modified Gram–Schmidt with one reorthogonalisation pass, in column order.
///
/// Returns `None` when a column's residual norm falls below `rel_tol` times its
/// original norm (numerically dependent input).
pub fn gram_schmidt<T: Real>(columns: &[DVector<T>], rel_tol: T) -> Option<Vec<DVector<T>>> {
    let mut out: Vec<DVector<T>> = Vec::with_capacity(columns.len());
    for c in columns {
        let scale = c.norm();
        if scale == T::zero() {
            return None;
        }
        let w = project_out(&project_out(c, &out), &out);
        let norm = w.norm();
        if norm <= rel_tol * scale {
            return None;
        }
        out.push(w / norm);
    }
    Some(out)
}

/// Completes an orthonormal family to an orthonormal basis of R^n.
///
/// Candidates are the coordinate vectors e_1..e_n in order, projected off the
/// current family; the first ones with a non-negligible residual are kept.
pub fn complete_basis<T: Real>(family: &[DVector<T>], n: usize) -> Vec<DVector<T>> {
    let mut all: Vec<DVector<T>> = family.to_vec();
    let mut added = Vec::with_capacity(n - family.len());
    // Taking the largest residual among remaining candidates keeps the
    // completion well conditioned; ties resolve by index so it stays deterministic.
    let mut used = vec![false; n];
    while all.len() < n {
        let mut best: Option<(usize, DVector<T>, T)> = None;
        for (i, taken) in used.iter().enumerate() {
            if *taken {
                continue;
            }
            let w = project_out(&project_out(&unit(n, i), &all), &all);
            let norm = w.norm();
            if best.as_ref().is_none_or(|(_, _, b)| norm > *b) {
                best = Some((i, w, norm));
            }
        }
        let (i, w, norm) = best.expect("candidate available while basis incomplete");
        used[i] = true;
        let v = w / norm;
        all.push(v.clone());
        added.push(v);
    }
    added
}

/// Eigenvalues of a symmetric matrix in ascending order.
pub fn symmetric_eigenvalues<T: Real>(m: &DMatrix<T>) -> Vec<T> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let sym = (m + m.transpose()) * T::lit(0.5);
    let mut ev: Vec<T> = sym.symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    ev
}

/// Largest deviation of the Gram matrix of `vs` from the identity.
pub fn orthonormality_defect<T: Real>(vs: &[DVector<T>]) -> T {
    let mut worst = T::zero();
    for (i, a) in vs.iter().enumerate() {
        for (j, b) in vs.iter().enumerate() {
            let target = if i == j { T::one() } else { T::zero() };
            let d = (a.dot(b) - target).abs();
            if d > worst {
                worst = d;
            }
        }
    }
    worst
}

/// Matrix whose columns are the given vectors.
pub fn columns_to_matrix<T: Real>(n: usize, cols: &[DVector<T>]) -> DMatrix<T> {
    let mut m = DMatrix::zeros(n, cols.len());
    for (j, c) in cols.iter().enumerate() {
        m.set_column(j, c);
    }
    m
}

/// Haar-ish random orthogonal matrix: QR of a Gaussian matrix with sign fix.
pub fn random_orthogonal<T: Real, R: Rng + ?Sized>(n: usize, rng: &mut R) -> DMatrix<T> {
    let cols: Vec<DVector<T>> =
        (0..n).map(|_| DVector::from_fn(n, |_, _| T::lit(rng.sample::<f64, _>(StandardNormal)))).collect();
    let q = gram_schmidt(&cols, T::lit(1e-8)).unwrap_or_else(|| (0..n).map(|i| unit(n, i)).collect());
    columns_to_matrix(n, &q)
}

/// Random unit vector, uniformly distributed on the sphere.
pub fn random_unit<T: Real, R: Rng + ?Sized>(n: usize, rng: &mut R) -> DVector<T> {
    loop {
        let v: DVector<T> = DVector::from_fn(n, |_, _| T::lit(rng.sample::<f64, _>(StandardNormal)));
        let norm = v.norm();
        if norm > T::lit(1e-6) {
            return v / norm;
        }
    }
}
