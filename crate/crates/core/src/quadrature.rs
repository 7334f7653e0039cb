//! Gauss–Legendre rules and deterministic reductions.

use crate::scalar::Real;

/// Gauss–Legendre nodes and weights on [-1, 1], nodes in ascending order.
///
/// Nodes come from Newton iteration on the Legendre recurrence in `f64`,
/// then are rounded to the target scalar.
pub fn gauss_legendre<T: Real>(count: usize) -> (Vec<T>, Vec<T>) {
    assert!(count > 0, "Gauss–Legendre rule needs at least one node");
    let n = count;
    let mut nodes = vec![0.0f64; n];
    let mut weights = vec![0.0f64; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes.into_iter().map(T::lit).collect(), weights.into_iter().map(T::lit).collect())
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for j in 2..=n {
        let jf = j as f64;
        let p2 = ((2.0 * jf - 1.0) * x * p1 - (jf - 1.0) * p0) / jf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Gauss–Legendre rule mapped to [a, b].
pub fn gauss_legendre_on<T: Real>(count: usize, a: T, b: T) -> (Vec<T>, Vec<T>) {
    let (x, w) = gauss_legendre::<T>(count);
    let half = (b - a) * T::lit(0.5);
    let mid = (a + b) * T::lit(0.5);
    (x.into_iter().map(|t| mid + half * t).collect(), w.into_iter().map(|t| t * half).collect())
}

/// Coordinate `dimension` of point `index` of a scrambled Sobol sequence in [0, 1).
/// The generator takes at most 2^16 indices per seed, so each further block
/// of 2^16 points is scrambled with a derived seed.
pub fn sobol(index: u32, dimension: u32, seed: u32) -> f64 {
    let block = index >> 16;
    sobol_burley::sample(index & 0xFFFF, dimension, seed.wrapping_add(block.wrapping_mul(0x9E37_79B9))) as f64
}

/// Pairwise summation in the given order; the result depends only on the
/// sequence, never on thread scheduling.
pub fn ordered_sum<T: Real>(values: &[T]) -> T {
    const LEAF: usize = 16;
    if values.len() <= LEAF {
        return values.iter().fold(T::zero(), |acc, &v| acc + v);
    }
    let mid = values.len() / 2;
    ordered_sum(&values[..mid]) + ordered_sum(&values[mid..])
}

/// Ordered maximum that propagates NaN instead of silently dropping it.
pub fn ordered_max<T: Real>(values: &[T]) -> Option<(usize, T)> {
    let mut best: Option<(usize, T)> = None;
    for (i, &v) in values.iter().enumerate() {
        if v.as_f64().is_nan() {
            return Some((i, v));
        }
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best
}
