//! Named constructors: `name(arg, …)` strings for fields, domains and immersions.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::conformal::{FieldKind, ScalarField};
use crate::domain::LevelSetDomain;
use crate::error::{Error, Result};
use crate::linalg::{random_orthogonal, unit};
use crate::poly::{monomial_exponents, Monomial, Polynomial};
use crate::scalar::Real;
use crate::submanifold::{ParametricImmersion, PolynomialMap, ReferenceChart, Resolution};

/// Splits `name(a, b, …)` into the name and trimmed arguments.
pub fn parse_call(spec: &str) -> Result<(String, Vec<String>)> {
    let spec = spec.trim();
    match spec.find('(') {
        None => Ok((spec.to_string(), Vec::new())),
        Some(open) => {
            if !spec.ends_with(')') {
                return Err(Error::Config(format!("unbalanced parentheses in {spec:?}")));
            }
            let name = spec[..open].trim().to_string();
            let inner = spec[open + 1..spec.len() - 1].trim();
            let args =
                if inner.is_empty() { Vec::new() } else { inner.split(',').map(|a| a.trim().to_string()).collect() };
            Ok((name, args))
        }
    }
}

fn number<T: Real>(spec: &str, arg: &str) -> Result<T> {
    arg.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .map(T::lit)
        .ok_or_else(|| Error::Config(format!("{spec}: cannot parse number {arg:?}")))
}

fn integer(spec: &str, arg: &str) -> Result<u64> {
    arg.parse::<u64>().map_err(|_| Error::Config(format!("{spec}: cannot parse integer {arg:?}")))
}

fn arity(spec: &str, args: &[String], allowed: std::ops::RangeInclusive<usize>) -> Result<()> {
    if !allowed.contains(&args.len()) {
        return Err(Error::Config(format!("{spec}: expected {allowed:?} arguments, got {}", args.len())));
    }
    Ok(())
}

/// Polynomial in the compact form `coef:e1.e2.…;coef:…` (an empty exponent list is a constant).
pub fn parse_polynomial<T: Real>(text: &str, vars: usize) -> Result<Polynomial<T>> {
    let mut terms = Vec::new();
    for part in text.split(';').map(str::trim).filter(|p| !p.is_empty()) {
        let (coef, powers) = part.split_once(':').unwrap_or((part, ""));
        let coef = number::<T>(text, coef.trim())?;
        let mut exps: Vec<u32> = powers
            .split('.')
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .map(|p| p.parse::<u32>().map_err(|_| Error::Config(format!("bad exponent {p:?} in {text:?}"))))
            .collect::<Result<_>>()?;
        if exps.len() > vars {
            return Err(Error::Dimension(format!("monomial {part:?} has more than {vars} exponents")));
        }
        exps.resize(vars, 0);
        terms.push(Monomial { coef, powers: exps });
    }
    Ok(Polynomial::new(terms))
}

/// Field catalog: `zero`, `linear(a…)`, `radial-spherical`, `radial-hyperbolic`,
/// `radial-custom(c0, c1, …)` (polynomial in |x|²), `polynomial(terms)`.
pub fn field<T: Real>(spec: &str, n: usize) -> Result<ScalarField<T>> {
    let (name, args) = parse_call(spec)?;
    let kind = match name.as_str() {
        "zero" => FieldKind::Zero,
        "radial-spherical" => FieldKind::RadialSpherical,
        "radial-hyperbolic" => FieldKind::RadialHyperbolic,
        "linear" => {
            if args.len() != n {
                return Err(Error::Dimension(format!("{spec}: linear field needs {n} coefficients")));
            }
            FieldKind::Linear(args.iter().map(|a| number(spec, a)).collect::<Result<_>>()?)
        }
        "radial-custom" => {
            arity(spec, &args, 1..=16)?;
            FieldKind::RadialCustom(args.iter().map(|a| number(spec, a)).collect::<Result<_>>()?)
        }
        "polynomial" => {
            arity(spec, &args, 1..=1)?;
            FieldKind::Polynomial(parse_polynomial(&args[0], n)?)
        }
        _ => return Err(Error::UnknownCatalog(format!("field {name:?}"))),
    };
    Ok(ScalarField::new(kind))
}

/// Domain catalog: `ball(r)`, `ellipsoid(a, b, …)`, `superellipsoid(m)`.
pub fn domain<T: Real>(spec: &str, n: usize) -> Result<LevelSetDomain<T>> {
    let (name, args) = parse_call(spec)?;
    match name.as_str() {
        "ball" => {
            arity(spec, &args, 0..=1)?;
            let r = if args.is_empty() { T::one() } else { number(spec, &args[0])? };
            LevelSetDomain::ball(n, r)
        }
        "ellipsoid" => {
            if args.len() != n {
                return Err(Error::Dimension(format!("{spec}: ellipsoid in R^{n} needs {n} semi-axes")));
            }
            LevelSetDomain::ellipsoid(&args.iter().map(|a| number(spec, a)).collect::<Result<Vec<T>>>()?)
        }
        "superellipsoid" => {
            arity(spec, &args, 1..=1)?;
            LevelSetDomain::superellipsoid(n, integer(spec, &args[0])? as u32)
        }
        _ => Err(Error::UnknownCatalog(format!("domain {name:?}"))),
    }
}

fn graph_map<T: Real>(
    n: usize,
    k: usize,
    heights: &[Polynomial<T>],
    frame: Option<&nalgebra::DMatrix<T>>,
) -> PolynomialMap<T> {
    let mut map = PolynomialMap::new(n, k);
    let push = |map: &mut PolynomialMap<T>, powers: &[u32], v: DVector<T>| {
        let v = match frame {
            Some(q) => q * v,
            None => v,
        };
        map.add(powers, &v);
    };
    for a in 0..k {
        let mut p = vec![0; k];
        p[a] = 1;
        push(&mut map, &p, unit(n, a));
    }
    for (j, h) in heights.iter().enumerate() {
        for m in &h.terms {
            push(&mut map, &m.powers, unit::<T>(n, k + j) * m.coef);
        }
    }
    map
}

/// Immersion catalog: `equatorial-disk(n, k, radius)`, `paraboloid-cap(curvature[, radius])`,
/// `tilted-disk(angle_deg)`, `graph(h_1|h_2|…)`, `random-graph(seed, degree)`,
/// and the flow starts `disk-graph(a)` (`a(1−r²)` along `e_{k+1}`) and
/// `bump-disk(a)` (`4a r²(1−r²)` along `e_{k+1}`).
pub fn immersion<T: Real>(spec: &str, n: usize, k: usize, resolution: Resolution) -> Result<ParametricImmersion<T>> {
    let (name, args) = parse_call(spec)?;
    if k == 0 || k >= n {
        return Err(Error::Dimension(format!("need 1 <= k <= n-1, got n = {n}, k = {k}")));
    }
    let need = |nn: usize, kk: usize| -> Result<()> {
        if (nn, kk) != (n, k) {
            return Err(Error::Dimension(format!(
                "{spec} has (n, k) = ({nn}, {kk}) but the scenario declares ({n}, {k})"
            )));
        }
        Ok(())
    };
    let disk = |radius: T| ReferenceChart::PolarDisk { radius };
    let columns = |kk: usize| (0..kk).map(|a| unit::<T>(n, a)).collect::<Vec<_>>();
    match name.as_str() {
        "equatorial-disk" => {
            arity(spec, &args, 2..=3)?;
            need(integer(spec, &args[0])? as usize, integer(spec, &args[1])? as usize)?;
            let r = if args.len() == 3 { number(spec, &args[2])? } else { T::one() };
            ParametricImmersion::new(PolynomialMap::affine(&DVector::zeros(n), &columns(k)), disk(r), resolution)
        }
        "paraboloid-cap" => {
            arity(spec, &args, 1..=2)?;
            need(3, 2)?;
            let kappa: T = number(spec, &args[0])?;
            let r = if args.len() == 2 { number(spec, &args[1])? } else { T::lit(0.5) };
            let h = Polynomial::default().term(kappa * T::lit(0.5), &[2, 0]).term(kappa * T::lit(0.5), &[0, 2]);
            ParametricImmersion::new(graph_map(n, k, &[h], None), disk(r), resolution)
        }
        "tilted-disk" => {
            arity(spec, &args, 1..=1)?;
            if k != 2 || n < 3 {
                return Err(Error::Dimension(format!("{spec} is a 2-disk in R^n with n >= 3")));
            }
            let angle: T = number::<T>(spec, &args[0])? * T::lit(std::f64::consts::PI / 180.0);
            // plane normal tilted from e_3 towards e_2; the disk meets the unit sphere at `angle`
            let tilt = T::lit(std::f64::consts::FRAC_PI_2) - angle;
            let m = unit::<T>(n, 1) * (-tilt.sin()) + unit::<T>(n, 2) * tilt.cos();
            let a2 = unit::<T>(n, 1) * tilt.cos() + unit::<T>(n, 2) * tilt.sin();
            let (d, rho) = (angle.cos(), angle.sin());
            let map = PolynomialMap::affine(&(m * d), &[unit::<T>(n, 0) * rho, a2 * rho]);
            ParametricImmersion::new(map, disk(T::one()), resolution)
        }
        "graph" => {
            arity(spec, &args, 1..=1)?;
            let heights: Vec<Polynomial<T>> =
                args[0].split('|').map(|h| parse_polynomial(h, k)).collect::<Result<_>>()?;
            if heights.len() > n - k {
                return Err(Error::Dimension(format!("{spec}: at most {} height functions", n - k)));
            }
            ParametricImmersion::new(graph_map(n, k, &heights, None), disk(T::lit(0.5)), resolution)
        }
        "random-graph" => {
            arity(spec, &args, 2..=2)?;
            let seed = integer(spec, &args[0])?;
            let degree = integer(spec, &args[1])? as u32;
            if degree < 2 {
                return Err(Error::Config(format!("{spec}: degree must be at least 2")));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let exps: Vec<Vec<u32>> =
                monomial_exponents(k, degree).into_iter().filter(|e| e.iter().sum::<u32>() >= 2).collect();
            let heights: Vec<Polynomial<T>> = (0..n - k)
                .map(|_| {
                    Polynomial::new(
                        exps.iter()
                            .map(|e| {
                                let c: f64 = StandardNormal.sample(&mut rng);
                                Monomial { coef: T::lit(0.4 * c), powers: e.clone() }
                            })
                            .collect(),
                    )
                })
                .collect();
            let q = random_orthogonal::<T, _>(n, &mut rng);
            ParametricImmersion::new(
                graph_map(n, k, &heights, Some(&q)),
                ReferenceChart::Cube { half_width: T::lit(0.5) },
                resolution,
            )
        }
        "disk-graph" | "bump-disk" | "odd-disk-graph" => {
            arity(spec, &args, 1..=1)?;
            if k != 2 {
                return Err(Error::Dimension(format!("{spec} is a 2-disk")));
            }
            let a: T = number(spec, &args[0])?;
            let h = if name == "disk-graph" {
                Polynomial::default().term(a, &[0, 0]).term(-a, &[2, 0]).term(-a, &[0, 2])
            } else if name == "odd-disk-graph" {
                // a x (1 - r^2), odd under the antipodal map
                Polynomial::default().term(a, &[1, 0]).term(-a, &[3, 0]).term(-a, &[1, 2])
            } else {
                let c = a * T::lit(4.0);
                Polynomial::default()
                    .term(c, &[2, 0])
                    .term(c, &[0, 2])
                    .term(-c, &[4, 0])
                    .term(-c * T::lit(2.0), &[2, 2])
                    .term(-c, &[0, 4])
            };
            ParametricImmersion::new(graph_map(n, k, &[h], None), disk(T::one()), resolution)
        }
        _ => Err(Error::UnknownCatalog(format!("immersion {name:?}"))),
    }
}
