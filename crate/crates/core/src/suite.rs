//! Suite execution: every scenario is built once, each requested suite adds
//! checks, and a failing or erroring check never stops the run.

use nalgebra::DVector;
use rayon::prelude::*;

use crate::domain::p_convexity_margin;
use crate::error::{Error, Result};
use crate::flow::{run_flow, FlowOutcome, VOLUME_SLACK};
use crate::report::{Check, Region, SampleRef, SuiteResult};
use crate::scenario::{build_scenario, Built, Config, Expectation, Quantity, Scenario, SuiteName, Tolerances};
use crate::submanifold::{
    boundary_geometry, boundary_volume, check_free_boundary, check_minimality, conformal_sff, conformal_sff_direct,
    free_boundary_defect, volume,
};
use crate::variation::{
    canonical_basis, instability_certificate, interior_bound, projected_constant_boundary, projected_constant_field,
    s_direct, s_tilde_lemma, sample_sectional_curvature, sample_traces, second_variation, t_direct, t_tilde_lemma,
    NormalField, ResidualTolerances, StabilityReport, Verdict,
};

/// Runs `suites` (all of them when empty) over every scenario of `config`.
pub fn run_suite(config: &Config, suites: &[SuiteName]) -> Result<SuiteResult> {
    let suites: Vec<SuiteName> = if suites.is_empty() {
        if config.suites.is_empty() {
            SuiteName::ALL.to_vec()
        } else {
            config.suites.clone()
        }
    } else {
        suites.to_vec()
    };
    let scenarios = config.all_scenarios()?;
    let checks: Vec<Check> = scenarios.par_iter().flat_map_iter(|s| run_scenario(config, s, &suites)).collect();
    Ok(SuiteResult::new(config.seed, suites, checks))
}

fn applies(s: &Scenario, suite: SuiteName) -> bool {
    match suite {
        SuiteName::Identities | SuiteName::Traces => true,
        SuiteName::Bounds => s.domain.is_some() && s.k >= 2 && s.k + 2 <= s.n,
        SuiteName::Certificate => s.certificate,
        SuiteName::Flow => s.flow.is_some(),
    }
}

fn suite_of(e: &Expectation) -> SuiteName {
    match e {
        Expectation::Value { quantity, .. } => match quantity {
            Quantity::Volume | Quantity::BoundaryVolume | Quantity::FreeBoundaryDefect => SuiteName::Identities,
            Quantity::InteriorTrace | Quantity::BoundaryTrace => SuiteName::Traces,
            Quantity::BoundLhs | Quantity::BoundRhs | Quantity::MarginG | Quantity::MarginGTilde => SuiteName::Bounds,
            Quantity::TracedTotal | Quantity::TracedInterior | Quantity::TracedBoundary => SuiteName::Certificate,
        },
        Expectation::BallIdentity { .. } => SuiteName::Bounds,
        Expectation::Verdict { .. } => SuiteName::Certificate,
    }
}

pub fn run_scenario(config: &Config, s: &Scenario, suites: &[SuiteName]) -> Vec<Check> {
    let active: Vec<SuiteName> = suites.iter().copied().filter(|&x| applies(s, x)).collect();
    if active.is_empty() {
        return Vec::new();
    }
    let built = match build_scenario(s) {
        Ok(b) => b,
        Err(e) => return vec![Check::error(&s.name, active[0], "build", &e)],
    };
    let mut out = Vec::new();
    let mut cert: Option<StabilityReport> = None;
    for suite in active {
        let mut ctx = Ctx { s, b: &built, tol: config.tolerances, suite, out: &mut out };
        match suite {
            SuiteName::Identities => identities(&mut ctx),
            SuiteName::Traces => traces(&mut ctx),
            SuiteName::Bounds => bounds(&mut ctx, config),
            SuiteName::Certificate => cert = certificate(&mut ctx, config),
            SuiteName::Flow => flow(&mut ctx),
        }
        for e in s.expected.iter().filter(|e| suite_of(e) == suite) {
            let c = expectation(&ctx, config, e, cert.as_ref());
            ctx.out.push(c);
        }
    }
    out
}

struct Ctx<'a> {
    s: &'a Scenario,
    b: &'a Built,
    tol: Tolerances,
    suite: SuiteName,
    out: &'a mut Vec<Check>,
}

impl Ctx<'_> {
    fn check(&self, name: &str) -> Check {
        Check::new(&self.s.name, self.suite, name)
    }

    fn push_result(&mut self, name: &str, r: Result<Check>) {
        let c = r.unwrap_or_else(|e| Check::error(&self.s.name, self.suite, name, &e));
        self.out.push(c);
    }

    fn sample(&self, region: Region, index: usize) -> SampleRef {
        let point = match region {
            Region::Interior => &self.b.immersion.interior[index].point,
            _ => &self.b.immersion.boundary[index].point,
        };
        SampleRef { region, index: Some(index), point: point.iter().copied().collect() }
    }

    /// `max_i values[i] <= tol`, reporting the worst sample. NaN never passes.
    fn max_check(&self, name: &str, region: Region, values: &[f64], tol: f64, detail: String) -> Check {
        let mut c = self.check(name);
        c.tolerance = Some(tol);
        c.detail = detail;
        let worst = values.iter().enumerate().fold(None::<(usize, f64)>, |acc, (i, &v)| match acc {
            Some((_, w)) if !(v > w || v.is_nan()) || w.is_nan() => acc,
            _ => Some((i, v)),
        });
        match worst {
            Some((i, v)) => {
                c.value = Some(v);
                c.pass = v <= tol;
                c.worst = Some(self.sample(region, i));
            }
            None => {
                c.pass = true;
                c.value = Some(0.0);
                c.detail = "no samples".into();
            }
        }
        c
    }
}

fn identities(ctx: &mut Ctx) {
    let (imm, metric) = (&ctx.b.immersion, &ctx.b.metric);
    let forms = match imm.interior_forms(metric) {
        Ok(f) => f,
        Err(e) => {
            ctx.out.push(Check::error(&ctx.s.name, ctx.suite, "fundamental-forms", &e));
            return;
        }
    };
    let sff: Vec<f64> = forms
        .iter()
        .map(|f| conformal_sff(f).iter().zip(conformal_sff_direct(f)).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max))
        .collect();
    let c = ctx.max_check("conformal-sff", Region::Interior, &sff, ctx.tol.trace, String::new());
    ctx.out.push(c);

    // S_direct = S_lemma + 2X(u)<H − k∇^⊥u, X> holds without minimality
    let basis = canonical_basis::<f64>(imm.n);
    let k = imm.k as f64;
    let interior: Result<Vec<f64>> = forms
        .par_iter()
        .map(|f| {
            let defect = &f.mean - f.grad_u_normal() * k;
            let mut worst = 0.0f64;
            for e in &basis {
                let x = projected_constant_field(e, f);
                let lemma = s_tilde_lemma(f, &x)? + 2.0 * f.jet.d(&x.value) * defect.dot(&x.value);
                let direct = s_direct(f, &f.jet, &x)?;
                worst = worst.max((lemma - direct).abs() / direct.abs().max(1.0));
            }
            Ok(worst)
        })
        .collect();
    match interior {
        Ok(v) => {
            let c = ctx.max_check(
                "interior-lemma",
                Region::Interior,
                &v,
                ctx.tol.identity,
                "relative to max(1, |S|)".into(),
            );
            ctx.out.push(c);
        }
        Err(e) => ctx.out.push(Check::error(&ctx.s.name, ctx.suite, "interior-lemma", &e)),
    }

    if let Some(domain) = &ctx.b.domain {
        let mut skipped = 0usize;
        let boundary: Result<Vec<f64>> = imm
            .boundary
            .iter()
            .map(|b| {
                let g = boundary_geometry(b, metric)?;
                let mut worst = 0.0f64;
                for e in &basis {
                    let x = projected_constant_boundary(e, &g);
                    match (t_tilde_lemma(b, &x, &g.jet, domain), t_direct(b, &x, &g.jet, domain)) {
                        (Ok(l), Ok(d)) => worst = worst.max((l - d).abs() / d.abs().max(1.0)),
                        (Err(Error::Precondition(_)), _) | (_, Err(Error::Precondition(_))) => skipped += 1,
                        (Err(e), _) | (_, Err(e)) => return Err(e),
                    }
                }
                Ok(worst)
            })
            .collect();
        match boundary {
            Ok(v) => {
                let detail =
                    if skipped > 0 { format!("{skipped} pairs not tangent to ∂Ω skipped") } else { String::new() };
                let c = ctx.max_check("boundary-lemma", Region::Boundary, &v, ctx.tol.identity, detail);
                ctx.out.push(c);
            }
            Err(e) => ctx.out.push(Check::error(&ctx.s.name, ctx.suite, "boundary-lemma", &e)),
        }
    }

    if ctx.s.minimal {
        let tol = ctx.tol.residual;
        let r = check_minimality(imm, metric, tol).map(|r| {
            let mut c = ctx.check("minimality");
            c.pass = r.pass;
            c.value = Some(r.max_residual);
            c.tolerance = Some(tol);
            c.worst = r.worst_sample.map(|i| ctx.sample(Region::Interior, i));
            c
        });
        ctx.push_result("minimality", r);
        if let Some(domain) = &ctx.b.domain {
            let r = check_free_boundary(imm, domain, tol).map(|r| {
                let mut c = ctx.check("free-boundary");
                c.pass = r.pass;
                c.value = Some(r.max_residual);
                c.tolerance = Some(tol);
                c.worst = r.worst_sample.map(|i| ctx.sample(Region::Boundary, i));
                c
            });
            ctx.push_result("free-boundary", r);
        }
    }
}

fn traces(ctx: &mut Ctx) {
    let t = match sample_traces(&ctx.b.immersion, &ctx.b.metric, ctx.b.domain.as_ref()) {
        Ok(t) => t,
        Err(e) => {
            ctx.out.push(Check::error(&ctx.s.name, ctx.suite, "sample-traces", &e));
            return;
        }
    };
    let abs: Vec<f64> = t.trace_s_euclid.iter().map(|v| v.abs()).collect();
    let c = ctx.max_check("trace-zero", Region::Interior, &abs, ctx.tol.trace, String::new());
    ctx.out.push(c);
    let c = ctx.max_check(
        "interior-trace-identity",
        Region::Interior,
        &t.trace_s_tilde_residual,
        ctx.tol.identity,
        String::new(),
    );
    ctx.out.push(c);
    if ctx.b.domain.is_some() {
        let c = ctx.max_check(
            "boundary-trace-identity",
            Region::Boundary,
            &t.trace_t_tilde_residual,
            ctx.tol.identity,
            String::new(),
        );
        ctx.out.push(c);
    }
}

fn bounds(ctx: &mut Ctx, config: &Config) {
    let Some(domain) = &ctx.b.domain else { return };
    let bound = match interior_bound(&ctx.b.immersion, &ctx.b.metric) {
        Ok(b) => b,
        Err(e) => {
            ctx.out.push(Check::error(&ctx.s.name, ctx.suite, "slack", &e));
            return;
        }
    };
    let sampler = config.certificate_config(ctx.s.p).curvature;
    match sample_sectional_curvature(domain, &ctx.b.metric, &sampler) {
        // the bound is only claimed where the sectional curvature is nonnegative
        Ok(k) if k.min >= -ctx.tol.sign => {
            let mut c = ctx.check("slack");
            c.value = Some(bound.slack);
            c.expected = Some(0.0);
            c.tolerance = Some(ctx.tol.slack);
            c.pass = bound.slack >= -ctx.tol.slack;
            c.detail = format!("lhs = {:e}, rhs = {:e}", bound.lhs, bound.rhs);
            ctx.out.push(c);
        }
        Ok(_) => {}
        Err(e) => ctx.out.push(Check::error(&ctx.s.name, ctx.suite, "curvature-sample", &e)),
    }
}

fn certificate(ctx: &mut Ctx, config: &Config) -> Option<StabilityReport> {
    let domain = ctx.b.domain.as_ref()?;
    let cfg = config.certificate_config(ctx.s.p);
    match instability_certificate(&ctx.b.immersion, &ctx.b.metric, domain, &cfg) {
        Ok(r) => {
            let mut c = ctx.check("certificate");
            c.pass = true;
            c.value = Some(r.traced_total);
            let failing: Vec<&str> = r.hypotheses.iter().filter(|h| !h.pass).map(|h| h.name.as_str()).collect();
            c.detail = if failing.is_empty() {
                format!("verdict {}", verdict_name(r.verdict))
            } else {
                format!("verdict {}; failing: {}", verdict_name(r.verdict), failing.join(", "))
            };
            ctx.out.push(c);
            Some(r)
        }
        Err(e) => {
            ctx.out.push(Check::error(&ctx.s.name, ctx.suite, "certificate", &e));
            None
        }
    }
}

fn flow(ctx: &mut Ctx) {
    let (Some(spec), Some(domain)) = (&ctx.s.flow, &ctx.b.domain) else { return };
    let mut c = ctx.check("converges");
    c.tolerance = Some(spec.config.tol);
    match run_flow(&ctx.b.parametric, &ctx.b.metric, domain, &spec.config) {
        Ok((state, outcome)) => {
            let last = state.history.last().copied();
            c.value = last.map(|r| r.h_max);
            c.pass = outcome.converged() == spec.converges;
            c.detail = format!(
                "{} (expected {}) after {} iterations; defect {:e}",
                outcome_text(&outcome),
                if spec.converges { "convergence" } else { "no convergence" },
                state.iteration,
                last.map_or(f64::NAN, |r| r.defect)
            );
            ctx.out.push(c);
            let rises: Vec<f64> = state.history.windows(2).map(|w| w[1].volume - w[0].volume).collect();
            let mut v = ctx.check("volume-monotone");
            v.tolerance = Some(VOLUME_SLACK);
            v.value = Some(rises.iter().copied().fold(f64::NEG_INFINITY, f64::max).max(0.0));
            v.pass = rises.iter().all(|r| *r <= VOLUME_SLACK);
            v.detail = format!("largest volume change over {} accepted steps", rises.len());
            ctx.out.push(v);
        }
        Err(e) => ctx.out.push(Check::error(&ctx.s.name, ctx.suite, "converges", &e)),
    }
}

fn outcome_text(o: &FlowOutcome) -> String {
    match o {
        FlowOutcome::Converged => "converged".into(),
        FlowOutcome::IterationLimit => "iteration limit".into(),
        FlowOutcome::Stalled => "stalled".into(),
        FlowOutcome::StepFailure(r) => format!("step failure: {r}"),
    }
}

fn scalar_quantity(
    ctx: &Ctx,
    config: &Config,
    q: Quantity,
    cert: Option<&StabilityReport>,
) -> Result<(f64, Option<SampleRef>)> {
    let (imm, metric) = (&ctx.b.immersion, &ctx.b.metric);
    let need_cert = || cert.ok_or_else(|| Error::Config("certificate unavailable for this scenario".into()));
    let need_domain = || ctx.b.domain.as_ref().ok_or_else(|| Error::Config("scenario has no domain".into()));
    Ok(match q {
        Quantity::Volume => (volume(imm, metric)?, None),
        Quantity::BoundaryVolume => (boundary_volume(imm, metric)?, None),
        Quantity::FreeBoundaryDefect => {
            let d = need_domain()?;
            let vals: Vec<f64> = imm.boundary.iter().map(|b| free_boundary_defect(b, d)).collect::<Result<_>>()?;
            let (i, v) =
                vals.iter()
                    .copied()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |a, (i, v)| if v > a.1 { (i, v) } else { a });
            (v, Some(ctx.sample(Region::Boundary, i)))
        }
        Quantity::BoundLhs => (interior_bound(imm, metric)?.lhs, None),
        Quantity::BoundRhs => (interior_bound(imm, metric)?.rhs, None),
        Quantity::MarginG | Quantity::MarginGTilde => {
            let r = p_convexity_margin(need_domain()?, metric, ctx.s.p, &config.certificate_config(ctx.s.p).boundary)?;
            if q == Quantity::MarginG {
                (r.margin_g, Some(SampleRef { region: Region::Ambient, index: None, point: r.worst_point }))
            } else {
                (r.margin_g_tilde, Some(SampleRef { region: Region::Ambient, index: None, point: r.worst_point_tilde }))
            }
        }
        Quantity::TracedTotal => (need_cert()?.traced_total, None),
        Quantity::TracedInterior => (need_cert()?.traced_interior, None),
        Quantity::TracedBoundary => (need_cert()?.traced_boundary, None),
        Quantity::InteriorTrace | Quantity::BoundaryTrace => {
            unreachable!("pointwise quantities are handled separately")
        }
    })
}

fn expectation(ctx: &Ctx, config: &Config, e: &Expectation, cert: Option<&StabilityReport>) -> Check {
    match e {
        Expectation::Value { quantity, value, tol, relative, basis } => {
            let name =
                serde_json::to_value(quantity).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
            let mut c = ctx.check(&name);
            c.expected = Some(*value);
            c.tolerance = Some(*tol);
            c.basis = Some(*basis);
            let scale = if *relative { value.abs() } else { 1.0 };
            match quantity {
                Quantity::InteriorTrace | Quantity::BoundaryTrace => {
                    let interior = *quantity == Quantity::InteriorTrace;
                    match sample_traces(&ctx.b.immersion, &ctx.b.metric, ctx.b.domain.as_ref()) {
                        Ok(t) => {
                            let vals = if interior { &t.trace_s_tilde } else { &t.trace_t_tilde };
                            let region = if interior { Region::Interior } else { Region::Boundary };
                            let dev: Vec<f64> = vals.iter().map(|v| (v - value).abs()).collect();
                            let m =
                                ctx.max_check(&name, region, &dev, tol * scale, "largest pointwise deviation".into());
                            c.pass = m.pass && !vals.is_empty();
                            c.value = m.worst.as_ref().and_then(|w| w.index).map(|i| vals[i]);
                            c.worst = m.worst;
                            c.detail = format!(
                                "largest deviation {:e} over {} samples",
                                m.value.unwrap_or(f64::NAN),
                                vals.len()
                            );
                        }
                        Err(err) => return Check::error(&ctx.s.name, ctx.suite, name, &err),
                    }
                }
                q => match scalar_quantity(ctx, config, *q, cert) {
                    Ok((v, worst)) => {
                        c.value = Some(v);
                        c.pass = (v - value).abs() <= tol * scale;
                        c.worst = worst;
                    }
                    Err(err) => return Check::error(&ctx.s.name, ctx.suite, name, &err),
                },
            }
            c
        }
        Expectation::BallIdentity { tol, basis } => {
            let mut c = ctx.check("ball-identity");
            c.tolerance = Some(*tol);
            c.basis = Some(*basis);
            match ball_identity(ctx) {
                Ok((q, from_boundary, from_volume)) => {
                    let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(f64::MIN_POSITIVE);
                    c.value = Some(q);
                    c.expected = Some(from_boundary);
                    c.pass = rel(q, from_boundary) <= *tol && rel(q, from_volume) <= *tol;
                    c.detail = format!("-(n-k)|∂Σ| = {from_boundary:e}, -k(n-k)|Σ| = {from_volume:e}");
                }
                Err(err) => return Check::error(&ctx.s.name, ctx.suite, "ball-identity", &err),
            }
            c
        }
        Expectation::Verdict { verdict, flagged, basis } => {
            let mut c = ctx.check("verdict");
            c.basis = Some(*basis);
            let Some(r) = cert else {
                c.detail = "certificate unavailable".into();
                return c;
            };
            let missing: Vec<&str> = flagged
                .iter()
                .filter(|f| !r.hypotheses.iter().any(|h| &h.name == *f && !h.pass))
                .map(String::as_str)
                .collect();
            c.pass = r.verdict == *verdict && missing.is_empty();
            c.detail = format!("got {}, expected {}", verdict_name(r.verdict), verdict_name(*verdict));
            if !missing.is_empty() {
                c.detail += &format!("; not flagged: {}", missing.join(", "));
            }
            c
        }
    }
}

fn verdict_name(v: Verdict) -> &'static str {
    match v {
        Verdict::UnstableCertified => "unstable-certified",
        Verdict::Inconclusive => "inconclusive",
    }
}

/// `Σ_ℓ Q(E_ℓ^⊥)`, `−(n−k)|∂Σ|` and `−k(n−k)|Σ|`.
fn ball_identity(ctx: &Ctx) -> Result<(f64, f64, f64)> {
    let (imm, metric) = (&ctx.b.immersion, &ctx.b.metric);
    let domain = ctx.b.domain.as_ref().ok_or_else(|| Error::Config("scenario has no domain".into()))?;
    let forms = imm.interior_forms(metric)?;
    let geoms = imm.boundary_geometries(metric)?;
    let mut total = 0.0;
    for l in 0..imm.n {
        let e: DVector<f64> = crate::linalg::unit(imm.n, l);
        let field = NormalField::projected_constant(&e, &forms, &geoms);
        total += second_variation(imm, metric, domain, &field, ResidualTolerances::default())?.value;
    }
    let (n, k) = (imm.n as f64, imm.k as f64);
    Ok((total, -(n - k) * boundary_volume(imm, metric)?, -k * (n - k) * volume(imm, metric)?))
}
