//! Scenario registry and run configuration.
//!
//! A configuration is one JSON document (`fbstab-config/1`, see `docs/config.md`).
//! Scenarios name catalog entries for the domain, the conformal field and the
//! immersion; `build_scenario` turns them into sampled objects.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::catalog;
use crate::conformal::ConformalMetric;
use crate::domain::{BoundarySampler, LevelSetDomain};
use crate::error::{Error, Result};
use crate::flow::FlowConfig;
use crate::submanifold::{ParametricImmersion, Resolution, SampledImmersion};
use crate::variation::{check_certificate_dimensions, CertificateConfig, CurvatureSampler, Verdict};

pub const CONFIG_SCHEMA: &str = "fbstab-config/1";

/// Where an expected value comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Basis {
    /// Holds by construction (symmetry, identity case).
    Exact,
    /// Closed-form value computed by hand.
    ClosedForm,
    /// Independent numerical oracle.
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Quantity {
    /// Traced second variation over the constant fields, from the certificate.
    TracedTotal,
    TracedInterior,
    TracedBoundary,
    /// Left side of the integrated interior bound.
    BoundLhs,
    BoundRhs,
    Volume,
    BoundaryVolume,
    /// Pointwise `Σ_ℓ S̃(Ẽ_ℓ^⊥, Ẽ_ℓ^⊥)` at every interior sample.
    InteriorTrace,
    /// Pointwise `Σ_ℓ T̃(Ẽ_ℓ^⊥, Ẽ_ℓ^⊥)` at every boundary sample.
    BoundaryTrace,
    /// Largest boundary orthogonality defect.
    FreeBoundaryDefect,
    MarginG,
    MarginGTilde,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Expectation {
    Value {
        quantity: Quantity,
        value: f64,
        tol: f64,
        /// Compare `|got − value| ≤ tol·|value|`.
        #[serde(default)]
        relative: bool,
        basis: Basis,
    },
    /// `Σ_ℓ Q(E_ℓ^⊥) = −(n−k)·|∂Σ| = −k(n−k)·|Σ|` for flat balls, relative tolerance.
    BallIdentity { tol: f64, basis: Basis },
    Verdict {
        verdict: Verdict,
        /// Hypotheses that must be reported as failing.
        #[serde(default)]
        flagged: Vec<String>,
        basis: Basis,
    },
}

/// Flow run attached to a scenario; the immersion is the starting surface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSpec {
    #[serde(default)]
    pub config: FlowConfig,
    /// Whether the run is expected to reach the residual thresholds.
    pub converges: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub n: usize,
    pub k: usize,
    #[serde(default = "default_p")]
    pub p: usize,
    /// Domain catalog entry; scenarios without one skip every boundary check.
    #[serde(default)]
    pub domain: Option<String>,
    #[serde(default = "default_field")]
    pub field: String,
    pub immersion: String,
    #[serde(default)]
    pub resolution: Resolution,
    /// Σ is claimed free boundary minimal; the identities suite checks the residuals.
    #[serde(default)]
    pub minimal: bool,
    /// Run the instability certificate (needs `2 <= k <= min(n-2, n-p)`).
    #[serde(default)]
    pub certificate: bool,
    #[serde(default)]
    pub flow: Option<FlowSpec>,
    #[serde(default)]
    pub expected: Vec<Expectation>,
}

fn default_p() -> usize {
    2
}

fn default_field() -> String {
    "zero".into()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Pointwise agreement of two formulas for the same quantity.
    pub identity: f64,
    /// Pointwise trace-zero identity of the flat operator.
    pub trace: f64,
    /// Minimality and free-boundary residuals of scenarios declared minimal.
    pub residual: f64,
    /// Allowed violation of `rhs − lhs >= 0`.
    pub slack: f64,
    /// Slack on sign hypotheses.
    pub sign: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { identity: 1e-7, trace: 1e-8, residual: 1e-6, slack: 1e-6, sign: 1e-9 }
    }
}

/// Seeded batch of random polynomial graphs for the trace suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomGraphs {
    pub count: usize,
    pub n: Vec<usize>,
    pub k: Vec<usize>,
    pub degree: u32,
    #[serde(default = "random_graph_resolution")]
    pub resolution: Resolution,
}

fn random_graph_resolution() -> Resolution {
    Resolution { radial: 5, angular: 0, boundary_angular: None }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SuiteName {
    Identities,
    Traces,
    Bounds,
    Certificate,
    Flow,
}

impl SuiteName {
    pub const ALL: [SuiteName; 5] = [Self::Identities, Self::Traces, Self::Bounds, Self::Certificate, Self::Flow];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Identities => "identities",
            Self::Traces => "traces",
            Self::Bounds => "bounds",
            Self::Certificate => "certificate",
            Self::Flow => "flow",
        }
    }
}

impl std::str::FromStr for SuiteName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|n| n.as_str() == s).ok_or_else(|| {
            Error::Config(format!("unknown suite {s:?}; expected one of identities, traces, bounds, certificate, flow"))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub schema: String,
    #[serde(default)]
    pub seed: u64,
    /// Suites run by `verify` when none is named on the command line; empty means all.
    #[serde(default)]
    pub suites: Vec<SuiteName>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub curvature_points: Option<usize>,
    #[serde(default)]
    pub boundary_points: Option<usize>,
    #[serde(default)]
    pub random_graphs: Option<RandomGraphs>,
    #[serde(default)]
    pub scenarios: Vec<Scenario>,
}

/// The sampled objects behind a scenario.
#[derive(Debug, Clone)]
pub struct Built {
    pub domain: Option<LevelSetDomain<f64>>,
    pub metric: ConformalMetric<f64>,
    pub parametric: ParametricImmersion<f64>,
    pub immersion: SampledImmersion<f64>,
}

pub fn build_scenario(s: &Scenario) -> Result<Built> {
    s.check()?;
    let domain = s.domain.as_deref().map(|d| catalog::domain::<f64>(d, s.n)).transpose()?;
    let metric = ConformalMetric::new(catalog::field::<f64>(&s.field, s.n)?, s.n);
    let parametric = catalog::immersion::<f64>(&s.immersion, s.n, s.k, s.resolution)?;
    let immersion = parametric.sample()?;
    immersion.validate()?;
    Ok(Built { domain, metric, parametric, immersion })
}

impl Scenario {
    /// Dimension checks that do not need sampling.
    pub fn check(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(Error::Config("scenario without a name".into()));
        }
        if self.k == 0 || self.k >= self.n {
            return Err(Error::Dimension(format!(
                "{}: need 1 <= k <= n-1, got n = {}, k = {}",
                self.name, self.n, self.k
            )));
        }
        if self.certificate {
            check_certificate_dimensions(self.n, self.k, self.p)
                .map_err(|e| Error::Dimension(format!("{}: certificate mode: {e}", self.name)))?;
            if self.domain.is_none() {
                return Err(Error::Config(format!("{}: certificate mode needs a domain", self.name)));
            }
        }
        if self.flow.is_some() && self.domain.is_none() {
            return Err(Error::Config(format!("{}: flow runs need a domain", self.name)));
        }
        for e in &self.expected {
            if let Expectation::Value { tol, .. } | Expectation::BallIdentity { tol, .. } = e {
                if tol.is_nan() || *tol < 0.0 {
                    return Err(Error::Config(format!("{}: negative or NaN tolerance", self.name)));
                }
            }
        }
        Ok(())
    }

    /// Parses `template key=value …`; templates are `ball-disk`, `random-graph`, `tilted-disk`.
    ///
    /// `ball-disk n=4 k=2 u=radial-spherical` gives the equatorial disk of the unit ball.
    pub fn from_shorthand(text: &str) -> Result<Self> {
        let mut words = text.split_whitespace();
        let template = words.next().ok_or_else(|| Error::Config("empty scenario shorthand".into()))?;
        let mut n = None;
        let mut k = None;
        let mut u = "zero".to_string();
        let mut seed = 0u64;
        let mut degree = 2u32;
        let mut radius = "1".to_string();
        let mut angle = "80".to_string();
        let mut p = 2usize;
        for w in words {
            let (key, value) =
                w.split_once('=').ok_or_else(|| Error::Config(format!("expected key=value, got {w:?}")))?;
            let int = || value.parse::<usize>().map_err(|_| Error::Config(format!("{key}: bad integer {value:?}")));
            match key {
                "n" => n = Some(int()?),
                "k" => k = Some(int()?),
                "p" => p = int()?,
                "u" => u = value.to_string(),
                "seed" => seed = value.parse().map_err(|_| Error::Config(format!("seed: bad integer {value:?}")))?,
                "degree" => degree = int()? as u32,
                "r" => radius = value.to_string(),
                "angle" => angle = value.to_string(),
                _ => return Err(Error::Config(format!("unknown shorthand key {key:?}"))),
            }
        }
        let need =
            |v: Option<usize>, name: &str| v.ok_or_else(|| Error::Config(format!("{template}: missing {name}=")));
        let base = |name: String, n: usize, k: usize, domain: Option<String>, immersion: String| Scenario {
            name,
            n,
            k,
            p,
            domain,
            field: u.clone(),
            immersion,
            resolution: Resolution::default(),
            minimal: false,
            certificate: false,
            flow: None,
            expected: Vec::new(),
        };
        let s = match template {
            "ball-disk" => {
                let (n, k) = (need(n, "n")?, need(k, "k")?);
                let mut s = base(
                    format!("ball-disk-n{n}-k{k}-{u}"),
                    n,
                    k,
                    Some(format!("ball({radius})")),
                    format!("equatorial-disk({n},{k},{radius})"),
                );
                s.minimal = catalog::field::<f64>(&u, n).map(|f| f.is_radial()).unwrap_or(false);
                s
            }
            "random-graph" => {
                let (n, k) = (need(n, "n")?, need(k, "k")?);
                let mut s = base(
                    format!("random-graph-n{n}-k{k}-s{seed}"),
                    n,
                    k,
                    None,
                    format!("random-graph({seed},{degree})"),
                );
                s.resolution = random_graph_resolution();
                s
            }
            "tilted-disk" => {
                let n = n.unwrap_or(3);
                base(format!("tilted-disk-{angle}"), n, 2, Some("ball(1)".into()), format!("tilted-disk({angle})"))
            }
            _ => return Err(Error::UnknownCatalog(format!("scenario template {template:?}"))),
        };
        s.check()?;
        Ok(s)
    }
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: Config = serde_json::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != CONFIG_SCHEMA {
            return Err(Error::Config(format!("schema {:?}, expected {CONFIG_SCHEMA:?}", self.schema)));
        }
        let mut names: Vec<&str> = self.scenarios.iter().map(|s| s.name.as_str()).collect();
        names.sort_unstable();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Config(format!("duplicate scenario name {:?}", w[0])));
        }
        for s in &self.scenarios {
            s.check()?;
        }
        if let Some(r) = &self.random_graphs {
            if r.n.is_empty() || r.k.is_empty() {
                return Err(Error::Config("random_graphs needs at least one n and one k".into()));
            }
            if r.degree < 2 {
                return Err(Error::Config("random_graphs degree must be at least 2".into()));
            }
        }
        Ok(())
    }

    /// Explicit scenarios plus the generated random graphs, sorted by name.
    pub fn all_scenarios(&self) -> Result<Vec<Scenario>> {
        let mut out = self.scenarios.clone();
        if let Some(r) = &self.random_graphs {
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
            let pairs: Vec<(usize, usize)> =
                r.n.iter().flat_map(|&n| r.k.iter().filter(move |&&k| k < n).map(move |&k| (n, k))).collect();
            if pairs.is_empty() {
                return Err(Error::Config("random_graphs has no (n, k) pair with k < n".into()));
            }
            for i in 0..r.count {
                let (n, k) = pairs[i % pairs.len()];
                let seed: u64 = rng.gen();
                out.push(Scenario {
                    name: format!("random-graph-{i:04}"),
                    n,
                    k,
                    p: 2,
                    domain: None,
                    field: "zero".into(),
                    immersion: format!("random-graph({seed},{})", r.degree),
                    resolution: r.resolution,
                    minimal: false,
                    certificate: false,
                    flow: None,
                    expected: Vec::new(),
                });
            }
        }
        out.sort_by(|a, b| a.name.cmp(&b.name));
        Ok(out)
    }

    pub fn certificate_config(&self, p: usize) -> CertificateConfig {
        let defaults = CertificateConfig::default();
        CertificateConfig {
            p,
            sign_tol: self.tolerances.sign,
            curvature: CurvatureSampler {
                points: self.curvature_points.unwrap_or(defaults.curvature.points),
                seed: self.seed,
                ..defaults.curvature
            },
            boundary: BoundarySampler {
                count: self.boundary_points.unwrap_or(defaults.boundary.count),
                // Sobol scrambling seeds are 32-bit
                seed: self.seed as u32,
            },
            ..defaults
        }
    }

    pub fn find(&self, name: &str) -> Option<&Scenario> {
        self.scenarios.iter().find(|s| s.name == name)
    }
}

fn value(quantity: Quantity, value: f64, tol: f64, basis: Basis) -> Expectation {
    Expectation::Value { quantity, value, tol, relative: false, basis }
}

fn disk(name: &str, n: usize, k: usize, field: &str, radius: f64) -> Scenario {
    Scenario {
        name: name.into(),
        n,
        k,
        p: 2,
        domain: Some(format!("ball({radius})")),
        field: field.into(),
        immersion: format!("equatorial-disk({n},{k},{radius})"),
        resolution: Resolution::default(),
        minimal: true,
        certificate: false,
        flow: None,
        expected: Vec::new(),
    }
}

fn flow_start(name: &str, n: usize, field: &str, immersion: &str, converges: bool) -> Scenario {
    Scenario {
        name: name.into(),
        n,
        k: 2,
        p: 2,
        domain: Some("ball(1)".into()),
        field: field.into(),
        immersion: immersion.into(),
        resolution: Resolution { radial: 12, angular: 24, boundary_angular: None },
        minimal: false,
        certificate: false,
        flow: Some(FlowSpec { config: FlowConfig::default(), converges }),
        expected: Vec::new(),
    }
}

/// The configuration `verify` runs when no `--config` is given.
pub fn default_config(seed: u64) -> Config {
    let mut scenarios = Vec::new();
    for (n, k) in [(4, 2), (5, 2), (5, 3), (6, 3)] {
        let mut s = disk(&format!("flat-ball-disk-n{n}-k{k}"), n, k, "zero", 1.0);
        s.certificate = true;
        s.expected.push(Expectation::BallIdentity { tol: 1e-5, basis: Basis::ClosedForm });
        s.expected.push(Expectation::Verdict {
            verdict: Verdict::UnstableCertified,
            flagged: vec![],
            basis: Basis::ClosedForm,
        });
        scenarios.push(s);
    }
    scenarios[0].expected.push(value(Quantity::TracedTotal, -4.0 * PI, 1e-4, Basis::ClosedForm));

    let mut cap = disk("spherical-cap-b4-disk", 4, 2, "radial-spherical", 1.0);
    cap.certificate = true;
    cap.expected = vec![
        value(Quantity::Volume, 2.0 * PI, 1e-6, Basis::Oracle),
        value(Quantity::InteriorTrace, -4.0, 1e-8, Basis::ClosedForm),
        value(Quantity::BoundaryTrace, 0.0, 1e-7, Basis::ClosedForm),
        value(Quantity::BoundLhs, -8.0 * PI, 1e-4, Basis::Oracle),
        value(Quantity::BoundRhs, -4.0 * PI, 1e-7, Basis::ClosedForm),
        value(Quantity::TracedTotal, -8.0 * PI, 1e-4, Basis::Oracle),
        value(Quantity::MarginGTilde, 0.0, 1e-7, Basis::ClosedForm),
        Expectation::Verdict { verdict: Verdict::UnstableCertified, flagged: vec![], basis: Basis::Oracle },
    ];
    scenarios.push(cap);

    let mut hyper = disk("hyperbolic-b4-disk", 4, 2, "radial-hyperbolic", 0.5);
    hyper.certificate = true;
    hyper.expected = vec![Expectation::Verdict {
        verdict: Verdict::Inconclusive,
        flagged: vec!["sectional curvature of g̃ >= 0".into()],
        basis: Basis::ClosedForm,
    }];
    scenarios.push(hyper);

    scenarios.push(disk("radial-custom-b5-disk", 5, 2, "radial-custom(0,0.3,-0.1)", 1.0));

    let mut tilted = Scenario::from_shorthand("tilted-disk angle=80").expect("built-in shorthand");
    tilted.name = "tilted-disk-b3".into();
    tilted.field = "radial-spherical".into();
    tilted.expected.push(value(Quantity::FreeBoundaryDefect, 1.0 - 80f64.to_radians().sin(), 1e-10, Basis::ClosedForm));
    scenarios.push(tilted);

    scenarios.push(flow_start("flow-odd-disk-b3", 3, "zero", "odd-disk-graph(0.2)", true));
    scenarios.push(flow_start("flow-odd-disk-spherical-b4", 4, "radial-spherical", "odd-disk-graph(0.05)", true));
    // even perturbations excite the area-decreasing translation of the equatorial disk
    let mut even = flow_start("flow-even-disk-b3", 3, "zero", "disk-graph(0.2)", false);
    if let Some(f) = even.flow.as_mut() {
        f.config.max_iter = 400;
    }
    scenarios.push(even);

    Config {
        schema: CONFIG_SCHEMA.into(),
        seed,
        suites: Vec::new(),
        tolerances: Tolerances::default(),
        curvature_points: None,
        boundary_points: None,
        random_graphs: Some(RandomGraphs {
            count: 200,
            n: vec![4, 5, 6],
            k: vec![2, 3],
            degree: 3,
            resolution: random_graph_resolution(),
        }),
        scenarios,
    }
}
