use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fbstab::catalog;
use fbstab::conformal::ConformalMetric;
use fbstab::domain::{p_convexity_margin, BoundarySampler};
use fbstab::flow::run_flow;
use fbstab::report::{dump_rows, emit_report, write_dump, Format};
use fbstab::scenario::{build_scenario, default_config, Config, Scenario, SuiteName};
use fbstab::suite::run_suite;
use fbstab::variation::{instability_certificate, sample_traces};
use fbstab::Error;

/// Only this variable is read from the environment.
const REPORT_DIR_ENV: &str = "FBSTAB_REPORT_DIR";

#[derive(Parser)]
#[command(
    name = "fbstab",
    version,
    about = "Stability checks for free boundary minimal submanifolds of conformally flat domains"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Configuration document; the built-in configuration when absent.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides the configuration seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for output files; stdout when absent.
    #[arg(long, value_name = "DIR", env = REPORT_DIR_ENV)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "json", value_parser = parse_format)]
    format: Format,
}

#[derive(Subcommand)]
enum Command {
    /// Run suites over every configured scenario.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Suite to run; repeatable. Defaults to the configuration's list, then to all.
        #[arg(long, value_parser = parse_suite)]
        suite: Vec<SuiteName>,
        /// Overrides the pointwise identity and trace tolerances.
        #[arg(long)]
        tol: Option<f64>,
        /// Restrict to scenarios whose name contains this text.
        #[arg(long)]
        scenario: Option<String>,
    },
    /// Instability certificate for one scenario.
    Stability {
        #[command(flatten)]
        common: Common,
        /// Scenario name from the configuration, or a shorthand such as `ball-disk n=4 k=2 u=radial-spherical`.
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        p: Option<usize>,
    },
    /// p-convexity margins of a domain in g and g̃.
    Convexity {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        domain: String,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value = "zero")]
        field: String,
        #[arg(long, default_value_t = 2)]
        p: usize,
        #[arg(long, default_value_t = 1024)]
        samples: usize,
    },
    /// Volume-decreasing flow from a scenario's immersion.
    Flow {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        max_iter: Option<usize>,
        #[arg(long)]
        dt: Option<f64>,
    },
    /// Per-sample traces of one scenario as CSV.
    Dump {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        scenario: String,
    },
}

fn parse_format(s: &str) -> Result<Format, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_suite(s: &str) -> Result<SuiteName, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Exit code 2 for anything the user can fix in the invocation or configuration.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::UnknownCatalog(_) | Error::Dimension(_) | Error::Json(_) | Error::Io(_) => 2,
        _ => 1,
    }
}

fn load_config(common: &Common) -> fbstab::Result<Config> {
    let mut config = match &common.config {
        Some(path) => Config::load(path)?,
        None => default_config(0),
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    config.validate()?;
    Ok(config)
}

fn resolve_scenario(config: &Config, text: &str) -> fbstab::Result<Scenario> {
    if let Some(s) = config.all_scenarios()?.into_iter().find(|s| s.name == text) {
        return Ok(s);
    }
    if text.contains(char::is_whitespace) || text.contains('=') {
        return Scenario::from_shorthand(text);
    }
    Err(Error::Config(format!("no scenario named {text:?}")))
}

fn write_output(out: Option<&Path>, stem: &str, ext: &str, bytes: &[u8]) -> fbstab::Result<()> {
    match out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            fs::write(dir.join(format!("{stem}.{ext}")), bytes)?;
        }
        None => std::io::stdout().write_all(bytes)?,
    }
    Ok(())
}

fn json_bytes<T: serde::Serialize>(value: &T) -> fbstab::Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(value)?;
    out.push(b'\n');
    Ok(out)
}

fn only_json(format: Format) -> fbstab::Result<()> {
    if format != Format::Json {
        return Err(Error::Config("this verb writes JSON only".into()));
    }
    Ok(())
}

fn run(cli: Cli) -> fbstab::Result<bool> {
    match cli.command {
        Command::Verify { common, suite, tol, scenario } => {
            let mut config = load_config(&common)?;
            if let Some(t) = tol {
                if t.is_nan() || t <= 0.0 {
                    return Err(Error::Config("--tol must be positive".into()));
                }
                config.tolerances.identity = t;
                config.tolerances.trace = t;
            }
            if let Some(filter) = scenario {
                let all = config.all_scenarios()?;
                config.random_graphs = None;
                config.scenarios = all.into_iter().filter(|s| s.name.contains(&filter)).collect();
                if config.scenarios.is_empty() {
                    return Err(Error::Config(format!("no scenario matches {filter:?}")));
                }
            }
            let result = run_suite(&config, &suite)?;
            write_output(
                common.out.as_deref(),
                "report",
                common.format.extension(),
                &emit_report(&result, common.format)?,
            )?;
            if common.out.is_some() {
                eprintln!("{} checks, {} failed", result.totals.checks, result.totals.failed);
            }
            Ok(result.all_pass())
        }
        Command::Stability { common, scenario, p } => {
            only_json(common.format)?;
            let config = load_config(&common)?;
            let mut s = resolve_scenario(&config, &scenario)?;
            s.certificate = true;
            if let Some(p) = p {
                s.p = p;
            }
            s.check()?;
            let built = build_scenario(&s)?;
            let domain = built.domain.as_ref().ok_or_else(|| Error::Config("scenario has no domain".into()))?;
            let report =
                instability_certificate(&built.immersion, &built.metric, domain, &config.certificate_config(s.p))?;
            write_output(common.out.as_deref(), "stability", "json", &json_bytes(&report)?)?;
            Ok(true)
        }
        Command::Convexity { common, domain, n, field, p, samples } => {
            only_json(common.format)?;
            let config = load_config(&common)?;
            let d = catalog::domain::<f64>(&domain, n)?;
            let metric = ConformalMetric::new(catalog::field::<f64>(&field, n)?, n);
            let sampler = BoundarySampler { count: samples, seed: config.seed as u32 };
            let report = p_convexity_margin(&d, &metric, p, &sampler)?;
            write_output(common.out.as_deref(), "convexity", "json", &json_bytes(&report)?)?;
            Ok(true)
        }
        Command::Flow { common, scenario, max_iter, dt } => {
            only_json(common.format)?;
            let config = load_config(&common)?;
            let s = resolve_scenario(&config, &scenario)?;
            let mut flow = s.flow.clone().map(|f| f.config).unwrap_or_default();
            if let Some(m) = max_iter {
                flow.max_iter = m;
            }
            if let Some(dt) = dt {
                flow.dt = dt;
            }
            let built = build_scenario(&s)?;
            let domain = built.domain.as_ref().ok_or_else(|| Error::Config("flow runs need a domain".into()))?;
            let (state, outcome) = run_flow(&built.parametric, &built.metric, domain, &flow)?;
            let summary = serde_json::json!({
                "scenario": s.name,
                "config": flow,
                "outcome": outcome,
                "iterations": state.iteration,
                "history": state.history,
            });
            write_output(common.out.as_deref(), "flow", "json", &json_bytes(&summary)?)?;
            Ok(outcome.converged())
        }
        Command::Dump { common, scenario } => {
            if common.format != Format::Csv && common.format != Format::Json {
                return Err(Error::Config("dump writes CSV".into()));
            }
            let config = load_config(&common)?;
            let s = resolve_scenario(&config, &scenario)?;
            let built = build_scenario(&s)?;
            let traces = sample_traces(&built.immersion, &built.metric, built.domain.as_ref())?;
            write_output(common.out.as_deref(), &s.name, "csv", &write_dump(&dump_rows(&traces), s.n)?)?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
