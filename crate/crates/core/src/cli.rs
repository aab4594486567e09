//! The `ccsoc` command line: solve, validate, bound-check, gen-samples.
//!
//! Exit codes: 0 success, 1 output I/O failure, 2 configuration or input
//! error (including a config/solution hash mismatch), 3 infeasible
//! subproblem, 4 risk allocation below the sample-size floor, 5 backend
//! failure, 6 validation or tail test failure.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;
use serde::Serialize;

use crate::bounds::SampleBound;
use crate::config::{SampleSource, ScenarioConfig};
use crate::dynamics::mean_trajectory;
use crate::error::{Error, Result};
use crate::problem::RiskMode;
use crate::sampling::{write_samples, DisturbanceSampler, MomentCache};
use crate::solver::{
    solve_cantelli_baseline, solve_ccp, solve_scenario_baseline, verify_solution, CcpStatus, Method, Solution,
};
use crate::validation::{tail_test, validate_solution, TailDistribution, TailTestReport};

// A closed stdout (e.g. piped into `head`) must not abort the command.
macro_rules! say {
    ($($arg:tt)*) => {{
        let _ = writeln!(std::io::stdout().lock(), $($arg)*);
    }};
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_RISK_TOO_SMALL: i32 = 4;
pub const EXIT_BACKEND: i32 = 5;
pub const EXIT_VALIDATION: i32 = 6;

#[derive(Debug, Parser)]
#[command(name = "ccsoc", version, about = "Sample-statistics chance-constrained trajectory planning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve a scenario and write solution.json and trajectory.csv.
    Solve(SolveArgs),
    /// Monte Carlo check of a solution against fresh disturbances.
    Validate(ValidateArgs),
    /// Tabulate the tail bound and optionally run the empirical tail suite.
    BoundCheck(BoundArgs),
    /// Write the scenario's synthetic disturbance samples as CSV.
    GenSamples(GenArgs),
}

#[derive(Debug, Args)]
struct SolveArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the sample seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "proposed")]
    method: Method,
    #[arg(long)]
    risk_mode: Option<RiskMode>,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    solution: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    trials: u64,
    /// Master seed of the Monte Carlo trials.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct BoundArgs {
    #[arg(long)]
    out: PathBuf,
    /// Sample sizes to tabulate.
    #[arg(long, value_delimiter = ',', default_values_t = vec![10usize, 100, 1000])]
    samples: Vec<usize>,
    /// Explicit multipliers; overrides the geometric grid.
    #[arg(long, value_delimiter = ',')]
    lambda: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0.1)]
    lambda_min: f64,
    #[arg(long, default_value_t = 20.0)]
    lambda_max: f64,
    #[arg(long, default_value_t = 200)]
    points: usize,
    /// Run the tail suite on these distributions (all four when no list is given).
    #[arg(long, num_args = 0.., value_delimiter = ',')]
    empirical: Option<Vec<TailDistribution>>,
    /// Multipliers for the tail suite.
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.5, 1.0, 2.0, 4.0])]
    tail_lambda: Vec<f64>,
    #[arg(long, default_value_t = 100_000)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct GenArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `samples.count`.
    #[arg(long)]
    count: Option<usize>,
}

/// Exit code for a library error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InfeasibleSubproblem { .. } => EXIT_INFEASIBLE,
        Error::RiskTooSmallForSampleSize { .. } => EXIT_RISK_TOO_SMALL,
        Error::Backend(_) | Error::NotPositiveSemidefinite(_) => EXIT_BACKEND,
        Error::Io(_) => EXIT_IO,
        Error::Config(_)
        | Error::Parse(_)
        | Error::Dimension(_)
        | Error::InvalidParameter(_)
        | Error::DegenerateSample(_) => EXIT_CONFIG,
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::Solve(a) => cmd_solve(&a),
        Command::Validate(a) => cmd_validate(&a),
        Command::BoundCheck(a) => cmd_bound_check(&a),
        Command::GenSamples(a) => cmd_gen_samples(&a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn load_config(path: &Path) -> Result<ScenarioConfig> {
    ScenarioConfig::from_path(path)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    fs::write(path, text)?;
    Ok(())
}

fn cmd_solve(args: &SolveArgs) -> Result<i32> {
    let mut cfg = load_config(&args.config)?;
    if let Some(mode) = args.risk_mode {
        cfg.spec.risk.mode = mode;
    }
    let samples = cfg.load_samples(args.seed)?;
    let mut solution = match args.method {
        Method::Proposed => solve_ccp(&cfg.spec, &samples, &cfg.ccp, &cfg.backend)?,
        Method::Scenario => solve_scenario_baseline(&cfg.spec, &samples, &cfg.backend)?,
        Method::Cantelli => {
            let (means, covs) = cfg.true_moments()?;
            solve_cantelli_baseline(&cfg.spec, &means, &covs, &cfg.ccp, &cfg.backend)?
        }
    };
    solution.config_hash = Some(cfg.hash.clone());

    fs::create_dir_all(&args.out)?;
    write_json(&args.out.join("solution.json"), &solution)?;
    fs::write(args.out.join("trajectory.csv"), trajectory_csv(&cfg, &samples, &solution)?)?;

    say!(
        "{:?}: {:?} after {} iteration(s), cost {:.6e}, {:.3} s",
        solution.method, solution.status, solution.iterations, solution.objective, solution.solve_seconds
    );
    if solution.method == Method::Proposed {
        let report = verify_solution(&cfg.spec, &samples, &solution, 1e-6)?;
        say!("constraint re-check: worst margin {:.3e}, passed {}", report.worst_margin, report.passed);
    }
    if solution.status == CcpStatus::MaxIterations {
        eprintln!("warning: iteration limit reached before convergence");
    }
    Ok(EXIT_OK)
}

/// Mean state per vehicle and step, `k = 0..=N`, under the sample mean
/// disturbance. Header: `vehicle,k,x1..xn`.
pub fn trajectory_csv(
    cfg: &ScenarioConfig,
    samples: &[crate::sampling::DisturbanceSampleSet],
    solution: &Solution,
) -> Result<String> {
    let dynamics = cfg.spec.dynamics()?;
    let n = cfg.spec.state_dim();
    let mut out = String::from("vehicle,k");
    for d in 1..=n {
        out.push_str(&format!(",x{d}"));
    }
    out.push('\n');
    for (v, u) in solution.control_vectors().iter().enumerate() {
        let mean = MomentCache::from_samples(&samples[v])?.mean().clone();
        let x0 = &cfg.spec.vehicles[v].x0;
        let states = std::iter::once(x0.clone()).chain(mean_trajectory(&dynamics, x0, u, &mean)?);
        for (k, x) in states.enumerate() {
            out.push_str(&format!("{},{k}", cfg.vehicle_ids[v]));
            for val in x.iter() {
                out.push_str(&format!(",{val}"));
            }
            out.push('\n');
        }
    }
    Ok(out)
}

fn read_solution(path: &Path) -> Result<Solution> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

fn cmd_validate(args: &ValidateArgs) -> Result<i32> {
    let cfg = load_config(&args.config)?;
    let solution = read_solution(&args.solution)?;
    match &solution.config_hash {
        Some(h) if *h == cfg.hash => {}
        Some(h) => {
            return Err(Error::Config(format!(
                "solution was produced from config {h}, not {}",
                cfg.hash
            )))
        }
        None => return Err(Error::Config("solution records no config hash".into())),
    }
    // CSV sources validate by resampling their own rows
    let samples = match cfg.source {
        SampleSource::Csv(_) => cfg.load_samples(None)?,
        SampleSource::Generator(_) => Vec::new(),
    };
    let samplers = cfg.samplers(&samples);
    let refs: Vec<&dyn DisturbanceSampler> = samplers.iter().map(|b| b.as_ref()).collect();
    let controls: Vec<DVector<f64>> = solution.control_vectors();
    let report = validate_solution(&cfg.spec, &controls, &refs, args.trials, args.seed)?;

    fs::create_dir_all(&args.out)?;
    write_json(&args.out.join("validation.json"), &report)?;
    fs::write(args.out.join("validation.csv"), report.to_csv())?;
    say!("{}", report.to_csv().trim_end());
    Ok(if report.passed() { EXIT_OK } else { EXIT_VALIDATION })
}

fn lambda_grid(args: &BoundArgs) -> Result<Vec<f64>> {
    if let Some(l) = &args.lambda {
        if l.is_empty() || l.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
            return Err(Error::invalid("lambda list must be non-empty and positive"));
        }
        return Ok(l.clone());
    }
    if !(args.lambda_min > 0.0 && args.lambda_max > args.lambda_min && args.points >= 2) {
        return Err(Error::invalid("lambda grid needs 0 < lambda-min < lambda-max and at least 2 points"));
    }
    let ratio = args.lambda_max / args.lambda_min;
    Ok((0..args.points)
        .map(|i| args.lambda_min * ratio.powf(i as f64 / (args.points - 1) as f64))
        .collect())
}

/// Long-format table `samples,lambda,bound,floor,marker`; each sample size
/// gets an extra row at its convexity threshold marked `theta`.
pub fn bound_table(samples: &[usize], lambdas: &[f64]) -> Result<String> {
    let mut out = String::from("samples,lambda,bound,floor,marker\n");
    for &ns in samples {
        let b = SampleBound::new(ns)?;
        let theta = b.theta();
        let mut rows: Vec<(f64, &str)> = lambdas.iter().map(|l| (*l, "")).collect();
        rows.push((theta, "theta"));
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        for (l, marker) in rows {
            out.push_str(&format!("{ns},{l},{},{},{marker}\n", b.f(l)?, b.floor()));
        }
    }
    Ok(out)
}

fn tail_csv(reports: &[TailTestReport]) -> String {
    let mut out = String::from(
        "distribution,samples,trials,lambda,bound,empirical,stderr,passed,in_sample_bound,in_sample_empirical,in_sample_passed\n",
    );
    for r in reports {
        for c in &r.cells {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{}\n",
                r.distribution.name(),
                r.samples,
                r.trials,
                c.lambda,
                c.bound,
                c.empirical,
                c.stderr,
                c.passed,
                c.in_sample_bound,
                c.in_sample_empirical,
                c.in_sample_passed
            ));
        }
    }
    out
}

fn cmd_bound_check(args: &BoundArgs) -> Result<i32> {
    if args.samples.is_empty() {
        return Err(Error::invalid("need at least one sample size"));
    }
    let lambdas = lambda_grid(args)?;
    let table = bound_table(&args.samples, &lambdas)?;
    fs::create_dir_all(&args.out)?;
    fs::write(args.out.join("bound_table.csv"), &table)?;
    for &ns in &args.samples {
        let b = SampleBound::new(ns)?;
        say!("N_s = {ns}: floor 1/(N_s+1) = {:.6e}, convex from lambda = {:.10}", b.floor(), b.theta());
    }

    let Some(dists) = &args.empirical else {
        return Ok(EXIT_OK);
    };
    let dists: Vec<TailDistribution> = if dists.is_empty() { TailDistribution::STANDARD.to_vec() } else { dists.clone() };
    let mut reports = Vec::new();
    for (i, d) in dists.iter().enumerate() {
        for (j, &ns) in args.samples.iter().enumerate() {
            let seed = args.seed.wrapping_add((i * args.samples.len() + j) as u64);
            reports.push(tail_test(*d, ns, &args.tail_lambda, args.trials, seed)?);
        }
    }
    write_json(&args.out.join("tail_report.json"), &reports)?;
    fs::write(args.out.join("tail_report.csv"), tail_csv(&reports))?;
    let failed = reports.iter().filter(|r| !r.passed()).count();
    say!("tail suite: {} report(s), {failed} failing", reports.len());
    Ok(if failed == 0 { EXIT_OK } else { EXIT_VALIDATION })
}

fn cmd_gen_samples(args: &GenArgs) -> Result<i32> {
    let mut cfg = load_config(&args.config)?;
    if !matches!(cfg.source, SampleSource::Generator(_)) {
        return Err(Error::Config("gen-samples needs a [samples.generator] table".into()));
    }
    if let Some(c) = args.count {
        cfg.sample_count = Some(c);
    }
    let sets = cfg.load_samples(args.seed)?;
    fs::create_dir_all(&args.out)?;
    for (set, id) in sets.iter().zip(&cfg.vehicle_ids) {
        let path = args.out.join(format!("samples_{id}.csv"));
        let file = fs::File::create(&path)?;
        write_samples(set, std::io::BufWriter::new(file))?;
        say!("{}: {} samples", path.display(), set.sample_count());
    }
    Ok(EXIT_OK)
}
