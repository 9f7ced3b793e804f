use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use mclt_sgd::bounds::{rho_parts, thm3_bound, thm4_bound, w_ledger, BoundConstants, Delta0Moments, DEFAULT_C2};
use mclt_sgd::experiment::{calibrated_constants, cor4_for, empirical_discrepancy, linear_third_moment, BoundKind, DiscrepancyReport, Engine, ExperimentSpec};
use mclt_sgd::martingale::MartingaleModel;
use mclt_sgd::montecarlo::{map_reps, Execution};
use mclt_sgd::sgd::{run_replication, Objective, Record, RunOptions, SgdProblem};
use mclt_sgd::stein::{stein_factor_estimate, stein_solve};
use mclt_sgd::test_functions::{catalog, catalog_function};
use mclt_sgd::SpdMatrix;
use nalgebra::DVector;
use serde::Serialize;

use crate::config::{Axis, ConstantsConfig, ExperimentConfig, Format, ProblemConfig, ScheduleConfig};
use crate::output::{emit, fmt_f, loglog_slope, sibling, Table};

#[derive(Debug, Parser)]
#[command(name = "mclt-sgd", version, about = "Normal-approximation bounds for martingales and averaged SGD, with Monte Carlo certification")]
pub struct Cli {
    /// Worker threads; MCLT_SGD_THREADS overrides this flag.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Martingale discrepancy against its bounds.
    Mclt(McltArgs),
    /// Simulate the linear iteration on a quadratic problem.
    SimulateLinear(SimulateArgs),
    /// Simulate averaged SGD.
    SimulateSgd(SimulateArgs),
    /// Evaluate a bound on a horizon grid, term by term.
    Bounds(BoundsArgs),
    /// Run one experiment config with optional overrides.
    Discrepancy(DiscrepancyArgs),
    /// Run an experiment over a grid of one config axis.
    Sweep(SweepArgs),
    /// Solve the Stein equation and check the third-derivative factor.
    SteinCheck(SteinArgs),
    /// Print the test-function catalog.
    ListFunctions(ListArgs),
    /// Run an experiment config exactly as written.
    Run(RunArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    Violation,
}

impl Outcome {
    fn from_certified(ok: bool) -> Self {
        if ok {
            Outcome::Success
        } else {
            Outcome::Violation
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct McltArgs {
    #[arg(long, default_value = "iid_rademacher")]
    pub model: String,
    #[arg(long, default_value_t = 1)]
    pub dim: usize,
    #[arg(long)]
    pub horizon: usize,
    #[arg(long, default_value = "cos")]
    pub function: String,
    #[arg(long, default_value_t = 10_000)]
    pub reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordArg {
    Full,
    Summary,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    /// Problem document (JSON).
    #[arg(long)]
    pub problem: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub eta0: f64,
    #[arg(long, default_value_t = 0.6)]
    pub c3: f64,
    #[arg(long)]
    pub horizon: usize,
    #[arg(long, default_value_t = 1)]
    pub reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = RecordArg::Summary)]
    pub record: RecordArg,
    /// Starting point, comma separated (default: origin).
    #[arg(long, value_delimiter = ',')]
    pub theta0: Option<Vec<f64>>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum WhichBound {
    Rho,
    Thm3,
    Cor4,
    Thm4,
}

#[derive(Debug, Args, Serialize)]
pub struct BoundsArgs {
    #[arg(long, value_enum)]
    pub which: WhichBound,
    #[arg(long)]
    pub problem: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "100,1000,10000")]
    pub horizon_grid: Vec<usize>,
    /// `spectral` or a JSON file with k, k2, c_prime, c1, c2, lambda.
    #[arg(long, default_value = "spectral")]
    pub constants: String,
    #[arg(long, default_value_t = DEFAULT_C2)]
    pub c2: f64,
    #[arg(long, default_value_t = 0.5)]
    pub eta0: f64,
    #[arg(long, default_value_t = 0.6)]
    pub c3: f64,
    #[arg(long, default_value = "cos")]
    pub function: String,
    /// `|Delta_0|`.
    #[arg(long, default_value_t = 0.0)]
    pub delta0: f64,
    /// Monte Carlo draws for estimated moments.
    #[arg(long, default_value_t = 100_000)]
    pub reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DiscrepancyArgs {
    #[arg(long)]
    pub experiment: PathBuf,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub experiment: PathBuf,
    #[arg(long, value_enum)]
    pub axis: Axis,
    #[arg(long, value_delimiter = ',', required = true)]
    pub values: Vec<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SteinArgs {
    #[arg(long, value_delimiter = ',', default_value = "cos")]
    pub function: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "1,2")]
    pub dim: Vec<usize>,
    /// Covariance scales `s` in `Sigma = s I`.
    #[arg(long, value_delimiter = ',', default_value = "1,4")]
    pub sigma_scale: Vec<f64>,
    /// Probe grid spacing on `[-2, 2]^d`.
    #[arg(long, default_value_t = 0.5)]
    pub step: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ListArgs {
    #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
    pub dims: Vec<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    pub config: PathBuf,
}

/// Sizes the global worker pool; the environment wins over the flag.
pub fn configure_threads(flag: Option<usize>) -> Result<Option<usize>> {
    let n = match std::env::var("MCLT_SGD_THREADS") {
        Ok(v) => Some(v.trim().parse::<usize>().with_context(|| format!("MCLT_SGD_THREADS='{v}' is not a thread count"))?),
        Err(_) => flag,
    };
    #[cfg(feature = "parallel")]
    if let Some(n) = n {
        ensure!(n >= 1, "thread count must be positive");
        // a pool may already exist when driven in-process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(n)
}

pub fn execute(cli: &Cli) -> Result<Outcome> {
    configure_threads(cli.threads)?;
    match &cli.command {
        Command::Mclt(a) => mclt(a),
        Command::SimulateLinear(a) => simulate(a, true),
        Command::SimulateSgd(a) => simulate(a, false),
        Command::Bounds(a) => bounds(a),
        Command::Discrepancy(a) => discrepancy(a),
        Command::Sweep(a) => sweep(a),
        Command::SteinCheck(a) => stein_check(a),
        Command::ListFunctions(a) => list_functions(a),
        Command::Run(a) => run_config(&a.config),
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_f).unwrap_or_default()
}

fn mclt(a: &McltArgs) -> Result<Outcome> {
    let start = Instant::now();
    let model = MartingaleModel::by_name(&a.model, a.dim, a.horizon)?;
    let h = catalog_function(&a.function, a.dim)?;
    let id = format!("mclt_{}_d{}_n{}", a.model, a.dim, a.horizon);
    let spec = ExperimentSpec::new(&id, Engine::Martingale(model), h);
    let r = empirical_discrepancy(&spec, a.reps, a.seed)?;
    let mut t = Table::new(&[
        "model",
        "d",
        "n",
        "function",
        "empirical_gap",
        "gap_stderr",
        "thm1",
        "cor1",
        "cor2",
        "p1_dev",
        "thm1_stderr",
        "certified",
        "seed",
    ]);
    t.push(vec![
        a.model.clone(),
        a.dim.to_string(),
        a.horizon.to_string(),
        a.function.clone(),
        fmt_f(r.gap),
        fmt_f(r.gap_stderr),
        opt(r.bounds.get("thm1").copied()),
        opt(r.bounds.get("cor1").copied()),
        opt(r.bounds.get("cor2").copied()),
        opt(r.terms.get("p1_dev").copied()),
        opt(r.bound_stderr.get("thm1").copied()),
        r.certified.to_string(),
        a.seed.to_string(),
    ]);
    emit(&a.out, &t.to_csv()?, "mclt", &serde_json::to_vec(a)?, a.seed, start.elapsed().as_secs_f64())?;
    Ok(Outcome::from_certified(r.certified))
}

fn load_problem(path: &Path) -> Result<(SgdProblem, Vec<u8>)> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let cfg: ProblemConfig = serde_json::from_slice(&bytes).with_context(|| format!("parsing problem {}", path.display()))?;
    Ok((cfg.build()?, bytes))
}

fn hashed_inputs<T: Serialize>(args: &T, file: &[u8]) -> Result<Vec<u8>> {
    let mut v = serde_json::to_vec(args)?;
    v.extend_from_slice(file);
    Ok(v)
}

fn simulate(a: &SimulateArgs, linear: bool) -> Result<Outcome> {
    let start = Instant::now();
    let (problem, bytes) = load_problem(&a.problem)?;
    if linear && !matches!(problem.objective(), Objective::Quadratic { .. }) {
        bail!("simulate-linear needs a quadratic problem");
    }
    let schedule = ScheduleConfig { eta0: a.eta0, c3: a.c3 }.build()?;
    ensure!(a.horizon >= 1 && a.reps >= 1, "horizon and reps must be positive");
    let theta0 = match &a.theta0 {
        Some(v) => {
            ensure!(v.len() == problem.dim(), "theta0 has length {} but the problem has dimension {}", v.len(), problem.dim());
            DVector::from_vec(v.clone())
        }
        None => DVector::zeros(problem.dim()),
    };
    let record = match a.record {
        RecordArg::Full => Record::Full,
        RecordArg::Summary => Record::Summary,
    };
    let opts = RunOptions::default();
    let runs = map_reps(Execution::Parallel, a.reps, a.seed, |_, i| run_replication(&problem, &schedule, &theta0, a.horizon, a.seed, i as u64, record, &opts));
    let mut t = Table::new(&["rep", "t", "norm_delta", "norm_delta_bar"]);
    let mut diverged = 0;
    for (rep, run) in runs.into_iter().enumerate() {
        let tr = match run {
            Ok(tr) => tr,
            Err(mclt_sgd::Error::DivergenceDetected { step, norm }) => {
                eprintln!("replication {rep} diverged at step {step} (|Delta| = {norm:.3e})");
                diverged += 1;
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        match &tr.residuals {
            Some(res) => {
                let mut acc = DVector::zeros(problem.dim());
                for s in 1..=a.horizon {
                    acc += &res[s - 1];
                    t.push(vec![rep.to_string(), s.to_string(), fmt_f(res[s].norm()), fmt_f(acc.norm() / s as f64)]);
                }
            }
            None => t.push(vec![rep.to_string(), a.horizon.to_string(), fmt_f(tr.delta_final.norm()), fmt_f(tr.delta_bar.norm())]),
        }
    }
    let cmd = if linear { "simulate-linear" } else { "simulate-sgd" };
    emit(&a.out, &t.to_csv()?, cmd, &hashed_inputs(a, &bytes)?, a.seed, start.elapsed().as_secs_f64())?;
    ensure!(diverged < a.reps, "every replication diverged");
    Ok(Outcome::Success)
}

fn bounds(a: &BoundsArgs) -> Result<Outcome> {
    let start = Instant::now();
    let (problem, bytes) = load_problem(&a.problem)?;
    let schedule = ScheduleConfig { eta0: a.eta0, c3: a.c3 }.build()?;
    let h = catalog_function(&a.function, problem.dim())?;
    ensure!(!a.horizon_grid.is_empty() && a.horizon_grid.iter().all(|&t| t >= 1), "horizon grid must hold positive horizons");
    let fixed = match a.constants.as_str() {
        "spectral" => None,
        path => Some(ConstantsConfig::load(Path::new(path))?.build()?),
    };
    let consts_at = |t: usize| -> Result<BoundConstants> {
        match &fixed {
            Some(c) => Ok(c.clone()),
            None => Ok(calibrated_constants(&problem, &schedule, t, a.c2)?),
        }
    };
    let delta0 = Delta0Moments::deterministic(a.delta0);
    let const_cols = ["k", "k2", "c_prime", "c1", "c2", "lambda"];
    let const_vals = |c: &BoundConstants| [c.k, c.k2, c.c_prime, c.c1, c.c2, c.lambda].map(fmt_f).to_vec();
    let mut ok = true;
    let table = match a.which {
        WhichBound::Rho => {
            let mut t = Table::new(
                &["t", "w_ledger", "majorant", "rho", "rho_variant", "exp_sum", "c_term_sum", "c_term_variant_sum"]
                    .into_iter()
                    .chain(const_cols)
                    .chain(["holds"])
                    .collect::<Vec<_>>(),
            );
            for &tt in &a.horizon_grid {
                let c = consts_at(tt)?;
                let parts = rho_parts(&schedule, tt, c.c1, c.c2, c.lambda, true);
                let rho = parts.exp_sum + c.c_prime.powi(2) * parts.c_term_sum;
                let rho_v = parts.exp_sum + c.c_prime.powi(2) * parts.c_term_variant_sum;
                let ledger = w_ledger(problem.hessian_at_min(), &schedule, tt)?.sum_sq_w() / tt as f64;
                let majorant = c.k / tt as f64 * rho;
                let holds = ledger <= majorant;
                ok &= holds;
                let mut row = vec![tt.to_string()];
                row.extend([ledger, majorant, rho, rho_v, parts.exp_sum, parts.c_term_sum, parts.c_term_variant_sum].map(fmt_f));
                row.extend(const_vals(&c));
                row.push(holds.to_string());
                t.push(row);
            }
            t
        }
        WhichBound::Thm3 => {
            let third = linear_third_moment(&problem, a.seed)?;
            let cols = [
                "third_moment",
                "first",
                "second_delta0",
                "second_rho",
                "second",
                "third_delta0",
                "third_rho",
                "third",
                "total",
                "rho",
                "rho_variant",
                "k_d",
            ];
            let mut t = Table::new(&["t"].into_iter().chain(cols).chain(const_cols).collect::<Vec<_>>());
            for &tt in &a.horizon_grid {
                let c = consts_at(tt)?;
                let b = thm3_bound(problem.hessian_at_min(), problem.noise(), &schedule, tt, &h, &third, &delta0, &c)?;
                let mut row = vec![tt.to_string()];
                row.extend(
                    [b.third_moment, b.first, b.second_delta0, b.second_rho, b.second, b.third_delta0, b.third_rho, b.third, b.total, b.rho, b.rho_variant, b.k_d]
                        .map(fmt_f),
                );
                row.extend(const_vals(&c));
                t.push(row);
            }
            t
        }
        WhichBound::Cor4 => {
            let mut t = Table::new(&["t", "first", "second", "third", "total", "k4", "k5"].into_iter().chain(const_cols).collect::<Vec<_>>());
            for &tt in &a.horizon_grid {
                let c = consts_at(tt)?;
                let (b, k4, k5) = cor4_for(&problem, &schedule, tt, &h, &delta0, &c, a.seed)?;
                let mut row = vec![tt.to_string()];
                row.extend([b.first, b.second, b.third, b.total, k4, k5].map(fmt_f));
                row.extend(const_vals(&c));
                t.push(row);
            }
            t
        }
        WhichBound::Thm4 => {
            let cols = [
                "third_moment",
                "third_moment_stderr",
                "first",
                "first_stderr",
                "second_delta0",
                "second_lh",
                "second_rho",
                "second",
                "third_delta0",
                "third_lh",
                "third_rho",
                "third",
                "total",
                "rho",
                "rho_variant",
                "sigma_t_inv_sqrt_norm",
            ];
            let mut t = Table::new(&["t"].into_iter().chain(cols).chain(const_cols).collect::<Vec<_>>());
            for &tt in &a.horizon_grid {
                let c = consts_at(tt)?;
                let b = thm4_bound(&problem, &schedule, tt, &h, &delta0, &c, a.reps, a.seed)?;
                let mut row = vec![tt.to_string()];
                row.extend(
                    [
                        b.third_moment,
                        b.third_moment_stderr,
                        b.first,
                        b.first_stderr,
                        b.second_delta0,
                        b.second_lh,
                        b.second_rho,
                        b.second,
                        b.third_delta0,
                        b.third_lh,
                        b.third_rho,
                        b.third,
                        b.total,
                        b.rho,
                        b.rho_variant,
                        b.sigma_t_inv_sqrt_norm,
                    ]
                    .map(fmt_f),
                );
                row.extend(const_vals(&c));
                t.push(row);
            }
            t
        }
    };
    emit(&a.out, &table.to_csv()?, "bounds", &hashed_inputs(a, &bytes)?, a.seed, start.elapsed().as_secs_f64())?;
    Ok(Outcome::from_certified(ok))
}

const BOUND_ORDER: [BoundKind; 6] = [BoundKind::Thm1, BoundKind::Cor1, BoundKind::Cor2, BoundKind::Thm3, BoundKind::Cor4, BoundKind::Thm4];

/// One row per report; columns are the union over reports so sweeps share a
/// header.
pub fn report_table(rows: &[(Option<(&str, f64)>, &DiscrepancyReport)]) -> Table {
    let bounds: Vec<&str> = BOUND_ORDER.iter().map(|b| b.name()).filter(|n| rows.iter().any(|(_, r)| r.bounds.contains_key(*n))).collect();
    let bound_se: Vec<&str> = BOUND_ORDER.iter().map(|b| b.name()).filter(|n| rows.iter().any(|(_, r)| r.bound_stderr.contains_key(*n))).collect();
    let terms: BTreeSet<&str> = rows.iter().flat_map(|(_, r)| r.terms.keys().map(String::as_str)).collect();
    let mut header: Vec<String> = vec![];
    if let Some((axis, _)) = rows.first().and_then(|r| r.0) {
        header.push(axis.to_string());
    }
    header.extend(["experiment", "engine", "d", "t_or_n", "function", "reps", "gap", "gap_stderr"].map(String::from));
    header.extend(bounds.iter().map(|b| b.to_string()));
    header.extend(bound_se.iter().map(|b| format!("{b}_stderr")));
    header.extend(terms.iter().map(|t| t.to_string()));
    header.extend(["empirical_mean_h", "reference_mean_h", "coupled_gap", "coupled_gap_stderr", "divergences", "certified", "seed"].map(String::from));
    let mut t = Table { header, rows: vec![] };
    for (axis, r) in rows {
        let mut row = vec![];
        if let Some((_, v)) = axis {
            row.push(fmt_f(*v));
        }
        row.extend([r.experiment.clone(), r.engine.to_string(), r.dim.to_string(), r.t_or_n.to_string(), r.function.clone(), r.replications.to_string()]);
        row.extend([fmt_f(r.gap), fmt_f(r.gap_stderr)]);
        row.extend(bounds.iter().map(|b| opt(r.bounds.get(*b).copied())));
        row.extend(bound_se.iter().map(|b| opt(r.bound_stderr.get(*b).copied())));
        row.extend(terms.iter().map(|k| opt(r.terms.get(*k).copied())));
        row.extend([fmt_f(r.empirical_mean_h), fmt_f(r.reference_mean_h), opt(r.coupled_gap.map(|c| c.0)), opt(r.coupled_gap.map(|c| c.1))]);
        row.extend([r.divergences.to_string(), r.certified.to_string(), r.seed.to_string()]);
        t.push(row);
    }
    t
}

fn render(reports: &[&DiscrepancyReport], format: Format) -> Result<Vec<u8>> {
    match format {
        Format::Csv => report_table(&reports.iter().map(|r| (None, *r)).collect::<Vec<_>>()).to_csv(),
        Format::Json => {
            let mut v = serde_json::to_vec_pretty(&reports.iter().map(|r| strip_runtime(r)).collect::<Vec<_>>())?;
            v.push(b'\n');
            Ok(v)
        }
    }
}

/// Runtime lives in the sidecar only.
fn strip_runtime(r: &DiscrepancyReport) -> DiscrepancyReport {
    DiscrepancyReport { runtime_secs: 0.0, ..r.clone() }
}

fn default_out(cfg: &ExperimentConfig) -> (PathBuf, Format) {
    match &cfg.output {
        Some(o) => (PathBuf::from(&o.path), o.format),
        None => (PathBuf::from(format!("{}.csv", cfg.id)), Format::Csv),
    }
}

fn run_experiment(cfg: &ExperimentConfig, raw: &[u8], out: &Path, format: Format, command: &str) -> Result<Outcome> {
    let start = Instant::now();
    let report = empirical_discrepancy(&cfg.spec()?, cfg.reps, cfg.seed)?;
    emit(out, &render(&[&report], format)?, command, raw, cfg.seed, start.elapsed().as_secs_f64())?;
    if !report.certified {
        for (name, ok) in &report.certifications {
            if !ok {
                eprintln!("bound violated: {name} = {:.6e} < gap {:.6e} - 3 x {:.3e}", report.bounds[name], report.gap, report.gap_stderr);
            }
        }
    }
    Ok(Outcome::from_certified(report.certified))
}

pub fn run_config(path: &Path) -> Result<Outcome> {
    let (cfg, raw) = ExperimentConfig::load(path)?;
    let (out, format) = default_out(&cfg);
    run_experiment(&cfg, &raw, &out, format, "run")
}

fn discrepancy(a: &DiscrepancyArgs) -> Result<Outcome> {
    let (mut cfg, mut raw) = ExperimentConfig::load(&a.experiment)?;
    if let Some(r) = a.reps {
        cfg.reps = r;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    // overrides are part of the provenance
    raw.extend(format!("\nreps={} seed={}", cfg.reps, cfg.seed).bytes());
    let (default, format) = default_out(&cfg);
    let out = a.out.clone().unwrap_or(default);
    run_experiment(&cfg, &raw, &out, format, "discrepancy")
}

fn axis_name(axis: Axis) -> &'static str {
    match axis {
        Axis::Horizon => "horizon",
        Axis::Dim => "dim",
        Axis::Reps => "reps",
        Axis::Eta0 => "eta0",
        Axis::C3 => "c3",
    }
}

/// Runs the config at every axis value with the same master seed, so grid
/// points share random numbers.
fn sweep(a: &SweepArgs) -> Result<Outcome> {
    let start = Instant::now();
    let (cfg, mut raw) = ExperimentConfig::load(&a.experiment)?;
    let name = axis_name(a.axis);
    let cfgs = a.values.iter().map(|&v| cfg.with_axis(a.axis, v)).collect::<Result<Vec<_>>>()?;
    let mut reports = vec![];
    for c in &cfgs {
        reports.push(empirical_discrepancy(&c.spec()?, c.reps, c.seed)?);
    }
    let rows: Vec<_> = a.values.iter().zip(&reports).map(|(&v, r)| (Some((name, v)), r)).collect();
    let table = report_table(&rows);
    let mut slopes = Table::new(&["column", "slope", "slope_stderr", "points"]);
    let numeric = |col: &str| -> Vec<f64> {
        let i = table.column(col).expect("column exists");
        table.rows.iter().map(|r| r[i].parse().unwrap_or(f64::NAN)).collect()
    };
    let cols: Vec<String> = ["gap".to_string()].into_iter().chain(BOUND_ORDER.iter().map(|b| b.name().to_string()).filter(|n| table.column(n).is_some())).collect();
    for col in &cols {
        match loglog_slope(&a.values, &numeric(col)) {
            Some((s, se, n)) => slopes.push(vec![col.clone(), fmt_f(s), fmt_f(se), n.to_string()]),
            None => slopes.push(vec![col.clone(), String::new(), String::new(), "0".into()]),
        }
    }
    raw.extend(format!("\naxis={name} values={:?}", a.values).bytes());
    let secs = start.elapsed().as_secs_f64();
    emit(&a.out, &table.to_csv()?, "sweep", &raw, cfg.seed, secs)?;
    emit(&sibling(&a.out, ".slopes.csv"), &slopes.to_csv()?, "sweep", &raw, cfg.seed, secs)?;
    Ok(Outcome::from_certified(reports.iter().all(|r| r.certified)))
}

fn stein_check(a: &SteinArgs) -> Result<Outcome> {
    let start = Instant::now();
    let mut t = Table::new(&[
        "function",
        "d",
        "sigma_scale",
        "max_residual",
        "factor_estimate",
        "factor_bound",
        "bound_ok",
        "time_nodes",
        "refinements",
    ]);
    let mut ok = true;
    for f in &a.function {
        for &d in &a.dim {
            for &s in &a.sigma_scale {
                let h = catalog_function(f, d)?;
                let sol = stein_solve(&h, &vec![0.0; d], &SpdMatrix::scaled_identity(d, s))?;
                let est = stein_factor_estimate(&sol, (-2.0, 2.0), a.step)?;
                let bound = sol.stein_factor_bound();
                let fine = est <= bound * 1.01;
                ok &= fine;
                t.push(vec![
                    f.clone(),
                    d.to_string(),
                    fmt_f(s),
                    fmt_f(sol.max_residual()),
                    fmt_f(est),
                    fmt_f(bound),
                    fine.to_string(),
                    sol.time_nodes().to_string(),
                    sol.refinements().to_string(),
                ]);
            }
        }
    }
    emit(&a.out, &t.to_csv()?, "stein-check", &serde_json::to_vec(a)?, 0, start.elapsed().as_secs_f64())?;
    Ok(Outcome::from_certified(ok))
}

fn list_functions(a: &ListArgs) -> Result<Outcome> {
    let mut t = Table::new(&["name", "family", "dim", "m1", "m2"]);
    for h in catalog(&a.dims) {
        t.push(vec![h.name().to_string(), h.family().to_string(), h.dim().to_string(), opt(h.m1()), fmt_f(h.m2())]);
    }
    let bytes = t.to_csv()?;
    match &a.out {
        Some(p) => crate::output::write_atomic(p, &bytes)?,
        None => print!("{}", String::from_utf8(bytes)?),
    }
    Ok(Outcome::Success)
}
