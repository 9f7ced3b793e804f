//! End-to-end discrepancy experiments: run an engine for `R` replications,
//! measure `|E h(standardized) - E h(reference)|` and attach every
//! applicable bound.

use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::bounds::{
    cor4_bound, fit_cor4_constants, noise_third_moment, sandwich_inv_sqrt, spectral_constants_on, thm3_bound, thm4_bound, BoundConstants,
    Cor4Terms, Delta0Moments, ThirdMoment, DEFAULT_C2, DEFAULT_CALIBRATION,
};
use crate::error::{Error, Result};
use crate::linalg::SpdMatrix;
use crate::martingale::{cor1_bound, cor2_bound, covariance_ledger, p1_deviation, path_statistics, realized_p1, thm1_from_stats, thm1_prefactor_for, MartingaleModel};
use crate::montecarlo::{map_reps, reference_auto, Execution, MeanEstimate};
use crate::sgd::{run_replication, NoiseModel, Record, RunOptions, SgdProblem, StepSchedule, Trajectory};
use crate::test_functions::TestFunction;

#[derive(Debug, Clone, PartialEq)]
pub enum Engine {
    Martingale(MartingaleModel),
    /// Quadratic problem driven by the linear iteration.
    Linear { problem: SgdProblem, schedule: StepSchedule, theta0: DVector<f64>, horizon: usize },
    Sgd { problem: SgdProblem, schedule: StepSchedule, theta0: DVector<f64>, horizon: usize },
}

impl Engine {
    pub fn name(&self) -> &'static str {
        match self {
            Engine::Martingale(_) => "martingale",
            Engine::Linear { .. } => "linear",
            Engine::Sgd { .. } => "sgd",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Engine::Martingale(m) => m.dim(),
            Engine::Linear { problem, .. } | Engine::Sgd { problem, .. } => problem.dim(),
        }
    }

    pub fn horizon(&self) -> usize {
        match self {
            Engine::Martingale(m) => m.horizon(),
            Engine::Linear { horizon, .. } | Engine::Sgd { horizon, .. } => *horizon,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Standardization {
    /// `Sigma^{-1/2} S_n`.
    SigmaSum,
    /// `sqrt(t) Delta_bar_t`.
    SqrtT,
    /// `Sigma_t^{-1/2} Delta_bar_t` with `Sigma_t = t V`.
    SigmaT,
}

impl Standardization {
    pub fn default_for(engine: &Engine) -> Self {
        match engine {
            Engine::Martingale(_) => Standardization::SigmaSum,
            Engine::Linear { .. } => Standardization::SqrtT,
            Engine::Sgd { .. } => Standardization::SigmaT,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    Thm1,
    Cor1,
    Cor2,
    Thm3,
    Cor4,
    Thm4,
}

impl BoundKind {
    pub fn name(&self) -> &'static str {
        match self {
            BoundKind::Thm1 => "thm1",
            BoundKind::Cor1 => "cor1",
            BoundKind::Cor2 => "cor2",
            BoundKind::Thm3 => "thm3",
            BoundKind::Cor4 => "cor4",
            BoundKind::Thm4 => "thm4",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "thm1" => BoundKind::Thm1,
            "cor1" => BoundKind::Cor1,
            "cor2" => BoundKind::Cor2,
            "thm3" => BoundKind::Thm3,
            "cor4" => BoundKind::Cor4,
            "thm4" => BoundKind::Thm4,
            other => return Err(Error::InvalidParams(format!("unknown bound '{other}'"))),
        })
    }

    pub fn defaults_for(engine: &Engine) -> Vec<BoundKind> {
        match engine {
            Engine::Martingale(_) => vec![BoundKind::Thm1, BoundKind::Cor1, BoundKind::Cor2],
            Engine::Linear { .. } => vec![BoundKind::Thm3, BoundKind::Cor4],
            Engine::Sgd { .. } => vec![BoundKind::Thm4],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub id: String,
    pub engine: Engine,
    pub standardization: Standardization,
    pub h: TestFunction,
    pub bounds: Vec<BoundKind>,
    /// `None` derives constants spectrally, calibrated on the default grid
    /// plus the experiment horizon.
    pub constants: Option<BoundConstants>,
    pub c2: f64,
    pub checkpoints: Vec<usize>,
    pub execution: Execution,
}

impl ExperimentSpec {
    pub fn new(id: &str, engine: Engine, h: TestFunction) -> Self {
        ExperimentSpec {
            id: id.to_string(),
            standardization: Standardization::default_for(&engine),
            bounds: BoundKind::defaults_for(&engine),
            engine,
            h,
            constants: None,
            c2: DEFAULT_C2,
            checkpoints: vec![],
            execution: Execution::Parallel,
        }
    }
}

/// `(j, E|Delta_j|^2, stderr)`.
pub type CheckpointMoment = (usize, f64, f64);

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscrepancyReport {
    pub experiment: String,
    pub engine: &'static str,
    pub dim: usize,
    pub t_or_n: usize,
    pub function: String,
    pub replications: usize,
    pub divergences: usize,
    pub empirical_mean_h: f64,
    pub reference_mean_h: f64,
    pub gap: f64,
    pub gap_stderr: f64,
    /// `E|h(standardized) - h(coupled reference)|` when the noise is Gaussian.
    pub coupled_gap: Option<(f64, f64)>,
    /// Bound totals by name.
    pub bounds: BTreeMap<String, f64>,
    /// Monte Carlo standard errors of estimated bounds.
    pub bound_stderr: BTreeMap<String, f64>,
    /// Itemized terms and diagnostics (`thm3.first`, `p1_dev`, ...).
    pub terms: BTreeMap<String, f64>,
    /// Bound name -> `gap <= bound + 3 gap_stderr`.
    pub certifications: BTreeMap<String, bool>,
    pub certified: bool,
    pub checkpoints: Vec<CheckpointMoment>,
    pub seed: u64,
    pub runtime_secs: f64,
}

/// Certification slack in standard errors.
pub const SLACK_SIGMAS: f64 = 3.0;

impl DiscrepancyReport {
    fn certify(&mut self) {
        self.certifications = self.bounds.iter().map(|(k, &b)| (k.clone(), self.gap <= b + SLACK_SIGMAS * self.gap_stderr)).collect();
        self.certified = self.certifications.values().all(|&c| c);
    }

    /// Smallest attached bound.
    pub fn min_bound(&self) -> Option<f64> {
        self.bounds.values().copied().reduce(f64::min)
    }
}

struct Measured {
    h_values: Vec<f64>,
    coupled: Option<Vec<f64>>,
    extra_h: Option<Vec<f64>>,
}

fn apply(m: &DMatrix<f64>, x: &DVector<f64>) -> Vec<f64> {
    (m * x).as_slice().to_vec()
}

/// Runs `R` summary-recorded replications; divergent ones are dropped and
/// counted.
#[allow(clippy::too_many_arguments)]
pub fn simulate_replications(
    problem: &SgdProblem,
    schedule: &StepSchedule,
    theta0: &DVector<f64>,
    horizon: usize,
    reps: usize,
    seed: u64,
    exec: Execution,
    opts: &RunOptions,
) -> Result<(Vec<Trajectory>, usize)> {
    let runs = map_reps(exec, reps, seed, |_, i| run_replication(problem, schedule, theta0, horizon, seed, i as u64, Record::Summary, opts));
    let mut ok = Vec::with_capacity(reps);
    let mut diverged = 0;
    for r in runs {
        match r {
            Ok(t) => ok.push(t),
            Err(Error::DivergenceDetected { .. }) => diverged += 1,
            Err(e) => return Err(e),
        }
    }
    if ok.is_empty() {
        return Err(Error::DivergenceDetected { step: horizon, norm: f64::INFINITY });
    }
    Ok((ok, diverged))
}

/// Measures the discrepancy named by `spec` over `reps` replications.
pub fn empirical_discrepancy(spec: &ExperimentSpec, reps: usize, seed: u64) -> Result<DiscrepancyReport> {
    let start = Instant::now();
    if reps < 2 {
        return Err(Error::InsufficientReplications(reps));
    }
    let d = spec.engine.dim();
    if spec.h.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: spec.h.dim() });
    }
    let mut report = DiscrepancyReport {
        experiment: spec.id.clone(),
        engine: spec.engine.name(),
        dim: d,
        t_or_n: spec.engine.horizon(),
        function: spec.h.name().to_string(),
        replications: reps,
        divergences: 0,
        empirical_mean_h: f64::NAN,
        reference_mean_h: f64::NAN,
        gap: f64::NAN,
        gap_stderr: f64::NAN,
        coupled_gap: None,
        bounds: BTreeMap::new(),
        bound_stderr: BTreeMap::new(),
        terms: BTreeMap::new(),
        certifications: BTreeMap::new(),
        certified: false,
        checkpoints: vec![],
        seed,
        runtime_secs: 0.0,
    };
    match &spec.engine {
        Engine::Martingale(model) => martingale_experiment(spec, model, reps, seed, &mut report)?,
        Engine::Linear { problem, schedule, theta0, horizon } | Engine::Sgd { problem, schedule, theta0, horizon } => {
            iteration_experiment(spec, problem, schedule, theta0, *horizon, reps, seed, &mut report)?
        }
    }
    report.certify();
    report.runtime_secs = start.elapsed().as_secs_f64();
    Ok(report)
}

fn finish_gap(report: &mut DiscrepancyReport, m: &Measured, reference: (f64, f64)) {
    let est = MeanEstimate::from_samples(&m.h_values);
    report.empirical_mean_h = est.mean;
    report.reference_mean_h = reference.0;
    report.gap = (est.mean - reference.0).abs();
    report.gap_stderr = (est.stderr * est.stderr + reference.1 * reference.1).sqrt();
    if let Some(c) = &m.coupled {
        let e = MeanEstimate::from_samples(c);
        report.coupled_gap = Some((e.mean, e.stderr));
    }
}

fn martingale_experiment(spec: &ExperimentSpec, model: &MartingaleModel, reps: usize, seed: u64, report: &mut DiscrepancyReport) -> Result<()> {
    if spec.standardization != Standardization::SigmaSum {
        return Err(Error::InvalidParams("martingale experiments standardize by Sigma^{-1/2}".into()));
    }
    let d = model.dim();
    let n = model.horizon();
    let stats = path_statistics(model, &spec.h, reps, seed, spec.execution)?;
    let reference = reference_auto(&spec.h, &vec![0.0; d], &SpdMatrix::identity(d), seed)?;
    let m = Measured { h_values: stats.iter().map(|s| s.h_value).collect(), coupled: None, extra_h: None };
    finish_gap(report, &m, reference);
    let ledger = covariance_ledger(model)?;
    let c = model.constants();
    for b in &spec.bounds {
        match b {
            BoundKind::Thm1 => {
                let t1 = thm1_from_stats(thm1_prefactor_for(model, &spec.h)?, &stats);
                report.bounds.insert("thm1".into(), t1.value);
                report.bound_stderr.insert("thm1".into(), t1.stderr);
                report.terms.insert("thm1.proof_form".into(), t1.proof_form_value);
            }
            BoundKind::Cor1 => {
                report.bounds.insert("cor1".into(), cor1_bound(c.alpha, c.beta, c.gamma, d, n, spec.h.m2())?);
            }
            BoundKind::Cor2 => {
                if let Some(m1) = spec.h.m1() {
                    report.bounds.insert("cor2".into(), cor2_bound(m1, spec.h.m2(), &ledger.sigma, c.beta3, c.delta, d, n)?);
                }
            }
            other => return Err(Error::InvalidParams(format!("bound {} does not apply to martingale experiments", other.name()))),
        }
    }
    let p1 = realized_p1(model, reps.min(1000), seed);
    report.terms.insert("p1_dev".into(), p1_deviation(&p1, &ledger.sigma)?);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn iteration_experiment(
    spec: &ExperimentSpec,
    problem: &SgdProblem,
    schedule: &StepSchedule,
    theta0: &DVector<f64>,
    horizon: usize,
    reps: usize,
    seed: u64,
    report: &mut DiscrepancyReport,
) -> Result<()> {
    let d = problem.dim();
    if matches!(spec.engine, Engine::Linear { .. }) && problem.l_h() != 0.0 {
        return Err(Error::InvalidParams("linear engine needs a quadratic problem".into()));
    }
    let opts = RunOptions { checkpoints: spec.checkpoints.clone() };
    let (trajs, diverged) = simulate_replications(problem, schedule, theta0, horizon, reps, seed, spec.execution, &opts)?;
    report.divergences = diverged;
    report.replications = trajs.len();
    let tf = horizon as f64;
    let hess = problem.hessian_at_min();
    let noise = problem.noise();
    let gaussian = matches!(noise, NoiseModel::Gaussian { .. });
    let zero_d = vec![0.0; d];

    // standardization map, reference law and coupled reference map
    let (std_map, reference, coupled_map): (DMatrix<f64>, (f64, f64), Option<DMatrix<f64>>) = match spec.standardization {
        Standardization::SqrtT => {
            let m = DMatrix::identity(d, d) * tf.sqrt();
            let reference = match noise.covariance() {
                None => (spec.h.value(&zero_d), 0.0),
                Some(v) => reference_auto(&spec.h, &zero_d, &v.congruence(hess.inverse().matrix())?, seed)?,
            };
            let coupled = (gaussian && horizon >= 2).then(|| hess.inverse().matrix() / (tf - 1.0).sqrt());
            (m, reference, coupled)
        }
        Standardization::SigmaT => {
            let v = noise.covariance().ok_or(Error::SingularTail { k: 1 })?;
            let m = v.scale(tf).pow(-0.5).matrix().clone();
            let reference = reference_auto(&spec.h, &zero_d, &SpdMatrix::identity(d), seed)?;
            let coupled = (gaussian && horizon >= 2).then(|| v.pow(-0.5).matrix() / (tf - 1.0).sqrt());
            (m, reference, coupled)
        }
        Standardization::SigmaSum => return Err(Error::InvalidParams("iteration experiments standardize by sqrt(t) or Sigma_t".into())),
    };
    // Rescaled diagnostic for the Sigma_t path: sqrt(t) (H^{-1} V H^{-1})^{-1/2} Delta_bar.
    let rescaled = match (spec.standardization, noise.covariance()) {
        (Standardization::SigmaT, Some(v)) => Some(v.congruence(hess.inverse().matrix())?.pow(-0.5).matrix() * tf.sqrt()),
        _ => None,
    };
    let mut m = Measured { h_values: Vec::with_capacity(trajs.len()), coupled: coupled_map.as_ref().map(|_| Vec::new()), extra_h: rescaled.as_ref().map(|_| Vec::new()) };
    for tr in &trajs {
        let x = apply(&std_map, &tr.delta_bar);
        let hx = spec.h.value(&x);
        m.h_values.push(hx);
        if let (Some(cm), Some(out)) = (&coupled_map, m.coupled.as_mut()) {
            out.push((hx - spec.h.value(&apply(cm, &tr.noise_sum))).abs());
        }
        if let (Some(rm), Some(out)) = (&rescaled, m.extra_h.as_mut()) {
            out.push(spec.h.value(&apply(rm, &tr.delta_bar)));
        }
    }
    finish_gap(report, &m, reference);
    if let Some(extra) = &m.extra_h {
        let e = MeanEstimate::from_samples(extra);
        let r = reference_auto(&spec.h, &zero_d, &SpdMatrix::identity(d), seed)?;
        report.terms.insert("gap_rescaled".into(), (e.mean - r.0).abs());
        report.terms.insert("gap_rescaled_stderr".into(), e.stderr);
    }
    if !spec.checkpoints.is_empty() {
        let mut by_j: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for tr in &trajs {
            for &(j, v) in &tr.checkpoint_sq_norms {
                by_j.entry(j).or_default().push(v);
            }
        }
        report.checkpoints = by_j
            .into_iter()
            .map(|(j, v)| {
                let e = MeanEstimate::from_samples(&v);
                (j, e.mean, e.stderr)
            })
            .collect();
    }

    let delta0 = Delta0Moments::deterministic((theta0 - problem.theta_star()).norm());
    let consts = || -> Result<BoundConstants> {
        match &spec.constants {
            Some(c) => Ok(c.clone()),
            None => calibrated_constants(problem, schedule, horizon, spec.c2),
        }
    };
    for b in &spec.bounds {
        match b {
            BoundKind::Thm3 => {
                if spec.standardization != Standardization::SqrtT {
                    return Err(Error::InvalidParams("linear-iteration bounds apply to the sqrt(t)-standardized average".into()));
                }
                if problem.l_h() != 0.0 {
                    return Err(Error::InvalidParams("linear-iteration bounds need a quadratic problem".into()));
                }
                let c = consts()?;
                let t3 = thm3_bound(hess, noise, schedule, horizon, &spec.h, &linear_third_moment(problem, seed)?, &delta0, &c)?;
                report.bounds.insert("thm3".into(), t3.total);
                for (k, v) in [
                    ("first", t3.first),
                    ("second", t3.second),
                    ("third", t3.third),
                    ("rho", t3.rho),
                    ("rho_variant", t3.rho_variant),
                    ("third_moment", t3.third_moment),
                    ("k2", c.k2),
                    ("c_prime", c.c_prime),
                ] {
                    report.terms.insert(format!("thm3.{k}"), v);
                }
            }
            BoundKind::Cor4 => {
                if spec.standardization != Standardization::SqrtT {
                    return Err(Error::InvalidParams("linear-iteration bounds apply to the sqrt(t)-standardized average".into()));
                }
                let c = consts()?;
                let (c4, k4, k5) = cor4_for(problem, schedule, horizon, &spec.h, &delta0, &c, seed)?;
                report.bounds.insert("cor4".into(), c4.total);
                for (k, v) in [("first", c4.first), ("second", c4.second), ("third", c4.third), ("k4", k4), ("k5", k5)] {
                    report.terms.insert(format!("cor4.{k}"), v);
                }
            }
            BoundKind::Thm4 => {
                if spec.standardization != Standardization::SigmaT {
                    return Err(Error::InvalidParams("thm4 bounds the Sigma_t-standardized average; set standardization to sigma_t".into()));
                }
                let c = consts()?;
                let t4 = thm4_bound(problem, schedule, horizon, &spec.h, &delta0, &c, reps.max(2), seed)?;
                report.bounds.insert("thm4".into(), t4.total);
                report.bound_stderr.insert("thm4".into(), t4.first_stderr);
                for (k, v) in [
                    ("first", t4.first),
                    ("second", t4.second),
                    ("second_lh", t4.second_lh),
                    ("third", t4.third),
                    ("third_lh", t4.third_lh),
                    ("rho", t4.rho),
                    ("rho_variant", t4.rho_variant),
                ] {
                    report.terms.insert(format!("thm4.{k}"), v);
                }
            }
            other => return Err(Error::InvalidParams(format!("bound {} does not apply to iteration experiments", other.name()))),
        }
    }
    Ok(())
}

/// Spectral constants calibrated on the default horizons plus `t`.
pub fn calibrated_constants(problem: &SgdProblem, schedule: &StepSchedule, t: usize, c2: f64) -> Result<BoundConstants> {
    let mut grid: Vec<usize> = DEFAULT_CALIBRATION.to_vec();
    grid.push(t);
    grid.sort_unstable();
    grid.dedup();
    spectral_constants_on(problem.hessian_at_min(), schedule, &grid, c2)
}

/// `E|(A^{-1}VA^{-1})^{-1/2} zeta|^3` for a quadratic problem.
pub fn linear_third_moment(problem: &SgdProblem, seed: u64) -> Result<ThirdMoment> {
    let noise = problem.noise();
    match sandwich_inv_sqrt(problem.hessian_at_min(), noise)? {
        None => noise_third_moment(noise, &DMatrix::identity(problem.dim(), problem.dim()), 0, seed),
        Some(g) => noise_third_moment(noise, &g, 1_000_000, seed),
    }
}

/// Dimension-explicit linear bound with `K4`, `K5` fitted from the itemized
/// bound over the calibration horizons and `t`.
#[allow(clippy::too_many_arguments)]
pub fn cor4_for(
    problem: &SgdProblem,
    schedule: &StepSchedule,
    t: usize,
    h: &TestFunction,
    delta0: &Delta0Moments,
    consts: &BoundConstants,
    seed: u64,
) -> Result<(Cor4Terms, f64, f64)> {
    if problem.l_h() != 0.0 {
        return Err(Error::InvalidParams("linear-iteration bounds need a quadratic problem".into()));
    }
    let d = problem.dim();
    let hess = problem.hessian_at_min();
    let noise = problem.noise();
    let v = noise.covariance().ok_or(Error::InvalidMoment("cor4 needs nonzero noise".into()))?;
    let sw = v.congruence(hess.inverse().matrix())?;
    let gamma = noise_third_moment(noise, &DMatrix::identity(d, d), 1_000_000, seed)?.value / (d as f64).powf(1.5);
    let third = linear_third_moment(problem, seed)?;
    let mut grid: Vec<usize> = DEFAULT_CALIBRATION.to_vec();
    grid.push(t);
    grid.sort_unstable();
    grid.dedup();
    let mut fits = Vec::new();
    for &s in &grid {
        fits.push((s, thm3_bound(hess, noise, schedule, s, h, &third, delta0, consts)?));
    }
    let (k4, k5) = fit_cor4_constants(&fits, d, h)?;
    let c4 = cor4_bound(sw.lambda_min(), sw.lambda_max(), gamma, d, t, h, k4, k5)?;
    Ok((c4, k4, k5))
}

/// Linear-iteration catalog: `lin1` (`A = 1`, `V = 1`) and `lin2`
/// (`A = diag(1, 2)`, `V = I`), Gaussian noise.
pub fn linear_catalog() -> Vec<(&'static str, SgdProblem)> {
    let p1 = SgdProblem::quadratic(SpdMatrix::identity(1), DVector::zeros(1), NoiseModel::gaussian(SpdMatrix::identity(1))).expect("valid");
    let a2 = SpdMatrix::diagonal(&[1.0, 2.0]).expect("valid");
    let p2 = SgdProblem::quadratic(a2, DVector::from_vec(vec![1.0, -1.0]), NoiseModel::gaussian(SpdMatrix::identity(2))).expect("valid");
    vec![("lin1", p1), ("lin2", p2)]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_functions::catalog_function;

    #[test]
    fn degenerate_linear_run_has_exact_zero_gap() {
        let p = SgdProblem::quadratic(SpdMatrix::identity(2), DVector::zeros(2), NoiseModel::zero(2)).unwrap();
        let engine = Engine::Linear { problem: p, schedule: StepSchedule::new(0.5, 0.6).unwrap(), theta0: DVector::zeros(2), horizon: 50 };
        let mut spec = ExperimentSpec::new("zero", engine, catalog_function("cos", 2).unwrap());
        spec.bounds = vec![BoundKind::Thm3];
        let r = empirical_discrepancy(&spec, 10, 1).unwrap();
        assert_eq!(r.gap, 0.0);
        assert_eq!(r.gap_stderr, 0.0);
        assert_eq!(r.bounds["thm3"], 0.0);
        assert!(r.certified);
    }

    #[test]
    fn martingale_report_matches_oracle_scale() {
        let m = MartingaleModel::iid_rademacher(1, 2).unwrap();
        let spec = ExperimentSpec::new("m2", Engine::Martingale(m), catalog_function("cos", 1).unwrap());
        let r = empirical_discrepancy(&spec, 20_000, 3).unwrap();
        assert!((r.gap - 0.0286).abs() < 4.0 * r.gap_stderr + 1e-3);
        assert!(r.certified);
        assert_eq!(r.terms["p1_dev"], 0.0);
    }
}
