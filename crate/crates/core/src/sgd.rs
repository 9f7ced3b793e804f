//! The linear stochastic iteration and stochastic gradient descent with
//! Polyak-Ruppert averaging, tracked in residual form `Delta_t = theta_t - theta*`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::SpdMatrix;
use crate::montecarlo::{seed_stream, StreamRng};

/// Residual norm beyond which a run is declared divergent.
pub const DIVERGENCE_NORM: f64 = 1e8;

/// `eta_t = eta0 t^{-c3}` for `t >= 1`; index 0 carries the base step `eta0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepSchedule {
    eta0: f64,
    c3: f64,
}

impl StepSchedule {
    pub fn new(eta0: f64, c3: f64) -> Result<Self> {
        if !(eta0 > 0.0) || !eta0.is_finite() {
            return Err(Error::InvalidParams(format!("eta0 must be positive, got {eta0}")));
        }
        if !(c3 > 0.0 && c3 < 1.0) {
            return Err(Error::InvalidParams(format!("c3 must lie in (0,1), got {c3}")));
        }
        Ok(StepSchedule { eta0, c3 })
    }

    /// Constant step `eta` (exponent 0).
    pub fn constant(eta: f64) -> Result<Self> {
        if !(eta > 0.0) || !eta.is_finite() {
            return Err(Error::InvalidParams(format!("eta must be positive, got {eta}")));
        }
        Ok(StepSchedule { eta0: eta, c3: 0.0 })
    }

    pub fn eta0(&self) -> f64 {
        self.eta0
    }

    pub fn c3(&self) -> f64 {
        self.c3
    }

    pub fn is_constant(&self) -> bool {
        self.c3 == 0.0
    }

    pub fn eta(&self, t: usize) -> f64 {
        if t == 0 || self.c3 == 0.0 {
            self.eta0
        } else {
            self.eta0 * (t as f64).powf(-self.c3)
        }
    }

    /// `S[k] = sum_{i=1}^k eta_i` for `k = 0..=t`.
    pub fn prefix_sums(&self, t: usize) -> Vec<f64> {
        let mut s = Vec::with_capacity(t + 1);
        let mut acc = 0.0;
        s.push(0.0);
        for k in 1..=t {
            acc += self.eta(k);
            s.push(acc);
        }
        s
    }
}

/// `m_j^i = sum_{k=j}^i eta_k`.
pub fn schedule_partial_sums(schedule: &StepSchedule, j: usize, i: usize) -> Result<f64> {
    if j < 1 || j > i {
        return Err(Error::IndexOrder { j, i });
    }
    Ok((j..=i).map(|k| schedule.eta(k)).sum())
}

#[derive(Debug, Clone, PartialEq)]
pub enum NoiseModel {
    Zero { dim: usize },
    /// `zeta = V^{1/2} xi`, `xi ~ N(0, I)`.
    Gaussian { cov: SpdMatrix, root: DMatrix<f64> },
    /// `zeta = V^{1/2} epsilon` with Rademacher signs.
    ScaledRademacher { cov: SpdMatrix, root: DMatrix<f64> },
}

impl NoiseModel {
    pub fn zero(dim: usize) -> Self {
        NoiseModel::Zero { dim }
    }

    pub fn gaussian(cov: SpdMatrix) -> Self {
        let root = cov.pow(0.5).matrix().clone();
        NoiseModel::Gaussian { cov, root }
    }

    pub fn scaled_rademacher(cov: SpdMatrix) -> Self {
        let root = cov.pow(0.5).matrix().clone();
        NoiseModel::ScaledRademacher { cov, root }
    }

    pub fn name(&self) -> &'static str {
        match self {
            NoiseModel::Zero { .. } => "zero",
            NoiseModel::Gaussian { .. } => "gaussian",
            NoiseModel::ScaledRademacher { .. } => "scaled_rademacher",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            NoiseModel::Zero { dim } => *dim,
            NoiseModel::Gaussian { cov, .. } | NoiseModel::ScaledRademacher { cov, .. } => cov.dim(),
        }
    }

    /// `V`, or `None` for the zero model.
    pub fn covariance(&self) -> Option<&SpdMatrix> {
        match self {
            NoiseModel::Zero { .. } => None,
            NoiseModel::Gaussian { cov, .. } | NoiseModel::ScaledRademacher { cov, .. } => Some(cov),
        }
    }

    /// `K_d = Tr V`, the conditional second-moment bound.
    pub fn trace(&self) -> f64 {
        self.covariance().map_or(0.0, |c| c.trace())
    }

    pub fn sample(&self, rng: &mut StreamRng, z: &mut [f64], out: &mut [f64]) {
        let d = out.len();
        match self {
            NoiseModel::Zero { .. } => out.iter_mut().for_each(|v| *v = 0.0),
            NoiseModel::Gaussian { root, .. } | NoiseModel::ScaledRademacher { root, .. } => {
                if matches!(self, NoiseModel::Gaussian { .. }) {
                    z.iter_mut().for_each(|v| *v = StandardNormal.sample(rng));
                } else {
                    z.iter_mut().for_each(|v| *v = if rng.random::<bool>() { 1.0 } else { -1.0 });
                }
                for i in 0..d {
                    out[i] = (0..d).map(|j| root[(i, j)] * z[j]).sum();
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Objective {
    /// `f(theta) = theta^T A theta / 2 - b^T theta`.
    Quadratic { a: SpdMatrix, b: DVector<f64> },
    /// `f(theta) = (1/m) sum log cosh(a_i^T theta - y_i) + (mu0/2) |theta|^2`.
    LogcoshRidge { rows: DMatrix<f64>, y: DVector<f64>, mu0: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SgdProblem {
    objective: Objective,
    mu: f64,
    l: f64,
    l_h: f64,
    theta_star: DVector<f64>,
    hessian_at_min: SpdMatrix,
    noise: NoiseModel,
}

/// Largest absolute third derivative of `log cosh`, `4 / (3 sqrt 3)`.
pub const LOGCOSH_THIRD: f64 = 0.769_800_358_919_501;

impl SgdProblem {
    pub fn quadratic(a: SpdMatrix, b: DVector<f64>, noise: NoiseModel) -> Result<Self> {
        let d = a.dim();
        if b.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: b.len() });
        }
        if noise.dim() != d {
            return Err(Error::DimensionMismatch { expected: d, got: noise.dim() });
        }
        let theta_star = a.inverse().matrix() * &b;
        Ok(SgdProblem {
            mu: a.lambda_min(),
            l: a.lambda_max(),
            l_h: 0.0,
            theta_star,
            hessian_at_min: a.clone(),
            objective: Objective::Quadratic { a, b },
            noise,
        })
    }

    /// Regularized log-cosh regression; the minimizer is computed here by
    /// full-gradient descent to gradient norm `1e-12`.
    pub fn logcosh_ridge(rows: DMatrix<f64>, y: DVector<f64>, mu0: f64, noise: NoiseModel) -> Result<Self> {
        let (m, d) = rows.shape();
        if m == 0 || y.len() != m {
            return Err(Error::DimensionMismatch { expected: m, got: y.len() });
        }
        if !(mu0 > 0.0) {
            return Err(Error::InvalidParams("ridge mu0 must be positive".into()));
        }
        if noise.dim() != d {
            return Err(Error::DimensionMismatch { expected: d, got: noise.dim() });
        }
        let gram = SpdMatrix::new(rows.transpose() * &rows / m as f64 + DMatrix::identity(d, d) * mu0)?;
        let l = gram.lambda_max();
        let l_h = LOGCOSH_THIRD * rows.row_iter().map(|r| r.norm().powi(3)).sum::<f64>() / m as f64;
        let objective = Objective::LogcoshRidge { rows, y, mu0 };
        let mut p = SgdProblem {
            objective,
            mu: mu0,
            l,
            l_h,
            theta_star: DVector::zeros(d),
            hessian_at_min: SpdMatrix::identity(d),
            noise,
        };
        let mut theta = DVector::zeros(d);
        let mut converged = false;
        for _ in 0..1_000_000 {
            let g = p.gradient(&theta);
            if g.norm() <= 1e-12 {
                converged = true;
                break;
            }
            theta -= g / l;
        }
        if !converged {
            return Err(Error::InvalidParams("minimizer search did not reach gradient norm 1e-12".into()));
        }
        p.hessian_at_min = p.hessian(&theta)?;
        p.theta_star = theta;
        Ok(p)
    }

    /// Catalog instance: 12 fixed design rows in `R^2`, `mu0 = 0.5`.
    pub fn logcosh_default(noise: NoiseModel) -> Result<Self> {
        let m = 12;
        let rows = DMatrix::from_fn(m, 2, |i, j| {
            let ang = 2.0 * std::f64::consts::PI * i as f64 / m as f64;
            let r = 0.5 + 0.5 * (i % 3) as f64;
            if j == 0 {
                r * ang.cos()
            } else {
                r * ang.sin()
            }
        });
        let y = DVector::from_fn(m, |i, _| (1.3 * i as f64).sin());
        Self::logcosh_ridge(rows, y, 0.5, noise)
    }

    pub fn dim(&self) -> usize {
        self.theta_star.len()
    }

    pub fn objective(&self) -> &Objective {
        &self.objective
    }

    pub fn kind_name(&self) -> &'static str {
        match self.objective {
            Objective::Quadratic { .. } => "quadratic",
            Objective::LogcoshRidge { .. } => "logcosh_ridge",
        }
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn l(&self) -> f64 {
        self.l
    }

    pub fn l_h(&self) -> f64 {
        self.l_h
    }

    pub fn theta_star(&self) -> &DVector<f64> {
        &self.theta_star
    }

    pub fn hessian_at_min(&self) -> &SpdMatrix {
        &self.hessian_at_min
    }

    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    pub fn with_noise(mut self, noise: NoiseModel) -> Result<Self> {
        if noise.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: noise.dim() });
        }
        self.noise = noise;
        Ok(self)
    }

    pub fn value(&self, theta: &DVector<f64>) -> f64 {
        match &self.objective {
            Objective::Quadratic { a, b } => 0.5 * theta.dot(&(a.matrix() * theta)) - b.dot(theta),
            Objective::LogcoshRidge { rows, y, mu0 } => {
                let r = rows * theta - y;
                r.iter().map(|v| v.cosh().ln()).sum::<f64>() / rows.nrows() as f64 + 0.5 * mu0 * theta.norm_squared()
            }
        }
    }

    pub fn gradient(&self, theta: &DVector<f64>) -> DVector<f64> {
        match &self.objective {
            Objective::Quadratic { a, b } => a.matrix() * theta - b,
            Objective::LogcoshRidge { rows, y, mu0 } => {
                let r = (rows * theta - y).map(f64::tanh);
                rows.transpose() * r / rows.nrows() as f64 + theta * *mu0
            }
        }
    }

    pub fn hessian(&self, theta: &DVector<f64>) -> Result<SpdMatrix> {
        match &self.objective {
            Objective::Quadratic { a, .. } => Ok(a.clone()),
            Objective::LogcoshRidge { rows, y, mu0 } => {
                let d = theta.len();
                let r = rows * theta - y;
                let mut h = DMatrix::identity(d, d) * *mu0;
                for (i, row) in rows.row_iter().enumerate() {
                    let s = 1.0 / r[i].cosh();
                    h += row.transpose() * row * (s * s / rows.nrows() as f64);
                }
                SpdMatrix::new(h)
            }
        }
    }

    /// `grad f(theta* + delta)` written into `out`; exactly `A delta` for
    /// quadratics.
    fn gradient_at_residual(&self, delta: &[f64], scratch: &mut [f64], out: &mut [f64]) {
        let d = delta.len();
        match &self.objective {
            Objective::Quadratic { a, .. } => {
                let a = a.matrix();
                for i in 0..d {
                    out[i] = (0..d).map(|j| a[(i, j)] * delta[j]).sum();
                }
            }
            Objective::LogcoshRidge { rows, y, mu0 } => {
                for i in 0..d {
                    scratch[i] = self.theta_star[i] + delta[i];
                    out[i] = mu0 * scratch[i];
                }
                let m = rows.nrows();
                for k in 0..m {
                    let mut r = -y[k];
                    for j in 0..d {
                        r += rows[(k, j)] * scratch[j];
                    }
                    let t = r.tanh() / m as f64;
                    for j in 0..d {
                        out[j] += t * rows[(k, j)];
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Record {
    /// Every residual and noise draw.
    Full,
    /// Final residual, average and checkpoint norms only.
    Summary,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunOptions {
    /// Steps `j` at which `|Delta_j|^2` is stored.
    pub checkpoints: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub horizon: usize,
    pub seed: u64,
    pub replication: u64,
    /// `Delta_0..Delta_t` (full record only).
    pub residuals: Option<Vec<DVector<f64>>>,
    /// `zeta_1..zeta_t` (full record only).
    pub noises: Option<Vec<DVector<f64>>>,
    pub delta0: DVector<f64>,
    pub delta_final: DVector<f64>,
    /// Running accumulator `(1/t) sum_{i=0}^{t-1} Delta_i`.
    pub delta_bar: DVector<f64>,
    /// `sum_{j=1}^{t-1} zeta_j`.
    pub noise_sum: DVector<f64>,
    /// `(j, |Delta_j|^2)` at the requested checkpoints.
    pub checkpoint_sq_norms: Vec<(usize, f64)>,
    /// `eta_1 lambda_max >= 1` (run_linear warns rather than fails).
    pub step_warning: bool,
}

impl Trajectory {
    /// `theta_bar_t = theta* + Delta_bar_t`.
    pub fn theta_bar(&self, theta_star: &DVector<f64>) -> DVector<f64> {
        theta_star + &self.delta_bar
    }

    /// Average recomputed from the stored residuals.
    pub fn recomputed_average(&self) -> Option<DVector<f64>> {
        let res = self.residuals.as_ref()?;
        let t = self.horizon;
        let mut acc = DVector::zeros(self.delta0.len());
        for r in &res[..t] {
            acc += r;
        }
        Some(acc / t as f64)
    }
}

fn simulate(
    problem: &SgdProblem,
    schedule: &StepSchedule,
    delta0: &DVector<f64>,
    horizon: usize,
    rng: &mut StreamRng,
    record: Record,
    opts: &RunOptions,
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>, Option<Vec<DVector<f64>>>, Option<Vec<DVector<f64>>>, Vec<(usize, f64)>)> {
    let d = delta0.len();
    if horizon == 0 {
        return Err(Error::InvalidParams("horizon must be positive".into()));
    }
    let noise = problem.noise();
    let mut delta = delta0.as_slice().to_vec();
    let mut sum = vec![0.0; d];
    let mut nsum = vec![0.0; d];
    let mut grad = vec![0.0; d];
    let mut zeta = vec![0.0; d];
    let mut z = vec![0.0; d];
    let mut scratch = vec![0.0; d];
    let full = record == Record::Full;
    let mut residuals = full.then(|| vec![delta0.clone()]);
    let mut noises = full.then(Vec::new);
    let mut checkpoints = Vec::new();
    let mut next_cp = opts.checkpoints.iter().copied().filter(|&c| c <= horizon).collect::<Vec<_>>();
    next_cp.sort_unstable();
    next_cp.dedup();
    let mut cp_idx = 0;
    if cp_idx < next_cp.len() && next_cp[cp_idx] == 0 {
        checkpoints.push((0, delta.iter().map(|v| v * v).sum()));
        cp_idx += 1;
    }
    for t in 1..=horizon {
        for i in 0..d {
            sum[i] += delta[i];
        }
        let eta = schedule.eta(t);
        noise.sample(rng, &mut z, &mut zeta);
        problem.gradient_at_residual(&delta, &mut scratch, &mut grad);
        let mut nrm2 = 0.0;
        for i in 0..d {
            delta[i] -= eta * (grad[i] + zeta[i]);
            nrm2 += delta[i] * delta[i];
        }
        if t < horizon {
            for i in 0..d {
                nsum[i] += zeta[i];
            }
        }
        if !(nrm2.sqrt() <= DIVERGENCE_NORM) {
            return Err(Error::DivergenceDetected { step: t, norm: nrm2.sqrt() });
        }
        if cp_idx < next_cp.len() && next_cp[cp_idx] == t {
            checkpoints.push((t, nrm2));
            cp_idx += 1;
        }
        if let Some(r) = residuals.as_mut() {
            r.push(DVector::from_column_slice(&delta));
        }
        if let Some(n) = noises.as_mut() {
            n.push(DVector::from_column_slice(&zeta));
        }
    }
    let bar = sum.iter().map(|s| s / horizon as f64).collect();
    Ok((delta, bar, nsum, residuals, noises, checkpoints))
}

fn trajectory(
    problem: &SgdProblem,
    schedule: &StepSchedule,
    delta0: DVector<f64>,
    horizon: usize,
    seed: u64,
    replication: u64,
    record: Record,
    opts: &RunOptions,
) -> Result<Trajectory> {
    let mut rng = seed_stream(seed, replication);
    let (last, bar, nsum, residuals, noises, checkpoint_sq_norms) = simulate(problem, schedule, &delta0, horizon, &mut rng, record, opts)?;
    let step_warning = schedule.eta(1) * problem.hessian_at_min().lambda_max() >= 1.0;
    Ok(Trajectory {
        horizon,
        seed,
        replication,
        residuals,
        noises,
        delta0,
        delta_final: DVector::from_vec(last),
        delta_bar: DVector::from_vec(bar),
        noise_sum: DVector::from_vec(nsum),
        checkpoint_sq_norms,
        step_warning,
    })
}

/// `theta_t = theta_{t-1} - eta_t (A theta_{t-1} - b + zeta_t)` from stream
/// `(seed, 0)`.
#[allow(clippy::too_many_arguments)]
pub fn run_linear(a: &SpdMatrix, b: &DVector<f64>, schedule: &StepSchedule, theta0: &DVector<f64>, horizon: usize, noise: &NoiseModel, seed: u64) -> Result<Trajectory> {
    let problem = SgdProblem::quadratic(a.clone(), b.clone(), noise.clone())?;
    run_sgd(&problem, schedule, theta0, horizon, seed)
}

/// `theta_t = theta_{t-1} - eta_t (grad f(theta_{t-1}) + zeta_t)` from stream
/// `(seed, 0)`, full record.
pub fn run_sgd(problem: &SgdProblem, schedule: &StepSchedule, theta0: &DVector<f64>, horizon: usize, seed: u64) -> Result<Trajectory> {
    run_replication(problem, schedule, theta0, horizon, seed, 0, Record::Full, &RunOptions::default())
}

/// One replication on stream `(seed, replication)`.
#[allow(clippy::too_many_arguments)]
pub fn run_replication(
    problem: &SgdProblem,
    schedule: &StepSchedule,
    theta0: &DVector<f64>,
    horizon: usize,
    seed: u64,
    replication: u64,
    record: Record,
    opts: &RunOptions,
) -> Result<Trajectory> {
    if theta0.len() != problem.dim() {
        return Err(Error::DimensionMismatch { expected: problem.dim(), got: theta0.len() });
    }
    let delta0 = theta0 - problem.theta_star();
    trajectory(problem, schedule, delta0, horizon, seed, replication, record, opts)
}

/// Martingale increments of the averaged iteration. Under additive noise the
/// conditional-mean gradient term cancels and `X_k = -zeta_k`.
pub fn martingale_part(_problem: &SgdProblem, trajectory: &Trajectory) -> Result<Vec<DVector<f64>>> {
    let noises = trajectory
        .noises
        .as_ref()
        .ok_or_else(|| Error::InvalidParams("trajectory was recorded without noise draws".into()))?;
    Ok(noises.iter().map(|z| -z).collect())
}

/// Smallest `C` with `E|Delta_j|^2 <= (2C/mu) eta_j` on the fitting
/// checkpoints, and whether the envelope (with `slack` standard errors)
/// holds on every checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvelopeFit {
    pub c: f64,
    pub holds: bool,
    /// `(j, E|Delta_j|^2, stderr, envelope)`.
    pub rows: Vec<(usize, f64, f64, f64)>,
}

pub fn fit_envelope(points: &[(usize, f64, f64)], schedule: &StepSchedule, mu: f64, fit_upto: usize, slack: f64) -> EnvelopeFit {
    let c = points
        .iter()
        .filter(|p| p.0 >= 1 && p.0 <= fit_upto)
        .map(|&(j, m, _)| mu * m / (2.0 * schedule.eta(j)))
        .fold(0.0, f64::max);
    let rows: Vec<_> = points.iter().map(|&(j, m, se)| (j, m, se, 2.0 * c / mu * schedule.eta(j))).collect();
    let holds = rows.iter().all(|&(_, m, se, env)| m <= env + slack * se);
    EnvelopeFit { c, holds, rows }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn partial_sums() {
        let s = StepSchedule::constant(0.1).unwrap();
        assert_relative_eq!(schedule_partial_sums(&s, 1, 10).unwrap(), 1.0, epsilon = 1e-14);
        let s = StepSchedule::new(1.0, 0.5).unwrap();
        assert_eq!(schedule_partial_sums(&s, 3, 3).unwrap(), s.eta(3));
        let want = 1.0 + 2f64.powf(-0.5) + 3f64.powf(-0.5) + 0.5;
        assert_relative_eq!(schedule_partial_sums(&s, 1, 4).unwrap(), want, epsilon = 1e-14);
        assert_relative_eq!(want, 2.7845, epsilon = 1e-4);
        assert!(matches!(schedule_partial_sums(&s, 3, 2), Err(Error::IndexOrder { j: 3, i: 2 })));
        assert!(matches!(schedule_partial_sums(&s, 0, 2), Err(Error::IndexOrder { .. })));
    }

    #[test]
    fn schedule_validation() {
        assert!(StepSchedule::new(0.5, 1.5).is_err());
        assert!(StepSchedule::new(0.5, 0.0).is_err());
        assert!(StepSchedule::new(-1.0, 0.5).is_err());
        let s = StepSchedule::new(0.5, 0.6).unwrap();
        assert_eq!(s.eta(0), 0.5);
        assert!((1..100).all(|t| s.eta(t + 1) < s.eta(t)));
    }

    #[test]
    fn fixed_point_and_geometric_decay() {
        let a = SpdMatrix::identity(1);
        let b = DVector::from_element(1, 0.0);
        let s = StepSchedule::constant(0.3).unwrap();
        let tr = run_linear(&a, &b, &s, &DVector::zeros(1), 50, &NoiseModel::zero(1), 1).unwrap();
        assert!(tr.residuals.as_ref().unwrap().iter().all(|r| r[0] == 0.0));
        let tr = run_linear(&a, &b, &s, &DVector::from_element(1, 2.0), 30, &NoiseModel::zero(1), 1).unwrap();
        for (t, r) in tr.residuals.as_ref().unwrap().iter().enumerate() {
            assert_relative_eq!(r[0], 0.7f64.powi(t as i32) * 2.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn running_average_matches_stored_residuals() {
        let a = SpdMatrix::diagonal(&[1.0, 2.0]).unwrap();
        let noise = NoiseModel::gaussian(SpdMatrix::identity(2));
        let s = StepSchedule::new(0.5, 0.6).unwrap();
        let tr = run_linear(&a, &DVector::from_vec(vec![1.0, -1.0]), &s, &DVector::from_vec(vec![3.0, 3.0]), 500, &noise, 4).unwrap();
        let rec = tr.recomputed_average().unwrap();
        assert!((&rec - &tr.delta_bar).norm() <= 1e-10 * tr.delta_bar.norm());
        let theta_star = a.inverse().matrix() * DVector::from_vec(vec![1.0, -1.0]);
        let iterates: Vec<DVector<f64>> = tr.residuals.as_ref().unwrap().iter().map(|r| r + &theta_star).collect();
        let theta_bar = iterates[..500].iter().fold(DVector::zeros(2), |acc, th| acc + th) / 500.0;
        assert!((theta_bar - &theta_star - &tr.delta_bar).norm() <= 1e-13);
        assert_eq!(tr.theta_bar(&theta_star), &theta_star + &tr.delta_bar);
    }

    #[test]
    fn divergence_is_reported() {
        let a = SpdMatrix::identity(1);
        let s = StepSchedule::constant(3.5).unwrap();
        let err = run_linear(&a, &DVector::zeros(1), &s, &DVector::from_element(1, 1.0), 1000, &NoiseModel::zero(1), 1).unwrap_err();
        assert!(matches!(err, Error::DivergenceDetected { .. }));
    }

    #[test]
    fn logcosh_problem_is_consistent() {
        let p = SgdProblem::logcosh_default(NoiseModel::zero(2)).unwrap();
        assert!(p.gradient(p.theta_star()).norm() <= 1e-12);
        let h = p.hessian_at_min();
        assert!(p.mu() <= h.lambda_min() && h.lambda_max() <= p.l());
        // gradient against central differences
        for probe in [[0.3, -0.7], [1.5, 2.0], [-2.0, 0.1]] {
            let th = DVector::from_column_slice(&probe);
            let g = p.gradient(&th);
            for i in 0..2 {
                let mut e = DVector::zeros(2);
                e[i] = 1e-6;
                let fd = (p.value(&(&th + &e)) - p.value(&(&th - &e))) / 2e-6;
                assert!((fd - g[i]).abs() <= 1e-6 * g.norm().max(1.0));
            }
        }
        assert_relative_eq!(LOGCOSH_THIRD, 4.0 / (3.0 * 3f64.sqrt()), epsilon = 1e-15);
    }

    #[test]
    fn zero_noise_descent_is_monotone() {
        let p = SgdProblem::logcosh_default(NoiseModel::zero(2)).unwrap();
        let s = StepSchedule::new(1.0 / p.l(), 0.5).unwrap();
        let tr = run_sgd(&p, &s, &DVector::from_vec(vec![3.0, -2.0]), 200, 1).unwrap();
        let norms: Vec<f64> = tr.residuals.unwrap().iter().map(|r| r.norm()).collect();
        assert!(norms.windows(2).all(|w| w[1] <= w[0] + 1e-15));
    }

    #[test]
    fn martingale_part_negates_noise() {
        let p = SgdProblem::quadratic(SpdMatrix::identity(1), DVector::zeros(1), NoiseModel::scaled_rademacher(SpdMatrix::identity(1))).unwrap();
        let tr = run_sgd(&p, &StepSchedule::new(0.5, 0.6).unwrap(), &DVector::zeros(1), 100, 3).unwrap();
        let xs = martingale_part(&p, &tr).unwrap();
        assert_eq!(xs.len(), 100);
        assert!(xs.iter().all(|x| x[0].abs() == 1.0));
        let pz = p.clone().with_noise(NoiseModel::zero(1)).unwrap();
        let tr = run_sgd(&pz, &StepSchedule::new(0.5, 0.6).unwrap(), &DVector::zeros(1), 10, 3).unwrap();
        assert!(martingale_part(&pz, &tr).unwrap().iter().all(|x| x[0] == 0.0));
    }
}
