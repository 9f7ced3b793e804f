//! Martingale difference sequences with deterministic conditional
//! covariances, the normal-approximation bounds for their normalized sums,
//! and an exact enumeration oracle for finite-support models.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{norms, op_norm, SpdMatrix};
use crate::montecarlo::{map_reps, reference_expectation, seed_stream, Execution, MeanEstimate, ReferenceMethod, StreamRng};
use crate::test_functions::TestFunction;

pub const THREE_PI_OVER_8: f64 = 3.0 * std::f64::consts::PI / 8.0;
pub const THREE_PI_OVER_4: f64 = 3.0 * std::f64::consts::PI / 4.0;

/// Path-count cap for [`enumerate_oracle`].
pub const ENUMERATION_CAP: u128 = 10_000_000;
pub const DEFAULT_N_MAX: usize = 14;

/// `E |xi|^3` for `xi ~ N(0, I_d)`: `2^{3/2} Gamma((d+3)/2) / Gamma(d/2)`.
pub fn chi_third_moment(d: usize) -> f64 {
    assert!(d > 0);
    // r(d) = Gamma((d+1)/2) / Gamma(d/2), r(d+2) = r(d) (d+1)/d.
    let mut r = if d % 2 == 1 { 1.0 / std::f64::consts::PI.sqrt() } else { std::f64::consts::PI.sqrt() / 2.0 };
    let mut k = if d % 2 == 1 { 1 } else { 2 };
    while k < d {
        r *= (k as f64 + 1.0) / k as f64;
        k += 2;
    }
    2f64.powf(1.5) * (d as f64 + 1.0) / 2.0 * r
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelKind {
    IidRademacher,
    IidGaussian,
    /// `X_k = V_k^{1/2} xi_k` with Gaussian `xi_k`.
    DeterministicVarying(Vec<SpdMatrix>),
    /// Isotropic steps whose law switches on the sign of the previous
    /// step's first coordinate.
    SignHistory,
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::IidRademacher => "iid_rademacher",
            ModelKind::IidGaussian => "iid_gaussian",
            ModelKind::DeterministicVarying(_) => "deterministic_varying",
            ModelKind::SignHistory => "sign_history",
        }
    }
}

/// Constants with `alpha I <= V_k <= beta I`, `E|X_k|^3 <= gamma d^{3/2}`
/// and `E[|X_k|^3 | F] <= beta3 v delta Tr V_k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentConstants {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    pub beta3: f64,
    pub provenance: &'static str,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MartingaleModel {
    dim: usize,
    horizon: usize,
    kind: ModelKind,
    roots: Vec<DMatrix<f64>>,
    constants: MomentConstants,
}

fn rademacher(rng: &mut StreamRng) -> f64 {
    if rng.random::<bool>() {
        1.0
    } else {
        -1.0
    }
}

impl MartingaleModel {
    pub fn new(kind: ModelKind, dim: usize, horizon: usize) -> Result<Self> {
        if dim == 0 || horizon == 0 {
            return Err(Error::InvalidParams("dimension and horizon must be positive".into()));
        }
        let df = dim as f64;
        let sqd = df.sqrt();
        let (roots, constants) = match &kind {
            ModelKind::IidRademacher => {
                (vec![], MomentConstants { alpha: 1.0, beta: 1.0, gamma: 1.0, delta: sqd, beta3: 0.0, provenance: "analytic" })
            }
            ModelKind::IidGaussian => {
                let m3 = chi_third_moment(dim);
                (vec![], MomentConstants { alpha: 1.0, beta: 1.0, gamma: m3 / df.powf(1.5), delta: m3 / df, beta3: 0.0, provenance: "analytic" })
            }
            ModelKind::DeterministicVarying(vk) => {
                if vk.len() != horizon {
                    return Err(Error::DimensionMismatch { expected: horizon, got: vk.len() });
                }
                if let Some(bad) = vk.iter().find(|v| v.dim() != dim) {
                    return Err(Error::DimensionMismatch { expected: dim, got: bad.dim() });
                }
                let m3 = chi_third_moment(dim);
                let alpha = vk.iter().map(|v| v.lambda_min()).fold(f64::INFINITY, f64::min);
                let beta = vk.iter().map(|v| v.lambda_max()).fold(0.0, f64::max);
                let gamma = vk.iter().map(|v| v.lambda_max().powf(1.5) * m3).fold(0.0, f64::max) / df.powf(1.5);
                let delta = vk.iter().map(|v| v.lambda_max().powf(1.5) * m3 / v.trace()).fold(0.0, f64::max);
                let roots = vk.iter().map(|v| v.pow(0.5).matrix().clone()).collect();
                (roots, MomentConstants { alpha, beta, gamma, delta, beta3: 0.0, provenance: "analytic upper bound" })
            }
            ModelKind::SignHistory => {
                // d = 1 alternates with the three-point law on {-sqrt2, 0, sqrt2}.
                let (gamma, delta) = if dim == 1 { (std::f64::consts::SQRT_2, std::f64::consts::SQRT_2) } else { (1.0, sqd) };
                (vec![], MomentConstants { alpha: 1.0, beta: 1.0, gamma, delta, beta3: 0.0, provenance: "analytic" })
            }
        };
        Ok(MartingaleModel { dim, horizon, kind, roots, constants })
    }

    pub fn iid_rademacher(dim: usize, horizon: usize) -> Result<Self> {
        Self::new(ModelKind::IidRademacher, dim, horizon)
    }

    pub fn iid_gaussian(dim: usize, horizon: usize) -> Result<Self> {
        Self::new(ModelKind::IidGaussian, dim, horizon)
    }

    pub fn sign_history(dim: usize, horizon: usize) -> Result<Self> {
        Self::new(ModelKind::SignHistory, dim, horizon)
    }

    pub fn deterministic_varying(vk: Vec<SpdMatrix>) -> Result<Self> {
        let dim = vk.first().map(|v| v.dim()).unwrap_or(0);
        let n = vk.len();
        Self::new(ModelKind::DeterministicVarying(vk), dim, n)
    }

    /// `V_k = (k/n) I`.
    pub fn linear_ramp(dim: usize, horizon: usize) -> Result<Self> {
        let vk = (1..=horizon).map(|k| SpdMatrix::scaled_identity(dim, k as f64 / horizon as f64)).collect();
        Self::new(ModelKind::DeterministicVarying(vk), dim, horizon)
    }

    /// Builds a catalog model by name.
    pub fn by_name(name: &str, dim: usize, horizon: usize) -> Result<Self> {
        match name {
            "iid_rademacher" => Self::iid_rademacher(dim, horizon),
            "iid_gaussian" => Self::iid_gaussian(dim, horizon),
            "sign_history" => Self::sign_history(dim, horizon),
            "deterministic_varying" | "linear_ramp" => Self::linear_ramp(dim, horizon),
            other => Err(Error::InvalidParams(format!("unknown martingale model '{other}'"))),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn kind(&self) -> &ModelKind {
        &self.kind
    }

    pub fn constants(&self) -> MomentConstants {
        self.constants
    }

    /// Conditional covariance of step `k` (1-based). Deterministic for every
    /// shipped kind.
    pub fn conditional_covariance(&self, k: usize) -> SpdMatrix {
        match &self.kind {
            ModelKind::DeterministicVarying(vk) => vk[k - 1].clone(),
            _ => SpdMatrix::identity(self.dim),
        }
    }

    fn sign_flipped(prev: Option<&[f64]>) -> bool {
        prev.is_some_and(|p| p[0] > 0.0)
    }

    /// Draws step `k` (1-based) given the previous step into `out`.
    pub fn sample_step(&self, k: usize, prev: Option<&[f64]>, rng: &mut StreamRng, out: &mut [f64]) {
        let d = self.dim;
        match &self.kind {
            ModelKind::IidRademacher => out.iter_mut().for_each(|x| *x = rademacher(rng)),
            ModelKind::IidGaussian => out.iter_mut().for_each(|x| *x = StandardNormal.sample(rng)),
            ModelKind::DeterministicVarying(_) => {
                let mut z = [0.0f64; 16];
                let z: &mut [f64] = if d <= 16 { &mut z[..d] } else { return self.sample_varying_large(k, rng, out) };
                z.iter_mut().for_each(|v| *v = StandardNormal.sample(rng));
                let r = &self.roots[k - 1];
                for i in 0..d {
                    out[i] = (0..d).map(|j| r[(i, j)] * z[j]).sum();
                }
            }
            ModelKind::SignHistory => {
                let flip = Self::sign_flipped(prev);
                if d == 1 {
                    out[0] = if !flip {
                        rademacher(rng)
                    } else {
                        match rng.random_range(0..4u8) {
                            0 => -std::f64::consts::SQRT_2,
                            1 => std::f64::consts::SQRT_2,
                            _ => 0.0,
                        }
                    };
                } else {
                    out.iter_mut().for_each(|x| *x = rademacher(rng));
                    if flip {
                        let (a, b) = (out[0], out[1]);
                        out[0] = (a - b) * std::f64::consts::FRAC_1_SQRT_2;
                        out[1] = (a + b) * std::f64::consts::FRAC_1_SQRT_2;
                    }
                }
            }
        }
    }

    fn sample_varying_large(&self, k: usize, rng: &mut StreamRng, out: &mut [f64]) {
        let z = DVector::from_fn(self.dim, |_, _| StandardNormal.sample(rng));
        let x = &self.roots[k - 1] * z;
        out.copy_from_slice(x.as_slice());
    }

    /// Fills `buf` (length `n d`, step-major) with one path.
    pub fn fill_path(&self, rng: &mut StreamRng, buf: &mut [f64]) {
        let d = self.dim;
        for k in 1..=self.horizon {
            let (done, rest) = buf.split_at_mut((k - 1) * d);
            let prev = if k > 1 { Some(&done[(k - 2) * d..]) } else { None };
            self.sample_step(k, prev, rng, &mut rest[..d]);
        }
    }

    /// Conditional law of step `k` as `(probability, value)` atoms, or `None`
    /// for continuous kinds.
    pub fn support(&self, _k: usize, prev: Option<&[f64]>) -> Option<Vec<(f64, Vec<f64>)>> {
        let d = self.dim;
        let cube = || {
            let p = 0.5f64.powi(d as i32);
            (0..1usize << d)
                .map(|m| (p, (0..d).map(|i| if m >> i & 1 == 1 { 1.0 } else { -1.0 }).collect::<Vec<f64>>()))
                .collect::<Vec<_>>()
        };
        match &self.kind {
            ModelKind::IidRademacher => Some(cube()),
            ModelKind::SignHistory => {
                let flip = Self::sign_flipped(prev);
                if !flip {
                    Some(cube())
                } else if d == 1 {
                    let s = std::f64::consts::SQRT_2;
                    Some(vec![(0.25, vec![-s]), (0.5, vec![0.0]), (0.25, vec![s])])
                } else {
                    let r = std::f64::consts::FRAC_1_SQRT_2;
                    Some(
                        cube()
                            .into_iter()
                            .map(|(p, mut v)| {
                                let (a, b) = (v[0], v[1]);
                                v[0] = (a - b) * r;
                                v[1] = (a + b) * r;
                                (p, v)
                            })
                            .collect(),
                    )
                }
            }
            _ => None,
        }
    }

    fn max_support(&self) -> Option<u128> {
        match &self.kind {
            ModelKind::IidRademacher => Some(1u128 << self.dim),
            ModelKind::SignHistory => Some(if self.dim == 1 { 3 } else { 1u128 << self.dim }),
            _ => None,
        }
    }
}

/// One path `X_1..X_n` from stream `(seed, 0)`.
pub fn sample_path(model: &MartingaleModel, seed: u64) -> Vec<DVector<f64>> {
    let d = model.dim();
    let mut buf = vec![0.0; d * model.horizon()];
    model.fill_path(&mut seed_stream(seed, 0), &mut buf);
    buf.chunks(d).map(DVector::from_column_slice).collect()
}

#[derive(Debug, Clone)]
pub struct CovarianceLedger {
    pub vk: Vec<SpdMatrix>,
    /// `Vbar_k = sum_{i <= k} V_i`.
    pub cumulative: Vec<DMatrix<f64>>,
    /// `P_k = sum_{i >= k} V_i`, index `k - 1`.
    pub tails: Vec<SpdMatrix>,
    pub sigma: SpdMatrix,
}

pub fn covariance_ledger(model: &MartingaleModel) -> Result<CovarianceLedger> {
    let n = model.horizon();
    let vk: Vec<SpdMatrix> = (1..=n).map(|k| model.conditional_covariance(k)).collect();
    let mut cumulative = Vec::with_capacity(n);
    let mut acc = DMatrix::zeros(model.dim(), model.dim());
    for v in &vk {
        acc += v.matrix();
        cumulative.push(acc.clone());
    }
    let mut tails_raw = vec![DMatrix::zeros(0, 0); n];
    let mut acc = DMatrix::zeros(model.dim(), model.dim());
    for k in (0..n).rev() {
        acc += vk[k].matrix();
        tails_raw[k] = acc.clone();
    }
    let tails = tails_raw
        .into_iter()
        .enumerate()
        .map(|(k, p)| SpdMatrix::new(p).map_err(|_| Error::SingularTail { k: k + 1 }))
        .collect::<Result<Vec<_>>>()?;
    let sigma = tails[0].clone();
    Ok(CovarianceLedger { vk, cumulative, tails, sigma })
}

/// Deterministic per-step weights of the martingale bound.
#[derive(Debug, Clone, PartialEq)]
pub struct TailFactors {
    /// `|Sigma^{1/2} P_k^{-1} Sigma^{1/2}|^{1/2}`.
    pub statement: Vec<f64>,
    /// `|P_k^{-1/2} Sigma^{1/2}|`.
    pub proof: Vec<f64>,
    pub sigma_inv_sqrt: DMatrix<f64>,
}

pub fn tail_factors(ledger: &CovarianceLedger) -> TailFactors {
    let s_half = ledger.sigma.pow(0.5);
    let sh = s_half.matrix();
    let mut statement = Vec::with_capacity(ledger.tails.len());
    let mut proof = Vec::with_capacity(ledger.tails.len());
    for p in &ledger.tails {
        statement.push(op_norm(&(sh * p.inverse().matrix() * sh)).sqrt());
        proof.push(op_norm(&(p.pow(-0.5).matrix() * sh)));
    }
    TailFactors { statement, proof, sigma_inv_sqrt: ledger.sigma.pow(-0.5).matrix().clone() }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Thm1Bound {
    pub value: f64,
    pub stderr: f64,
    /// Same expression with the proof's `|P_k^{-1/2} Sigma^{1/2}|` weights.
    pub proof_form_value: f64,
}

/// Per-replication outputs of one martingale path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathStats {
    /// `h(Sigma^{-1/2} S_n)`.
    pub h_value: f64,
    /// `sum_k c_k |Sigma^{-1/2} X_k|^3` with statement weights.
    pub weighted_cubes: f64,
    pub weighted_cubes_proof: f64,
}

/// Samples `reps` paths and returns per-path statistics in replication order.
pub fn path_statistics(model: &MartingaleModel, h: &TestFunction, reps: usize, seed: u64, exec: Execution) -> Result<Vec<PathStats>> {
    let d = model.dim();
    if h.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: h.dim() });
    }
    let ledger = covariance_ledger(model)?;
    let tf = tail_factors(&ledger);
    let w = &tf.sigma_inv_sqrt;
    let n = model.horizon();
    Ok(map_reps(exec, reps, seed, |rng, _| {
        let mut buf = vec![0.0; n * d];
        model.fill_path(rng, &mut buf);
        let mut s = vec![0.0; d];
        let mut y = vec![0.0; d];
        let (mut wc, mut wp) = (0.0, 0.0);
        for k in 0..n {
            let x = &buf[k * d..(k + 1) * d];
            let mut nrm2 = 0.0;
            for i in 0..d {
                let v: f64 = (0..d).map(|j| w[(i, j)] * x[j]).sum();
                nrm2 += v * v;
                s[i] += v;
            }
            let cube = nrm2 * nrm2.sqrt();
            wc += tf.statement[k] * cube;
            wp += tf.proof[k] * cube;
        }
        y.copy_from_slice(&s);
        PathStats { h_value: h.value(&y), weighted_cubes: wc, weighted_cubes_proof: wp }
    }))
}

fn thm1_prefactor(d: usize, h: &TestFunction) -> Result<f64> {
    let m2 = h.m2();
    if !m2.is_finite() {
        return Err(Error::InvalidSmoothness("M2"));
    }
    Ok(THREE_PI_OVER_8 * (d as f64).sqrt() * m2)
}

/// Martingale normal-approximation bound
/// `(3 pi / 8) sqrt(d) M2(h) sum_k E[|Sigma^{1/2} P_k^{-1} Sigma^{1/2}|^{1/2} |Sigma^{-1/2} X_k|^3]`,
/// expectation by Monte Carlo over `reps` paths.
pub fn thm1_bound(model: &MartingaleModel, h: &TestFunction, reps: usize, seed: u64) -> Result<Thm1Bound> {
    thm1_bound_with(model, h, reps, seed, Execution::Parallel)
}

pub fn thm1_bound_with(model: &MartingaleModel, h: &TestFunction, reps: usize, seed: u64, exec: Execution) -> Result<Thm1Bound> {
    let pre = thm1_prefactor(model.dim(), h)?;
    let stats = path_statistics(model, h, reps, seed, exec)?;
    Ok(thm1_from_stats(pre, &stats))
}

pub(crate) fn thm1_from_stats(pre: f64, stats: &[PathStats]) -> Thm1Bound {
    let wc: Vec<f64> = stats.iter().map(|s| s.weighted_cubes).collect();
    let wp: Vec<f64> = stats.iter().map(|s| s.weighted_cubes_proof).collect();
    let m = MeanEstimate::from_samples(&wc);
    let p = MeanEstimate::from_samples(&wp);
    Thm1Bound { value: pre * m.mean, stderr: pre * m.stderr, proof_form_value: pre * p.mean }
}

pub fn thm1_prefactor_for(model: &MartingaleModel, h: &TestFunction) -> Result<f64> {
    thm1_prefactor(model.dim(), h)
}

/// `(3 pi / 4) (gamma sqrt(beta) / alpha^2) m2 d^2 / sqrt(n)`.
pub fn cor1_bound(alpha: f64, beta: f64, gamma: f64, d: usize, n: usize, m2: f64) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidMoment(format!("alpha must be positive, got {alpha}")));
    }
    if !(beta >= 0.0) || !(gamma >= 0.0) || !(m2 >= 0.0) {
        return Err(Error::InvalidMoment("beta, gamma and m2 must be nonnegative".into()));
    }
    if n == 0 {
        return Err(Error::InvalidParams("n must be positive".into()));
    }
    let d = d as f64;
    Ok(THREE_PI_OVER_4 * gamma * beta.sqrt() / (alpha * alpha) * m2 * d * d / (n as f64).sqrt())
}

/// `2 m1/sqrt(n) Tr(Sigma/n)^{1/2} + (3 pi/4) delta sqrt(d) n m2 |Sigma^{-1/2}|^3 (Tr(Sigma/n) + beta3^{2/3})`.
pub fn cor2_bound(m1: f64, m2: f64, sigma: &SpdMatrix, beta3: f64, delta: f64, d: usize, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidParams("n must be positive".into()));
    }
    if !(beta3 >= 0.0) || !(delta >= 0.0) {
        return Err(Error::InvalidMoment("beta and delta must be nonnegative".into()));
    }
    let nf = n as f64;
    let tr = sigma.trace() / nf;
    let inv_half = 1.0 / sigma.lambda_min().sqrt();
    let first = if m1 == 0.0 { 0.0 } else { 2.0 * m1 / nf.sqrt() * tr.sqrt() };
    let second = if delta == 0.0 || m2 == 0.0 {
        0.0
    } else {
        THREE_PI_OVER_4 * delta * (d as f64).sqrt() * nf * m2 * inv_half.powi(3) * (tr + beta3.powf(2.0 / 3.0))
    };
    Ok(first + second)
}

/// `(mean_paths |I - Sigma^{-1} P_1|_*)^{1/2}` over realized `P_1` samples.
pub fn p1_deviation(vk_samples: &[DMatrix<f64>], sigma: &SpdMatrix) -> Result<f64> {
    if vk_samples.is_empty() {
        return Err(Error::InsufficientReplications(0));
    }
    let d = sigma.dim();
    let inv = sigma.inverse();
    let mut acc = 0.0;
    for p in vk_samples {
        if p.nrows() != d || p.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, got: p.nrows() });
        }
        let dev = DMatrix::identity(d, d) - inv.matrix() * p;
        acc += norms(&dev)?.nuclear;
    }
    Ok((acc / vk_samples.len() as f64).sqrt())
}

/// Realized `P_1 = sum_k V_k` along sampled paths (conditional covariances
/// evaluated on each path's own history).
pub fn realized_p1(model: &MartingaleModel, reps: usize, seed: u64) -> Vec<DMatrix<f64>> {
    let d = model.dim();
    let n = model.horizon();
    map_reps(Execution::Parallel, reps, seed, |rng, _| {
        let mut buf = vec![0.0; n * d];
        model.fill_path(rng, &mut buf);
        let mut acc = DMatrix::zeros(d, d);
        for k in 1..=n {
            acc += model.conditional_covariance(k).matrix();
        }
        acc
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleResult {
    pub paths: u128,
    /// Exact `E h(Sigma^{-1/2} S_n)`.
    pub expected_h: f64,
    /// `E h(Z)` by Gauss-Hermite quadrature.
    pub reference: f64,
    pub discrepancy: f64,
    /// Exact martingale bound (expectation enumerated).
    pub bound: f64,
    pub certified: bool,
}

/// Exact discrepancy and bound by enumerating every path of a finite-support
/// model.
pub fn enumerate_oracle(model: &MartingaleModel, h: &TestFunction, n_max: usize) -> Result<OracleResult> {
    let d = model.dim();
    if h.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: h.dim() });
    }
    let s = model.max_support().ok_or_else(|| Error::InvalidParams(format!("{} has no finite support", model.kind().name())))?;
    let n = model.horizon();
    let paths = s.checked_pow(n as u32).unwrap_or(u128::MAX);
    let cap = ENUMERATION_CAP.min(s.checked_pow(n_max as u32).unwrap_or(u128::MAX));
    if n > n_max || paths > cap {
        return Err(Error::SupportTooLarge { paths, cap });
    }
    let pre = thm1_prefactor(d, h)?;
    let ledger = covariance_ledger(model)?;
    let tf = tail_factors(&ledger);

    struct Walk<'a> {
        model: &'a MartingaleModel,
        h: &'a TestFunction,
        tf: &'a TailFactors,
        eh: f64,
        cubes: f64,
        count: u128,
    }
    fn dfs(w: &mut Walk<'_>, k: usize, prob: f64, s: &[f64], cubes: f64, prev: Option<&[f64]>) {
        let n = w.model.horizon();
        if k > n {
            w.eh += prob * w.h.value(s);
            w.cubes += prob * cubes;
            w.count += 1;
            return;
        }
        let d = s.len();
        let atoms = w.model.support(k, prev).expect("finite support");
        for (p, x) in atoms {
            let mut next = s.to_vec();
            let mut nrm2 = 0.0;
            for i in 0..d {
                let v: f64 = (0..d).map(|j| w.tf.sigma_inv_sqrt[(i, j)] * x[j]).sum();
                nrm2 += v * v;
                next[i] += v;
            }
            let c = cubes + w.tf.statement[k - 1] * nrm2 * nrm2.sqrt();
            dfs(w, k + 1, prob * p, &next, c, Some(&x));
        }
    }
    let mut walk = Walk { model, h, tf: &tf, eh: 0.0, cubes: 0.0, count: 0 };
    dfs(&mut walk, 1, 1.0, &vec![0.0; d], 0.0, None);
    let (reference, _) = reference_expectation(h, &vec![0.0; d], &SpdMatrix::identity(d), ReferenceMethod::Quadrature)?;
    let discrepancy = (walk.eh - reference).abs();
    let bound = pre * walk.cubes;
    Ok(OracleResult { paths: walk.count, expected_h: walk.eh, reference, discrepancy, bound, certified: discrepancy <= bound })
}
