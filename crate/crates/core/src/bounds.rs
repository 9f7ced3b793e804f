//! Normal-approximation bounds for averaged linear iterations and SGD: the
//! remainder functional `rho(eta, t)`, the exact `B_j^t` / `W_j^t` ledger,
//! spectrally derived constants, and the three bound evaluators.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{op_norm, SpdMatrix};
use crate::martingale::{chi_third_moment, THREE_PI_OVER_4, THREE_PI_OVER_8};
use crate::montecarlo::{seed_stream, MeanEstimate};
use crate::sgd::{NoiseModel, SgdProblem, StepSchedule};
use crate::test_functions::TestFunction;

/// Displayed (rounded) coefficient of the first linear-iteration term.
pub const DISPLAYED_LEADING: f64 = 1.18;

/// Default `c2`. Small values make the `C'` term grow faster than `t`
/// along polynomial schedules; see the README.
pub const DEFAULT_C2: f64 = 0.97;

pub const DEFAULT_CALIBRATION: &[usize] = &[100, 1000];

pub const MAX_LEDGER_HORIZON: usize = 100_000;

/// Horizons up to which the ledger is cross-checked against the direct sum.
pub const DIRECT_CHECK_HORIZON: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Spectral,
    Fitted,
    User,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundConstants {
    pub k: f64,
    pub k2: f64,
    pub c_prime: f64,
    pub c1: f64,
    pub c2: f64,
    pub lambda: f64,
    pub provenance: ConstantProvenance,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstantProvenance {
    pub k: Provenance,
    pub k2: Provenance,
    pub c_prime: Provenance,
    pub c1: Provenance,
    pub c2: Provenance,
    pub lambda: Provenance,
}

impl BoundConstants {
    /// User-supplied constants.
    pub fn user(k: f64, k2: f64, c_prime: f64, c1: f64, c2: f64, lambda: f64) -> Result<Self> {
        let c = BoundConstants {
            k,
            k2,
            c_prime,
            c1,
            c2,
            lambda,
            provenance: ConstantProvenance {
                k: Provenance::User,
                k2: Provenance::User,
                c_prime: Provenance::User,
                c1: Provenance::User,
                c2: Provenance::User,
                lambda: Provenance::User,
            },
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("K", self.k), ("K2", self.k2), ("C'", self.c_prime), ("c1", self.c1), ("lambda", self.lambda)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParams(format!("constant {name} must be positive, got {v}")));
            }
        }
        if !(self.c2 > 0.0 && self.c2 < 1.0) {
            return Err(Error::InvalidParams(format!("c2 must lie in (0,1), got {}", self.c2)));
        }
        Ok(())
    }
}

/// Per-`j` pieces of `rho`: `e1_j = exp(-2 c1 m_j^{t-1})` and
/// `e2_j = [eta_j^{c2-1} m_j^t e^{-lambda m_j^t} m_j^t]^2` (without `C'`).
/// The variant replaces the inner factor by `sum_{i=j}^t m_j^i e^{-lambda m_j^i} eta_i`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RhoParts {
    pub exp_sum: f64,
    pub c_term_sum: f64,
    pub c_term_variant_sum: f64,
}

pub fn rho_parts(schedule: &StepSchedule, t: usize, c1: f64, c2: f64, lambda: f64, with_variant: bool) -> RhoParts {
    let mut parts = RhoParts { exp_sum: 0.0, c_term_sum: 0.0, c_term_variant_sum: 0.0 };
    if t < 2 {
        return parts;
    }
    let s = schedule.prefix_sums(t);
    let eta: Vec<f64> = (0..=t).map(|k| schedule.eta(k)).collect();
    for j in 1..t {
        let m_tm1 = s[t - 1] - s[j - 1];
        let m_t = s[t] - s[j - 1];
        let pre = eta[j].powf(c2 - 1.0);
        parts.exp_sum += (-2.0 * c1 * m_tm1).exp();
        // sum_{i=j}^t (m_j^i - m_j^{i-1}) telescopes to m_j^t.
        let inner = m_t * (-lambda * m_t).exp() * m_t;
        parts.c_term_sum += (pre * inner).powi(2);
        if with_variant {
            let mut v = 0.0;
            for i in j..=t {
                let m = s[i] - s[j - 1];
                v += m * (-lambda * m).exp() * eta[i];
            }
            parts.c_term_variant_sum += (pre * v).powi(2);
        }
    }
    parts
}

/// `rho(eta, t)` evaluated verbatim (inner factor independent of `i`).
pub fn rho(schedule: &StepSchedule, t: usize, consts: &BoundConstants) -> f64 {
    let p = rho_parts(schedule, t, consts.c1, consts.c2, consts.lambda, false);
    p.exp_sum + consts.c_prime.powi(2) * p.c_term_sum
}

/// `rho` with the exponent evaluated at `m_j^i` inside the sum over `i`.
pub fn rho_variant(schedule: &StepSchedule, t: usize, consts: &BoundConstants) -> f64 {
    let p = rho_parts(schedule, t, consts.c1, consts.c2, consts.lambda, true);
    p.exp_sum + consts.c_prime.powi(2) * p.c_term_variant_sum
}

#[derive(Debug, Clone, PartialEq)]
pub struct WMatrixLedger {
    pub horizon: usize,
    /// `B_j^t`, `j = 0..t-1`.
    pub b: Vec<DMatrix<f64>>,
    /// `W_j^t = B_j^t - A^{-1}`.
    pub w: Vec<DMatrix<f64>>,
    pub b_norms: Vec<f64>,
    pub w_norms: Vec<f64>,
    /// Largest relative Frobenius gap to the direct defining sum, when checked.
    pub direct_check: Option<f64>,
}

impl WMatrixLedger {
    /// `|B_t|_2 = |B_0^t|_2`.
    pub fn k2(&self) -> f64 {
        self.b_norms[0]
    }

    /// `sum_{j=1}^{t-1} |W_j^t|_2^2`.
    pub fn sum_sq_w(&self) -> f64 {
        self.w_norms.iter().skip(1).map(|w| w * w).sum()
    }
}

/// `B_j^t = eta_j sum_{i=j}^{t-1} prod_{k=j+1}^i (I - eta_k A)`, built by the
/// backward recursion `G_{t-1} = I`, `G_j = I + (I - eta_{j+1} A) G_{j+1}`.
pub fn w_ledger(a: &SpdMatrix, schedule: &StepSchedule, t: usize) -> Result<WMatrixLedger> {
    if t == 0 {
        return Err(Error::InvalidParams("horizon must be positive".into()));
    }
    if t > MAX_LEDGER_HORIZON {
        return Err(Error::HorizonTooLarge { horizon: t, max: MAX_LEDGER_HORIZON });
    }
    let d = a.dim();
    let id = DMatrix::<f64>::identity(d, d);
    let am = a.matrix();
    let ainv = a.inverse().matrix().clone();
    let mut g = vec![DMatrix::zeros(d, d); t];
    g[t - 1] = id.clone();
    for j in (0..t - 1).rev() {
        g[j] = &id + (&id - am * schedule.eta(j + 1)) * &g[j + 1];
    }
    let b: Vec<DMatrix<f64>> = g.into_iter().enumerate().map(|(j, gj)| gj * schedule.eta(j)).collect();
    let w: Vec<DMatrix<f64>> = b.iter().map(|bj| bj - &ainv).collect();
    let b_norms = b.iter().map(op_norm).collect();
    let w_norms = w.iter().map(op_norm).collect();
    let direct_check = (t <= DIRECT_CHECK_HORIZON).then(|| direct_gap(a, schedule, t, &b));
    if let Some(gap) = direct_check {
        if gap > 1e-10 {
            return Err(Error::NumericallyUnstable { discrepancy: gap });
        }
    }
    Ok(WMatrixLedger { horizon: t, b, w, b_norms, w_norms, direct_check })
}

fn direct_gap(a: &SpdMatrix, schedule: &StepSchedule, t: usize, b: &[DMatrix<f64>]) -> f64 {
    let d = a.dim();
    let id = DMatrix::<f64>::identity(d, d);
    // Walk the defining sum from the top so each prefix product is reused:
    // for fixed j, P_i = P_{i-1} (I - eta_i A).
    let mut worst: f64 = 0.0;
    let stride = (t / 200).max(1);
    for j in (0..t).step_by(stride).chain(std::iter::once(t - 1)) {
        let mut prod = id.clone();
        let mut acc = id.clone();
        for i in j + 1..t {
            prod = &prod * (&id - a.matrix() * schedule.eta(i));
            acc += &prod;
        }
        let direct = acc * schedule.eta(j);
        let scale = direct.norm().max(f64::MIN_POSITIVE);
        worst = worst.max((&direct - &b[j]).norm() / scale);
    }
    worst
}

/// Constants from the spectrum of `A`: `K = 1`, `c1 = lambda = lambda_min`,
/// `K2 = max |B_t|_2` and the smallest `C'` making the `rho` majorant
/// dominate the exact ledger on the calibration horizons.
pub fn spectral_constants(a: &SpdMatrix, schedule: &StepSchedule) -> Result<BoundConstants> {
    spectral_constants_on(a, schedule, DEFAULT_CALIBRATION, DEFAULT_C2)
}

pub fn spectral_constants_on(a: &SpdMatrix, schedule: &StepSchedule, horizons: &[usize], c2: f64) -> Result<BoundConstants> {
    let product = schedule.eta(1) * a.lambda_max();
    if product > 1.0 {
        return Err(Error::StepTooLarge { product });
    }
    if !(c2 > 0.0 && c2 < 1.0) {
        return Err(Error::InvalidParams(format!("c2 must lie in (0,1), got {c2}")));
    }
    if horizons.is_empty() {
        return Err(Error::InvalidParams("calibration grid is empty".into()));
    }
    let c1 = a.lambda_min();
    let lambda = c1;
    let k = 1.0;
    let mut k2: f64 = 0.0;
    let mut cp2: f64 = 0.0;
    for &t in horizons {
        let ledger = w_ledger(a, schedule, t)?;
        k2 = k2.max(ledger.k2());
        let parts = rho_parts(schedule, t, c1, c2, lambda, false);
        let need = ledger.sum_sq_w() / k - parts.exp_sum;
        if need > 0.0 && parts.c_term_sum > 0.0 {
            cp2 = cp2.max(need / parts.c_term_sum);
        }
    }
    let c_prime = (cp2.sqrt() * (1.0 + 1e-9)).max(1e-12);
    Ok(BoundConstants {
        k,
        k2,
        c_prime,
        c1,
        c2,
        lambda,
        provenance: ConstantProvenance {
            k: Provenance::Spectral,
            k2: Provenance::Fitted,
            c_prime: Provenance::Fitted,
            c1: Provenance::Spectral,
            c2: Provenance::User,
            lambda: Provenance::Spectral,
        },
    })
}

/// `E |G zeta|^3` for the noise model, with its standard error and how it
/// was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThirdMoment {
    pub value: f64,
    pub stderr: f64,
    pub provenance: &'static str,
}

/// Safety factor applied to Monte Carlo third moments.
pub const MC_INFLATION: f64 = 1.1;

pub fn noise_third_moment(noise: &NoiseModel, g: &DMatrix<f64>, samples: usize, seed: u64) -> Result<ThirdMoment> {
    let d = noise.dim();
    match noise {
        NoiseModel::Zero { .. } => Ok(ThirdMoment { value: 0.0, stderr: 0.0, provenance: "exact" }),
        NoiseModel::ScaledRademacher { root, .. } => {
            if d > 20 {
                return Err(Error::InvalidParams("sign enumeration limited to d <= 20".into()));
            }
            let m = g * root;
            let mut acc = 0.0;
            for mask in 0..1usize << d {
                let e = nalgebra::DVector::from_fn(d, |i, _| if mask >> i & 1 == 1 { 1.0 } else { -1.0 });
                acc += (&m * e).norm().powi(3);
            }
            Ok(ThirdMoment { value: acc / (1usize << d) as f64, stderr: 0.0, provenance: "exact enumeration" })
        }
        NoiseModel::Gaussian { root, .. } => {
            let m = g * root;
            let c = &m * m.transpose();
            let s = c.trace() / d as f64;
            if (&c - DMatrix::identity(d, d) * s).norm() <= 1e-12 * c.norm() {
                return Ok(ThirdMoment { value: s.powf(1.5) * chi_third_moment(d), stderr: 0.0, provenance: "analytic" });
            }
            if samples < 2 {
                return Err(Error::InsufficientReplications(samples));
            }
            use rand_distr::{Distribution, StandardNormal};
            let mut rng = seed_stream(seed, u64::MAX - 1);
            let vals: Vec<f64> = (0..samples)
                .map(|_| {
                    let z = nalgebra::DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
                    (&m * z).norm().powi(3)
                })
                .collect();
            let est = MeanEstimate::from_samples(&vals);
            Ok(ThirdMoment { value: est.mean * MC_INFLATION, stderr: est.stderr * MC_INFLATION, provenance: "monte carlo (x1.1)" })
        }
    }
}

/// `E|Delta_0|` and `E|Delta_0|^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Delta0Moments {
    pub mean_norm: f64,
    pub mean_sq_norm: f64,
}

impl Delta0Moments {
    pub fn deterministic(norm: f64) -> Self {
        Delta0Moments { mean_norm: norm, mean_sq_norm: norm * norm }
    }
}

/// Itemized linear-iteration bound.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Thm3Terms {
    pub third_moment: f64,
    pub first: f64,
    pub second_delta0: f64,
    pub second_rho: f64,
    pub second: f64,
    pub third_delta0: f64,
    pub third_rho: f64,
    pub third: f64,
    pub total: f64,
    pub rho: f64,
    pub rho_variant: f64,
    pub k_d: f64,
}

fn smoothness(h: &TestFunction) -> Result<(f64, f64)> {
    let m1 = h.m1().ok_or(Error::InvalidSmoothness("M1"))?;
    let m2 = h.m2();
    if !m2.is_finite() {
        return Err(Error::InvalidSmoothness("M2"));
    }
    Ok((m1, m2))
}

/// `(A^{-1} V A^{-1})^{-1/2}`, or `None` for zero noise.
pub fn sandwich_inv_sqrt(a: &SpdMatrix, noise: &NoiseModel) -> Result<Option<DMatrix<f64>>> {
    match noise.covariance() {
        None => Ok(None),
        Some(v) => {
            let s = v.congruence(a.inverse().matrix())?;
            Ok(Some(s.pow(-0.5).matrix().clone()))
        }
    }
}

/// Linear-iteration bound
/// `sum_k (3pi/8) sqrt(d) M2 E|(A^{-1}VA^{-1})^{-1/2} zeta|^3 / (t sqrt(t-k+1))
///  + M1/sqrt(t) [K2 E|Delta_0|/eta_0 + sqrt(K_d K rho)]
///  + M2/t [K2^2 E|Delta_0|^2/eta_0^2 + K_d K rho]`.
#[allow(clippy::too_many_arguments)]
pub fn thm3_bound(
    a: &SpdMatrix,
    noise: &NoiseModel,
    schedule: &StepSchedule,
    t: usize,
    h: &TestFunction,
    third: &ThirdMoment,
    delta0: &Delta0Moments,
    consts: &BoundConstants,
) -> Result<Thm3Terms> {
    let (m1, m2) = smoothness(h)?;
    if t == 0 {
        return Err(Error::InvalidParams("horizon must be positive".into()));
    }
    let d = a.dim() as f64;
    let tf = t as f64;
    let k_d = noise.trace();
    let harmonic: f64 = (1..=t).map(|k| 1.0 / ((t - k + 1) as f64).sqrt()).sum();
    let first = THREE_PI_OVER_8 * d.sqrt() * m2 * third.value * harmonic / tf;
    let rho_v = rho(schedule, t, consts);
    let rho_alt = rho_variant(schedule, t, consts);
    let eta0 = schedule.eta(0);
    let second_delta0 = m1 / tf.sqrt() * consts.k2 * delta0.mean_norm / eta0;
    let second_rho = m1 / tf.sqrt() * (k_d * consts.k * rho_v).sqrt();
    let third_delta0 = m2 / tf * consts.k2 * consts.k2 * delta0.mean_sq_norm / (eta0 * eta0);
    let third_rho = m2 / tf * k_d * consts.k * rho_v;
    let second = second_delta0 + second_rho;
    let third_t = third_delta0 + third_rho;
    Ok(Thm3Terms {
        third_moment: third.value,
        first,
        second_delta0,
        second_rho,
        second,
        third_delta0,
        third_rho,
        third: third_t,
        total: first + second + third_t,
        rho: rho_v,
        rho_variant: rho_alt,
        k_d,
    })
}

/// `(3pi/4) gamma sqrt(beta)/alpha^2 M2 d^2/sqrt(t) + K4 M1 sqrt(d/t) + K5 M2 d/t`.
#[allow(clippy::too_many_arguments)]
pub fn cor4_bound(alpha: f64, beta: f64, gamma: f64, d: usize, t: usize, h: &TestFunction, k4: f64, k5: f64) -> Result<Cor4Terms> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidMoment(format!("alpha must be positive, got {alpha}")));
    }
    if !(beta >= 0.0) || !(gamma >= 0.0) || !(k4 >= 0.0) || !(k5 >= 0.0) {
        return Err(Error::InvalidMoment("beta, gamma, K4 and K5 must be nonnegative".into()));
    }
    if t == 0 {
        return Err(Error::InvalidParams("horizon must be positive".into()));
    }
    let (m1, m2) = smoothness(h)?;
    let (df, tf) = (d as f64, t as f64);
    let first = THREE_PI_OVER_4 * gamma * beta.sqrt() / (alpha * alpha) * m2 * df * df / tf.sqrt();
    let second = k4 * m1 * (df / tf).sqrt();
    let third = k5 * m2 * df / tf;
    Ok(Cor4Terms { first, second, third, total: first + second + third })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Cor4Terms {
    pub first: f64,
    pub second: f64,
    pub third: f64,
    pub total: f64,
}

/// `K4`, `K5` read off the linear-iteration bound on a horizon grid:
/// the largest `second * sqrt(t) / (M1 sqrt d)` and `third * t / (M2 d)`.
pub fn fit_cor4_constants(terms: &[(usize, Thm3Terms)], d: usize, h: &TestFunction) -> Result<(f64, f64)> {
    let (m1, m2) = smoothness(h)?;
    let df = d as f64;
    let mut k4: f64 = 0.0;
    let mut k5: f64 = 0.0;
    for (t, tm) in terms {
        let tf = *t as f64;
        if m1 > 0.0 {
            k4 = k4.max(tm.second * tf.sqrt() / (m1 * df.sqrt()));
        }
        if m2 > 0.0 {
            k5 = k5.max(tm.third * tf / (m2 * df));
        }
    }
    Ok((k4, k5))
}

/// Itemized SGD bound with `Sigma_t = t V`, `P_k = (t - k + 1) V`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Thm4Terms {
    pub third_moment: f64,
    pub third_moment_stderr: f64,
    pub first: f64,
    pub first_stderr: f64,
    pub second_delta0: f64,
    pub second_lh: f64,
    pub second_rho: f64,
    pub second: f64,
    pub third_delta0: f64,
    pub third_lh: f64,
    pub third_rho: f64,
    pub third: f64,
    pub total: f64,
    pub rho: f64,
    pub rho_variant: f64,
    pub sigma_t_inv_sqrt_norm: f64,
}

/// SGD bound with the closed-form `Sigma_t = t V`.
///
/// The first term's expectation `E|(H^{-1} Sigma_t H^{-1})^{-1/2} X_k|^3`
/// with `X_k = -zeta_k` is estimated from `reps` noise draws (all `k` share
/// one law), `H` the Hessian at the minimizer.
#[allow(clippy::too_many_arguments)]
pub fn thm4_bound(
    problem: &SgdProblem,
    schedule: &StepSchedule,
    t: usize,
    h: &TestFunction,
    delta0: &Delta0Moments,
    consts: &BoundConstants,
    reps: usize,
    seed: u64,
) -> Result<Thm4Terms> {
    let (m1, m2) = smoothness(h)?;
    if t == 0 {
        return Err(Error::InvalidParams("horizon must be positive".into()));
    }
    let v = problem.noise().covariance().ok_or(Error::SingularTail { k: 1 })?.clone();
    let tf = t as f64;
    let d = problem.dim() as f64;
    let sigma_t = v.scale(tf);
    let hinv = problem.hessian_at_min().inverse();
    let sandwich = sigma_t.congruence(hinv.matrix())?;
    let g = sandwich.pow(-0.5).matrix().clone();
    let m3 = monte_carlo_third_moment(problem.noise(), &g, reps, seed)?;
    // |Sigma_t^{1/2} P_k^{-1} Sigma_t^{1/2}|^{1/2} = sqrt(t / (t - k + 1)).
    let weights: f64 = (1..=t).map(|k| (tf / (t - k + 1) as f64).sqrt()).sum();
    let pre = THREE_PI_OVER_8 / tf * d.sqrt() * m2 * weights;
    let first = pre * m3.mean;
    let first_stderr = pre * m3.stderr;
    let inv_norm = 1.0 / sigma_t.lambda_min().sqrt();
    let eta0 = schedule.eta(0);
    let k_d = problem.noise().trace();
    let rho_v = rho(schedule, t, consts);
    let rho_alt = rho_variant(schedule, t, consts);
    let sum_sqrt_eta: f64 = (1..t).map(|j| schedule.eta(j).sqrt()).sum();
    let sum_eta: f64 = (1..t).map(|j| schedule.eta(j)).sum();
    let mu = problem.mu();
    let l_h = problem.l_h();
    let s2 = m1 * inv_norm / tf;
    let second_delta0 = s2 * consts.k2 * delta0.mean_norm / eta0;
    let second_lh = if l_h == 0.0 { 0.0 } else { s2 * consts.k * l_h * sum_sqrt_eta / (2.0 * mu).sqrt() };
    let second_rho = s2 * (k_d * consts.k * rho_v).sqrt();
    let s3 = 3.0 * m2 * inv_norm * inv_norm / (2.0 * tf * tf);
    let third_delta0 = s3 * consts.k2 * consts.k2 * delta0.mean_sq_norm / (eta0 * eta0);
    let third_lh = if l_h == 0.0 { 0.0 } else { s3 * consts.k * consts.k * l_h * l_h * sum_eta / (2.0 * mu) };
    let third_rho = s3 * k_d * consts.k * rho_v;
    let second = second_delta0 + second_lh + second_rho;
    let third = third_delta0 + third_lh + third_rho;
    Ok(Thm4Terms {
        third_moment: m3.mean,
        third_moment_stderr: m3.stderr,
        first,
        first_stderr,
        second_delta0,
        second_lh,
        second_rho,
        second,
        third_delta0,
        third_lh,
        third_rho,
        third,
        total: first + second + third,
        rho: rho_v,
        rho_variant: rho_alt,
        sigma_t_inv_sqrt_norm: inv_norm,
    })
}

fn monte_carlo_third_moment(noise: &NoiseModel, g: &DMatrix<f64>, reps: usize, seed: u64) -> Result<MeanEstimate> {
    if reps < 2 {
        return Err(Error::InsufficientReplications(reps));
    }
    let d = noise.dim();
    let mut rng = seed_stream(seed, u64::MAX - 2);
    let mut z = vec![0.0; d];
    let mut x = vec![0.0; d];
    let vals: Vec<f64> = (0..reps)
        .map(|_| {
            noise.sample(&mut rng, &mut z, &mut x);
            let y = g * nalgebra::DVector::from_column_slice(&x);
            y.norm().powi(3)
        })
        .collect();
    Ok(MeanEstimate::from_samples(&vals))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_functions::catalog_function;
    use approx::assert_relative_eq;

    fn unit_consts(c2: f64) -> BoundConstants {
        BoundConstants::user(1.0, 1.0, 1.0, 1.0, c2, 1.0).unwrap()
    }

    #[test]
    fn rho_examples() {
        let s = StepSchedule::constant(0.3).unwrap();
        assert_eq!(rho(&s, 1, &unit_consts(0.5)), 0.0);
        let eta: f64 = 0.3;
        let want = (-2.0 * eta).exp() + (eta.powf(-0.5) * 2.0 * eta * 2.0 * eta * (-2.0 * eta).exp()).powi(2);
        assert_relative_eq!(rho(&s, 2, &unit_consts(0.5)), want, epsilon = 1e-15);
        // variant: sum_i m_1^i e^{-m_1^i} eta_i over i = 1, 2
        let v = eta * (-eta).exp() * eta + 2.0 * eta * (-2.0 * eta).exp() * eta;
        let want_v = (-2.0 * eta).exp() + (eta.powf(-0.5) * v).powi(2);
        assert_relative_eq!(rho_variant(&s, 2, &unit_consts(0.5)), want_v, epsilon = 1e-15);
    }

    #[test]
    fn rho_over_t_decreases_with_spectral_constants() {
        let a = SpdMatrix::diagonal(&[1.0, 2.0]).unwrap();
        let s = StepSchedule::new(0.5, 0.6).unwrap();
        let c = spectral_constants(&a, &s).unwrap();
        let vals: Vec<f64> = [100usize, 316, 1000, 3162, 10_000].iter().map(|&t| rho(&s, t, &c) / t as f64).collect();
        assert!(vals.windows(2).all(|w| w[1] <= w[0]), "{vals:?}");
    }

    #[test]
    fn ledger_single_step_and_limit() {
        let a = SpdMatrix::diagonal(&[1.0, 2.0]).unwrap();
        let s = StepSchedule::new(0.4, 0.5).unwrap();
        let l = w_ledger(&a, &s, 1).unwrap();
        assert_eq!(l.b[0], DMatrix::identity(2, 2) * 0.4);
        assert_relative_eq!(l.w[0][(1, 1)], 0.4 - 0.5, epsilon = 1e-15);

        let a = SpdMatrix::identity(1);
        let s = StepSchedule::constant(0.5).unwrap();
        let l = w_ledger(&a, &s, 2000).unwrap();
        assert!(l.w_norms[10].abs() < 1e-3);
        assert!(l.direct_check.unwrap() <= 1e-10);
        assert!(matches!(w_ledger(&a, &s, MAX_LEDGER_HORIZON + 1), Err(Error::HorizonTooLarge { .. })));
    }

    #[test]
    fn spectral_examples() {
        let s = StepSchedule::new(0.5, 0.6).unwrap();
        let c = spectral_constants(&SpdMatrix::identity(3), &s).unwrap();
        assert_eq!((c.c1, c.k), (1.0, 1.0));
        let a = SpdMatrix::diagonal(&[1.0, 2.0]).unwrap();
        let c = spectral_constants(&a, &StepSchedule::constant(0.4).unwrap()).unwrap();
        assert_eq!(c.c1, 1.0);
        let id = DMatrix::<f64>::identity(2, 2);
        let mut prod = id.clone();
        for t in 1..=30 {
            prod = (&id - a.matrix() * 0.4) * prod;
            assert_relative_eq!(op_norm(&prod), 0.6f64.powi(t), max_relative = 1e-12);
            assert!(op_norm(&prod) <= (-0.4 * t as f64).exp());
        }
        let big = StepSchedule::new(0.8, 0.5).unwrap();
        assert!(matches!(spectral_constants(&a, &big), Err(Error::StepTooLarge { .. })));
    }

    #[test]
    fn zero_noise_zero_start_gives_zero_bound() {
        let a = SpdMatrix::identity(2);
        let s = StepSchedule::new(0.5, 0.6).unwrap();
        let c = spectral_constants(&a, &s).unwrap();
        let noise = NoiseModel::zero(2);
        let third = noise_third_moment(&noise, &DMatrix::identity(2, 2), 0, 0).unwrap();
        let h = catalog_function("cos", 2).unwrap();
        let b = thm3_bound(&a, &noise, &s, 100, &h, &third, &Delta0Moments::deterministic(0.0), &c).unwrap();
        assert_eq!(b.total, 0.0);
    }

    #[test]
    fn first_term_closed_form_gaussian_d1() {
        let a = SpdMatrix::identity(1);
        let noise = NoiseModel::gaussian(SpdMatrix::identity(1));
        let g = sandwich_inv_sqrt(&a, &noise).unwrap().unwrap();
        let third = noise_third_moment(&noise, &g, 0, 0).unwrap();
        assert_relative_eq!(third.value, 2.0 * (2.0 / std::f64::consts::PI).sqrt(), epsilon = 1e-14);
        let s = StepSchedule::new(0.5, 0.6).unwrap();
        let c = spectral_constants(&a, &s).unwrap();
        let t = 50;
        let b = thm3_bound(&a, &noise, &s, t, &catalog_function("cos", 1).unwrap(), &third, &Delta0Moments::deterministic(0.0), &c).unwrap();
        let want = THREE_PI_OVER_8 * third.value * (1..=t).map(|k| 1.0 / ((t - k + 1) as f64).sqrt()).sum::<f64>() / t as f64;
        assert_relative_eq!(b.first, want, epsilon = 1e-14);
        assert!((DISPLAYED_LEADING - THREE_PI_OVER_8).abs() < 5e-3);
    }

    #[test]
    fn unbounded_gradient_is_rejected() {
        let a = SpdMatrix::identity(1);
        let s = StepSchedule::new(0.5, 0.6).unwrap();
        let c = spectral_constants(&a, &s).unwrap();
        let noise = NoiseModel::gaussian(SpdMatrix::identity(1));
        let third = ThirdMoment { value: 1.0, stderr: 0.0, provenance: "user" };
        let err = thm3_bound(&a, &noise, &s, 10, &catalog_function("half_sq", 1).unwrap(), &third, &Delta0Moments::deterministic(0.0), &c).unwrap_err();
        assert_eq!(err, Error::InvalidSmoothness("M1"));
    }

    #[test]
    fn cor4_examples() {
        let h = catalog_function("cos", 1).unwrap();
        let b = cor4_bound(1.0, 1.0, 1.0, 1, 1, &h, 1.0, 1.0).unwrap();
        assert_relative_eq!(b.total, THREE_PI_OVER_4 + 2.0, epsilon = 1e-15);
        assert!((2.0 * DISPLAYED_LEADING - THREE_PI_OVER_4).abs() < 1e-2);
        let t1 = cor4_bound(0.5, 2.0, 1.2, 2, 100, &h, 0.0, 0.0).unwrap().first;
        let t4 = cor4_bound(0.5, 2.0, 1.2, 2, 400, &h, 0.0, 0.0).unwrap().first;
        assert_eq!(t1 / t4, 2.0);
    }

    #[test]
    fn thm4_lh_terms_vanish_on_quadratics() {
        let a = SpdMatrix::diagonal(&[1.0, 2.0]).unwrap();
        let p = SgdProblem::quadratic(a.clone(), nalgebra::DVector::zeros(2), NoiseModel::gaussian(SpdMatrix::identity(2))).unwrap();
        let s = StepSchedule::constant(0.2).unwrap();
        let c = spectral_constants(&a, &s).unwrap();
        let h = catalog_function("cos", 2).unwrap();
        let b = thm4_bound(&p, &s, 100, &h, &Delta0Moments::deterministic(1.0), &c, 1000, 1).unwrap();
        assert_eq!(b.second_lh, 0.0);
        assert_eq!(b.third_lh, 0.0);
        assert!(b.total > 0.0);
    }
}
