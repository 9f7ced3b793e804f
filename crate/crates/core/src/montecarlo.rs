//! Replication harness: reproducible per-replication streams, an
//! order-preserving parallel map, Gaussian reference expectations and
//! summary statistics.
//!
//! Stream `(master, i)` is ChaCha8 keyed by `master` (expanded through
//! `seed_from_u64`) with stream id `i`; the 64-bit block counter then runs
//! within that stream. Distinct indices therefore never share keystream.
//! Replication results are collected by index and reduced sequentially, so
//! the output does not depend on the thread count.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::SpdMatrix;
use crate::quadrature::GaussianRule;
use crate::test_functions::TestFunction;

pub type StreamRng = ChaCha8Rng;

pub fn seed_stream(master_seed: u64, replication_index: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(replication_index);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Execution {
    /// Rayon work-stealing over replications (sequential when the
    /// `parallel` feature is off).
    #[default]
    Parallel,
    Sequential,
}

/// Runs `f(rng, index)` for every replication and returns the results in
/// index order.
pub fn map_reps<T, F>(exec: Execution, reps: usize, seed: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut StreamRng, usize) -> T + Sync + Send,
{
    let one = |i: usize| {
        let mut rng = seed_stream(seed, i as u64);
        f(&mut rng, i)
    };
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            (0..reps).into_par_iter().map(one).collect()
        }
        _ => (0..reps).map(one).collect(),
    }
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

impl MeanEstimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return MeanEstimate { mean: f64::NAN, stderr: f64::NAN, n };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        if n < 2 {
            return MeanEstimate { mean, stderr: 0.0, n };
        }
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
        MeanEstimate { mean, stderr: (var / n as f64).sqrt(), n }
    }
}

/// Largest dimension handled by tensor Gauss-Hermite references.
pub const MAX_QUADRATURE_DIM: usize = 3;

fn hermite_nodes_for(dim: usize) -> usize {
    match dim {
        1 => 96,
        2 => 64,
        _ => 32,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReferenceMethod {
    Quadrature,
    MonteCarlo { samples: usize, seed: u64 },
}

/// `E h(cov^{1/2} Z + mean)` with an error estimate (0 for quadrature,
/// the standard error for Monte Carlo).
pub fn reference_expectation(h: &TestFunction, mean: &[f64], cov: &SpdMatrix, method: ReferenceMethod) -> Result<(f64, f64)> {
    let d = h.dim();
    if mean.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: mean.len() });
    }
    if cov.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: cov.dim() });
    }
    let root = cov.pow(0.5);
    let s = root.matrix();
    match method {
        ReferenceMethod::Quadrature => {
            if d > MAX_QUADRATURE_DIM {
                return Err(Error::DimTooLargeForQuadrature { dim: d, max: MAX_QUADRATURE_DIM });
            }
            let rule = GaussianRule::new(hermite_nodes_for(d));
            let mut y = vec![0.0; d];
            let mut acc = 0.0;
            rule.for_each_tensor(d, |z, w| {
                for i in 0..d {
                    y[i] = mean[i] + (0..d).map(|j| s[(i, j)] * z[j]).sum::<f64>();
                }
                acc += w * h.value(&y);
            });
            Ok((acc, 0.0))
        }
        ReferenceMethod::MonteCarlo { samples, seed } => {
            if samples < 2 {
                return Err(Error::InsufficientReplications(samples));
            }
            let mut rng = seed_stream(seed, u64::MAX);
            let mut z = vec![0.0; d];
            let mut y = vec![0.0; d];
            let vals: Vec<f64> = (0..samples)
                .map(|_| {
                    z.iter_mut().for_each(|v| *v = StandardNormal.sample(&mut rng));
                    for i in 0..d {
                        y[i] = mean[i] + (0..d).map(|j| s[(i, j)] * z[j]).sum::<f64>();
                    }
                    h.value(&y)
                })
                .collect();
            let m = MeanEstimate::from_samples(&vals);
            Ok((m.mean, m.stderr))
        }
    }
}

/// Quadrature up to [`MAX_QUADRATURE_DIM`], Monte Carlo beyond.
pub fn reference_auto(h: &TestFunction, mean: &[f64], cov: &SpdMatrix, seed: u64) -> Result<(f64, f64)> {
    let method = if h.dim() <= MAX_QUADRATURE_DIM {
        ReferenceMethod::Quadrature
    } else {
        ReferenceMethod::MonteCarlo { samples: 1_000_000, seed }
    };
    reference_expectation(h, mean, cov, method)
}

/// Sample covariance (divisor `R - 1`) of `scaling * x_r` over replications.
///
/// The result is a plain matrix: a sample covariance can be singular (for
/// instance when every trajectory is zero).
pub fn empirical_covariance(samples: &[Vec<f64>], scaling: f64) -> Result<DMatrix<f64>> {
    let r = samples.len();
    if r < 2 {
        return Err(Error::InsufficientReplications(r));
    }
    let d = samples[0].len();
    if let Some(bad) = samples.iter().find(|s| s.len() != d) {
        return Err(Error::DimensionMismatch { expected: d, got: bad.len() });
    }
    let mut mean = vec![0.0; d];
    for s in samples {
        for i in 0..d {
            mean[i] += scaling * s[i];
        }
    }
    mean.iter_mut().for_each(|m| *m /= r as f64);
    let mut cov = DMatrix::zeros(d, d);
    for s in samples {
        for i in 0..d {
            let a = scaling * s[i] - mean[i];
            for j in 0..d {
                cov[(i, j)] += a * (scaling * s[j] - mean[j]);
            }
        }
    }
    Ok(cov / (r - 1) as f64)
}
