//! Experiment configuration documents.
//!
//! Configs are JSON; unknown keys are rejected and every constraint is
//! checked before any computation starts.

use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use mclt_sgd::bounds::BoundConstants;
use mclt_sgd::experiment::{linear_catalog, BoundKind, Engine, ExperimentSpec, Standardization};
use mclt_sgd::martingale::MartingaleModel;
use mclt_sgd::sgd::{NoiseModel, SgdProblem, StepSchedule};
use mclt_sgd::test_functions::{catalog_function, make_test_function, FamilyKind, TestFunction};
use mclt_sgd::SpdMatrix;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub id: String,
    pub engine: EngineConfig,
    pub function: FunctionConfig,
    pub reps: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub standardization: Option<StandardizationConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constants: Option<ConstantsConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c2: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub checkpoints: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EngineConfig {
    Martingale {
        model: String,
        dim: usize,
        horizon: usize,
    },
    Linear {
        problem: ProblemConfig,
        schedule: ScheduleConfig,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        theta0: Option<Vec<f64>>,
        horizon: usize,
    },
    Sgd {
        problem: ProblemConfig,
        schedule: ScheduleConfig,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        theta0: Option<Vec<f64>>,
        horizon: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub eta0: f64,
    pub c3: f64,
}

impl ScheduleConfig {
    pub fn build(&self) -> Result<StepSchedule> {
        ensure!(self.c3 > 0.0 && self.c3 < 1.0, "schedule exponent c3 must lie in (0, 1), got {}", self.c3);
        ensure!(self.eta0.is_finite() && self.eta0 > 0.0, "schedule eta0 must be positive, got {}", self.eta0);
        Ok(StepSchedule::new(self.eta0, self.c3)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseConfig {
    Zero { dim: usize },
    Gaussian { cov: Vec<Vec<f64>> },
    ScaledRademacher { cov: Vec<Vec<f64>> },
}

impl NoiseConfig {
    pub fn build(&self) -> Result<NoiseModel> {
        Ok(match self {
            NoiseConfig::Zero { dim } => NoiseModel::zero(*dim),
            NoiseConfig::Gaussian { cov } => NoiseModel::gaussian(SpdMatrix::from_rows(cov).context("noise covariance")?),
            NoiseConfig::ScaledRademacher { cov } => NoiseModel::scaled_rademacher(SpdMatrix::from_rows(cov).context("noise covariance")?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemConfig {
    /// `lin1` or `lin2`.
    Catalog { name: String },
    Quadratic {
        a: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        b: Option<Vec<f64>>,
        noise: NoiseConfig,
    },
    LogcoshRidge {
        rows: Vec<Vec<f64>>,
        y: Vec<f64>,
        mu0: f64,
        noise: NoiseConfig,
    },
    LogcoshDefault { noise: NoiseConfig },
}

impl ProblemConfig {
    pub fn build(&self) -> Result<SgdProblem> {
        Ok(match self {
            ProblemConfig::Catalog { name } => match linear_catalog().into_iter().find(|(n, _)| n == name) {
                Some((_, p)) => p,
                None => bail!("unknown catalog problem '{name}' (expected lin1 or lin2)"),
            },
            ProblemConfig::Quadratic { a, b, noise } => {
                let a = SpdMatrix::from_rows(a).context("quadratic matrix a")?;
                let b = match b {
                    Some(b) => DVector::from_vec(b.clone()),
                    None => DVector::zeros(a.dim()),
                };
                SgdProblem::quadratic(a, b, noise.build()?)?
            }
            ProblemConfig::LogcoshRidge { rows, y, mu0, noise } => {
                ensure!(!rows.is_empty(), "logcosh_ridge needs at least one row");
                let d = rows[0].len();
                ensure!(rows.iter().all(|r| r.len() == d), "logcosh_ridge rows must share a length");
                let m = DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]);
                SgdProblem::logcosh_ridge(m, DVector::from_vec(y.clone()), *mu0, noise.build()?)?
            }
            ProblemConfig::LogcoshDefault { noise } => SgdProblem::logcosh_default(noise.build()?)?,
        })
    }

    /// Reads a standalone problem document.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing problem {}", path.display()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FunctionConfig {
    Catalog(String),
    Custom(CustomFunction),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomFunction {
    pub family: String,
    pub params: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

impl FunctionConfig {
    pub fn build(&self, dim: usize) -> Result<TestFunction> {
        match self {
            FunctionConfig::Catalog(name) => Ok(catalog_function(name, dim)?),
            FunctionConfig::Custom(c) => {
                let family: FamilyKind = c.family.parse()?;
                let h = make_test_function(family, &c.params, dim)?;
                Ok(match &c.name {
                    Some(n) => h.named(n),
                    None => h,
                })
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StandardizationConfig {
    SigmaSum,
    SqrtT,
    SigmaT,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsConfig {
    pub k: f64,
    pub k2: f64,
    pub c_prime: f64,
    pub c1: f64,
    pub c2: f64,
    pub lambda: f64,
}

impl ConstantsConfig {
    pub fn build(&self) -> Result<BoundConstants> {
        Ok(BoundConstants::user(self.k, self.k2, self.c_prime, self.c1, self.c2, self.lambda)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing constants {}", path.display()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub path: String,
    #[serde(default)]
    pub format: Format,
}

/// Sweepable config axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Axis {
    Horizon,
    Dim,
    Reps,
    Eta0,
    C3,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).context("config does not match the experiment schema")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<(Self, Vec<u8>)> {
        let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        let text = std::str::from_utf8(&bytes).context("config is not UTF-8")?;
        Ok((Self::parse(text).with_context(|| format!("invalid config {}", path.display()))?, bytes))
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.schema_version == SCHEMA_VERSION, "unsupported schema_version {} (expected {SCHEMA_VERSION})", self.schema_version);
        ensure!(!self.id.is_empty() && !self.id.contains(['/', '\\']), "experiment id must be a non-empty file-name-safe string");
        ensure!(self.reps >= 2, "reps must be at least 2, got {}", self.reps);
        if let Some(c2) = self.c2 {
            ensure!(c2 > 0.0 && c2 < 1.0, "c2 must lie in (0, 1), got {c2}");
        }
        match &self.engine {
            EngineConfig::Martingale { horizon, dim, .. } => {
                ensure!(*horizon >= 1 && *dim >= 1, "martingale dim and horizon must be positive");
            }
            EngineConfig::Linear { schedule, horizon, .. } | EngineConfig::Sgd { schedule, horizon, .. } => {
                schedule.build()?;
                ensure!(*horizon >= 1, "horizon must be positive");
            }
        }
        if let Some(b) = &self.bounds {
            for name in b {
                BoundKind::parse(name)?;
            }
        }
        if let Some(c) = &self.constants {
            c.build()?;
        }
        // resolves the catalog entries
        self.spec()?;
        Ok(())
    }

    pub fn engine(&self) -> Result<Engine> {
        Ok(match &self.engine {
            EngineConfig::Martingale { model, dim, horizon } => Engine::Martingale(MartingaleModel::by_name(model, *dim, *horizon)?),
            EngineConfig::Linear { problem, schedule, theta0, horizon } => {
                let problem = problem.build()?;
                let theta0 = initial_point(theta0, problem.dim())?;
                Engine::Linear { problem, schedule: schedule.build()?, theta0, horizon: *horizon }
            }
            EngineConfig::Sgd { problem, schedule, theta0, horizon } => {
                let problem = problem.build()?;
                let theta0 = initial_point(theta0, problem.dim())?;
                Engine::Sgd { problem, schedule: schedule.build()?, theta0, horizon: *horizon }
            }
        })
    }

    pub fn spec(&self) -> Result<ExperimentSpec> {
        let engine = self.engine()?;
        let h = self.function.build(engine.dim())?;
        let mut spec = ExperimentSpec::new(&self.id, engine, h);
        if let Some(b) = &self.bounds {
            spec.bounds = b.iter().map(|n| BoundKind::parse(n)).collect::<mclt_sgd::Result<_>>()?;
        }
        if let Some(s) = self.standardization {
            spec.standardization = match s {
                StandardizationConfig::SigmaSum => Standardization::SigmaSum,
                StandardizationConfig::SqrtT => Standardization::SqrtT,
                StandardizationConfig::SigmaT => Standardization::SigmaT,
            };
        }
        if let Some(c) = &self.constants {
            spec.constants = Some(c.build()?);
        }
        if let Some(c2) = self.c2 {
            spec.c2 = c2;
        }
        spec.checkpoints = self.checkpoints.clone();
        Ok(spec)
    }

    /// Copy of the config with one axis set to `value`.
    pub fn with_axis(&self, axis: Axis, value: f64) -> Result<Self> {
        let mut c = self.clone();
        let as_count = |v: f64| -> Result<usize> {
            ensure!(v >= 1.0 && v.fract() == 0.0, "axis value {v} must be a positive integer");
            Ok(v as usize)
        };
        match (axis, &mut c.engine) {
            (Axis::Horizon, EngineConfig::Martingale { horizon, .. })
            | (Axis::Horizon, EngineConfig::Linear { horizon, .. })
            | (Axis::Horizon, EngineConfig::Sgd { horizon, .. }) => *horizon = as_count(value)?,
            (Axis::Dim, EngineConfig::Martingale { dim, .. }) => *dim = as_count(value)?,
            (Axis::Dim, _) => bail!("the dim axis applies to martingale experiments only"),
            (Axis::Reps, _) => c.reps = as_count(value)?,
            (Axis::Eta0, EngineConfig::Linear { schedule, .. }) | (Axis::Eta0, EngineConfig::Sgd { schedule, .. }) => schedule.eta0 = value,
            (Axis::C3, EngineConfig::Linear { schedule, .. }) | (Axis::C3, EngineConfig::Sgd { schedule, .. }) => schedule.c3 = value,
            (Axis::Eta0 | Axis::C3, EngineConfig::Martingale { .. }) => bail!("schedule axes apply to iteration experiments only"),
        }
        c.validate()?;
        Ok(c)
    }
}

fn initial_point(theta0: &Option<Vec<f64>>, d: usize) -> Result<DVector<f64>> {
    match theta0 {
        None => Ok(DVector::zeros(d)),
        Some(v) => {
            ensure!(v.len() == d, "theta0 has length {} but the problem has dimension {d}", v.len());
            Ok(DVector::from_vec(v.clone()))
        }
    }
}
