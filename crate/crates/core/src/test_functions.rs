//! Smooth test functions `h: R^d -> R` with certified smoothness constants.
//!
//! `m1` bounds the Lipschitz constant of `h` (sup of the gradient norm) and
//! `m2` the Lipschitz constant of the gradient (sup of the Hessian operator
//! norm). Both are derived analytically per family.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::op_norm;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    Quadratic,
    Cosine,
    SoftplusRadial,
}

impl fmt::Display for FamilyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FamilyKind::Quadratic => "quadratic",
            FamilyKind::Cosine => "cosine",
            FamilyKind::SoftplusRadial => "softplus_radial",
        })
    }
}

impl std::str::FromStr for FamilyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quadratic" => Ok(FamilyKind::Quadratic),
            "cosine" => Ok(FamilyKind::Cosine),
            "softplus_radial" | "softplus" => Ok(FamilyKind::SoftplusRadial),
            other => Err(Error::InvalidParams(format!("unknown family '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Shape {
    /// `h(x) = x^T Q x / 2`, `Q` row-major.
    Quadratic(Vec<f64>),
    /// `h(x) = cos(<a, x> + phase)`.
    Cosine { a: Vec<f64>, phase: f64 },
    /// `h(x) = sqrt(1 + <a, x>^2)`.
    Softplus(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestFunction {
    name: String,
    dim: usize,
    family: FamilyKind,
    shape: Shape,
    m1: Option<f64>,
    m2: f64,
}

fn euclid(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn dot(a: &[f64], x: &[f64]) -> f64 {
    a.iter().zip(x).map(|(a, x)| a * x).sum()
}

/// Builds a member of `family`.
///
/// Parameter layout: quadratic takes the `d*d` entries of `Q` row-major;
/// cosine takes `a` (length `d`) optionally followed by a phase; softplus
/// takes `a`.
pub fn make_test_function(family: FamilyKind, params: &[f64], dim: usize) -> Result<TestFunction> {
    if dim == 0 {
        return Err(Error::InvalidParams("dimension must be positive".into()));
    }
    if params.iter().any(|p| !p.is_finite()) {
        return Err(Error::InvalidParams("parameters must be finite".into()));
    }
    let (shape, m1, m2) = match family {
        FamilyKind::Quadratic => {
            if params.len() != dim * dim {
                return Err(Error::InvalidParams(format!("quadratic needs {} entries, got {}", dim * dim, params.len())));
            }
            let q = DMatrix::from_row_slice(dim, dim, params);
            let scale = q.norm();
            if (&q - q.transpose()).norm() > 1e-12 * scale.max(f64::MIN_POSITIVE) {
                return Err(Error::InvalidParams("Q must be symmetric".into()));
            }
            let m2 = op_norm(&q);
            let m1 = if m2 == 0.0 { Some(0.0) } else { None };
            (Shape::Quadratic(params.to_vec()), m1, m2)
        }
        FamilyKind::Cosine => {
            let phase = match params.len() {
                n if n == dim => 0.0,
                n if n == dim + 1 => params[dim],
                n => return Err(Error::InvalidParams(format!("cosine needs {dim} or {} parameters, got {n}", dim + 1))),
            };
            let a = params[..dim].to_vec();
            let na = euclid(&a);
            if na == 0.0 {
                return Err(Error::InvalidParams("cosine frequency vector must be nonzero".into()));
            }
            (Shape::Cosine { a, phase }, Some(na), na * na)
        }
        FamilyKind::SoftplusRadial => {
            if params.len() != dim {
                return Err(Error::InvalidParams(format!("softplus needs {dim} parameters, got {}", params.len())));
            }
            let na = euclid(params);
            (Shape::Softplus(params.to_vec()), Some(na), na * na)
        }
    };
    Ok(TestFunction { name: family.to_string(), dim, family, shape, m1, m2 })
}

impl TestFunction {
    pub fn named(mut self, name: &str) -> Self {
        self.name = name.to_string();
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn family(&self) -> FamilyKind {
        self.family
    }

    /// `None` when unbounded.
    pub fn m1(&self) -> Option<f64> {
        self.m1
    }

    pub fn m2(&self) -> f64 {
        self.m2
    }

    pub fn is_constant(&self) -> bool {
        matches!(&self.shape, Shape::Quadratic(q) if q.iter().all(|v| *v == 0.0))
    }

    /// Odd functions (`h(-x) = -h(x)`), used for symmetry shortcuts in tests.
    pub fn is_odd(&self) -> bool {
        matches!(&self.shape, Shape::Cosine { phase, .. } if phase.cos().abs() < 1e-12)
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        match &self.shape {
            Shape::Quadratic(q) => {
                let d = self.dim;
                let mut acc = 0.0;
                for i in 0..d {
                    acc += x[i] * dot(&q[i * d..(i + 1) * d], x);
                }
                0.5 * acc
            }
            Shape::Cosine { a, phase } => (dot(a, x) + phase).cos(),
            Shape::Softplus(a) => {
                let s = dot(a, x);
                (1.0 + s * s).sqrt()
            }
        }
    }

    /// Writes the gradient into `g` and the row-major Hessian into `hess`,
    /// returning `h(x)`.
    pub fn eval_into(&self, x: &[f64], g: &mut [f64], hess: &mut [f64]) -> f64 {
        let d = self.dim;
        match &self.shape {
            Shape::Quadratic(q) => {
                for i in 0..d {
                    g[i] = dot(&q[i * d..(i + 1) * d], x);
                }
                hess.copy_from_slice(q);
                0.5 * dot(g, x)
            }
            Shape::Cosine { a, phase } => {
                let (s, c) = (dot(a, x) + phase).sin_cos();
                for i in 0..d {
                    g[i] = -s * a[i];
                    for j in 0..d {
                        hess[i * d + j] = -c * a[i] * a[j];
                    }
                }
                c
            }
            Shape::Softplus(a) => {
                let s = dot(a, x);
                let r = (1.0 + s * s).sqrt();
                let g1 = s / r;
                let g2 = 1.0 / (r * r * r);
                for i in 0..d {
                    g[i] = g1 * a[i];
                    for j in 0..d {
                        hess[i * d + j] = g2 * a[i] * a[j];
                    }
                }
                r
            }
        }
    }

    pub fn gradient(&self, x: &[f64]) -> DVector<f64> {
        let d = self.dim;
        let mut g = vec![0.0; d];
        let mut h = vec![0.0; d * d];
        self.eval_into(x, &mut g, &mut h);
        DVector::from_vec(g)
    }

    pub fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        let d = self.dim;
        let mut g = vec![0.0; d];
        let mut h = vec![0.0; d * d];
        self.eval_into(x, &mut g, &mut h);
        DMatrix::from_row_slice(d, d, &h)
    }
}

/// Names accepted by [`catalog_function`].
pub const CATALOG: &[&str] = &["cos", "cos2x", "sin", "cos_diag", "cos34", "half_sq", "softplus", "const"];

/// Catalog entry `name` in dimension `dim`.
///
/// `cos`, `cos2x`, `sin` and `softplus` act on the first coordinate;
/// `cos_diag` uses `a = (1, .., 1)/sqrt(d)`; `cos34` is `cos(3x + 4y)` and
/// exists only for `d = 2`; `half_sq` is `|x|^2 / 2`; `const` is zero.
pub fn catalog_function(name: &str, dim: usize) -> Result<TestFunction> {
    if dim == 0 {
        return Err(Error::InvalidParams("dimension must be positive".into()));
    }
    let e1 = |scale: f64| {
        let mut a = vec![0.0; dim];
        a[0] = scale;
        a
    };
    let tf = match name {
        "cos" => make_test_function(FamilyKind::Cosine, &e1(1.0), dim)?,
        "cos2x" => make_test_function(FamilyKind::Cosine, &e1(2.0), dim)?,
        "sin" => {
            let mut p = e1(1.0);
            p.push(-std::f64::consts::FRAC_PI_2);
            make_test_function(FamilyKind::Cosine, &p, dim)?
        }
        "cos_diag" => make_test_function(FamilyKind::Cosine, &vec![1.0 / (dim as f64).sqrt(); dim], dim)?,
        "cos34" => {
            if dim != 2 {
                return Err(Error::InvalidParams("cos34 is defined for d = 2 only".into()));
            }
            make_test_function(FamilyKind::Cosine, &[3.0, 4.0], 2)?
        }
        "half_sq" => {
            let q = DMatrix::<f64>::identity(dim, dim);
            make_test_function(FamilyKind::Quadratic, q.as_slice(), dim)?
        }
        "softplus" => make_test_function(FamilyKind::SoftplusRadial, &e1(1.0), dim)?,
        "const" => make_test_function(FamilyKind::Quadratic, &vec![0.0; dim * dim], dim)?,
        other => return Err(Error::InvalidParams(format!("unknown test function '{other}'"))),
    };
    Ok(tf.named(name))
}

/// Every catalog entry in the given dimensions (skipping entries that do not
/// exist in a dimension).
pub fn catalog(dims: &[usize]) -> Vec<TestFunction> {
    let mut out = Vec::new();
    for &d in dims {
        for name in CATALOG {
            if let Ok(tf) = catalog_function(name, d) {
                out.push(tf);
            }
        }
    }
    out
}
