//! Gauss-Hermite and Gauss-Legendre rules (Newton iteration on the
//! three-term recurrences).

use crate::error::{Error, Result};

/// One-dimensional rule for `E g(Z)`, `Z ~ N(0, 1)`: `sum_i w_i g(x_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussianRule {
    /// `n`-point Gauss-Hermite rule rescaled to the standard normal density.
    pub fn new(n: usize) -> Self {
        let (x, w) = gauss_hermite_physicists(n);
        let s = std::f64::consts::SQRT_2;
        let norm = std::f64::consts::PI.sqrt();
        GaussianRule {
            nodes: x.iter().map(|v| v * s).collect(),
            weights: w.iter().map(|v| v / norm).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn expect1(&self, g: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * g(x)).sum()
    }

    /// Tensor-product expectation over `Z ~ N(0, I_dim)`. The closure gets
    /// each node vector and its product weight.
    pub fn for_each_tensor(&self, dim: usize, mut f: impl FnMut(&[f64], f64)) {
        let n = self.len();
        let mut idx = vec![0usize; dim];
        let mut z = vec![0.0; dim];
        loop {
            let mut w = 1.0;
            for (k, &i) in idx.iter().enumerate() {
                z[k] = self.nodes[i];
                w *= self.weights[i];
            }
            f(&z, w);
            let mut k = 0;
            loop {
                if k == dim {
                    return;
                }
                idx[k] += 1;
                if idx[k] < n {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
        }
    }

    pub fn expect(&self, dim: usize, g: impl Fn(&[f64]) -> f64) -> f64 {
        let mut acc = 0.0;
        self.for_each_tensor(dim, |z, w| acc += w * g(z));
        acc
    }
}

/// Nodes and weights for `int e^{-x^2} g(x) dx`.
pub fn gauss_hermite_physicists(n: usize) -> (Vec<f64>, Vec<f64>) {
    const PIM4: f64 = 0.751_125_544_464_942_5; // pi^(-1/4)
    assert!(n > 0);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    let nf = n as f64;
    let mut z = 0.0f64;
    for i in 0..m {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = PIM4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// `n`-point Gauss-Legendre rule on `[a, b]`.
pub fn gauss_legendre(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    let xm = 0.5 * (b + a);
    let xl = 0.5 * (b - a);
    let nf = n as f64;
    for i in 1..=m {
        let mut z = (std::f64::consts::PI * (i as f64 - 0.25) / (nf + 0.5)).cos();
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = ((2.0 * jf - 1.0) * z * p2 - (jf - 1.0) * p3) / jf;
            }
            pp = nf * (z * p1 - p2) / (z * z - 1.0);
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 {
                break;
            }
        }
        x[i - 1] = xm - xl * z;
        x[n - i] = xm + xl * z;
        w[i - 1] = 2.0 * xl / ((1.0 - z * z) * pp * pp);
        w[n - i] = w[i - 1];
    }
    (x, w)
}

/// Composite Gauss-Legendre rule over consecutive panels given by their
/// breakpoints, each panel split into `2^refine` equal sub-panels.
pub fn composite_legendre(breaks: &[f64], order: usize, refine: u32) -> Result<(Vec<f64>, Vec<f64>)> {
    if breaks.len() < 2 || breaks.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParams("panel breakpoints must be increasing".into()));
    }
    let parts = 1usize << refine;
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    for w in breaks.windows(2) {
        let h = (w[1] - w[0]) / parts as f64;
        for p in 0..parts {
            let a = w[0] + h * p as f64;
            let (x, wt) = gauss_legendre(order, a, a + h);
            nodes.extend(x);
            weights.extend(wt);
        }
    }
    Ok((nodes, weights))
}
