//! Numerical solution of the Gaussian Stein equation
//!
//! `<Sigma, Hess f(x)> - <x - mu, grad f(x)> = h(x) - E h(Sigma^{1/2} Z + mu)`
//!
//! through the Ornstein-Uhlenbeck semigroup representation
//! `f(x) = int_0^inf [E h(Y) - E h(e^{-t}(x - mu) + sqrt(1 - e^{-2t}) Y_0 + mu)] dt`.
//! Derivatives are differentiated under the integral, so the Hessian is
//! `-int e^{-2t} E Hess h(.) dt` and never needs finite differences of `h`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{op_norm, SpdMatrix};
use crate::quadrature::{composite_legendre, GaussianRule};
use crate::test_functions::TestFunction;

pub const MAX_STEIN_DIM: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct SteinOptions {
    /// Gauss-Hermite nodes per axis.
    pub hermite_nodes: usize,
    /// Gauss-Legendre order per time panel.
    pub legendre_order: usize,
    /// Truncation point of the time integral.
    pub horizon: f64,
    /// Refinements (panel halvings) tried before giving up.
    pub max_refine: u32,
    pub tolerance: f64,
    /// Points per axis of the residual probe grid on `[-2, 2]^d`.
    pub probe_points: usize,
}

impl Default for SteinOptions {
    fn default() -> Self {
        // e^{-24} ~ 4e-11: the gradient integrand only decays like e^{-t}.
        SteinOptions { hermite_nodes: 64, legendre_order: 16, horizon: 24.0, max_refine: 3, tolerance: 1e-4, probe_points: 5 }
    }
}

#[derive(Debug, Clone)]
pub struct SteinSolution {
    h: TestFunction,
    mu: Vec<f64>,
    sigma: SpdMatrix,
    /// `(t, weight)` pairs.
    time_grid: Vec<(f64, f64)>,
    /// Tensor Gauss-Hermite nodes already mapped through `Sigma^{1/2}`.
    space_nodes: Vec<f64>,
    space_weights: Vec<f64>,
    reference: f64,
    refine: u32,
    max_residual: f64,
}

/// Geometric panels on `[0, 1]` (the integrands vary fastest near 0), then
/// unit panels up to 4 and doubling widths up to `horizon`.
fn time_breaks(horizon: f64) -> Vec<f64> {
    let mut b = vec![0.0];
    let mut x = 1.0 / 32.0;
    while x < 1.0 {
        b.push(x);
        x *= 2.0;
    }
    let mut x = 1.0;
    while x < horizon.min(4.0) {
        b.push(x);
        x += 1.0;
    }
    let mut w = 2.0;
    while x < horizon {
        b.push(x);
        x += w;
        w *= 2.0;
    }
    b.push(horizon);
    b
}

struct Accum {
    f: f64,
    grad: Vec<f64>,
    hess: Vec<f64>,
}

impl SteinSolution {
    fn build(h: &TestFunction, mu: &[f64], sigma: &SpdMatrix, opts: &SteinOptions, refine: u32) -> Result<Self> {
        let d = h.dim();
        let (t, w) = composite_legendre(&time_breaks(opts.horizon), opts.legendre_order, refine)?;
        let rule = GaussianRule::new(opts.hermite_nodes);
        let root = sigma.pow(0.5);
        let s = root.matrix();
        let mut space_nodes = Vec::with_capacity(rule.len().pow(d as u32) * d);
        let mut space_weights = Vec::with_capacity(rule.len().pow(d as u32));
        rule.for_each_tensor(d, |z, wt| {
            for i in 0..d {
                space_nodes.push((0..d).map(|j| s[(i, j)] * z[j]).sum::<f64>());
            }
            space_weights.push(wt);
        });
        let mut sol = SteinSolution {
            h: h.clone(),
            mu: mu.to_vec(),
            sigma: sigma.clone(),
            time_grid: t.into_iter().zip(w).collect(),
            space_nodes,
            space_weights,
            reference: 0.0,
            refine,
            max_residual: f64::NAN,
        };
        sol.reference = sol.gaussian_mean(0.0, 1.0, &vec![0.0; d]);
        Ok(sol)
    }

    /// `E h(a (x - mu) + b Sigma^{1/2} Z + mu)`.
    fn gaussian_mean(&self, a: f64, b: f64, x: &[f64]) -> f64 {
        let d = self.h.dim();
        let mut y = vec![0.0; d];
        let mut acc = 0.0;
        for (k, &wt) in self.space_weights.iter().enumerate() {
            for i in 0..d {
                y[i] = a * (x[i] - self.mu[i]) + b * self.space_nodes[k * d + i] + self.mu[i];
            }
            acc += wt * self.h.value(&y);
        }
        acc
    }

    fn integrate(&self, x: &[f64], want_f: bool) -> Accum {
        let d = self.h.dim();
        let mut out = Accum { f: 0.0, grad: vec![0.0; d], hess: vec![0.0; d * d] };
        let mut y = vec![0.0; d];
        let mut g = vec![0.0; d];
        let mut hh = vec![0.0; d * d];
        let mut eg = vec![0.0; d];
        let mut eh = vec![0.0; d * d];
        for &(t, wt) in &self.time_grid {
            let a = (-t).exp();
            let b = (-(-2.0 * t).exp_m1()).sqrt();
            let mut ev = 0.0;
            eg.iter_mut().for_each(|v| *v = 0.0);
            eh.iter_mut().for_each(|v| *v = 0.0);
            for (k, &sw) in self.space_weights.iter().enumerate() {
                for i in 0..d {
                    y[i] = a * (x[i] - self.mu[i]) + b * self.space_nodes[k * d + i] + self.mu[i];
                }
                ev += sw * self.h.eval_into(&y, &mut g, &mut hh);
                for i in 0..d {
                    eg[i] += sw * g[i];
                }
                for i in 0..d * d {
                    eh[i] += sw * hh[i];
                }
            }
            if want_f {
                out.f += wt * (self.reference - ev);
            }
            for i in 0..d {
                out.grad[i] -= wt * a * eg[i];
            }
            for i in 0..d * d {
                out.hess[i] -= wt * a * a * eh[i];
            }
        }
        out
    }

    pub fn test_function(&self) -> &TestFunction {
        &self.h
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn sigma(&self) -> &SpdMatrix {
        &self.sigma
    }

    pub fn time_nodes(&self) -> usize {
        self.time_grid.len()
    }

    pub fn refinements(&self) -> u32 {
        self.refine
    }

    /// Largest residual seen on the probe grid when the solution was accepted.
    pub fn max_residual(&self) -> f64 {
        self.max_residual
    }

    /// `E h(Sigma^{1/2} Z + mu)` by the same tensor rule.
    pub fn reference_mean(&self) -> f64 {
        self.reference
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.integrate(x, true).f
    }

    /// `(grad f(x), Hess f(x))` in one pass over the quadrature grid.
    pub fn derivatives(&self, x: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
        let d = self.h.dim();
        let acc = self.integrate(x, false);
        (DVector::from_vec(acc.grad), DMatrix::from_row_slice(d, d, &acc.hess))
    }

    /// Left side minus right side of the Stein equation at `x`.
    pub fn residual(&self, x: &[f64]) -> f64 {
        let (g, hs) = self.derivatives(x);
        let sig = self.sigma.matrix();
        let lhs = sig.component_mul(&hs).sum() - (0..x.len()).map(|i| (x[i] - self.mu[i]) * g[i]).sum::<f64>();
        lhs - (self.h.value(x) - self.reference)
    }

    /// `(pi/4) sqrt(d) M2(h) |Sigma^{-1/2}|`, the analytic Stein-factor bound.
    pub fn stein_factor_bound(&self) -> f64 {
        let d = self.h.dim() as f64;
        std::f64::consts::FRAC_PI_4 * d.sqrt() * self.h.m2() / self.sigma.lambda_min().sqrt()
    }
}

fn grid(d: usize, lo: f64, hi: f64, step: f64) -> Vec<Vec<f64>> {
    let n = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    let axis: Vec<f64> = (0..n).map(|i| lo + step * i as f64).collect();
    let mut pts: Vec<Vec<f64>> = vec![vec![]];
    for _ in 0..d {
        pts = pts.into_iter().flat_map(|p| axis.iter().map(move |&a| {
            let mut q = p.clone();
            q.push(a);
            q
        })).collect();
    }
    pts
}

fn max_residual(sol: &SteinSolution, probes: &[Vec<f64>]) -> f64 {
    probes.iter().map(|x| sol.residual(x).abs()).fold(0.0, f64::max)
}

/// Solves the Stein equation for `h` against `N(mu, Sigma)`, refining the
/// time quadrature until the residual on the probe grid is below tolerance.
pub fn stein_solve(h: &TestFunction, mu: &[f64], sigma: &SpdMatrix) -> Result<SteinSolution> {
    stein_solve_with(h, mu, sigma, &SteinOptions::default())
}

pub fn stein_solve_with(h: &TestFunction, mu: &[f64], sigma: &SpdMatrix, opts: &SteinOptions) -> Result<SteinSolution> {
    let d = h.dim();
    if d > MAX_STEIN_DIM {
        return Err(Error::DimTooLarge { dim: d, max: MAX_STEIN_DIM });
    }
    if mu.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: mu.len() });
    }
    if sigma.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: sigma.dim() });
    }
    if !h.m2().is_finite() {
        return Err(Error::InvalidSmoothness("M2"));
    }
    let n = opts.probe_points.max(1);
    let step = if n > 1 { 4.0 / (n - 1) as f64 } else { 4.0 };
    let probes: Vec<Vec<f64>> = grid(d, -2.0, 2.0 + if n > 1 { 0.0 } else { -4.0 }, step)
        .into_iter()
        .map(|p| p.iter().zip(mu).map(|(x, m)| x + m).collect())
        .collect();
    let mut last = f64::INFINITY;
    for refine in 0..=opts.max_refine {
        let mut sol = SteinSolution::build(h, mu, sigma, opts, refine)?;
        last = max_residual(&sol, &probes);
        if last <= opts.tolerance {
            sol.max_residual = last;
            return Ok(sol);
        }
    }
    Err(Error::QuadratureNotConverged { residual: last, tolerance: opts.tolerance })
}

/// Finite-difference step for Hessians of the gradient integral.
pub const FD_STEP: f64 = 1e-3;

/// Lower estimate of `M3(f)`: the largest `|Hess f(x) - Hess f(y)|_2 / |x - y|`
/// over pairs of points on a grid covering `[lo, hi]^d`, with Hessians taken
/// by central differences of the gradient integral.
///
/// The finite-difference Hessians are cross-checked against the directly
/// integrated ones; disagreement that would visibly move a quotient is
/// reported as [`Error::NumericallyUnstable`].
pub fn stein_factor_estimate(s: &SteinSolution, probe_box: (f64, f64), grid_step: f64) -> Result<f64> {
    let (lo, hi) = probe_box;
    if !(hi > lo) || !(grid_step > 0.0) {
        return Err(Error::InvalidParams("probe box must be non-empty with a positive step".into()));
    }
    let d = s.test_function().dim();
    let pts = grid(d, lo, hi, grid_step);
    let mut hess = Vec::with_capacity(pts.len());
    let mut worst: f64 = 0.0;
    for x in &pts {
        let (_, direct) = s.derivatives(x);
        let mut fd = DMatrix::zeros(d, d);
        let mut xp = x.clone();
        for i in 0..d {
            xp[i] = x[i] + FD_STEP;
            let (gp, _) = s.derivatives(&xp);
            xp[i] = x[i] - FD_STEP;
            let (gm, _) = s.derivatives(&xp);
            xp[i] = x[i];
            fd.set_column(i, &((gp - gm) / (2.0 * FD_STEP)));
        }
        let fd = (&fd + fd.transpose()) * 0.5;
        worst = worst.max(op_norm(&(&fd - &direct)));
        hess.push(fd);
    }
    // A Hessian error e moves a quotient over the grid spacing by 2e/step.
    if 2.0 * worst / grid_step > 1e-3 * s.stein_factor_bound().max(1e-3) {
        return Err(Error::NumericallyUnstable { discrepancy: worst });
    }
    let mut best: f64 = 0.0;
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            let dist = pts[i].iter().zip(&pts[j]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            best = best.max(op_norm(&(&hess[i] - &hess[j])) / dist);
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_functions::catalog_function;
    use approx::assert_relative_eq;

    #[test]
    fn breaks_are_increasing_and_end_at_horizon() {
        let b = time_breaks(24.0);
        assert!(b.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(*b.last().unwrap(), 24.0);
        assert_eq!(b[0], 0.0);
    }

    #[test]
    fn cosine_residual_against_closed_form_mean() {
        let h = catalog_function("cos", 1).unwrap();
        let sol = stein_solve(&h, &[0.0], &SpdMatrix::identity(1)).unwrap();
        let eh = (-0.5f64).exp();
        assert_relative_eq!(sol.reference_mean(), eh, epsilon = 1e-14);
        for x in [-2.0, -1.0, 0.0, 1.0, 2.0] {
            let (g, hs) = sol.derivatives(&[x]);
            let r = hs[(0, 0)] - x * g[0] - (x.cos() - eh);
            assert!(r.abs() <= 1e-4, "residual {r} at {x}");
        }
    }

    #[test]
    fn cosine_solution_matches_series() {
        // For h = cos and Sigma = 1: f'(x) = -int e^{-t} E[-sin(e^{-t}x + s_t Z)] dt
        // = int e^{-t} e^{-(1-e^{-2t})/2} sin(e^{-t} x) dt.
        let h = catalog_function("cos", 1).unwrap();
        let sol = stein_solve(&h, &[0.0], &SpdMatrix::identity(1)).unwrap();
        let (t, w) = composite_legendre(&[0.0, 1.0, 4.0, 12.0, 40.0], 40, 0).unwrap();
        let x = 0.7;
        let want: f64 = t.iter().zip(&w).map(|(&t, &w)| {
            let a = (-t).exp();
            w * a * (-(1.0 - a * a) / 2.0).exp() * (a * x).sin()
        }).sum();
        let (g, _) = sol.derivatives(&[x]);
        assert_relative_eq!(g[0], want, epsilon = 1e-10);
    }

    #[test]
    fn constant_function_has_zero_solution() {
        let h = catalog_function("const", 2).unwrap();
        let sigma = SpdMatrix::from_rows(&[vec![2.0, 0.5], vec![0.5, 1.0]]).unwrap();
        let sol = stein_solve(&h, &[0.3, -1.0], &sigma).unwrap();
        assert_eq!(sol.value(&[1.0, 1.0]), 0.0);
        let (g, hs) = sol.derivatives(&[1.0, 1.0]);
        assert_eq!(g.norm() + hs.norm(), 0.0);
        assert_eq!(stein_factor_estimate(&sol, (-1.0, 1.0), 0.5).unwrap(), 0.0);
    }

    #[test]
    fn residual_shrinks_with_refinement() {
        let h = catalog_function("cos", 1).unwrap();
        let sigma = SpdMatrix::identity(1);
        let coarse = SteinOptions { legendre_order: 2, ..SteinOptions::default() };
        let probes = grid(1, -2.0, 2.0, 1.0);
        let mut prev = f64::INFINITY;
        for r in 0..3 {
            let sol = SteinSolution::build(&h, &[0.0], &sigma, &coarse, r).unwrap();
            let res = max_residual(&sol, &probes);
            assert!(res < prev, "refine {r}: {res} !< {prev}");
            prev = res;
        }
    }

    #[test]
    fn rejects_high_dimension() {
        let h = catalog_function("cos", 3).unwrap();
        let err = stein_solve(&h, &[0.0; 3], &SpdMatrix::identity(3)).unwrap_err();
        assert!(matches!(err, Error::DimTooLarge { .. }));
    }

    #[test]
    fn stein_factor_below_bound_d1() {
        let h = catalog_function("cos", 1).unwrap();
        for (s, bound) in [(1.0, std::f64::consts::FRAC_PI_4), (4.0, std::f64::consts::FRAC_PI_8)] {
            let sol = stein_solve(&h, &[0.0], &SpdMatrix::scaled_identity(1, s)).unwrap();
            assert_relative_eq!(sol.stein_factor_bound(), bound, epsilon = 1e-14);
            let est = stein_factor_estimate(&sol, (-3.0, 3.0), 0.1).unwrap();
            assert!(est > 0.0 && est <= bound * 1.01, "estimate {est} vs {bound}");
        }
    }
}
