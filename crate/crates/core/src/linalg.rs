//! Dense symmetric linear algebra: SPD matrices, eigendecompositions,
//! fractional matrix powers and the three matrix norms used by the bounds.
//!
//! The eigensolver and SVD come from `nalgebra`; this module only adds the
//! validation policy (symmetry and positive-definiteness thresholds) and the
//! spectral calculus on top.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative asymmetry tolerated before a matrix is rejected.
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Smallest eigenvalue must exceed this fraction of the largest.
pub const PD_RATIO: f64 = 1e-12;

/// Eigendecomposition `Q diag(eigenvalues) Q^T`, eigenvalues nondecreasing.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: DMatrix<f64>,
}

impl Spectrum {
    pub fn min(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn max(&self) -> f64 {
        *self.eigenvalues.last().expect("non-empty spectrum")
    }

    /// `Q diag(g(lambda)) Q^T`.
    pub fn apply(&self, g: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let q = &self.eigenvectors;
        let d = DVector::from_iterator(self.eigenvalues.len(), self.eigenvalues.iter().map(|&l| g(l)));
        q * DMatrix::from_diagonal(&d) * q.transpose()
    }
}

/// Symmetric positive-definite matrix with its cached spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix {
    mat: DMatrix<f64>,
    spectrum: Spectrum,
}

impl SpdMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        let spectrum = spectral_decompose(&m)?;
        let mat = symmetrize(&m);
        Ok(Self { mat, spectrum })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(matrix_from_rows(rows)?)
    }

    pub fn identity(d: usize) -> Self {
        Self::scaled_identity(d, 1.0)
    }

    /// `c I` for `c > 0`.
    pub fn scaled_identity(d: usize, c: f64) -> Self {
        assert!(c > 0.0 && d > 0);
        Self {
            mat: DMatrix::identity(d, d) * c,
            spectrum: Spectrum { eigenvalues: vec![c; d], eigenvectors: DMatrix::identity(d, d) },
        }
    }

    pub fn diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.mat
    }

    pub fn spectrum(&self) -> &Spectrum {
        &self.spectrum
    }

    pub fn lambda_min(&self) -> f64 {
        self.spectrum.min()
    }

    pub fn lambda_max(&self) -> f64 {
        self.spectrum.max()
    }

    pub fn trace(&self) -> f64 {
        self.mat.trace()
    }

    pub fn pow(&self, p: f64) -> SpdMatrix {
        matrix_power(self, p)
    }

    pub fn inverse(&self) -> SpdMatrix {
        matrix_power(self, -1.0)
    }

    pub fn scale(&self, c: f64) -> SpdMatrix {
        assert!(c > 0.0);
        let mut spectrum = self.spectrum.clone();
        spectrum.eigenvalues.iter_mut().for_each(|l| *l *= c);
        SpdMatrix { mat: &self.mat * c, spectrum }
    }

    /// `B M B^T` for an invertible `B`; result revalidated.
    pub fn congruence(&self, b: &DMatrix<f64>) -> Result<SpdMatrix> {
        SpdMatrix::new(b * &self.mat * b.transpose())
    }
}

pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    if n == 0 {
        return Err(Error::InvalidParams("empty matrix".into()));
    }
    for r in rows {
        if r.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: r.len() });
        }
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Full eigendecomposition of a symmetric positive-definite matrix.
///
/// Inputs are symmetrized as `(M + M^T)/2` after checking that the relative
/// asymmetry `|M - M^T|_F / |M|_F` is at most [`SYMMETRY_TOL`]. The smallest
/// eigenvalue must exceed `PD_RATIO * lambda_max`; nothing is regularized.
pub fn spectral_decompose(m: &DMatrix<f64>) -> Result<Spectrum> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch { expected: m.nrows(), got: m.ncols() });
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite);
    }
    let scale = m.norm();
    let asym = (m - m.transpose()).norm();
    let asymmetry = if scale > 0.0 { asym / scale } else { 0.0 };
    if asymmetry > SYMMETRY_TOL {
        return Err(Error::NotSymmetric { asymmetry });
    }
    let eig = SymmetricEigen::new(symmetrize(m));
    let d = m.nrows();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let eigenvectors = DMatrix::from_fn(d, d, |r, c| eig.eigenvectors[(r, order[c])]);
    let (min, max) = (eigenvalues[0], eigenvalues[d - 1]);
    if max <= 0.0 || min <= PD_RATIO * max {
        return Err(Error::NotPositiveDefinite { min, max });
    }
    Ok(Spectrum { eigenvalues, eigenvectors })
}

/// `Q Lambda^p Q^T`.
pub fn matrix_power(m: &SpdMatrix, p: f64) -> SpdMatrix {
    let spec = &m.spectrum;
    let mut pairs: Vec<(f64, usize)> = spec.eigenvalues.iter().map(|l| l.powf(p)).zip(0..).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let d = m.dim();
    let eigenvalues: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let eigenvectors = DMatrix::from_fn(d, d, |r, c| spec.eigenvectors[(r, pairs[c].1)]);
    let spectrum = Spectrum { eigenvalues, eigenvectors };
    let mat = symmetrize(&spectrum.apply(|l| l));
    SpdMatrix { mat, spectrum }
}

/// Operator (spectral), Frobenius and nuclear norms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatrixNorms {
    pub operator: f64,
    pub frobenius: f64,
    pub nuclear: f64,
}

pub fn norms(m: &DMatrix<f64>) -> Result<MatrixNorms> {
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite);
    }
    if m.is_empty() {
        return Ok(MatrixNorms { operator: 0.0, frobenius: 0.0, nuclear: 0.0 });
    }
    let sv = m.clone().singular_values();
    Ok(MatrixNorms {
        operator: sv.max(),
        frobenius: m.norm(),
        nuclear: sv.sum(),
    })
}

/// Largest singular value.
pub fn op_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().singular_values().max()
}

/// Relative Frobenius distance `|a - b|_F / |b|_F` (absolute when `b = 0`).
pub fn rel_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let nb = b.norm();
    let diff = (a - b).norm();
    if nb > 0.0 {
        diff / nb
    } else {
        diff
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn identity_spectrum() {
        let s = spectral_decompose(&DMatrix::identity(3, 3)).unwrap();
        assert_eq!(s.eigenvalues, vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn diagonal_spectrum_uses_standard_basis() {
        let s = spectral_decompose(&DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 1.0]))).unwrap();
        assert_relative_eq!(s.eigenvalues[0], 1.0, epsilon = 1e-15);
        assert_relative_eq!(s.eigenvalues[1], 4.0, epsilon = 1e-15);
        // eigenvector for 1 is e2, for 4 is e1 (up to sign)
        assert_relative_eq!(s.eigenvectors[(1, 0)].abs(), 1.0, epsilon = 1e-15);
        assert_relative_eq!(s.eigenvectors[(0, 1)].abs(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn two_by_two_characteristic_polynomial() {
        // lambda^2 - 4 lambda + 3 = 0
        let m = matrix_from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let s = spectral_decompose(&m).unwrap();
        assert_relative_eq!(s.eigenvalues[0], 1.0, epsilon = 1e-14);
        assert_relative_eq!(s.eigenvalues[1], 3.0, epsilon = 1e-14);
    }

    #[test]
    fn rejects_asymmetric_and_indefinite() {
        let m = matrix_from_rows(&[vec![2.0, 1.0], vec![0.0, 2.0]]).unwrap();
        assert!(matches!(spectral_decompose(&m), Err(Error::NotSymmetric { .. })));
        let m = matrix_from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert!(matches!(spectral_decompose(&m), Err(Error::NotPositiveDefinite { .. })));
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1e-13]));
        assert!(matches!(spectral_decompose(&m), Err(Error::NotPositiveDefinite { .. })));
    }

    #[test]
    fn tiny_asymmetry_is_symmetrized() {
        let m = matrix_from_rows(&[vec![2.0, 1.0 + 1e-15], vec![1.0, 2.0]]).unwrap();
        let s = SpdMatrix::new(m).unwrap();
        assert_eq!(s.matrix()[(0, 1)], s.matrix()[(1, 0)]);
    }

    #[test]
    fn powers_of_diagonal() {
        let i2 = SpdMatrix::identity(2);
        assert_relative_eq!(*matrix_power(&i2, -0.5).matrix(), DMatrix::identity(2, 2), epsilon = 1e-15);
        let m = SpdMatrix::diagonal(&[4.0, 9.0]).unwrap();
        let half = matrix_power(&m, 0.5);
        assert_relative_eq!(half.matrix()[(0, 0)], 2.0, epsilon = 1e-14);
        assert_relative_eq!(half.matrix()[(1, 1)], 3.0, epsilon = 1e-14);
        let inv = matrix_power(&m, -1.0);
        assert_relative_eq!(inv.matrix()[(0, 0)], 0.25, epsilon = 1e-15);
        assert_relative_eq!(inv.matrix()[(1, 1)], 1.0 / 9.0, epsilon = 1e-15);
    }

    #[test]
    fn norm_examples() {
        let n = norms(&DMatrix::identity(3, 3)).unwrap();
        assert_relative_eq!(n.operator, 1.0, epsilon = 1e-14);
        assert_relative_eq!(n.frobenius, 3f64.sqrt(), epsilon = 1e-14);
        assert_relative_eq!(n.nuclear, 3.0, epsilon = 1e-14);
        let n = norms(&DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, -1.0]))).unwrap();
        assert_relative_eq!(n.operator, 2.0, epsilon = 1e-14);
        assert_relative_eq!(n.frobenius, 5f64.sqrt(), epsilon = 1e-14);
        assert_relative_eq!(n.nuclear, 3.0, epsilon = 1e-14);
        let n = norms(&DMatrix::zeros(2, 2)).unwrap();
        assert_eq!((n.operator, n.frobenius, n.nuclear), (0.0, 0.0, 0.0));
        let mut bad = DMatrix::zeros(2, 2);
        bad[(0, 0)] = f64::NAN;
        assert_eq!(norms(&bad), Err(Error::NonFinite));
    }

    fn spd_strategy() -> impl Strategy<Value = DMatrix<f64>> {
        (1usize..6).prop_flat_map(|d| {
            (proptest::collection::vec(-2.0f64..2.0, d * d), proptest::collection::vec(0.05f64..3.0, d)).prop_map(
                move |(g, diag)| {
                    // G G^T + diag: symmetric and well conditioned
                    let g = DMatrix::from_vec(d, d, g);
                    &g * g.transpose() + DMatrix::from_diagonal(&DVector::from_vec(diag))
                },
            )
        })
    }

    proptest! {
        #[test]
        fn square_root_squares_back(m in spd_strategy()) {
            let spd = SpdMatrix::new(m.clone()).unwrap();
            let half = spd.pow(0.5);
            let back = half.matrix() * half.matrix();
            prop_assert!(rel_frobenius(&back, spd.matrix()) <= 1e-10);
            let inv_half = spd.pow(-0.5);
            let id = inv_half.matrix() * half.matrix();
            prop_assert!(rel_frobenius(&id, &DMatrix::identity(spd.dim(), spd.dim())) <= 1e-10);
        }

        #[test]
        fn reconstruction_and_operator_norm(m in spd_strategy()) {
            let spd = SpdMatrix::new(m).unwrap();
            let s = spd.spectrum();
            prop_assert!(s.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
            prop_assert!(rel_frobenius(&s.apply(|l| l), spd.matrix()) <= 1e-10);
            let op = norms(spd.matrix()).unwrap().operator;
            prop_assert!((op - spd.lambda_max()).abs() <= 1e-10 * spd.lambda_max());
        }
    }
}
