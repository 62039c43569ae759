//! Dense complex linear algebra and power-law order fitting.
//!
//! Matrices are plain `nalgebra` dynamic matrices over `Complex64`; this
//! module adds the handful of operations the estimation code needs on top
//! (Hermitian spectra sorted descending, Kronecker products, residual norms)
//! together with the log-log least-squares fit used to read off asymptotic
//! orders in `ε`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type ComplexMatrix = DMatrix<Complex64>;
pub type StateVector = DVector<Complex64>;
pub type RealMatrix = DMatrix<f64>;

/// Relative Hermiticity tolerance accepted by [`hermitian_eigendecompose`].
pub const HERMITIAN_TOL: f64 = 1e-12;

const EIGEN_MAX_ITER: usize = 10_000;

#[inline]
pub fn c64(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn identity(n: usize) -> ComplexMatrix {
    ComplexMatrix::identity(n, n)
}

pub fn zeros(n: usize) -> ComplexMatrix {
    ComplexMatrix::zeros(n, n)
}

/// `|v⟩⟨v|`
pub fn projector(v: &StateVector) -> ComplexMatrix {
    v * v.adjoint()
}

pub fn commutator(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a * b - b * a
}

pub fn anticommutator(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a * b + b * a
}

/// Real part of `Tr[A B]` without forming the product.
pub fn trace_product_re(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    let n = a.nrows();
    let mut acc = 0.0;
    for i in 0..n {
        for k in 0..a.ncols() {
            acc += (a[(i, k)] * b[(k, i)]).re;
        }
    }
    acc
}

/// `‖M − M†‖_F`
pub fn hermitian_residual(m: &ComplexMatrix) -> f64 {
    (m - m.adjoint()).norm()
}

pub fn hermitian_part(m: &ComplexMatrix) -> ComplexMatrix {
    (m + m.adjoint()).scale(0.5)
}

/// `⟨u|M|v⟩`
pub fn sandwich(u: &StateVector, m: &ComplexMatrix, v: &StateVector) -> Complex64 {
    u.dotc(&(m * v))
}

/// Largest-magnitude eigenvalue of a Hermitian matrix (operator norm).
pub fn operator_norm_hermitian(m: &ComplexMatrix) -> Result<f64> {
    let sp = hermitian_eigendecompose(m)?;
    Ok(sp
        .eigenvalues
        .iter()
        .fold(0.0_f64, |acc, v| acc.max(v.abs())))
}

pub fn is_finite(m: &ComplexMatrix) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues sorted descending.
#[derive(Debug, Clone)]
pub struct HermitianSpectrum {
    pub eigenvalues: Vec<f64>,
    /// Columns are orthonormal eigenvectors, in the order of `eigenvalues`.
    pub eigenvectors: ComplexMatrix,
}

impl HermitianSpectrum {
    pub fn vector(&self, k: usize) -> StateVector {
        self.eigenvectors.column(k).into_owned()
    }

    /// `V diag(λ) V†`
    pub fn reconstruct(&self) -> ComplexMatrix {
        let v = &self.eigenvectors;
        let mut scaled = v.clone();
        for (k, lambda) in self.eigenvalues.iter().enumerate() {
            scaled.column_mut(k).scale_mut(*lambda);
        }
        scaled * v.adjoint()
    }
}

pub fn hermitian_eigendecompose(m: &ComplexMatrix) -> Result<HermitianSpectrum> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "eigendecomposition of a {}x{} matrix",
            m.nrows(),
            m.ncols()
        )));
    }
    let residual = hermitian_residual(m);
    if residual > HERMITIAN_TOL * m.norm() {
        return Err(Error::NonHermitian { residual });
    }
    let h = hermitian_part(m);
    let eig = SymmetricEigen::try_new(h, f64::EPSILON, EIGEN_MAX_ITER).ok_or(Error::NoConvergence)?;
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let eigenvalues = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut eigenvectors = ComplexMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        eigenvectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(HermitianSpectrum {
        eigenvalues,
        eigenvectors,
    })
}

/// Kronecker product; entry `((i,k),(j,l))` is `A(i,j)·B(k,l)`.
pub fn tensor_product(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a.kronecker(b)
}

pub fn tensor_vector(a: &StateVector, b: &StateVector) -> StateVector {
    a.kronecker(b)
}

/// Frobenius norm of `A − B`.
pub fn matrix_residual_norm(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::DimensionMismatch(format!(
            "{:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok((a - b).norm())
}

/// Least-squares line through `(log s, log q)`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PowerFit {
    pub slope: f64,
    pub intercept: f64,
    /// Max absolute deviation of the log-data from the fitted line.
    pub residual: f64,
}

pub const MIN_FIT_POINTS: usize = 4;

pub fn power_order_fit(samples: &[(f64, f64)]) -> Result<PowerFit> {
    if samples.len() < MIN_FIT_POINTS {
        return Err(Error::DegenerateSamples(format!(
            "{} points, need at least {MIN_FIT_POINTS}",
            samples.len()
        )));
    }
    if let Some(&(s, q)) = samples
        .iter()
        .find(|(s, q)| !(s.is_finite() && q.is_finite() && *s > 0.0 && *q > 0.0))
    {
        return Err(Error::DegenerateSamples(format!(
            "non-positive sample (s = {s:e}, q = {q:e})"
        )));
    }
    let mut scales: Vec<f64> = samples.iter().map(|p| p.0).collect();
    scales.sort_by(f64::total_cmp);
    if scales.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::DegenerateSamples("repeated scale".into()));
    }
    let pts: Vec<(f64, f64)> = samples.iter().map(|(s, q)| (s.ln(), q.ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = pts
        .iter()
        .map(|(x, y)| (y - (intercept + slope * x)).abs())
        .fold(0.0, f64::max);
    Ok(PowerFit {
        slope,
        intercept,
        residual,
    })
}

/// `n` geometrically spaced points from `lo` to `hi` inclusive.
pub fn geometric_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|k| {
            if k == n - 1 {
                hi
            } else {
                (a + (b - a) * k as f64 / (n - 1) as f64).exp()
            }
        })
        .collect()
}

pub fn pauli_x() -> ComplexMatrix {
    ComplexMatrix::from_row_slice(2, 2, &[c64(0., 0.), c64(1., 0.), c64(1., 0.), c64(0., 0.)])
}

pub fn pauli_y() -> ComplexMatrix {
    ComplexMatrix::from_row_slice(2, 2, &[c64(0., 0.), c64(0., -1.), c64(0., 1.), c64(0., 0.)])
}

pub fn pauli_z() -> ComplexMatrix {
    ComplexMatrix::from_row_slice(2, 2, &[c64(1., 0.), c64(0., 0.), c64(0., 0.), c64(-1., 0.)])
}

pub fn basis_vector(n: usize, k: usize) -> StateVector {
    let mut v = StateVector::zeros(n);
    v[k] = c64(1.0, 0.0);
    v
}

/// Haar-random pure state from normalized complex Gaussian entries.
pub fn random_pure_state<R: rand::Rng + ?Sized>(rng: &mut R, n: usize) -> StateVector {
    let v = StateVector::from_fn(n, |_, _| c64(rng.sample(StandardNormal), rng.sample(StandardNormal)));
    let norm = v.norm();
    v.unscale(norm)
}

/// Inverse of a small real symmetric matrix, or `None` when it is numerically singular.
pub fn symmetric_inverse(m: &RealMatrix) -> Option<RealMatrix> {
    let inv = match m.clone().cholesky() {
        Some(ch) => ch.inverse(),
        None => m.clone().try_inverse()?,
    };
    Some((&inv + inv.transpose()).scale(0.5))
}
