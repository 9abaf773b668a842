//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{McrError, Result};

pub fn cholesky(m: &DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    m.clone().cholesky().ok_or_else(|| {
        let min_eig = if m.nrows() > 0 {
            SymmetricEigen::new(m.clone()).eigenvalues.min()
        } else {
            0.0
        };
        McrError::Numerical(format!(
            "{what} ({}x{}) is not positive definite (smallest eigenvalue {min_eig:.3e})",
            m.nrows(),
            m.ncols()
        ))
    })
}

/// Inverse of a symmetric positive-definite matrix, symmetrized.
pub fn spd_inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let inv = cholesky(m, what)?.inverse();
    Ok(symmetrize(inv))
}

pub fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// Spectral condition number of a symmetric matrix (infinite when it is
/// not positive definite).
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 1.0;
    }
    let ev = m.symmetric_eigenvalues();
    let min = ev.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        ev.max() / min
    }
}

/// Eigenvector of the smallest eigenvalue of a symmetric matrix.
pub fn weakest_direction(m: &DMatrix<f64>) -> DVector<f64> {
    if m.nrows() == 0 {
        return DVector::zeros(0);
    }
    let eig = SymmetricEigen::new(m.clone());
    let lo = eig.eigenvalues.imin();
    eig.eigenvectors.column(lo).into_owned()
}

/// Moore–Penrose pseudo-inverse of a symmetric matrix.
pub fn symmetric_pinv(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let max = eig.eigenvalues.amax();
    let tol = max * m.nrows() as f64 * f64::EPSILON;
    let mut inv = DMatrix::zeros(m.nrows(), m.ncols());
    for k in 0..eig.eigenvalues.len() {
        let lambda = eig.eigenvalues[k];
        if lambda > tol {
            let v = eig.eigenvectors.column(k);
            inv += (v * v.transpose()) / lambda;
        }
    }
    inv
}

pub fn kronecker(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

/// A Gaussian given in information form: precision `Q` and linear term `l`,
/// so that the mean is `Q⁻¹ l`.
#[derive(Debug, Clone)]
pub struct GaussianInfo {
    pub precision: DMatrix<f64>,
    pub linear: DVector<f64>,
}

impl GaussianInfo {
    pub fn zeros(d: usize) -> Self {
        GaussianInfo {
            precision: DMatrix::zeros(d, d),
            linear: DVector::zeros(d),
        }
    }

    /// Returns `(mean, covariance)`.
    pub fn moments(&self, what: &str) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let chol = cholesky(&self.precision, what)?;
        Ok((chol.solve(&self.linear), symmetrize(chol.inverse())))
    }

    /// Draws from `N(Q⁻¹ l, Q⁻¹)`; also returns the mean.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, what: &str) -> Result<(DVector<f64>, DVector<f64>)> {
        let chol = cholesky(&self.precision, what)?;
        let mean = chol.solve(&self.linear);
        let z = DVector::from_fn(mean.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
        // Q = L Lᵀ, so L⁻ᵀ z has covariance Q⁻¹.
        let dev = chol
            .l()
            .transpose()
            .solve_upper_triangular(&z)
            .ok_or_else(|| McrError::Numerical(format!("{what}: singular Cholesky factor")))?;
        Ok((mean.clone() + dev, mean))
    }
}
