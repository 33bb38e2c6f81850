//! Covariance matrix of every mode at once and its symplectic spectrum.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::moments::MomentState;
use crate::C64;

/// Symmetrised quadrature covariance of all modes, ordered
/// `(q_0, p_0, q_1, p_1, ...)` with vacuum variance `1/2`.
pub fn full_covariance<S: MomentState>(state: &S) -> DMatrix<f64> {
    let k = state.mode_count();
    let mut sigma = DMatrix::zeros(2 * k, 2 * k);
    for i in 0..k {
        for j in 0..k {
            let x = state.normal(i, j);
            let y = state.anomalous(i, j);
            let unit = if i == j { 0.5 } else { 0.0 };
            sigma[(2 * i, 2 * j)] = y.re + x.re + unit;
            sigma[(2 * i + 1, 2 * j + 1)] = x.re - y.re + unit;
            sigma[(2 * i, 2 * j + 1)] = y.im + x.im;
            sigma[(2 * i + 1, 2 * j)] = y.im - x.im;
        }
    }
    sigma
}

/// Symplectic eigenvalues in ascending order, from the Hermitian matrix
/// `i sigma^{1/2} Omega sigma^{1/2}` whose spectrum is `+/- nu_k`.
pub fn symplectic_spectrum(sigma: &DMatrix<f64>) -> Result<Vec<f64>> {
    let dim = sigma.nrows();
    if !dim.is_multiple_of(2) || sigma.ncols() != dim {
        return Err(Error::DimensionMismatch { expected: dim + dim % 2, found: sigma.ncols() });
    }
    let asym = (sigma - sigma.transpose()).abs().max();
    if !(asym <= 1e-10 * (1.0 + sigma.abs().max())) {
        return Err(Error::NonPhysical(format!("covariance is not symmetric (deviation {asym:e})")));
    }
    let eig = SymmetricEigen::new(0.5 * (sigma + sigma.transpose()));
    if let Some(min) = eig.eigenvalues.iter().copied().reduce(f64::min) {
        if !(min > 0.0) {
            return Err(Error::NonPhysical(format!("covariance is not positive definite (eigenvalue {min:e})")));
        }
    }
    let root =
        &eig.eigenvectors * DMatrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt)) * eig.eigenvectors.transpose();
    let mut omega = DMatrix::zeros(dim, dim);
    for k in 0..dim / 2 {
        omega[(2 * k, 2 * k + 1)] = 1.0;
        omega[(2 * k + 1, 2 * k)] = -1.0;
    }
    let m = &root * omega * &root;
    let h: DMatrix<C64> = m.map(|v| C64::new(0.0, v));
    let h = (&h + h.adjoint()) * C64::new(0.5, 0.0);
    let mut values: Vec<f64> = SymmetricEigen::new(h).eigenvalues.iter().copied().collect();
    values.sort_by(|a, b| b.total_cmp(a));
    values.truncate(dim / 2);
    values.reverse();
    Ok(values)
}

/// Largest `|nu_k - 1/2|` over the symplectic spectrum of the whole state.
/// Zero for a pure Gaussian state.
pub fn global_purity_check<S: MomentState>(state: &S) -> Result<f64> {
    let spectrum = symplectic_spectrum(&full_covariance(state))?;
    Ok(spectrum.iter().map(|v| (v - 0.5).abs()).fold(0.0, f64::max))
}
