use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative tolerance for treating a matrix as symmetric.
pub const SYMMETRY_TOL: f64 = 1e-9;

fn scale_of(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(1.0_f64, |acc, v| acc.max(v.abs()))
}

fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    if !m.is_square() {
        return Err(Error::Dimension {
            expected: m.nrows(),
            actual: m.ncols(),
        });
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("matrix has non-finite entries".into()));
    }
    let tol = SYMMETRY_TOL * scale_of(m);
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            if (m[(i, j)] - m[(j, i)]).abs() > tol {
                return Err(Error::Numerical(format!(
                    "matrix is not symmetric at ({i}, {j}): {} vs {}",
                    m[(i, j)],
                    m[(j, i)]
                )));
            }
        }
    }
    Ok(())
}

/// (M + Mᵀ) / 2
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Principal square root of a symmetric positive semi-definite matrix.
///
/// Uses the symmetric eigendecomposition M = V Λ Vᵀ and returns V √Λ⁺ Vᵀ,
/// clamping negative eigenvalues to zero. The result is symmetrized.
pub fn sqrt_spd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_symmetric(m)?;
    let eig = SymmetricEigen::new(symmetrize(m));
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let v = &eig.eigenvectors;
    let s = v * DMatrix::from_diagonal(&roots) * v.transpose();
    Ok(symmetrize(&s))
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> Result<f64> {
    check_symmetric(m)?;
    let eig = SymmetricEigen::new(symmetrize(m));
    Ok(eig
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min))
}

/// True when all eigenvalues are ≥ −tol·scale.
pub fn is_psd(m: &DMatrix<f64>) -> Result<bool> {
    let floor = -1e-10 * scale_of(m);
    Ok(m.nrows() == 0 || min_eigenvalue(m)? >= floor)
}
