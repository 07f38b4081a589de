use nalgebra::{DMatrix, SymmetricEigen};

use super::ImageMetricError;

/// Absolute tolerance for symmetry and negative eigenvalues, scaled by the
/// matrix magnitude when that exceeds 1.
pub const PSD_TOLERANCE: f64 = 1e-8;

fn scale(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(1.0f64, |acc, v| acc.max(v.abs()))
}

/// Eigenvalues of a symmetric PSD matrix with tiny negatives clamped to 0.
pub fn psd_eigen(m: &DMatrix<f64>) -> Result<SymmetricEigen<f64, nalgebra::Dyn>, ImageMetricError> {
    if !m.is_square() {
        return Err(ImageMetricError::NotSymmetric);
    }
    let tol = PSD_TOLERANCE * scale(m);
    let n = m.nrows();
    for i in 0..n {
        for j in i + 1..n {
            if (m[(i, j)] - m[(j, i)]).abs() > tol {
                return Err(ImageMetricError::NotSymmetric);
            }
        }
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(ImageMetricError::NumericalFailure("non-finite matrix entry".into()));
    }
    let sym = (m + m.transpose()) * 0.5;
    let mut eig = sym.symmetric_eigen();
    for v in eig.eigenvalues.iter_mut() {
        if *v < -tol {
            return Err(ImageMetricError::NotPsd(*v));
        }
        *v = v.max(0.0);
    }
    Ok(eig)
}

/// Principal square root `S` of a symmetric PSD matrix, `S·S ≈ M`.
pub fn matrix_sqrt_psd(m: &DMatrix<f64>) -> Result<DMatrix<f64>, ImageMetricError> {
    let eig = psd_eigen(m)?;
    let roots = eig.eigenvalues.map(f64::sqrt);
    let q = &eig.eigenvectors;
    let s = q * DMatrix::from_diagonal(&roots) * q.transpose();
    Ok((&s + s.transpose()) * 0.5)
}

/// `Tr(M^{1/2})` for symmetric PSD `M`.
pub fn trace_sqrt_psd(m: &DMatrix<f64>) -> Result<f64, ImageMetricError> {
    Ok(psd_eigen(m)?.eigenvalues.iter().map(|v| v.sqrt()).sum())
}
