//! Small dense helpers for the d×d Hermitian energy matrices.

use nalgebra::DMatrix;
use num_complex::Complex64;

/// Relative tolerance on ‖E − Eᴴ‖_F / ‖E‖_F.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Eigenvalues down to −PSD_TOL·trace are treated as zero.
pub const PSD_TOL: f64 = 1e-12;

pub(crate) fn hermitian_defect(m: &DMatrix<Complex64>) -> f64 {
    let scale = m.norm();
    if scale == 0.0 {
        return 0.0;
    }
    (m - m.adjoint()).norm() / scale
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub(crate) fn hermitian_eigenvalues(m: &DMatrix<Complex64>) -> Vec<f64> {
    let mut ev: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

pub(crate) fn real_trace(m: &DMatrix<Complex64>) -> f64 {
    m.trace().re
}

/// Checks the Hermitian and PSD conditions, returning a description of the
/// first violation.
pub(crate) fn check_hermitian_psd(m: &DMatrix<Complex64>) -> Result<(), String> {
    if !m.is_square() {
        return Err(format!("energy matrix is {}x{}, not square", m.nrows(), m.ncols()));
    }
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err("energy matrix has non-finite entries".into());
    }
    let defect = hermitian_defect(m);
    if defect > HERMITIAN_TOL {
        return Err(format!("energy matrix is not Hermitian (relative defect {defect:e})"));
    }
    let ev = hermitian_eigenvalues(m);
    let trace = real_trace(m);
    if let Some(&min) = ev.first() {
        if min < -PSD_TOL * trace.abs() {
            return Err(format!(
                "energy matrix is not positive semidefinite (min eigenvalue {min:e}, trace {trace:e})"
            ));
        }
    }
    Ok(())
}

/// Hermitian square root through the eigendecomposition. Slightly negative
/// eigenvalues (rank-deficient projectors) are clipped to zero.
pub(crate) fn hermitian_sqrt(m: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>, String> {
    check_hermitian_psd(m)?;
    let n = m.nrows();
    if m.iter().all(|z| *z == Complex64::new(0.0, 0.0)) {
        return Ok(DMatrix::zeros(n, n));
    }
    let sym = (m + m.adjoint()).scale(0.5);
    let eig = sym.symmetric_eigen();
    let roots = eig.eigenvalues.map(|l| Complex64::new(l.max(0.0).sqrt(), 0.0));
    let u = &eig.eigenvectors;
    Ok(u * DMatrix::from_diagonal(&roots) * u.adjoint())
}
