//! Small dense helpers shared by the solvers.

use nalgebra::{Cholesky, SymmetricEigen};

use crate::family::Mat;

/// Relative eigenvalue floor used for every PSD test.
pub const PSD_REL_TOL: f64 = 1e-10;

/// Condition estimate above which a positive definite solve is refused.
pub const MAX_CONDITION: f64 = 1e12;

pub fn symmetrize_in_place(m: &mut Mat) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

pub fn symmetrized(m: &Mat) -> Mat {
    let mut out = m.clone();
    symmetrize_in_place(&mut out);
    out
}

/// Largest entry of `|M - M'|`.
pub fn asymmetry(m: &Mat) -> f64 {
    if !m.is_square() {
        return f64::INFINITY;
    }
    (m - m.transpose()).amax()
}

/// Eigenvalues of the symmetric part, ascending.
pub fn sym_eigenvalues(m: &Mat) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(symmetrized(m)).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Symmetric (within `sym_tol`) with smallest eigenvalue at least
/// `-PSD_REL_TOL * (1 + largest eigenvalue)`.
pub fn is_psd(m: &Mat, sym_tol: f64) -> bool {
    if !m.is_square() || asymmetry(m) > sym_tol {
        return false;
    }
    if m.nrows() == 0 {
        return true;
    }
    let ev = sym_eigenvalues(m);
    let (lo, hi) = (ev[0], ev[ev.len() - 1]);
    lo >= -PSD_REL_TOL * (1.0 + hi.abs())
}

/// Symmetric and strictly positive definite, with condition below [`MAX_CONDITION`].
pub fn is_pd(m: &Mat, sym_tol: f64) -> bool {
    if !m.is_square() || m.nrows() == 0 || asymmetry(m) > sym_tol {
        return false;
    }
    let ev = sym_eigenvalues(m);
    ev[0] > 0.0 && ev[ev.len() - 1] / ev[0] <= MAX_CONDITION
}

/// Ratio of extreme eigenvalues of a symmetric matrix; infinite when singular.
pub fn condition_estimate(m: &Mat) -> f64 {
    if m.nrows() == 0 {
        return 1.0;
    }
    let ev = sym_eigenvalues(m);
    let lo = ev[0];
    let hi = ev[ev.len() - 1];
    if lo <= 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Solves `R X = rhs` for symmetric positive definite `R` through a Cholesky
/// factorization. Returns the condition estimate on failure.
pub fn spd_solve(r: &Mat, rhs: &Mat) -> Result<Mat, f64> {
    let cond = condition_estimate(r);
    // written negated so a NaN estimate is rejected too
    if !(cond <= MAX_CONDITION) {
        return Err(cond);
    }
    let chol = Cholesky::new(symmetrized(r)).ok_or(cond)?;
    Ok(chol.solve(rhs))
}

/// Symmetric square root with negative eigenvalues clipped to zero.
pub fn psd_sqrt(m: &Mat) -> Mat {
    let eig = SymmetricEigen::new(symmetrized(m));
    let mut vals = eig.eigenvalues.clone();
    for v in vals.iter_mut() {
        *v = v.max(0.0).sqrt();
    }
    &eig.eigenvectors * Mat::from_diagonal(&vals) * eig.eigenvectors.transpose()
}
