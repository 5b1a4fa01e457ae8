//! Dense linear-algebra helpers shared by the modules.

use alloc::vec::Vec;

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative singular-value threshold below which a direction counts as null.
pub const RANK_REL_TOL: f64 = 1e-9;

pub fn all_finite(m: &DMatrix<f64>) -> bool {
    m.iter().all(|v| v.is_finite())
}

/// Eigenvalues of a general real square matrix (real Schur form).
pub fn eigenvalues(m: &DMatrix<f64>) -> Result<Vec<Complex<f64>>> {
    if !m.is_square() {
        return Err(Error::Dimension(alloc::format!(
            "eigenvalues need a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if !all_finite(m) {
        return Err(Error::NonFinite("eigenvalue input"));
    }
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    if let Some(schur) = nalgebra::linalg::Schur::try_new(m.clone(), f64::EPSILON, 10_000) {
        return Ok(schur.complex_eigenvalues().iter().copied().collect());
    }
    // the QR sweep can stall on exactly structured input; an orthogonal
    // similarity keeps the spectrum and breaks the structure
    let n = m.nrows();
    let v = DVector::from_fn(n, |i, _| 1.0 + i as f64);
    let h = DMatrix::identity(n, n) - (&v * v.transpose()) * (2.0 / v.norm_squared());
    let schur = nalgebra::linalg::Schur::try_new(&h * m * &h, 1e3 * f64::EPSILON, 100_000).ok_or(Error::Eigen)?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

/// Spectral abscissa: the largest real part over the spectrum.
pub fn spectral_abscissa(m: &DMatrix<f64>) -> Result<f64> {
    Ok(eigenvalues(m)?.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max))
}

/// Eigenvalues of a symmetric matrix in ascending order.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> DVector<f64> {
    let mut v = nalgebra::linalg::SymmetricEigen::new(symmetrize(m)).eigenvalues;
    v.as_mut_slice().sort_by(|a, b| a.partial_cmp(b).unwrap_or(core::cmp::Ordering::Equal));
    v
}

pub fn min_sym_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    sym_eigenvalues(m)[0]
}

pub fn max_sym_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::NEG_INFINITY;
    }
    let v = sym_eigenvalues(m);
    v[v.len() - 1]
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Numerical rank with singular values below `RANK_REL_TOL * sigma_max` counted as zero.
pub fn rank(m: &DMatrix<f64>) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().singular_values();
    count_above(sv.as_slice())
}

/// Numerical rank of a complex matrix under the same threshold.
pub fn complex_rank(m: &DMatrix<Complex<f64>>) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().singular_values();
    count_above(sv.as_slice())
}

fn count_above(sv: &[f64]) -> usize {
    let top = sv.iter().copied().fold(0.0_f64, f64::max);
    if top == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_REL_TOL * top).count()
}

/// 2-norm condition number; infinite for singular input.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().singular_values();
    let hi = sv.iter().copied().fold(0.0_f64, f64::max);
    let lo = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

pub fn to_complex(m: &DMatrix<f64>) -> DMatrix<Complex<f64>> {
    m.map(|v| Complex::new(v, 0.0))
}

/// `(B^T B)^{-1} B^T` for a full-column-rank `B`.
pub fn left_pseudo_inverse(b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if rank(b) < b.ncols() {
        return Err(Error::RankDeficient(alloc::format!(
            "{}x{} matrix is not full column rank",
            b.nrows(),
            b.ncols()
        )));
    }
    let gram = b.transpose() * b;
    let chol = nalgebra::linalg::Cholesky::new(gram)
        .ok_or_else(|| Error::RankDeficient(alloc::string::String::from("B^T B not positive definite")))?;
    Ok(chol.solve(&b.transpose()))
}
