//! Small dense linear-algebra helpers shared across modules.

use nalgebra::linalg::{Schur, SymmetricEigen};
use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SpvarError};

const MAX_ITER: usize = 10_000;

/// Largest eigenvalue modulus of a square matrix. An empty matrix has radius 0.
pub fn spectral_radius(m: &DMatrix<f64>) -> Result<f64> {
    if m.nrows() == 0 {
        return Ok(0.0);
    }
    let schur = Schur::try_new(m.clone(), f64::EPSILON, MAX_ITER)
        .ok_or_else(|| SpvarError::Numerical("Schur decomposition did not converge".into()))?;
    Ok(schur
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max))
}

/// Symmetric square root and inverse square root of an SPD matrix,
/// computed from its eigendecomposition. Fails when an eigenvalue is not
/// strictly positive relative to the largest one.
pub fn sym_sqrt_pair(sigma: &DMatrix<f64>) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
    let eig = SymmetricEigen::try_new(symmetrized(sigma), f64::EPSILON, MAX_ITER)?;
    let max = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    if !(max > 0.0) || eig.eigenvalues.iter().any(|&l| l <= 1e-12 * max) {
        return None;
    }
    let v = &eig.eigenvectors;
    let sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt));
    let inv_sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
    Some((
        symmetrized(&(v * sqrt * v.transpose())),
        symmetrized(&(v * inv_sqrt * v.transpose())),
    ))
}

/// Smallest and largest eigenvalue of a symmetric matrix.
pub fn sym_eigen_range(sigma: &DMatrix<f64>) -> Option<(f64, f64)> {
    let eig = SymmetricEigen::try_new(symmetrized(sigma), f64::EPSILON, MAX_ITER)?;
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Some((min, max))
}

pub fn symmetrized(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

pub fn block_diag(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let n: usize = blocks.iter().map(|b| b.nrows()).sum();
    let c: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(n, c);
    let (mut r0, mut c0) = (0, 0);
    for b in blocks {
        out.view_mut((r0, c0), (b.nrows(), b.ncols())).copy_from(b);
        r0 += b.nrows();
        c0 += b.ncols();
    }
    out
}

/// Unit vector orthogonal to every row of `rows` (which must have fewer rows
/// than columns). Returns the right singular vector of the smallest singular
/// value together with that singular value relative to the largest one,
/// and the gap to the second smallest (0 means the null space is not one-dimensional).
pub fn null_vector(rows: &DMatrix<f64>) -> (DVector<f64>, f64) {
    let n = rows.ncols();
    // Pad to square so the SVD returns a full set of right singular vectors.
    let mut padded = DMatrix::zeros(n, n);
    padded.view_mut((0, 0), (rows.nrows(), n)).copy_from(rows);
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let (mut idx, mut second) = (0, f64::INFINITY);
    let mut best = f64::INFINITY;
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s < best {
            second = best;
            best = s;
            idx = i;
        } else if s < second {
            second = s;
        }
    }
    let scale = svd.singular_values.max().max(f64::MIN_POSITIVE);
    let gap = if n > 1 { second / scale } else { 1.0 };
    (v_t.row(idx).transpose(), gap)
}
