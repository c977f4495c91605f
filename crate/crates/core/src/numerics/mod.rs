//! Numerical building blocks: quadrature, matrix exponentials, 1-D search,
//! and Monte Carlo statistics.

pub mod expm;
pub mod optimize;
pub mod quad;
pub mod stats;

use nalgebra::{DMatrix, SymmetricEigen};

/// Largest singular value.
pub fn operator_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    let gram = m.transpose() * m;
    let eig = SymmetricEigen::new(gram);
    eig.eigenvalues.iter().cloned().fold(0.0, f64::max).max(0.0).sqrt()
}

/// Extreme eigenvalues (min, max) of the symmetric part of `m`.
pub fn symmetric_eig_range(m: &DMatrix<f64>) -> (f64, f64) {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let lo = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

/// Max-abs entry.
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |a, v| a.max(v.abs()))
}

/// Euclidean norm of a slice.
pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// ∫_0^t w(s) e^{sA0} B B^T e^{sA0^T} ds by adaptive Gauss–Legendre.
///
/// Returns the symmetrized result; the integrand is symmetric so this only
/// removes rounding asymmetry.
pub fn weighted_gramian<W: Fn(f64) -> f64>(
    a0: &DMatrix<f64>,
    b: &DMatrix<f64>,
    t: f64,
    weight: W,
    rel_tol: f64,
) -> crate::error::Result<DMatrix<f64>> {
    let n = a0.nrows();
    if a0.ncols() != n || b.nrows() != n {
        return Err(crate::error::Error::DimensionMismatch(format!(
            "gramian needs A0 {n}x{n} and B with {n} rows, got A0 {}x{} and B {}x{}",
            a0.nrows(),
            a0.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    let bbt = b * b.transpose();
    let mut failure = None;
    let flat = quad::adaptive_vec(
        |s, out| {
            let w = weight(s);
            match expm::expm(&(a0 * s)) {
                Ok(e) => {
                    let g = &e * &bbt * e.transpose() * w;
                    out.copy_from_slice(g.as_slice());
                }
                Err(err) => {
                    failure.get_or_insert(err);
                    out.iter_mut().for_each(|v| *v = 0.0);
                }
            }
        },
        0.0,
        t,
        n * n,
        rel_tol,
        1e-300,
    )?;
    if let Some(err) = failure {
        return Err(err);
    }
    let g = DMatrix::from_column_slice(n, n, &flat);
    Ok((&g + g.transpose()) * 0.5)
}
