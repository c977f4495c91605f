//! Real matrix exponential by scaling and squaring with a degree-13 Padé
//! approximant, plus the block-augmented integrals used by the exponential
//! integrator.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

const PADE13: [f64; 14] = [
    64_764_752_532_480_000.0,
    32_382_376_266_240_000.0,
    7_771_770_303_897_600.0,
    1_187_353_796_428_800.0,
    129_060_195_264_000.0,
    10_559_470_521_600.0,
    670_442_572_800.0,
    33_522_128_640.0,
    1_323_241_920.0,
    40_840_800.0,
    960_960.0,
    16_380.0,
    182.0,
    1.0,
];

const THETA13: f64 = 5.371_920_351_148_152;

/// exp(A) for a real square matrix.
///
/// Diagonal inputs take the entrywise fast path.
pub fn expm(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "matrix exponential of a {}x{} matrix",
            n,
            a.ncols()
        )));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite entry in matrix exponential input".into()));
    }
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    if is_diagonal(a) {
        return Ok(DMatrix::from_diagonal(&a.diagonal().map(f64::exp)));
    }

    let norm = one_norm(a);
    let squarings = if norm > THETA13 {
        (norm / THETA13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let scaled = a * 2f64.powi(-squarings);

    let ident = DMatrix::<f64>::identity(n, n);
    let a2 = &scaled * &scaled;
    let a4 = &a2 * &a2;
    let a6 = &a2 * &a4;
    let b = &PADE13;

    let u_inner = &a6 * (b[13] * &a6 + b[11] * &a4 + b[9] * &a2)
        + b[7] * &a6
        + b[5] * &a4
        + b[3] * &a2
        + b[1] * &ident;
    let u = &scaled * u_inner;
    let v = &a6 * (b[12] * &a6 + b[10] * &a4 + b[8] * &a2)
        + b[6] * &a6
        + b[4] * &a4
        + b[2] * &a2
        + b[0] * &ident;

    let denom = &v - &u;
    let numer = &v + &u;
    let mut r = denom
        .lu()
        .solve(&numer)
        .ok_or_else(|| Error::Numerical("singular Padé denominator".into()))?;
    for _ in 0..squarings {
        r = &r * &r;
    }
    Ok(r)
}

/// Weights of the exponential integrator for dX = (A X + f(t)) dt with
/// f linear on [0, h]:
///
/// X(h) = E X(0) + W0 f(0) + W1 f(h), where E = e^{hA},
/// W0 + W1 = ∫_0^h e^{(h-u)A} du and W1 = (1/h) ∫_0^h e^{(h-u)A} u du.
///
/// Computed from the exponential of the 3n×3n block matrix
/// [[A, I, 0], [0, 0, I], [0, 0, 0]] scaled by h.
pub fn linear_forcing_weights(
    a: &DMatrix<f64>,
    h: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
    let n = a.nrows();
    if h <= 0.0 {
        return Err(Error::invalid("step must be positive"));
    }
    let mut big = DMatrix::<f64>::zeros(3 * n, 3 * n);
    big.view_mut((0, 0), (n, n)).copy_from(&(a * h));
    for i in 0..n {
        big[(i, n + i)] = h;
        big[(n + i, 2 * n + i)] = h;
    }
    let e = expm(&big)?;
    let prop = e.view((0, 0), (n, n)).into_owned();
    let hold = e.view((0, n), (n, n)).into_owned();
    // block (0,2) is ∫_0^h e^{(h-u)A} u du
    let ramp = e.view((0, 2 * n), (n, n)).into_owned() / h;
    let w0 = &hold - &ramp;
    Ok((prop, w0, ramp))
}

fn is_diagonal(a: &DMatrix<f64>) -> bool {
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            if i != j && a[(i, j)] != 0.0 {
                return false;
            }
        }
    }
    true
}

fn one_norm(a: &DMatrix<f64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn max_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).abs().max()
    }

    #[test]
    fn zero_gives_identity() {
        let z = DMatrix::zeros(3, 3);
        assert_eq!(expm(&z).unwrap(), DMatrix::identity(3, 3));
    }

    #[test]
    fn rotation_generator() {
        let t = 0.7_f64;
        let a = DMatrix::from_row_slice(2, 2, &[0.0, -t, t, 0.0]);
        let e = expm(&a).unwrap();
        let want = DMatrix::from_row_slice(2, 2, &[t.cos(), -t.sin(), t.sin(), t.cos()]);
        assert!(max_diff(&e, &want) < 1e-14);
    }

    #[test]
    fn nilpotent_jordan_block() {
        // exp([[l, 1], [0, l]] s) = e^{ls} [[1, s], [0, 1]]
        let (l, s) = (-3.0_f64, 9.0_f64);
        let a = DMatrix::from_row_slice(2, 2, &[l * s, s, 0.0, l * s]);
        let e = expm(&a).unwrap();
        let f = (l * s).exp();
        let want = DMatrix::from_row_slice(2, 2, &[f, s * f, 0.0, f]);
        assert!(max_diff(&e, &want) < 1e-12 * f.max(1e-300) + 1e-25);
    }

    #[test]
    fn large_norm_scaling() {
        let a = DMatrix::from_row_slice(2, 2, &[-20.0, 15.0, 0.0, -20.5]);
        let e = expm(&a).unwrap();
        // upper-triangular closed form
        let (p, q) = (-20.0_f64, -20.5_f64);
        let off = 15.0 * (p.exp() - q.exp()) / (p - q);
        assert!((e[(0, 0)] - p.exp()).abs() < 1e-12 * p.exp());
        assert!((e[(0, 1)] - off).abs() < 1e-10 * off.abs());
    }

    #[test]
    fn forcing_weights_scalar_closed_form() {
        let lam = 2.0_f64;
        let h = 0.3_f64;
        let a = DMatrix::from_element(1, 1, -lam);
        let (e, w0, w1) = linear_forcing_weights(&a, h).unwrap();
        let hold = (1.0 - (-lam * h).exp()) / lam;
        // ∫_0^h e^{-lam(h-u)} u du = h/lam - (1 - e^{-lam h})/lam^2
        let ramp = (h / lam - (1.0 - (-lam * h).exp()) / (lam * lam)) / h;
        assert!((e[(0, 0)] - (-lam * h).exp()).abs() < 1e-15);
        assert!((w1[(0, 0)] - ramp).abs() < 1e-14);
        assert!((w0[(0, 0)] + w1[(0, 0)] - hold).abs() < 1e-14);
    }
}
