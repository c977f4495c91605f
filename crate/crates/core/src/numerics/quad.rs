//! Gauss–Legendre quadrature, fixed-order and adaptive.

use crate::error::{Error, Result};

/// Gauss–Legendre rule on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// Builds an `n`-point rule by Newton iteration on the Legendre recurrence.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..(n + 1) / 2 {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Integrates a scalar function over [a, b].
    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F, a: f64, b: f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(mid + half * x))
            .sum::<f64>()
            * half
    }

    /// Integrates a vector-valued function over [a, b], writing into `out`.
    pub fn integrate_vec<F: FnMut(f64, &mut [f64])>(
        &self,
        f: &mut F,
        a: f64,
        b: f64,
        out: &mut [f64],
    ) {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut buf = vec![0.0; out.len()];
        out.iter_mut().for_each(|o| *o = 0.0);
        for (&x, &w) in self.nodes.iter().zip(&self.weights) {
            f(mid + half * x, &mut buf);
            for (o, v) in out.iter_mut().zip(&buf) {
                *o += w * v;
            }
        }
        out.iter_mut().for_each(|o| *o *= half);
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

const ADAPTIVE_ORDER: usize = 15;
const MAX_DEPTH: usize = 40;

/// Adaptive Gauss–Legendre integration of a vector-valued integrand.
///
/// Each panel is accepted once its 15-point estimate agrees with the sum
/// of the estimates on its two halves to within its share of the global
/// tolerance `max(abs_tol, rel_tol * |I|)`, with `|I|` the max-abs entry.
pub fn adaptive_vec<F: FnMut(f64, &mut [f64])>(
    mut f: F,
    a: f64,
    b: f64,
    dim: usize,
    rel_tol: f64,
    abs_tol: f64,
) -> Result<Vec<f64>> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::invalid("adaptive quadrature needs finite limits"));
    }
    let mut total = vec![0.0; dim];
    if a == b {
        return Ok(total);
    }
    let rule = GaussLegendre::new(ADAPTIVE_ORDER);
    let mut whole = vec![0.0; dim];
    rule.integrate_vec(&mut f, a, b, &mut whole);
    let scale = max_abs(&whole);
    let tol = abs_tol.max(rel_tol * scale);
    let width = b - a;

    let mut stack = vec![(a, b, whole, 0usize)];
    let mut left = vec![0.0; dim];
    let mut right = vec![0.0; dim];
    while let Some((lo, hi, est, depth)) = stack.pop() {
        let mid = 0.5 * (lo + hi);
        rule.integrate_vec(&mut f, lo, mid, &mut left);
        rule.integrate_vec(&mut f, mid, hi, &mut right);
        let err = est
            .iter()
            .zip(left.iter().zip(&right))
            .map(|(e, (l, r))| (e - l - r).abs())
            .fold(0.0, f64::max);
        let share = tol * (hi - lo) / width;
        if err <= share || depth >= MAX_DEPTH {
            if depth >= MAX_DEPTH && err > share {
                return Err(Error::Numerical(format!(
                    "adaptive quadrature did not converge on [{lo}, {hi}] (err {err:.3e})"
                )));
            }
            for (t, (l, r)) in total.iter_mut().zip(left.iter().zip(&right)) {
                *t += l + r;
            }
        } else {
            stack.push((lo, mid, left.clone(), depth + 1));
            stack.push((mid, hi, right.clone(), depth + 1));
        }
    }
    Ok(total)
}

/// Scalar adaptive integration over a finite interval.
pub fn adaptive<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, rel_tol: f64) -> Result<f64> {
    let v = adaptive_vec(|x, out| out[0] = f(x), a, b, 1, rel_tol, 1e-300)?;
    Ok(v[0])
}

/// Integral over [a, ∞) via the substitution s = a + u / (1 - u).
pub fn adaptive_to_infinity<F: FnMut(f64) -> f64>(mut f: F, a: f64, rel_tol: f64) -> Result<f64> {
    adaptive(
        |u| {
            let one_minus = 1.0 - u;
            let s = a + u / one_minus;
            let v = f(s);
            if v == 0.0 {
                0.0
            } else {
                v / (one_minus * one_minus)
            }
        },
        0.0,
        1.0,
        rel_tol,
    )
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rule_integrates_polynomials_exactly() {
        let rule = GaussLegendre::new(5);
        // degree 9 is the highest exact degree for 5 nodes
        let v = rule.integrate(|x| x.powi(8) + x.powi(9), -1.0, 1.0);
        assert!((v - 2.0 / 9.0).abs() < 1e-14);
        let w: f64 = GaussLegendre::new(12).integrate(|_| 1.0, 0.0, 3.0);
        assert!((w - 3.0).abs() < 1e-13);
    }

    #[test]
    fn adaptive_handles_peaked_integrand() {
        let v = adaptive(|x| (-200.0 * (x - 0.3) * (x - 0.3)).exp(), 0.0, 1.0, 1e-12).unwrap();
        let exact = (std::f64::consts::PI / 200.0).sqrt()
            * 0.5
            * (libm::erf(0.7 * 200f64.sqrt())
                + libm::erf(0.3 * 200f64.sqrt()));
        assert!((v - exact).abs() < 1e-12 * exact);
    }

    #[test]
    fn semi_infinite_gaussian_tail() {
        let v = adaptive_to_infinity(|s| (-0.5 * s * s).exp(), 0.0, 1e-12).unwrap();
        assert!((v - (std::f64::consts::PI / 2.0).sqrt()).abs() < 1e-11);
    }
}
