//! Model parameters and the closed-form sufficient-condition checkers.
//!
//! The linear part is diagonal in an eigenbasis: `A e_i = -λ_i e_i` and the
//! noise acts mode-wise with amplitude `s_i = |σ* e_i|`. All checks operate
//! on a finite number of explicit modes, optionally extended by a power-law
//! tail so that series conditions stay decidable.

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fspde_sim::drift::{DriftSpec, DriftSpec2};
use crate::numerics::{self, expm::expm, max_abs, operator_norm, symmetric_eig_range};

/// Power-law extrapolation `λ_i ≈ a i^p`, `s_i ≈ b i^q` for modes beyond
/// the explicit ones.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TailLaw {
    pub a: f64,
    pub p: f64,
    pub b: f64,
    pub q: f64,
}

/// Eigenvalues of `-A` and per-mode noise amplitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralData {
    eigenvalues: Vec<f64>,
    noise_coeffs: Vec<f64>,
    tail_law: Option<TailLaw>,
}

impl SpectralData {
    pub fn new(eigenvalues: Vec<f64>, noise_coeffs: Vec<f64>) -> Result<Self> {
        Self::with_tail(eigenvalues, noise_coeffs, None)
    }

    pub fn with_tail(
        eigenvalues: Vec<f64>,
        noise_coeffs: Vec<f64>,
        tail_law: Option<TailLaw>,
    ) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(Error::invalid("at least one mode is required"));
        }
        if eigenvalues.len() != noise_coeffs.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} eigenvalues but {} noise coefficients",
                eigenvalues.len(),
                noise_coeffs.len()
            )));
        }
        if eigenvalues.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
            return Err(Error::invalid("eigenvalues must be finite and strictly positive"));
        }
        if eigenvalues.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::invalid("eigenvalues must be nondecreasing"));
        }
        if noise_coeffs.iter().any(|&s| !(s >= 0.0) || !s.is_finite()) {
            return Err(Error::invalid("noise coefficients must be finite and nonnegative"));
        }
        if let Some(t) = tail_law {
            validate_tail(&t)?;
        }
        Ok(Self {
            eigenvalues,
            noise_coeffs,
            tail_law,
        })
    }

    /// `n` explicit modes `λ_i = a i^p`, `s_i = b i^q`, with the same law
    /// kept as the tail.
    pub fn power_law(n: usize, law: TailLaw) -> Result<Self> {
        validate_tail(&law)?;
        let eig = (1..=n).map(|i| law.a * (i as f64).powf(law.p)).collect();
        let noise = (1..=n).map(|i| law.b * (i as f64).powf(law.q)).collect();
        Self::with_tail(eig, noise, Some(law))
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn noise_coeffs(&self) -> &[f64] {
        &self.noise_coeffs
    }

    pub fn tail_law(&self) -> Option<TailLaw> {
        self.tail_law
    }

    pub fn lambda1(&self) -> f64 {
        self.eigenvalues[0]
    }
}

fn validate_tail(t: &TailLaw) -> Result<()> {
    if !(t.p > 0.0) {
        return Err(Error::invalid(format!("tail law exponent p must be positive, got {}", t.p)));
    }
    if !(t.a > 0.0) || !(t.b >= 0.0) || !t.q.is_finite() {
        return Err(Error::invalid("tail law needs a > 0, b >= 0 and finite q"));
    }
    Ok(())
}

/// One named condition with its verdict and the number it was decided on.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionEntry {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub diagnostic: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ConditionReport {
    entries: Vec<ConditionEntry>,
}

impl ConditionReport {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds an entry; a repeated name replaces the earlier one.
    pub fn push(&mut self, name: &str, passed: bool, value: f64, diagnostic: impl Into<String>) {
        let entry = ConditionEntry {
            name: name.to_string(),
            passed,
            value,
            diagnostic: diagnostic.into(),
        };
        match self.entries.iter_mut().find(|e| e.name == name) {
            Some(e) => *e = entry,
            None => self.entries.push(entry),
        }
    }

    pub fn merge(&mut self, other: ConditionReport) {
        for e in other.entries {
            self.push(&e.name, e.passed, e.value, e.diagnostic);
        }
    }

    pub fn entries(&self) -> &[ConditionEntry] {
        &self.entries
    }

    pub fn get(&self, name: &str) -> Option<&ConditionEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn all_passed(&self) -> bool {
        self.entries.iter().all(|e| e.passed)
    }

    /// Human-readable report, one condition per line.
    pub fn to_report_lines(&self) -> String {
        let mut s = String::new();
        for e in &self.entries {
            let _ = writeln!(
                s,
                "[{}] {} = {} :: {}",
                if e.passed { "PASS" } else { "FAIL" },
                e.name,
                crate::cli_runner::output::fmt_f64(e.value),
                e.diagnostic
            );
        }
        s
    }

    /// `name.passed=...` / `name.value=...` pairs.
    pub fn to_key_values(&self) -> String {
        let mut s = String::new();
        for e in &self.entries {
            let _ = writeln!(s, "{}.passed={}", e.name, e.passed);
            let _ = writeln!(s, "{}.value={}", e.name, crate::cli_runner::output::fmt_f64(e.value));
        }
        s
    }
}

/// Thresholds used where exact conditions meet floating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckTolerances {
    /// Commutation residual of (B4), relative to `max(1, max|B|)`.
    pub b4_residual: f64,
    /// Smallest admissible eigenvalue of `Q_t`, relative to its largest.
    pub gramian_rel_eig: f64,
    /// Relative slack when comparing a computed Lipschitz bound to the declared one.
    pub lipschitz_slack: f64,
}

impl Default for CheckTolerances {
    fn default() -> Self {
        Self {
            b4_residual: 1e-8,
            gramian_rel_eig: 1e-12,
            lipschitz_slack: 1e-12,
        }
    }
}

/// Non-degenerate model: `dX = (AX + b(X_t)) dt + σ dW` on the spectral basis.
#[derive(Debug, Clone)]
pub struct NondegenerateModel {
    pub spectral: SpectralData,
    pub delta_reg: f64,
    pub drift: DriftSpec,
    pub lipschitz: f64,
    pub r0: f64,
}

impl NondegenerateModel {
    pub fn new(
        spectral: SpectralData,
        delta_reg: f64,
        drift: DriftSpec,
        lipschitz: f64,
        r0: f64,
    ) -> Result<Self> {
        check_delta(delta_reg)?;
        if !(r0 > 0.0) || !r0.is_finite() {
            return Err(Error::invalid(format!("r0 must be positive, got {r0}")));
        }
        if !(lipschitz >= 0.0) {
            return Err(Error::invalid("Lipschitz constant must be nonnegative"));
        }
        let dim = spectral.len();
        drift.validate(dim, dim, r0)?;
        let computed = drift.lipschitz_bound();
        if computed > lipschitz * (1.0 + CheckTolerances::default().lipschitz_slack) {
            return Err(Error::invalid(format!(
                "drift has Lipschitz bound {computed} above the declared L = {lipschitz}"
            )));
        }
        Ok(Self {
            spectral,
            delta_reg,
            drift,
            lipschitz,
            r0,
        })
    }

    pub fn dim(&self) -> usize {
        self.spectral.len()
    }

    pub fn rate(&self) -> Result<RateResult> {
        compute_rate_lambda(self.spectral.lambda1(), self.lipschitz, self.r0)
    }
}

/// Degenerate model: `dX = (A1 X + B Y) dt`, `dY = (A2 Y + b(X_t, Y_t)) dt + σ dW`.
#[derive(Debug, Clone)]
pub struct DegenerateModel {
    pub a1: DMatrix<f64>,
    pub a2: SpectralData,
    pub b: DMatrix<f64>,
    pub a0: DMatrix<f64>,
    pub drift: DriftSpec2,
    pub delta_drift: f64,
    pub r0: f64,
    pub delta_reg: f64,
    /// Per-mode `σ^{-1}` coefficients; `None` when σ is not inverted.
    pub sigma_inv: Option<Vec<f64>>,
}

impl DegenerateModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        a1: DMatrix<f64>,
        a2: SpectralData,
        b: DMatrix<f64>,
        a0: DMatrix<f64>,
        drift: DriftSpec2,
        delta_drift: f64,
        r0: f64,
        delta_reg: f64,
        sigma_inv: Option<Vec<f64>>,
    ) -> Result<Self> {
        let n1 = a1.nrows();
        let n2 = a2.len();
        if n1 == 0 || a1.ncols() != n1 {
            return Err(Error::DimensionMismatch(format!(
                "A1 must be square and nonempty, got {}x{}",
                a1.nrows(),
                a1.ncols()
            )));
        }
        if b.nrows() != n1 || b.ncols() != n2 {
            return Err(Error::DimensionMismatch(format!(
                "B must be {n1}x{n2} (n1 x n2), got {}x{}",
                b.nrows(),
                b.ncols()
            )));
        }
        if a0.nrows() != n1 || a0.ncols() != n1 {
            return Err(Error::DimensionMismatch(format!(
                "A0 must be {n1}x{n1}, got {}x{}",
                a0.nrows(),
                a0.ncols()
            )));
        }
        check_delta(delta_reg)?;
        if !(delta_drift >= 0.0) {
            return Err(Error::invalid("delta of (B3) must be nonnegative"));
        }
        if !(r0 > 0.0) {
            return Err(Error::invalid(format!("r0 must be positive, got {r0}")));
        }
        drift.validate(n1, n2, r0)?;
        if let Some(inv) = &sigma_inv {
            if inv.len() != n2 {
                return Err(Error::DimensionMismatch(format!(
                    "sigma_inv has {} entries for {n2} modes",
                    inv.len()
                )));
            }
            for (i, (s, si)) in a2.noise_coeffs().iter().zip(inv).enumerate() {
                if (s * si - 1.0).abs() > 1e-12 {
                    return Err(Error::invalid(format!(
                        "sigma * sigma_inv != 1 at mode {i}: {s} * {si}"
                    )));
                }
            }
        }
        Ok(Self {
            a1,
            a2,
            b,
            a0,
            drift,
            delta_drift,
            r0,
            delta_reg,
            sigma_inv,
        })
    }

    pub fn n1(&self) -> usize {
        self.a1.nrows()
    }

    pub fn n2(&self) -> usize {
        self.a2.len()
    }

    pub fn b_norm(&self) -> f64 {
        operator_norm(&self.b)
    }

    /// The diagonal matrix `A2 = -diag(λ)`.
    pub fn a2_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            self.n2(),
            self.a2.eigenvalues().iter().map(|l| -l),
        ))
    }

    pub fn lambda_prime(&self) -> Result<f64> {
        compute_lambda_prime(self.delta_drift, self.drift.k1, self.drift.k2, self.b_norm())
    }

    pub fn rate(&self) -> Result<RateResult> {
        check_degenerate_gap(self.lambda_prime()?, self.a2.lambda1(), self.r0)
    }

    /// α of the weighted gap; falls back to 1 when `B = 0`.
    pub fn alpha(&self) -> Result<f64> {
        let bn = self.b_norm();
        if bn == 0.0 {
            return Ok(1.0);
        }
        compute_alpha(self.delta_drift, self.drift.k1, self.drift.k2, bn)
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("regularity delta must lie in (0,1), got {delta}")))
    }
}

/// Summability of `Σ s_i^2 / λ_i^{1-δ}` over explicit modes plus the
/// power-law tail, and the admissible Hölder exponent range `(0, δ/(1-δ)]`.
pub fn check_noise_regularity(spec: &SpectralData, delta_reg: f64) -> Result<ConditionReport> {
    check_delta(delta_reg)?;
    if let Some(t) = spec.tail_law() {
        validate_tail(&t)?;
    }
    let power = 1.0 - delta_reg;
    let partial: f64 = spec
        .eigenvalues()
        .iter()
        .zip(spec.noise_coeffs())
        .map(|(l, s)| s * s / l.powf(power))
        .sum();

    let (tail, tail_diag) = match spec.tail_law() {
        None => (0.0, "no tail law; explicit modes only".to_string()),
        Some(t) if t.b == 0.0 => (0.0, "tail law has zero noise".to_string()),
        Some(t) => {
            let exponent = 2.0 * t.q - t.p * power;
            let coeff = t.b * t.b / t.a.powf(power);
            if exponent < -1.0 {
                let n = spec.len() as f64;
                // Σ_{i>N} i^e ≤ ∫_N^∞ x^e dx for decreasing terms
                let bound = coeff * n.powf(exponent + 1.0) / (-exponent - 1.0);
                (bound, format!("tail terms ~ i^{exponent:.6}; integral bound"))
            } else {
                (
                    f64::INFINITY,
                    format!("tail terms ~ i^{exponent:.6} with exponent >= -1; series diverges"),
                )
            }
        }
    };
    let total = partial + tail;
    let mut report = ConditionReport::new();
    report.push(
        "noise_series",
        total.is_finite(),
        total,
        format!("partial sum over {} modes = {partial:.12e}, tail bound = {tail:.6e}", spec.len()),
    );
    report.push("noise_series_tail", tail.is_finite(), tail, tail_diag);
    report.push(
        "holder_eps_max",
        true,
        delta_reg / (1.0 - delta_reg),
        "admissible exponent range (0, delta/(1-delta)]",
    );
    Ok(report)
}

/// Supremum of `f(s) = s - L e^{s r0}` over `s ∈ (0, λ1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateResult {
    pub rate: f64,
    pub argmax_s: f64,
    pub positive: bool,
}

const RATE_FALLBACK_GRID: usize = 10_000;

pub fn compute_rate_lambda(lambda1: f64, lipschitz: f64, r0: f64) -> Result<RateResult> {
    if !(lambda1 > 0.0) || !lambda1.is_finite() {
        return Err(Error::invalid(format!("lambda1 must be positive, got {lambda1}")));
    }
    if !(lipschitz >= 0.0) || !(r0 >= 0.0) || !lipschitz.is_finite() || !r0.is_finite() {
        return Err(Error::invalid("L and r0 must be finite and nonnegative"));
    }
    let f = |s: f64| s - lipschitz * (s * r0).exp();
    let product = lipschitz * r0;
    let argmax = if product == 0.0 {
        // f is affine with unit slope; a grid keeps the same code path as the
        // oracle and lands on the right endpoint.
        (1..=RATE_FALLBACK_GRID)
            .map(|k| lambda1 * k as f64 / RATE_FALLBACK_GRID as f64)
            .fold((f64::NAN, f64::NEG_INFINITY), |(bs, bv), s| {
                let v = f(s);
                if v > bv {
                    (s, v)
                } else {
                    (bs, bv)
                }
            })
            .0
    } else {
        let stationary = (1.0 / product).ln() / r0;
        if stationary >= lambda1 {
            lambda1
        } else if stationary > 0.0 {
            stationary
        } else {
            // f is decreasing on (0, λ1]; the supremum is the limit at 0+.
            f64::MIN_POSITIVE
        }
    };
    let rate = f(argmax);
    Ok(RateResult {
        rate,
        argmax_s: argmax,
        positive: rate > 0.0,
    })
}

fn check_nonneg(name: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must be finite and nonnegative, got {v}")))
    }
}

/// `λ' = (δ + K2 + sqrt((K2 - δ)^2 + 4 K1 |B|)) / 2`.
pub fn compute_lambda_prime(delta_drift: f64, k1: f64, k2: f64, b_norm: f64) -> Result<f64> {
    check_nonneg("delta", delta_drift)?;
    check_nonneg("K1", k1)?;
    check_nonneg("K2", k2)?;
    check_nonneg("|B|", b_norm)?;
    let disc = ((k2 - delta_drift).powi(2) + 4.0 * k1 * b_norm).sqrt();
    Ok(0.5 * (delta_drift + k2 + disc))
}

/// Weight α of the gap `α|ΔX| + |ΔY|` that makes both Gronwall
/// coefficients equal to λ'.
pub fn compute_alpha(delta_drift: f64, k1: f64, k2: f64, b_norm: f64) -> Result<f64> {
    check_nonneg("delta", delta_drift)?;
    check_nonneg("K1", k1)?;
    check_nonneg("K2", k2)?;
    if !(b_norm > 0.0) || !b_norm.is_finite() {
        return Err(Error::invalid(
            "alpha is undefined for |B| = 0; the K1 = 0 pathway needs no weighting",
        ));
    }
    let d = delta_drift - k2;
    let disc = (d * d + 4.0 * k1 * b_norm).sqrt();
    // rationalized branch when d < 0 avoids cancellation in d + disc
    let alpha = if d >= 0.0 {
        (d + disc) / (2.0 * b_norm)
    } else {
        2.0 * k1 / (disc - d)
    };
    Ok(alpha)
}

/// Relative residuals of `αδ + K1 = λ'α` and `α|B| + K2 = λ'`.
pub fn c3_residuals(delta_drift: f64, k1: f64, k2: f64, b_norm: f64) -> Result<(f64, f64)> {
    let lp = compute_lambda_prime(delta_drift, k1, k2, b_norm)?;
    let alpha = compute_alpha(delta_drift, k1, k2, b_norm)?;
    let rel = |lhs: f64, rhs: f64| {
        let scale = lhs.abs().max(rhs.abs());
        if scale == 0.0 {
            0.0
        } else {
            (lhs - rhs).abs() / scale
        }
    };
    Ok((
        rel(alpha * delta_drift + k1, lp * alpha),
        rel(alpha * b_norm + k2, lp),
    ))
}

/// Degenerate rate `sup (s - λ' e^{s r0})`; `positive` is the strict
/// inequality `λ' < sup_{s ∈ (0, λ1]} s e^{-s r0}`.
pub fn check_degenerate_gap(lambda_prime: f64, lambda1: f64, r0: f64) -> Result<RateResult> {
    check_nonneg("lambda'", lambda_prime)?;
    let mut res = compute_rate_lambda(lambda1, lambda_prime, r0)?;
    let s_peak = if r0 > 0.0 { (1.0 / r0).min(lambda1) } else { lambda1 };
    let gain_sup = s_peak * (-s_peak * r0).exp();
    res.positive = lambda_prime < gain_sup;
    Ok(res)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DirichletBound {
    pub value: f64,
    /// `α > d/2`, needed for the Hilbert–Schmidt property.
    pub hilbert_schmidt_ok: bool,
}

/// Lower bound `(d π^2)^α R^{-2α}` on the first eigenvalue of
/// `(-Δ)^α` with Dirichlet conditions on a domain of diameter R.
pub fn dirichlet_lower_bound(d: u32, diameter: f64, frac_alpha: f64) -> Result<DirichletBound> {
    if d == 0 {
        return Err(Error::invalid("dimension must be at least 1"));
    }
    if !(diameter > 0.0) {
        return Err(Error::invalid(format!("diameter must be positive, got {diameter}")));
    }
    if !(frac_alpha > 0.0) {
        return Err(Error::invalid("fractional power must be positive"));
    }
    let value = (d as f64 * PI * PI).powf(frac_alpha) * diameter.powf(-2.0 * frac_alpha);
    Ok(DirichletBound {
        value,
        hilbert_schmidt_ok: frac_alpha > d as f64 / 2.0,
    })
}

/// (B4): `B e^{tA2} = e^{tA1} e^{tA0} B` at the sample times and
/// invertibility of `Q_t = ∫_0^t e^{sA0} B B* e^{sA0*} ds`.
pub fn check_b4(
    model: &DegenerateModel,
    sample_times: &[f64],
    tol: &CheckTolerances,
) -> Result<ConditionReport> {
    if sample_times.is_empty() || sample_times.iter().any(|&t| !(t > 0.0)) {
        return Err(Error::invalid("sample times must be positive"));
    }
    let a2 = model.a2_matrix();
    let scale = max_abs(&model.b).max(1.0);
    let mut residual = 0.0_f64;
    let mut min_eig = f64::INFINITY;
    let mut worst_ratio = f64::INFINITY;
    for &t in sample_times {
        let lhs = &model.b * expm(&(&a2 * t))?;
        let rhs = expm(&(&model.a1 * t))? * expm(&(&model.a0 * t))? * &model.b;
        residual = residual.max(max_abs(&(lhs - rhs)));

        let q = numerics::weighted_gramian(&model.a0, &model.b, t, |_| 1.0, 1e-10)?;
        let eig = SymmetricEigen::new(q).eigenvalues;
        let lo = eig.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = eig.iter().cloned().fold(0.0, f64::max);
        min_eig = min_eig.min(lo);
        worst_ratio = worst_ratio.min(if hi > 0.0 { lo / hi } else { 0.0 });
    }
    let mut report = ConditionReport::new();
    report.push(
        "b4_commutation",
        residual <= tol.b4_residual * scale,
        residual,
        format!("max |B e^(tA2) - e^(tA1) e^(tA0) B| over {} times", sample_times.len()),
    );
    report.push(
        "b4_gramian_min_eig",
        min_eig > 0.0 && worst_ratio > tol.gramian_rel_eig,
        min_eig,
        format!("smallest eigenvalue of Q_t; min eig/max eig = {worst_ratio:.3e}"),
    );
    Ok(report)
}

/// All closed-form conditions for the non-degenerate model.
pub fn check_nondegenerate(model: &NondegenerateModel) -> Result<ConditionReport> {
    let mut report = check_noise_regularity(&model.spectral, model.delta_reg)?;
    let computed = model.drift.lipschitz_bound();
    report.push(
        "drift_lipschitz",
        computed <= model.lipschitz * (1.0 + CheckTolerances::default().lipschitz_slack),
        computed,
        format!("computed operator bound vs declared L = {}", model.lipschitz),
    );
    let invertible = model.spectral.noise_coeffs().iter().all(|&s| s > 0.0);
    report.push(
        "noise_invertible",
        invertible,
        model.spectral.noise_coeffs().iter().cloned().fold(f64::INFINITY, f64::min),
        "smallest noise coefficient (sigma invertible iff > 0)",
    );
    let rate = model.rate()?;
    report.push(
        "rate_lambda",
        rate.positive,
        rate.rate,
        format!("sup over (0, lambda1] attained at s = {:.12e}", rate.argmax_s),
    );
    Ok(report)
}

/// All closed-form conditions for the degenerate model.
pub fn check_degenerate(
    model: &DegenerateModel,
    sample_times: &[f64],
    tol: &CheckTolerances,
) -> Result<ConditionReport> {
    let mut report = check_noise_regularity(&model.a2, model.delta_reg)?;
    let (lx, ly) = model.drift.lipschitz_bounds();
    let slack = 1.0 + tol.lipschitz_slack;
    report.push(
        "drift_lipschitz_k1",
        lx <= model.drift.k1 * slack,
        lx,
        format!("computed bound vs K1 = {}", model.drift.k1),
    );
    report.push(
        "drift_lipschitz_k2",
        ly <= model.drift.k2 * slack,
        ly,
        format!("computed bound vs K2 = {}", model.drift.k2),
    );
    let (_, top) = symmetric_eig_range(&model.a1);
    let limit = model.delta_drift - model.a2.lambda1();
    report.push(
        "b3_dissipativity",
        top <= limit + 1e-12 * limit.abs().max(1.0),
        top,
        format!("max eigenvalue of sym(A1) vs delta - lambda1 = {limit}"),
    );
    report.merge(check_b4(model, sample_times, tol)?);
    let lp = model.lambda_prime()?;
    let rate = check_degenerate_gap(lp, model.a2.lambda1(), model.r0)?;
    report.push(
        "degenerate_gap",
        rate.positive,
        rate.rate,
        format!("lambda' = {lp:.12e}, argmax s = {:.12e}", rate.argmax_s),
    );
    Ok(report)
}
