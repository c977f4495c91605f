//! Gaussian supremum tail bounds for the stochastic convolution and their
//! Monte Carlo validation.

use std::collections::HashMap;
use std::f64::consts::{E, PI, SQRT_2};
use std::fmt::Write as _;
use std::sync::{Mutex, OnceLock};

use rayon::prelude::*;
use serde::Serialize;
use libm::erfc;

use crate::cli_runner::output::fmt_f64;
use crate::error::{Error, Result};
use crate::fspde_sim::ModeCoeffs;
use crate::numerics::optimize::golden_max;
use crate::numerics::quad::adaptive_to_infinity;
use crate::numerics::stats::{wilson_interval, Z95};
use crate::rng::NoiseStream;
use crate::spectral_model::SpectralData;

const SQRT5: f64 = 2.236_067_977_499_79;

/// Standard normal upper tail `P(N(0,1) ≥ r)`.
pub fn normal_tail(r: f64) -> f64 {
    0.5 * erfc(r / SQRT_2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OneDimBound {
    /// Upper bound on `P(max|γ| ≥ level)`.
    pub bound: f64,
    /// `r (Γ + (2+√2) θ)`.
    pub level: f64,
    /// True when `r < √5` and the bound is the trivial 1.
    pub vacuous: bool,
}

/// `P(max|γ| ≥ r(Γ + (2+√2)θ)) ≤ (5e/2) ∫_r^∞ e^{-s²/2} ds` for `r ≥ √5`.
pub fn one_dim_fernique_bound(gamma: f64, theta1: f64, r: f64) -> Result<OneDimBound> {
    if !(gamma >= 0.0) || !(theta1 >= 0.0) || !(r >= 0.0) {
        return Err(Error::invalid(format!(
            "Fernique inputs must be nonnegative: gamma = {gamma}, theta = {theta1}, r = {r}"
        )));
    }
    let level = r * (gamma + (2.0 + SQRT_2) * theta1);
    if r < SQRT5 {
        return Ok(OneDimBound {
            bound: 1.0,
            level,
            vacuous: true,
        });
    }
    let bound = (2.5 * E * (2.0 * PI).sqrt() * normal_tail(r)).min(1.0);
    Ok(OneDimBound {
        bound,
        level,
        vacuous: false,
    })
}

fn holder_cache() -> &'static Mutex<HashMap<u64, f64>> {
    static CACHE: OnceLock<Mutex<HashMap<u64, f64>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// `c(r) = sup_{u>0} (1 - e^{-u}) / u^r`, the constant in
/// `|e^{-s} - e^{-t}| ≤ c(r)|s - t|^r`, for `r ∈ (0, 1)`.
pub fn holder_constant(r: f64) -> Result<f64> {
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::invalid(format!("Hölder exponent must lie in (0,1), got {r}")));
    }
    if let Some(&c) = holder_cache().lock().unwrap().get(&r.to_bits()) {
        return Ok(c);
    }
    // unimodal in v = ln u; maximize the log for range
    let g = |v: f64| {
        let u = v.exp();
        (-(-u).exp_m1()).ln() - r * v
    };
    let (_, best) = golden_max(g, -60.0, 60.0, 1e-10);
    let c = best.exp();
    holder_cache().lock().unwrap().insert(r.to_bits(), c);
    Ok(c)
}

/// `∫_1^∞ e^{-a s²} ds`.
fn gaussian_tail_integral(a: f64) -> Result<f64> {
    adaptive_to_infinity(|s| (-a * s * s).exp(), 1.0, 1e-12)
}

/// Per-mode quantities of the infinite-dimensional Fernique bound.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FerniqueCoeffs {
    /// `Γ_i = sup_t (E γ_i(t)²)^{1/2}`.
    pub gammas: Vec<f64>,
    /// `c_i` with `φ_i(r) ≤ c_i r^{δ/4}`.
    pub phi_coef: Vec<f64>,
    pub phi_exponent: f64,
    /// `δ_i = Γ_i + (2+√2) ∫_1^∞ φ_i(e^{-s²}) ds`.
    pub deltas: Vec<f64>,
    pub theta: f64,
    /// `min_i log(e + 1/δ_i) / (2θ)`; `+∞` when θ = 0.
    pub lambda_tilde: f64,
    /// False when a power-law tail makes the δ-series diverge.
    pub series_converges: bool,
}

fn theta_term(d: f64) -> f64 {
    if d == 0.0 {
        0.0
    } else {
        d * d * (E + 1.0 / d).ln()
    }
}

impl FerniqueCoeffs {
    /// Coefficients from prescribed `δ_i` (envelope fields zeroed).
    pub fn from_deltas(deltas: Vec<f64>) -> Result<Self> {
        if deltas.iter().any(|d| !(*d >= 0.0) || !d.is_finite()) {
            return Err(Error::invalid("deltas must be finite and nonnegative"));
        }
        let n = deltas.len();
        Ok(Self::assemble(deltas.clone(), vec![0.0; n], 0.0, deltas, true))
    }

    fn assemble(
        gammas: Vec<f64>,
        phi_coef: Vec<f64>,
        phi_exponent: f64,
        deltas: Vec<f64>,
        series_converges: bool,
    ) -> Self {
        let theta = if series_converges {
            deltas.iter().map(|&d| theta_term(d)).sum()
        } else {
            f64::INFINITY
        };
        let lambda_tilde = if theta == 0.0 {
            f64::INFINITY
        } else {
            deltas
                .iter()
                .filter(|&&d| d > 0.0)
                .map(|&d| (E + 1.0 / d).ln() / (2.0 * theta))
                .fold(f64::INFINITY, f64::min)
        };
        Self {
            gammas,
            phi_coef,
            phi_exponent,
            deltas,
            theta,
            lambda_tilde,
            series_converges,
        }
    }

    pub fn to_key_values(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "theta={}", fmt_f64(self.theta));
        let _ = writeln!(s, "lambda_tilde={}", fmt_f64(self.lambda_tilde));
        let _ = writeln!(s, "phi_exponent={}", fmt_f64(self.phi_exponent));
        let _ = writeln!(s, "series_converges={}", self.series_converges);
        for (i, ((g, c), d)) in self.gammas.iter().zip(&self.phi_coef).zip(&self.deltas).enumerate() {
            let _ = writeln!(s, "mode_{}.gamma={}", i + 1, fmt_f64(*g));
            let _ = writeln!(s, "mode_{}.phi_coef={}", i + 1, fmt_f64(*c));
            let _ = writeln!(s, "mode_{}.delta={}", i + 1, fmt_f64(*d));
        }
        s
    }
}

/// Coefficients for the window process `γ(t) = Z_{t0}(-t r0)`, `t ∈ [0,1]`.
pub fn compute_coeffs(spec: &SpectralData, delta_reg: f64, r0: f64, t0: f64) -> Result<FerniqueCoeffs> {
    if !(delta_reg > 0.0 && delta_reg < 1.0) {
        return Err(Error::invalid(format!("delta must lie in (0,1), got {delta_reg}")));
    }
    if !(r0 > 0.0) || !(t0 >= 0.0) {
        return Err(Error::invalid("r0 must be positive and t0 nonnegative"));
    }
    let c_q = holder_constant(delta_reg / 4.0)?;
    let c_h = holder_constant(delta_reg / 2.0)?;
    let half = delta_reg / 2.0;
    let c1 = 0.5 * (c_q * c_q * r0.powf(half) + c_h * (2.0 * r0).powf(half));
    let integral = gaussian_tail_integral(delta_reg / 4.0)?;
    let power = 0.5 - delta_reg / 4.0;

    let mut gammas = Vec::with_capacity(spec.len());
    let mut phi_coef = Vec::with_capacity(spec.len());
    let mut deltas = Vec::with_capacity(spec.len());
    for (&l, &s) in spec.eigenvalues().iter().zip(spec.noise_coeffs()) {
        let g = s * (-(-2.0 * l * t0).exp_m1() / (2.0 * l)).sqrt();
        let c = c1.sqrt() * s / l.powf(power);
        gammas.push(g);
        phi_coef.push(c);
        deltas.push(g + (2.0 + SQRT_2) * c * integral);
    }
    let converges = match spec.tail_law() {
        // δ_i ~ i^{q - p(1/2 - δ/4)} and the θ-terms carry an extra log
        Some(t) if t.b > 0.0 => 2.0 * (t.q - t.p * power) < -1.0,
        _ => true,
    };
    Ok(FerniqueCoeffs::assemble(
        gammas,
        phi_coef,
        delta_reg / 4.0,
        deltas,
        converges,
    ))
}

/// `θ` by a separate evaluation path, for cross-checks.
pub fn theta_direct(deltas: &[f64]) -> f64 {
    deltas
        .iter()
        .filter(|&&d| d > 0.0)
        .map(|&d| d * d * (1.0 + (1.0 / (E * d)).ln_1p()))
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailBound {
    pub bound: f64,
    pub vacuous: bool,
    /// Smallest `r` at which the explicit bound applies.
    pub threshold_r: f64,
}

/// Gaussian-tail constant `√5 e / 2` of the per-mode estimate.
pub const TAIL_C1: f64 = SQRT5 * E / 2.0;

/// Explicit bound on `P(max_t |γ(t)| ≥ r)` at rate `lam < λ̃`:
/// `c1 e^{-λr²} Σ_i exp[-r²(log(e + 1/δ_i)/(2θ) - λ)]`, valid for
/// `r² ≥ 5θλ̃/(λ̃ - λ)` and reported as the trivial 1 below that.
pub fn tail_bound(coeffs: &FerniqueCoeffs, lam: f64, r: f64) -> Result<TailBound> {
    if !(lam > 0.0) || !(lam < coeffs.lambda_tilde) {
        return Err(Error::invalid(format!(
            "rate must lie in (0, lambda_tilde = {}), got {lam}",
            coeffs.lambda_tilde
        )));
    }
    if !(r >= 0.0) {
        return Err(Error::invalid(format!("r must be nonnegative, got {r}")));
    }
    if !coeffs.theta.is_finite() {
        return Ok(TailBound {
            bound: 1.0,
            vacuous: true,
            threshold_r: f64::INFINITY,
        });
    }
    if coeffs.theta == 0.0 {
        // γ ≡ 0
        return Ok(TailBound {
            bound: if r > 0.0 { 0.0 } else { 1.0 },
            vacuous: r == 0.0,
            threshold_r: 0.0,
        });
    }
    let lt = coeffs.lambda_tilde;
    let threshold_r = (5.0 * coeffs.theta * lt / (lt - lam)).sqrt();
    if r < threshold_r {
        return Ok(TailBound {
            bound: 1.0,
            vacuous: true,
            threshold_r,
        });
    }
    let r2 = r * r;
    let sum: f64 = coeffs
        .deltas
        .iter()
        .filter(|&&d| d > 0.0)
        .map(|&d| (-r2 * ((E + 1.0 / d).ln() / (2.0 * coeffs.theta) - lam)).exp())
        .sum();
    Ok(TailBound {
        bound: (TAIL_C1 * (-lam * r2).exp() * sum).min(1.0),
        vacuous: false,
        threshold_r,
    })
}

/// Which bound a tail report is compared against.
#[derive(Debug, Clone, Copy)]
pub enum TailBoundKind<'a> {
    /// The multi-mode bound at rate `lam`; grid values are sup levels.
    PerMode { coeffs: &'a FerniqueCoeffs, lam: f64 },
    /// The one-dimensional bound; grid value `r` tests the level
    /// `r (Γ + (2+√2)θ)`.
    OneDim { gamma: f64, theta1: f64 },
}

impl TailBoundKind<'_> {
    /// `(level, bound, vacuous)` at grid value `r`.
    fn evaluate(&self, r: f64) -> Result<(f64, f64, bool)> {
        match *self {
            TailBoundKind::PerMode { coeffs, lam } => {
                let b = tail_bound(coeffs, lam, r)?;
                Ok((r, b.bound, b.vacuous))
            }
            TailBoundKind::OneDim { gamma, theta1 } => {
                let b = one_dim_fernique_bound(gamma, theta1, r)?;
                Ok((b.level, b.bound, b.vacuous))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    /// The bound is at least the Wilson 95% upper limit.
    Dominated,
    /// The bound lies inside the Wilson interval: not resolvable at this M.
    Unresolved,
    /// The bound is below the Wilson 95% lower limit.
    Violated,
    /// The bound is the trivial 1.
    Vacuous,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Dominated => "dominated",
            Verdict::Unresolved => "unresolved",
            Verdict::Violated => "violated",
            Verdict::Vacuous => "vacuous",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailRow {
    pub r: f64,
    pub level: f64,
    pub bound: f64,
    pub count: u64,
    pub empirical: f64,
    pub wilson_lower: f64,
    pub wilson_upper: f64,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailReport {
    pub samples: u64,
    pub rows: Vec<TailRow>,
}

impl TailReport {
    /// Every non-vacuous row is dominated.
    pub fn all_dominated(&self) -> bool {
        self.rows
            .iter()
            .all(|r| matches!(r.verdict, Verdict::Dominated | Verdict::Vacuous))
    }

    pub fn any_violated(&self) -> bool {
        self.rows.iter().any(|r| r.verdict == Verdict::Violated)
    }

    pub fn to_csv(&self) -> String {
        let mut s =
            String::from("r,level,bound,count,empirical,wilson_lower,wilson_upper,verdict\n");
        for row in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                fmt_f64(row.r),
                fmt_f64(row.level),
                fmt_f64(row.bound),
                row.count,
                fmt_f64(row.empirical),
                fmt_f64(row.wilson_lower),
                fmt_f64(row.wilson_upper),
                row.verdict.as_str()
            );
        }
        s
    }
}

/// Suprema of `|Z_{t0}(θ)|` over `window_steps + 1` equally spaced nodes
/// of `[-r0, 0]`, one per path, sampled exactly mode by mode.
pub fn sample_window_sups(
    spec: &SpectralData,
    t0: f64,
    r0: f64,
    window_steps: usize,
    paths: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if !(r0 > 0.0) || !(t0 >= 0.0) || window_steps == 0 {
        return Err(Error::invalid("need r0 > 0, t0 >= 0 and at least one window step"));
    }
    let h = r0 / window_steps as f64;
    let step = ModeCoeffs::for_spectrum(spec, h);
    let first = t0 - r0;
    // first node with positive time; earlier nodes are identically zero
    let j0 = if first > 0.0 {
        0
    } else {
        ((-first / h).floor() as usize + 1).min(window_steps + 1)
    };
    let start_time = first + j0 as f64 * h;
    let start_std: Vec<f64> = spec
        .eigenvalues()
        .iter()
        .zip(spec.noise_coeffs())
        .map(|(&l, &s)| s * (-(-2.0 * l * start_time.max(0.0)).exp_m1() / (2.0 * l)).sqrt())
        .collect();
    let n = spec.len();
    Ok((0..paths as u64)
        .into_par_iter()
        .map(|p| {
            let mut rng = NoiseStream::new(seed, p);
            if j0 > window_steps {
                return 0.0;
            }
            let mut z: Vec<f64> = start_std.iter().map(|sd| sd * rng.normal()).collect();
            let mut best = z.iter().map(|v| v * v).sum::<f64>();
            for _ in j0..window_steps {
                let mut sq = 0.0;
                for i in 0..n {
                    z[i] = step[i].decay * z[i] + step[i].noise_std * rng.normal();
                    sq += z[i] * z[i];
                }
                best = best.max(sq);
            }
            best.sqrt()
        })
        .collect())
}

/// Exceedance frequencies of simulated window suprema against a bound.
#[allow(clippy::too_many_arguments)]
pub fn empirical_sup_tail(
    spec: &SpectralData,
    t0: f64,
    r0: f64,
    paths: usize,
    window_steps: usize,
    r_grid: &[f64],
    seed: u64,
    bound: TailBoundKind<'_>,
) -> Result<TailReport> {
    if paths < 1000 {
        return Err(Error::invalid(format!("at least 1000 samples are required, got {paths}")));
    }
    let mut sups = sample_window_sups(spec, t0, r0, window_steps, paths, seed)?;
    sups.sort_by(f64::total_cmp);
    tail_report_from_sorted(&sups, r_grid, bound)
}

/// Builds a report from suprema sorted ascending.
pub fn tail_report_from_sorted(
    sorted: &[f64],
    r_grid: &[f64],
    bound: TailBoundKind<'_>,
) -> Result<TailReport> {
    let n = sorted.len() as u64;
    let mut grid = r_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    let mut rows = Vec::with_capacity(grid.len());
    for r in grid {
        let (level, b, vacuous) = bound.evaluate(r)?;
        let below = sorted.partition_point(|&v| v < level) as u64;
        let count = n - below;
        let (lo, hi) = wilson_interval(count, n, Z95);
        let verdict = if vacuous {
            Verdict::Vacuous
        } else if b >= hi {
            Verdict::Dominated
        } else if b >= lo {
            Verdict::Unresolved
        } else {
            Verdict::Violated
        };
        rows.push(TailRow {
            r,
            level,
            bound: b,
            count,
            empirical: count as f64 / n as f64,
            wilson_lower: lo,
            wilson_upper: hi,
            verdict,
        });
    }
    Ok(TailReport { samples: n, rows })
}
