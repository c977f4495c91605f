//! Long-run statistics: contraction-rate fits, exponential moments of the
//! segment norm, the coupling bound on `W(μ_{t1}, μ_{t2})` and invariant
//! measure sampling.
//!
//! Monte Carlo assertions built on these are two-sided 3 SE gates with
//! pinned seeds.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::cli_runner::output::fmt_f64;
use crate::coupling_harnack::CouplingRecord;
use crate::error::{Error, Result};
use crate::fspde_sim::{DegStepper, NondegStepper, Segment, SegmentGrid};
use crate::numerics::norm2;
use crate::numerics::stats::{linear_fit, mean_se, variance, Z95};
use crate::rng::NoiseStream;
use crate::spectral_model::{DegenerateModel, NondegenerateModel, RateResult};

/// Floor applied before taking logs of gaps.
pub const LOG_FLOOR: f64 = 1e-300;

/// Either system, borrowed.
#[derive(Debug, Clone, Copy)]
pub enum ModelRef<'a> {
    Nondegenerate(&'a NondegenerateModel),
    Degenerate(&'a DegenerateModel),
}

impl<'a> From<&'a NondegenerateModel> for ModelRef<'a> {
    fn from(m: &'a NondegenerateModel) -> Self {
        ModelRef::Nondegenerate(m)
    }
}

impl<'a> From<&'a DegenerateModel> for ModelRef<'a> {
    fn from(m: &'a DegenerateModel) -> Self {
        ModelRef::Degenerate(m)
    }
}

impl ModelRef<'_> {
    pub fn rate(&self) -> Result<RateResult> {
        match self {
            ModelRef::Nondegenerate(m) => m.rate(),
            ModelRef::Degenerate(m) => m.rate(),
        }
    }

    pub fn r0(&self) -> f64 {
        match self {
            ModelRef::Nondegenerate(m) => m.r0,
            ModelRef::Degenerate(m) => m.r0,
        }
    }

    fn noise_dim(&self) -> usize {
        match self {
            ModelRef::Nondegenerate(m) => m.dim(),
            ModelRef::Degenerate(m) => m.n2(),
        }
    }
}

/// Initial segment(s) of either system.
#[derive(Debug, Clone, PartialEq)]
pub enum State {
    Nondegenerate(Segment),
    Degenerate(Segment, Segment),
}

impl State {
    pub fn grid(&self) -> &SegmentGrid {
        match self {
            State::Nondegenerate(s) | State::Degenerate(s, _) => s.grid(),
        }
    }

    /// Euclidean norm of the node `j` (joint over `(X, Y)`).
    fn node_norm(&self, j: usize) -> f64 {
        match self {
            State::Nondegenerate(s) => norm2(s.node(j)),
            State::Degenerate(x, y) => norm2(x.node(j)).hypot(norm2(y.node(j))),
        }
    }

    /// Sup over `θ` of the node norm.
    pub fn sup_norm(&self) -> f64 {
        (0..self.grid().nodes()).map(|j| self.node_norm(j)).fold(0.0, f64::max)
    }

    /// Sup over `θ` of the norm of the difference.
    pub fn sup_gap(&self, other: &State) -> Result<f64> {
        let d = match (self, other) {
            (State::Nondegenerate(a), State::Nondegenerate(b)) => State::Nondegenerate(a.diff(b)?),
            (State::Degenerate(a, b), State::Degenerate(c, d)) => State::Degenerate(a.diff(c)?, b.diff(d)?),
            _ => return Err(Error::invalid("states belong to different systems")),
        };
        Ok(d.sup_norm())
    }

    /// Node values at `θ = 0`, `X` before `Y`.
    pub fn newest(&self) -> Vec<f64> {
        match self {
            State::Nondegenerate(s) => s.newest().to_vec(),
            State::Degenerate(x, y) => x.newest().iter().chain(y.newest()).copied().collect(),
        }
    }
}

enum Stepper {
    N(NondegStepper),
    D(DegStepper),
}

impl Stepper {
    fn new(model: ModelRef<'_>, state: &State) -> Result<Self> {
        let grid = state.grid();
        match (model, state) {
            (ModelRef::Nondegenerate(m), State::Nondegenerate(s)) => {
                if s.dim() != m.dim() {
                    return Err(Error::DimensionMismatch(format!(
                        "initial segment has {} coordinates for {} modes",
                        s.dim(),
                        m.dim()
                    )));
                }
                Ok(Stepper::N(NondegStepper::new(m, grid)?))
            }
            (ModelRef::Degenerate(m), State::Degenerate(x, y)) => {
                if x.dim() != m.n1() || y.dim() != m.n2() || !y.grid().same_as(grid) {
                    return Err(Error::DimensionMismatch("initial pair does not match (n1, n2)".into()));
                }
                Ok(Stepper::D(DegStepper::new(m, grid)?))
            }
            _ => Err(Error::invalid("initial state does not match the model kind")),
        }
    }

    fn step(&mut self, state: &mut State, normals: &[f64]) {
        match (self, state) {
            (Stepper::N(st), State::Nondegenerate(s)) => st.step(s, normals),
            (Stepper::D(st), State::Degenerate(x, y)) => st.step(x, y, normals),
            _ => unreachable!("stepper and state kinds are checked at construction"),
        }
    }
}

fn check_finite(state: &State) -> Result<()> {
    if state.sup_norm().is_finite() {
        Ok(())
    } else {
        Err(Error::Numerical("simulated path left the float range".into()))
    }
}

/// Evolves `initial` for `steps` steps on noise stream `(seed, path)`.
fn run_path(model: ModelRef<'_>, initial: &State, steps: usize, seed: u64, path: u64) -> Result<State> {
    let mut stepper = Stepper::new(model, initial)?;
    let mut rng = NoiseStream::new(seed, path);
    let mut z = vec![0.0; model.noise_dim()];
    let mut s = initial.clone();
    for _ in 0..steps {
        rng.fill_normal(&mut z);
        stepper.step(&mut s, &z);
    }
    check_finite(&s)?;
    Ok(s)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContractionFit {
    /// `-slope` of `log mean gap` against `t`.
    pub fitted_rate: f64,
    pub r_squared: f64,
    pub theoretical_rate: f64,
    /// `(fitted - theoretical) / |theoretical|`
    pub relative_gap: f64,
    pub points: usize,
    /// Some mean gap fell below `LOG_FLOOR` and was clamped.
    pub floored: bool,
}

impl ContractionFit {
    pub fn to_key_values(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "fitted_rate={}", fmt_f64(self.fitted_rate));
        let _ = writeln!(s, "r_squared={}", fmt_f64(self.r_squared));
        let _ = writeln!(s, "theoretical_rate={}", fmt_f64(self.theoretical_rate));
        let _ = writeln!(s, "relative_gap={}", fmt_f64(self.relative_gap));
        let _ = writeln!(s, "points={}", self.points);
        let _ = writeln!(s, "floored={}", self.floored);
        s
    }
}

/// Least-squares decay rate of the mean (combined) gap over `t ≥ t_min`.
pub fn fit_contraction_rate(
    records: &[CouplingRecord],
    t_min: f64,
    theoretical_rate: f64,
) -> Result<ContractionFit> {
    let first = records
        .first()
        .ok_or_else(|| Error::DegenerateFit("no coupling records".into()))?;
    if records.iter().any(|r| r.times != first.times) {
        return Err(Error::invalid("coupling records use different time grids"));
    }
    let initial: f64 = records
        .iter()
        .map(|r| r.initial_gap_x + r.initial_gap_y.unwrap_or(0.0))
        .sum();
    if initial == 0.0 {
        return Err(Error::DegenerateFit("all initial gaps are zero".into()));
    }
    let gaps: Vec<Vec<f64>> = records.iter().map(|r| r.combined_gap()).collect();
    let n = records.len() as f64;
    let mut floored = false;
    let (mut ts, mut ys) = (Vec::new(), Vec::new());
    for (k, &t) in first.times.iter().enumerate() {
        if t < t_min - 1e-12 {
            continue;
        }
        let mean = gaps.iter().map(|g| g[k]).sum::<f64>() / n;
        if mean < LOG_FLOOR {
            floored = true;
        }
        ts.push(t);
        ys.push(mean.max(LOG_FLOOR).ln());
    }
    let fit = linear_fit(&ts, &ys)
        .ok_or_else(|| Error::DegenerateFit(format!("fewer than two times at or after t = {t_min}")))?;
    let fitted_rate = -fit.slope;
    Ok(ContractionFit {
        fitted_rate,
        r_squared: fit.r_squared,
        theoretical_rate,
        relative_gap: (fitted_rate - theoretical_rate) / theoretical_rate.abs(),
        points: ts.len(),
        floored,
    })
}

/// `E exp(ε ‖X_t‖²_∞)` on an `ε × t` grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConcentrationTable {
    pub eps: Vec<f64>,
    pub times: Vec<f64>,
    /// `mean[i][k]` for `eps[i]`, `times[k]`; `inf` where flagged.
    pub mean: Vec<Vec<f64>>,
    pub se: Vec<Vec<f64>>,
    pub overflow: Vec<Vec<bool>>,
    /// Per `ε`: `max_t entry ≤ 2 × entry at the last time`, if `ε` is at or
    /// below `threshold` and no cell overflowed.
    pub stable: Vec<Option<bool>>,
    pub threshold: f64,
    pub paths: usize,
    /// The model's rate was not positive; the table is still computed.
    pub rate_warning: bool,
}

impl ConcentrationTable {
    /// Nondecreasing in `ε` at every time, ignoring overflowed cells.
    pub fn is_monotone(&self) -> bool {
        (0..self.times.len()).all(|k| {
            let col: Vec<f64> = (0..self.eps.len())
                .filter(|&i| !self.overflow[i][k])
                .map(|i| self.mean[i][k])
                .collect();
            col.windows(2).all(|w| w[0] <= w[1])
        })
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("eps,time,mean,se,overflow\n");
        for (i, e) in self.eps.iter().enumerate() {
            for (k, t) in self.times.iter().enumerate() {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{}",
                    fmt_f64(*e),
                    fmt_f64(*t),
                    fmt_f64(self.mean[i][k]),
                    fmt_f64(self.se[i][k]),
                    self.overflow[i][k]
                );
            }
        }
        s
    }
}

/// Heuristic admissible `ε`: `0.5 λ̃ min(1, λ²)`.
pub fn epsilon_threshold(lambda_tilde: f64, rate: f64) -> f64 {
    0.5 * lambda_tilde * (rate * rate).min(1.0)
}

pub fn estimate_concentration(
    model: ModelRef<'_>,
    initial: &State,
    eps_grid: &[f64],
    t_grid: &[f64],
    paths: usize,
    seed: u64,
    threshold: f64,
) -> Result<ConcentrationTable> {
    if eps_grid.iter().any(|e| !(*e >= 0.0) || !e.is_finite()) {
        return Err(Error::invalid("eps grid must be finite and nonnegative"));
    }
    if t_grid.is_empty() || t_grid.windows(2).any(|w| w[0] >= w[1]) || t_grid[0] < 0.0 {
        return Err(Error::invalid("time grid must be nonnegative and strictly increasing"));
    }
    if paths < 2 {
        return Err(Error::invalid("need at least two paths"));
    }
    let grid = *initial.grid();
    let step_marks: Vec<usize> = t_grid.iter().map(|&t| grid.steps_in(t)).collect::<Result<_>>()?;
    Stepper::new(model, initial)?;
    let rate_warning = !model.rate()?.positive;

    // sq[p][k] = ‖X_{t_k}‖²_∞ on path p
    let sq: Vec<Vec<f64>> = (0..paths as u64)
        .into_par_iter()
        .map(|p| {
            let mut stepper = Stepper::new(model, initial)?;
            let mut rng = NoiseStream::new(seed, p);
            let mut z = vec![0.0; model.noise_dim()];
            let mut s = initial.clone();
            let mut out = Vec::with_capacity(step_marks.len());
            let mut done = 0;
            for &mark in &step_marks {
                while done < mark {
                    rng.fill_normal(&mut z);
                    stepper.step(&mut s, &z);
                    done += 1;
                }
                let v = s.sup_norm();
                out.push(v * v);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let mut table = ConcentrationTable {
        eps: eps_grid.to_vec(),
        times: t_grid.to_vec(),
        mean: Vec::new(),
        se: Vec::new(),
        overflow: Vec::new(),
        stable: Vec::new(),
        threshold,
        paths,
        rate_warning,
    };
    for &e in eps_grid {
        let (mut mrow, mut srow, mut orow) = (Vec::new(), Vec::new(), Vec::new());
        for k in 0..t_grid.len() {
            let vals: Vec<f64> = sq.iter().map(|row| (e * row[k]).exp()).collect();
            let (m, se) = mean_se(&vals);
            let over = !m.is_finite() || !se.is_finite();
            mrow.push(if over { f64::INFINITY } else { m });
            srow.push(if over { f64::INFINITY } else { se });
            orow.push(over);
        }
        let stable = (e <= threshold && !orow.iter().any(|o| *o)).then(|| {
            let plateau = *mrow.last().unwrap_or(&1.0);
            mrow.iter().cloned().fold(0.0, f64::max) <= 2.0 * plateau
        });
        table.mean.push(mrow);
        table.se.push(srow);
        table.overflow.push(orow);
        table.stable.push(stable);
    }
    Ok(table)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WassersteinEstimate {
    pub t1: f64,
    pub t2: f64,
    pub mean_gap: f64,
    pub se: f64,
    pub ci: (f64, f64),
    pub paths: usize,
}

/// Coupling bound on `W(μ_{t1}^ξ, μ_{t2}^ξ)`: one solution runs on
/// `[0, t2]`, a second starts from `ξ` at `t2 - t1`, and both share the noise
/// on the overlap. Returns the mean terminal sup-norm gap.
pub fn w_cauchy_gap(
    model: ModelRef<'_>,
    initial: &State,
    t1: f64,
    t2: f64,
    paths: usize,
    seed: u64,
) -> Result<WassersteinEstimate> {
    if !(t1 > 0.0) || !(t2 >= t1) {
        return Err(Error::invalid(format!("need t2 >= t1 > 0, got t1 = {t1}, t2 = {t2}")));
    }
    if paths < 2 {
        return Err(Error::invalid("need at least two paths"));
    }
    let grid = *initial.grid();
    let n2 = grid.steps_in(t2)?;
    let n1 = grid.steps_in(t1)?;
    let offset = n2 - n1;
    Stepper::new(model, initial)?;
    let gaps: Vec<f64> = (0..paths as u64)
        .into_par_iter()
        .map(|p| {
            let mut stepper = Stepper::new(model, initial)?;
            let mut rng = NoiseStream::new(seed, p);
            let mut z = vec![0.0; model.noise_dim()];
            let mut long = initial.clone();
            let mut late = initial.clone();
            for k in 0..n2 {
                rng.fill_normal(&mut z);
                stepper.step(&mut long, &z);
                if k >= offset {
                    stepper.step(&mut late, &z);
                }
            }
            check_finite(&long)?;
            check_finite(&late)?;
            long.sup_gap(&late)
        })
        .collect::<Result<_>>()?;
    let (mean_gap, se) = mean_se(&gaps);
    Ok(WassersteinEstimate {
        t1,
        t2,
        mean_gap,
        se,
        ci: ((mean_gap - Z95 * se).max(0.0), mean_gap + Z95 * se),
        paths,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvariantSummary {
    pub burn_in: f64,
    pub paths: usize,
    pub mean_sup: f64,
    pub se_sup: f64,
    pub var_sup: f64,
    /// Per-coordinate mean and variance of the `θ = 0` node.
    pub mean_newest: Vec<f64>,
    pub var_newest: Vec<f64>,
    pub eps: f64,
    /// `E exp(ε ‖·‖²_∞)`; `inf` on overflow.
    pub exp_moment: f64,
    pub exp_moment_se: f64,
}

impl InvariantSummary {
    pub fn to_key_values(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "burn_in={}", fmt_f64(self.burn_in));
        let _ = writeln!(s, "paths={}", self.paths);
        let _ = writeln!(s, "mean_sup={}", fmt_f64(self.mean_sup));
        let _ = writeln!(s, "se_sup={}", fmt_f64(self.se_sup));
        let _ = writeln!(s, "var_sup={}", fmt_f64(self.var_sup));
        for (i, (m, v)) in self.mean_newest.iter().zip(&self.var_newest).enumerate() {
            let _ = writeln!(s, "mean_newest.{i}={}", fmt_f64(*m));
            let _ = writeln!(s, "var_newest.{i}={}", fmt_f64(*v));
        }
        let _ = writeln!(s, "eps={}", fmt_f64(self.eps));
        let _ = writeln!(s, "exp_moment={}", fmt_f64(self.exp_moment));
        let _ = writeln!(s, "exp_moment_se={}", fmt_f64(self.exp_moment_se));
        s
    }
}

/// Default burn-in `10 / λ`, rounded up to the grid.
pub fn default_burn_in(model: ModelRef<'_>, grid: &SegmentGrid) -> Result<f64> {
    let rate = model.rate()?;
    if !rate.positive {
        return Err(Error::invalid("rate is not positive; set burn_in explicitly"));
    }
    Ok((10.0 / rate.rate / grid.dt()).ceil() * grid.dt())
}

/// Terminal segments of `paths` runs of length `burn_in` (default `10/λ`).
pub fn sample_invariant(
    model: ModelRef<'_>,
    initial: &State,
    burn_in: Option<f64>,
    eps: f64,
    paths: usize,
    seed: u64,
) -> Result<InvariantSummary> {
    if paths < 2 {
        return Err(Error::invalid("need at least two paths"));
    }
    let grid = *initial.grid();
    let burn_in = match burn_in {
        Some(b) => b,
        None => default_burn_in(model, &grid)?,
    };
    let steps = grid.steps_in(burn_in)?;
    let finals: Vec<State> = (0..paths as u64)
        .into_par_iter()
        .map(|p| run_path(model, initial, steps, seed, p))
        .collect::<Result<_>>()?;
    let sups: Vec<f64> = finals.iter().map(State::sup_norm).collect();
    let (mean_sup, se_sup) = mean_se(&sups);
    let newest: Vec<Vec<f64>> = finals.iter().map(State::newest).collect();
    let dim = newest[0].len();
    let mut mean_newest = Vec::with_capacity(dim);
    let mut var_newest = Vec::with_capacity(dim);
    for i in 0..dim {
        let col: Vec<f64> = newest.iter().map(|v| v[i]).collect();
        mean_newest.push(mean_se(&col).0);
        var_newest.push(variance(&col));
    }
    let moments: Vec<f64> = sups.iter().map(|s| (eps * s * s).exp()).collect();
    let (exp_moment, exp_moment_se) = mean_se(&moments);
    Ok(InvariantSummary {
        burn_in,
        paths,
        mean_sup,
        se_sup,
        var_sup: variance(&sups),
        mean_newest,
        var_newest,
        eps,
        exp_moment,
        exp_moment_se,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupling_harnack::synchronous_couple;
    use crate::fspde_sim::DriftSpec;
    use crate::spectral_model::SpectralData;

    fn single(lambda: f64, s: f64, drift: DriftSpec, l: f64, r0: f64) -> NondegenerateModel {
        NondegenerateModel::new(SpectralData::new(vec![lambda], vec![s]).unwrap(), 0.5, drift, l, r0).unwrap()
    }

    #[test]
    fn exact_exponential_rate_is_recovered() {
        let m = single(1.7, 1.0, DriftSpec::zero(1), 0.0, 0.5);
        let g = SegmentGrid::new(0.5, 32).unwrap();
        let a = Segment::zeros(g, 1);
        let b = Segment::constant(g, &[1.0]).unwrap();
        let recs: Vec<_> = (0..3).map(|p| synchronous_couple(&m, &a, &b, 6.0, 4, p).unwrap()).collect();
        let fit = fit_contraction_rate(&recs, 0.5, 1.7).unwrap();
        assert!(fit.relative_gap.abs() < 0.01, "{fit:?}");
        assert!(fit.r_squared > 0.999);
    }

    #[test]
    fn zero_initial_gap_is_degenerate() {
        let m = single(1.0, 1.0, DriftSpec::zero(1), 0.0, 0.5);
        let g = SegmentGrid::new(0.5, 8).unwrap();
        let a = Segment::zeros(g, 1);
        let rec = synchronous_couple(&m, &a, &a, 2.0, 1, 0).unwrap();
        let err = fit_contraction_rate(&[rec], 0.5, 1.0).unwrap_err();
        assert!(matches!(err, Error::DegenerateFit(_)));
        assert!(err.to_string().contains("degenerate fit input"));
    }

    #[test]
    fn concentration_zero_eps_and_monotone() {
        let spec = SpectralData::new(vec![1.0, 4.0], vec![1.0, 0.5]).unwrap();
        let m = NondegenerateModel::new(spec, 0.5, DriftSpec::zero(2), 0.0, 0.5).unwrap();
        let g = SegmentGrid::new(0.5, 16).unwrap();
        let st = State::Nondegenerate(Segment::zeros(g, 2));
        let t = estimate_concentration((&m).into(), &st, &[0.0, 0.05, 0.1, 0.2], &[0.5, 1.0, 2.0], 400, 3, 0.1)
            .unwrap();
        assert!(t.mean[0].iter().all(|v| *v == 1.0));
        assert!(t.is_monotone());
        assert_eq!(t.stable[3], None);
        assert!(t.to_csv().lines().count() == 13);
    }

    #[test]
    fn concentration_without_noise_is_one() {
        let m = single(1.0, 0.0, DriftSpec::zero(1), 0.0, 0.5);
        let g = SegmentGrid::new(0.5, 8).unwrap();
        let st = State::Nondegenerate(Segment::zeros(g, 1));
        let t = estimate_concentration((&m).into(), &st, &[0.3, 1.0], &[1.0, 2.0], 10, 3, 1.0).unwrap();
        assert!(t.mean.iter().flatten().all(|v| *v == 1.0));
    }

    #[test]
    fn overflow_is_flagged() {
        let m = single(1.0, 1.0, DriftSpec::zero(1), 0.0, 0.5);
        let g = SegmentGrid::new(0.5, 8).unwrap();
        let st = State::Nondegenerate(Segment::constant(g, &[30.0]).unwrap());
        let t = estimate_concentration((&m).into(), &st, &[0.0, 1.0], &[0.0], 10, 3, 1.0).unwrap();
        assert!(t.overflow[1][0]);
        assert!(!t.overflow[0][0]);
        assert!(t.is_monotone());
    }

    #[test]
    fn equal_times_give_zero_gap() {
        let m = single(1.0, 1.0, DriftSpec::point_delay(-0.5, 0.3), 0.3, 0.5);
        let g = SegmentGrid::new(0.5, 16).unwrap();
        let st = State::Nondegenerate(Segment::constant(g, &[1.0]).unwrap());
        let w = w_cauchy_gap((&m).into(), &st, 2.0, 2.0, 20, 8).unwrap();
        assert_eq!(w.mean_gap, 0.0);
    }

    #[test]
    fn noiseless_gap_is_flow_difference() {
        let m = single(1.0, 0.0, DriftSpec::point_delay(-0.5, 0.3), 0.3, 0.5);
        let g = SegmentGrid::new(0.5, 16).unwrap();
        let st = State::Nondegenerate(Segment::constant(g, &[1.0]).unwrap());
        let w = w_cauchy_gap((&m).into(), &st, 1.0, 2.0, 4, 8).unwrap();
        let a = run_path((&m).into(), &st, g.steps_in(1.0).unwrap(), 0, 0).unwrap();
        let b = run_path((&m).into(), &st, g.steps_in(2.0).unwrap(), 0, 0).unwrap();
        let want = a.sup_gap(&b).unwrap();
        assert!((w.mean_gap - want).abs() <= 1e-15 * want);
        assert_eq!(w.se, 0.0);
    }

    #[test]
    fn stationary_variance_single_mode() {
        let (lam, s) = (2.0, 0.8);
        let m = single(lam, s, DriftSpec::zero(1), 0.0, 0.5);
        let g = SegmentGrid::new(0.5, 16).unwrap();
        let st = State::Nondegenerate(Segment::zeros(g, 1));
        let sum = sample_invariant((&m).into(), &st, None, 0.1, 4000, 21).unwrap();
        let v = s * s / (2.0 * lam);
        // SE of a sample variance of a Gaussian: v sqrt(2/(n-1))
        let se = v * (2.0 / 3999.0f64).sqrt();
        assert!((sum.var_newest[0] - v).abs() < 3.0 * se, "{} vs {v}", sum.var_newest[0]);
        assert!((sum.burn_in - 5.0).abs() < 1e-12);

        let other = sample_invariant((&m).into(), &st, None, 0.1, 4000, 22).unwrap();
        let se2 = sum.se_sup.hypot(other.se_sup);
        assert!((sum.mean_sup - other.mean_sup).abs() < 3.0 * se2);
    }

    #[test]
    fn noiseless_invariant_is_point_mass() {
        let m = single(1.0, 0.0, DriftSpec::zero(1), 0.0, 0.5);
        let g = SegmentGrid::new(0.5, 8).unwrap();
        let st = State::Nondegenerate(Segment::zeros(g, 1));
        let sum = sample_invariant((&m).into(), &st, None, 0.5, 5, 1).unwrap();
        assert_eq!(sum.mean_sup, 0.0);
        assert_eq!(sum.exp_moment, 1.0);
    }
}
