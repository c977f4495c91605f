//! Synchronous couplings: two solutions driven by one noise path.

use std::fmt::Write as _;

use serde::Serialize;

use crate::cli_runner::output::fmt_f64;
use crate::error::{Error, Result};
use crate::fspde_sim::{segment_sup_norm, DegStepper, NondegStepper, Segment, WindowMax};
use crate::rng::NoiseStream;
use crate::spectral_model::{DegenerateModel, NondegenerateModel};

/// Gap history of a coupled pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CouplingRecord {
    pub times: Vec<f64>,
    /// `‖X_t - X̄_t‖_∞` (the whole state for the non-degenerate system).
    pub gap_x: Vec<f64>,
    /// `‖Y_t - Ȳ_t‖_∞` for the degenerate system.
    pub gap_y: Option<Vec<f64>>,
    /// Weight of the combined gap `α gap_x + gap_y`.
    pub alpha: Option<f64>,
    /// Gronwall envelope `e^{λ1 r0} e^{-λt} ‖Δ_0‖_∞`, when `λ > 0`.
    pub envelope: Option<Vec<f64>>,
    pub initial_gap_x: f64,
    pub initial_gap_y: Option<f64>,
    pub seed: u64,
    pub path_index: u64,
}

impl CouplingRecord {
    /// `gap_x`, or `α gap_x + gap_y` for the degenerate system.
    pub fn combined_gap(&self) -> Vec<f64> {
        match (&self.gap_y, self.alpha) {
            (Some(gy), Some(a)) => self.gap_x.iter().zip(gy).map(|(x, y)| a * x + y).collect(),
            (Some(gy), None) => self.gap_x.iter().zip(gy).map(|(x, y)| x + y).collect(),
            _ => self.gap_x.clone(),
        }
    }

    /// Largest `gap / envelope` over `t ≥ t_min`, if an envelope exists.
    pub fn max_envelope_ratio(&self, t_min: f64) -> Option<f64> {
        let env = self.envelope.as_ref()?;
        Some(
            self.times
                .iter()
                .zip(&self.gap_x)
                .zip(env)
                .filter(|((t, _), _)| **t >= t_min - 1e-12)
                .map(|((_, g), e)| if *e > 0.0 { g / e } else if *g > 0.0 { f64::INFINITY } else { 0.0 })
                .fold(0.0, f64::max),
        )
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("time,gap_x");
        if self.gap_y.is_some() {
            s.push_str(",gap_y");
        }
        if self.envelope.is_some() {
            s.push_str(",envelope");
        }
        s.push('\n');
        for k in 0..self.times.len() {
            s.push_str(&fmt_f64(self.times[k]));
            let _ = write!(s, ",{}", fmt_f64(self.gap_x[k]));
            if let Some(gy) = &self.gap_y {
                let _ = write!(s, ",{}", fmt_f64(gy[k]));
            }
            if let Some(env) = &self.envelope {
                let _ = write!(s, ",{}", fmt_f64(env[k]));
            }
            s.push('\n');
        }
        s
    }
}

fn diff_norm(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Non-degenerate solutions from `xi` and `eta` under identical noise.
pub fn synchronous_couple(
    model: &NondegenerateModel,
    xi: &Segment,
    eta: &Segment,
    t_end: f64,
    seed: u64,
    path_index: u64,
) -> Result<CouplingRecord> {
    if !xi.grid().same_as(eta.grid()) || xi.dim() != eta.dim() {
        return Err(Error::GridMismatch("coupled initial segments use different grids".into()));
    }
    if xi.dim() != model.dim() {
        return Err(Error::DimensionMismatch(format!(
            "initial segments have {} coordinates for {} modes",
            xi.dim(),
            model.dim()
        )));
    }
    let grid = *xi.grid();
    let steps = grid.steps_in(t_end)?;
    let mut stepper = NondegStepper::new(model, &grid)?;
    let mut rng = NoiseStream::new(seed, path_index);
    let (mut a, mut b) = (xi.clone(), eta.clone());
    let mut window = WindowMax::new(grid.nodes());
    for j in 0..grid.nodes() {
        window.push(diff_norm(a.node(j), b.node(j)));
    }
    let initial = window.max();
    let rate = model.rate()?;
    let lambda1 = model.spectral.lambda1();
    let envelope_at =
        |t: f64| (lambda1 * model.r0).exp() * (-rate.rate * t).exp() * initial;

    let mut times = Vec::with_capacity(steps + 1);
    let mut gaps = Vec::with_capacity(steps + 1);
    let mut env = Vec::with_capacity(steps + 1);
    times.push(0.0);
    gaps.push(initial);
    env.push(envelope_at(0.0));
    let mut z = vec![0.0; model.dim()];
    for k in 1..=steps {
        rng.fill_normal(&mut z);
        stepper.step(&mut a, &z);
        stepper.step(&mut b, &z);
        window.push(diff_norm(a.newest(), b.newest()));
        let t = k as f64 * grid.dt();
        times.push(t);
        gaps.push(window.max());
        env.push(envelope_at(t));
    }
    Ok(CouplingRecord {
        times,
        gap_x: gaps,
        gap_y: None,
        alpha: None,
        envelope: rate.positive.then_some(env),
        initial_gap_x: initial,
        initial_gap_y: None,
        seed,
        path_index,
    })
}

/// Degenerate solutions from `(xi1, eta1)` and `(xi2, eta2)` under identical
/// noise; the combined gap uses the weight α of the model.
pub fn synchronous_couple_degenerate(
    model: &DegenerateModel,
    first: (&Segment, &Segment),
    second: (&Segment, &Segment),
    t_end: f64,
    seed: u64,
    path_index: u64,
) -> Result<CouplingRecord> {
    let grid = *first.0.grid();
    for s in [first.1, second.0, second.1] {
        if !s.grid().same_as(&grid) {
            return Err(Error::GridMismatch("coupled initial segments use different grids".into()));
        }
    }
    if first.0.dim() != model.n1()
        || second.0.dim() != model.n1()
        || first.1.dim() != model.n2()
        || second.1.dim() != model.n2()
    {
        return Err(Error::DimensionMismatch("initial segments do not match (n1, n2)".into()));
    }
    let steps = grid.steps_in(t_end)?;
    let mut stepper = DegStepper::new(model, &grid)?;
    let mut rng = NoiseStream::new(seed, path_index);
    let (mut x1, mut y1) = (first.0.clone(), first.1.clone());
    let (mut x2, mut y2) = (second.0.clone(), second.1.clone());
    let gx0 = segment_sup_norm(&x1.diff(&x2)?);
    let gy0 = segment_sup_norm(&y1.diff(&y2)?);
    let mut wx = WindowMax::new(grid.nodes());
    let mut wy = WindowMax::new(grid.nodes());
    for j in 0..grid.nodes() {
        wx.push(diff_norm(x1.node(j), x2.node(j)));
        wy.push(diff_norm(y1.node(j), y2.node(j)));
    }
    let mut times = vec![0.0];
    let mut gap_x = vec![gx0];
    let mut gap_y = vec![gy0];
    let mut z = vec![0.0; model.n2()];
    let mut incr = vec![0.0; model.n2()];
    for k in 1..=steps {
        rng.fill_normal(&mut z);
        for ((v, c), zi) in incr.iter_mut().zip(stepper.coeffs()).zip(&z) {
            *v = c.noise_std * zi;
        }
        stepper.step_with_increment(&mut x1, &mut y1, &incr);
        stepper.step_with_increment(&mut x2, &mut y2, &incr);
        wx.push(diff_norm(x1.newest(), x2.newest()));
        wy.push(diff_norm(y1.newest(), y2.newest()));
        times.push(k as f64 * grid.dt());
        gap_x.push(wx.max());
        gap_y.push(wy.max());
    }
    Ok(CouplingRecord {
        times,
        gap_x,
        gap_y: Some(gap_y),
        alpha: Some(model.alpha()?),
        envelope: None,
        initial_gap_x: gx0,
        initial_gap_y: Some(gy0),
        seed,
        path_index,
    })
}
