//! Exponential Euler stepping on the segment grid with exact
//! Ornstein–Uhlenbeck noise increments.

use nalgebra::DMatrix;

use super::drift::{BoundDrift, BoundDrift2};
use super::record::PathRecord;
use super::segment::{Segment, SegmentGrid, WindowMax};
use crate::error::{Error, Result};
use crate::numerics::expm::linear_forcing_weights;
use crate::numerics::norm2;
use crate::rng::NoiseStream;
use crate::spectral_model::{DegenerateModel, NondegenerateModel, SpectralData};

const SERIES_CUTOFF: f64 = 1e-8;

/// Per-mode one-step coefficients for `dx = (-λx + b) dt + s dW`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeCoeffs {
    pub dt: f64,
    /// `e^{-λ dt}`
    pub decay: f64,
    /// `(1 - e^{-λ dt}) / λ`
    pub phi1: f64,
    /// `s sqrt((1 - e^{-2λ dt}) / (2λ))`
    pub noise_std: f64,
    pub lambda: f64,
    pub s: f64,
}

impl ModeCoeffs {
    pub fn new(lambda: f64, s: f64, dt: f64) -> Self {
        let x = lambda * dt;
        let decay = (-x).exp();
        let (phi1, var) = if x < SERIES_CUTOFF {
            (dt * (1.0 - 0.5 * x), s * s * dt * (1.0 - x))
        } else {
            (-(-x).exp_m1() / lambda, s * s * (-(-2.0 * x).exp_m1()) / (2.0 * lambda))
        };
        Self {
            dt,
            decay,
            phi1,
            noise_std: var.sqrt(),
            lambda,
            s,
        }
    }

    pub fn for_spectrum(spec: &SpectralData, dt: f64) -> Vec<Self> {
        spec.eigenvalues()
            .iter()
            .zip(spec.noise_coeffs())
            .map(|(&l, &s)| Self::new(l, s, dt))
            .collect()
    }

    /// Joint draw of the OU increment `ζ = s ∫ e^{-λ(dt-u)} dW(u)` and the
    /// Brownian increment `W(dt)` from two standard normals.
    #[inline]
    pub fn joint_increment(&self, z1: f64, z2: f64) -> (f64, f64) {
        let dw = self.dt.sqrt() * z1;
        let cov = self.s * self.phi1;
        let slope = cov / self.dt;
        let resid = (self.noise_std * self.noise_std - slope * cov).max(0.0);
        (slope * dw + resid.sqrt() * z2, dw)
    }
}

fn check_dt(grid: &SegmentGrid, dt: f64) -> Result<()> {
    if (dt - grid.dt()).abs() > 1e-12 * grid.dt() {
        return Err(Error::GridMismatch(format!(
            "step dt = {dt} differs from the segment grid dt = {}",
            grid.dt()
        )));
    }
    Ok(())
}

/// Reusable stepper for the non-degenerate system.
#[derive(Debug, Clone)]
pub struct NondegStepper {
    coeffs: Vec<ModeCoeffs>,
    drift: BoundDrift,
    drift_buf: Vec<f64>,
    new_buf: Vec<f64>,
}

impl NondegStepper {
    pub fn new(model: &NondegenerateModel, grid: &SegmentGrid) -> Result<Self> {
        if (grid.r0() - model.r0).abs() > 1e-12 * model.r0 {
            return Err(Error::GridMismatch(format!(
                "grid r0 = {} but model r0 = {}",
                grid.r0(),
                model.r0
            )));
        }
        let n = model.dim();
        Ok(Self {
            coeffs: ModeCoeffs::for_spectrum(&model.spectral, grid.dt()),
            drift: model.drift.bind(grid, n, n)?,
            drift_buf: vec![0.0; n],
            new_buf: vec![0.0; n],
        })
    }

    pub fn coeffs(&self) -> &[ModeCoeffs] {
        &self.coeffs
    }

    /// Drift of the current segment, as used by the next step.
    pub fn drift_of(&mut self, seg: &Segment) -> &[f64] {
        self.drift_buf.iter_mut().for_each(|v| *v = 0.0);
        self.drift.accumulate(seg, &mut self.drift_buf);
        &self.drift_buf
    }

    /// One step driven by standard normals.
    pub fn step(&mut self, seg: &mut Segment, normals: &[f64]) {
        self.drift_buf.iter_mut().for_each(|v| *v = 0.0);
        self.drift.accumulate(seg, &mut self.drift_buf);
        let x = seg.newest();
        for (i, c) in self.coeffs.iter().enumerate() {
            self.new_buf[i] = c.decay * x[i] + c.phi1 * self.drift_buf[i] + c.noise_std * normals[i];
        }
        seg.push(&self.new_buf);
    }

    /// One step with the stochastic increments already scaled.
    pub fn step_with_increment(&mut self, seg: &mut Segment, increments: &[f64]) {
        self.drift_buf.iter_mut().for_each(|v| *v = 0.0);
        self.drift.accumulate(seg, &mut self.drift_buf);
        let x = seg.newest();
        for (i, c) in self.coeffs.iter().enumerate() {
            self.new_buf[i] = c.decay * x[i] + c.phi1 * self.drift_buf[i] + increments[i];
        }
        seg.push(&self.new_buf);
    }
}

/// Advances `state` by one grid step.
pub fn step_nondegenerate(
    state: &Segment,
    model: &NondegenerateModel,
    dt: f64,
    noise: &[f64],
) -> Result<Segment> {
    check_dt(state.grid(), dt)?;
    if noise.len() != model.dim() || state.dim() != model.dim() {
        return Err(Error::DimensionMismatch(format!(
            "model has {} modes, segment {} and noise {}",
            model.dim(),
            state.dim(),
            noise.len()
        )));
    }
    if noise.iter().any(|z| !z.is_finite()) {
        return Err(Error::invalid("noise contains non-finite values"));
    }
    let mut stepper = NondegStepper::new(model, state.grid())?;
    let mut next = state.clone();
    stepper.step(&mut next, noise);
    Ok(next)
}

/// Options for recording a simulated path.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SimOptions {
    pub path_index: u64,
    pub record_modes: bool,
}

pub fn simulate_nondegenerate(
    model: &NondegenerateModel,
    initial: &Segment,
    t_end: f64,
    seed: u64,
) -> Result<PathRecord> {
    simulate_nondegenerate_with(model, initial, t_end, seed, SimOptions::default())
}

pub fn simulate_nondegenerate_with(
    model: &NondegenerateModel,
    initial: &Segment,
    t_end: f64,
    seed: u64,
    opts: SimOptions,
) -> Result<PathRecord> {
    if initial.dim() != model.dim() {
        return Err(Error::DimensionMismatch(format!(
            "initial segment has {} coordinates for {} modes",
            initial.dim(),
            model.dim()
        )));
    }
    let grid = *initial.grid();
    let steps = grid.steps_in(t_end)?;
    let mut stepper = NondegStepper::new(model, &grid)?;
    let mut rng = NoiseStream::new(seed, opts.path_index);
    let mut seg = initial.clone();
    let mut window = WindowMax::from_segment(&seg);
    let mut rec = PathRecord::new(seed, opts.path_index, grid.dt());
    rec.push(0.0, window.max(), opts.record_modes.then(|| seg.newest()));
    let mut z = vec![0.0; model.dim()];
    for k in 1..=steps {
        rng.fill_normal(&mut z);
        stepper.step(&mut seg, &z);
        window.push(norm2(seg.newest()));
        rec.push(k as f64 * grid.dt(), window.max(), opts.record_modes.then(|| seg.newest()));
    }
    if rec.supnorms.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("simulated path left the float range".into()));
    }
    Ok(rec)
}

/// Reusable stepper for the degenerate pair `(X, Y)`.
///
/// `Y` takes an exponential Euler step; `X` is integrated exactly against
/// the piecewise linear interpolant of `B Y` over the step.
#[derive(Debug, Clone)]
pub struct DegStepper {
    coeffs: Vec<ModeCoeffs>,
    drift: BoundDrift2,
    e: DMatrix<f64>,
    w0b: DMatrix<f64>,
    w1b: DMatrix<f64>,
    drift_buf: Vec<f64>,
    y_new: Vec<f64>,
    x_new: Vec<f64>,
}

impl DegStepper {
    pub fn new(model: &DegenerateModel, grid: &SegmentGrid) -> Result<Self> {
        if (grid.r0() - model.r0).abs() > 1e-12 * model.r0 {
            return Err(Error::GridMismatch(format!(
                "grid r0 = {} but model r0 = {}",
                grid.r0(),
                model.r0
            )));
        }
        let (e, w0, w1) = linear_forcing_weights(&model.a1, grid.dt())?;
        Ok(Self {
            coeffs: ModeCoeffs::for_spectrum(&model.a2, grid.dt()),
            drift: model.drift.bind(grid, model.n1(), model.n2())?,
            w0b: &w0 * &model.b,
            w1b: &w1 * &model.b,
            e,
            drift_buf: vec![0.0; model.n2()],
            y_new: vec![0.0; model.n2()],
            x_new: vec![0.0; model.n1()],
        })
    }

    pub fn coeffs(&self) -> &[ModeCoeffs] {
        &self.coeffs
    }

    /// `b(X_t, Y_t)` for the current segments.
    pub fn drift_of(&mut self, xs: &Segment, ys: &Segment) -> Vec<f64> {
        let mut out = vec![0.0; self.drift_buf.len()];
        self.drift.accumulate(xs, ys, &mut out);
        out
    }

    /// One step with the given drift value, stochastic increments and an
    /// optional additive correction to the new `Y` node.
    pub fn advance(
        &mut self,
        xs: &mut Segment,
        ys: &mut Segment,
        drift: &[f64],
        increments: &[f64],
        correction: Option<&[f64]>,
    ) {
        let y = ys.newest();
        for (i, c) in self.coeffs.iter().enumerate() {
            self.y_new[i] = c.decay * y[i] + c.phi1 * drift[i] + increments[i];
            if let Some(corr) = correction {
                self.y_new[i] += corr[i];
            }
        }
        let x = xs.newest();
        let n1 = self.x_new.len();
        for r in 0..n1 {
            let mut acc = 0.0;
            for (c, xc) in x.iter().enumerate() {
                acc += self.e[(r, c)] * xc;
            }
            for (c, (yo, yn)) in y.iter().zip(&self.y_new).enumerate() {
                acc += self.w0b[(r, c)] * yo + self.w1b[(r, c)] * yn;
            }
            self.x_new[r] = acc;
        }
        xs.push(&self.x_new);
        ys.push(&self.y_new);
    }

    /// One step with the system's own drift.
    pub fn step_with_increment(&mut self, xs: &mut Segment, ys: &mut Segment, increments: &[f64]) {
        self.drift_buf.iter_mut().for_each(|v| *v = 0.0);
        self.drift.accumulate(xs, ys, &mut self.drift_buf);
        let drift = std::mem::take(&mut self.drift_buf);
        self.advance(xs, ys, &drift, increments, None);
        self.drift_buf = drift;
    }

    pub fn step(&mut self, xs: &mut Segment, ys: &mut Segment, normals: &[f64]) {
        let incr: Vec<f64> = self
            .coeffs
            .iter()
            .zip(normals)
            .map(|(c, z)| c.noise_std * z)
            .collect();
        self.step_with_increment(xs, ys, &incr);
    }
}

fn joint_norm(x: &[f64], y: &[f64]) -> f64 {
    let sx: f64 = x.iter().map(|v| v * v).sum();
    let sy: f64 = y.iter().map(|v| v * v).sum();
    (sx + sy).sqrt()
}

pub fn simulate_degenerate(
    model: &DegenerateModel,
    initial: (&Segment, &Segment),
    t_end: f64,
    seed: u64,
) -> Result<PathRecord> {
    simulate_degenerate_with(model, initial, t_end, seed, SimOptions::default())
}

/// Records the joint sup-norm plus the `X` and `Y` parts separately.
pub fn simulate_degenerate_with(
    model: &DegenerateModel,
    initial: (&Segment, &Segment),
    t_end: f64,
    seed: u64,
    opts: SimOptions,
) -> Result<PathRecord> {
    let (x0, y0) = initial;
    if x0.dim() != model.n1() || y0.dim() != model.n2() {
        return Err(Error::DimensionMismatch(format!(
            "initial segments have ({}, {}) coordinates, model ({}, {})",
            x0.dim(),
            y0.dim(),
            model.n1(),
            model.n2()
        )));
    }
    if !x0.grid().same_as(y0.grid()) {
        return Err(Error::GridMismatch("X and Y initial segments use different grids".into()));
    }
    let grid = *x0.grid();
    let steps = grid.steps_in(t_end)?;
    let mut stepper = DegStepper::new(model, &grid)?;
    let mut rng = NoiseStream::new(seed, opts.path_index);
    let (mut xs, mut ys) = (x0.clone(), y0.clone());
    let mut wj = WindowMax::new(grid.nodes());
    let mut wx = WindowMax::new(grid.nodes());
    let mut wy = WindowMax::new(grid.nodes());
    for j in 0..grid.nodes() {
        wj.push(joint_norm(xs.node(j), ys.node(j)));
        wx.push(norm2(xs.node(j)));
        wy.push(norm2(ys.node(j)));
    }
    let mut rec = PathRecord::new(seed, opts.path_index, grid.dt()).with_components(&["supnorm_x", "supnorm_y"]);
    let newest = |xs: &Segment, ys: &Segment| -> Vec<f64> {
        xs.newest().iter().chain(ys.newest()).copied().collect()
    };
    rec.push_with(0.0, wj.max(), &[wx.max(), wy.max()], opts.record_modes.then(|| newest(&xs, &ys)).as_deref());
    let mut z = vec![0.0; model.n2()];
    for k in 1..=steps {
        rng.fill_normal(&mut z);
        stepper.step(&mut xs, &mut ys, &z);
        wj.push(joint_norm(xs.newest(), ys.newest()));
        wx.push(norm2(xs.newest()));
        wy.push(norm2(ys.newest()));
        rec.push_with(
            k as f64 * grid.dt(),
            wj.max(),
            &[wx.max(), wy.max()],
            opts.record_modes.then(|| newest(&xs, &ys)).as_deref(),
        );
    }
    if rec.supnorms.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("simulated path left the float range".into()));
    }
    Ok(rec)
}

/// Stochastic convolution `Z_t(θ) = ∫_0^{(t+θ)^+} e^{(t+θ-s)A} σ dW(s)`
/// sampled exactly on the grid `dt = r0 / m`; the record holds
/// `‖Z_t‖_∞` over the nodes of `[t - r0, t]`.
pub fn stoch_conv_path(
    spec: &SpectralData,
    r0: f64,
    t_end: f64,
    dt: f64,
    seed: u64,
    opts: SimOptions,
) -> Result<PathRecord> {
    if !(dt > 0.0) {
        return Err(Error::invalid(format!("dt must be positive, got {dt}")));
    }
    let m = (r0 / dt).round();
    if m < 1.0 || (m * dt - r0).abs() > 1e-9 * r0 {
        return Err(Error::GridMismatch(format!("dt = {dt} does not divide r0 = {r0}")));
    }
    let grid = SegmentGrid::new(r0, m as usize)?;
    let steps = grid.steps_in(t_end)?;
    let coeffs = ModeCoeffs::for_spectrum(spec, grid.dt());
    let mut rng = NoiseStream::new(seed, opts.path_index);
    let mut z = vec![0.0; spec.len()];
    let mut window = WindowMax::new(grid.nodes());
    window.push(0.0);
    let mut rec = PathRecord::new(seed, opts.path_index, grid.dt());
    rec.push(0.0, 0.0, opts.record_modes.then_some(&z[..]));
    let mut normals = vec![0.0; spec.len()];
    for k in 1..=steps {
        rng.fill_normal(&mut normals);
        for ((zi, c), n) in z.iter_mut().zip(&coeffs).zip(&normals) {
            *zi = c.decay * *zi + c.noise_std * n;
        }
        window.push(norm2(&z));
        rec.push(k as f64 * grid.dt(), window.max(), opts.record_modes.then_some(&z[..]));
    }
    Ok(rec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fspde_sim::drift::{DriftSpec, DriftSpec2};
    use crate::fspde_sim::segment::segment_sup_norm;
    use crate::numerics::stats::mean_se;

    fn single_mode(lambda: f64, s: f64, drift: DriftSpec, l: f64, r0: f64) -> NondegenerateModel {
        let spec = SpectralData::new(vec![lambda], vec![s]).unwrap();
        NondegenerateModel::new(spec, 0.5, drift, l, r0).unwrap()
    }

    #[test]
    fn pure_decay() {
        let spec = SpectralData::new(vec![1.0, 3.0], vec![0.0, 0.0]).unwrap();
        let model = NondegenerateModel::new(spec, 0.5, DriftSpec::zero(2), 0.0, 1.0).unwrap();
        let g = SegmentGrid::new(1.0, 10).unwrap();
        let seg = Segment::constant(g, &[2.0, -1.0]).unwrap();
        let next = step_nondegenerate(&seg, &model, 0.1, &[0.7, -0.3]).unwrap();
        assert_eq!(next.newest()[0], 2.0 * (-0.1f64).exp());
        assert_eq!(next.newest()[1], -(-0.3f64).exp());
        assert!(step_nondegenerate(&seg, &model, 0.2, &[0.0, 0.0]).is_err());
        assert!(step_nondegenerate(&seg, &model, 0.1, &[f64::NAN, 0.0]).is_err());
    }

    #[test]
    fn small_lambda_series_branch() {
        let c = ModeCoeffs::new(1e-12, 1.0, 0.01);
        assert!((c.phi1 - 0.01).abs() < 1e-15);
        assert!((c.noise_std - 0.1).abs() < 1e-12);
        let c2 = ModeCoeffs::new(1e-5, 1.0, 0.01);
        let x = 1e-7;
        let series = 0.01 * (1.0 - x / 2.0 + x * x / 6.0);
        assert!((c2.phi1 - series).abs() < 1e-17);
    }

    #[test]
    fn ou_increment_variance_unit_step() {
        let c = ModeCoeffs::new(1.0, 1.0, 1.0);
        let v = (1.0 - (-2.0f64).exp()) / 2.0;
        assert!((c.noise_std.powi(2) - v).abs() < 1e-15);
        assert!((v - 0.43233).abs() < 1e-5);
        let model = single_mode(1.0, 1.0, DriftSpec::zero(1), 0.0, 1.0);
        let g = SegmentGrid::new(1.0, 1).unwrap();
        let seg = Segment::zeros(g, 1);
        let mut stepper = NondegStepper::new(&model, &g).unwrap();
        let mut rng = NoiseStream::new(11, 0);
        let draws: Vec<f64> = (0..100_000)
            .map(|_| {
                let mut s = seg.clone();
                stepper.step(&mut s, &[rng.normal()]);
                s.newest()[0].powi(2)
            })
            .collect();
        let (m, se) = mean_se(&draws);
        assert!((m - v).abs() < 3.0 * se, "{m} vs {v} (se {se})");
    }

    #[test]
    fn joint_increment_covariance() {
        let c = ModeCoeffs::new(2.0, 1.5, 0.1);
        let mut rng = NoiseStream::new(3, 0);
        let n = 200_000;
        let (mut szz, mut sww, mut szw) = (0.0, 0.0, 0.0);
        for _ in 0..n {
            let (z, w) = c.joint_increment(rng.normal(), rng.normal());
            szz += z * z;
            sww += w * w;
            szw += z * w;
        }
        let n = n as f64;
        assert!((szz / n / c.noise_std.powi(2) - 1.0).abs() < 0.02);
        assert!((sww / n / c.dt - 1.0).abs() < 0.02);
        assert!((szw / n / (c.s * c.phi1) - 1.0).abs() < 0.02);
    }

    #[test]
    fn t_zero_and_determinism() {
        let model = single_mode(1.0, 1.0, DriftSpec::point_delay(-1.0, 0.3), 0.3, 1.0);
        let g = SegmentGrid::new(1.0, 16).unwrap();
        let init = Segment::constant(g, &[0.5]).unwrap();
        let r0 = simulate_nondegenerate(&model, &init, 0.0, 1).unwrap();
        assert_eq!(r0.times, vec![0.0]);
        assert_eq!(r0.supnorms, vec![0.5]);
        let a = simulate_nondegenerate(&model, &init, 3.0, 42).unwrap();
        let b = simulate_nondegenerate(&model, &init, 3.0, 42).unwrap();
        assert_eq!(a, b);
        let c = simulate_nondegenerate(&model, &init, 3.0, 43).unwrap();
        assert_ne!(a.supnorms, c.supnorms);
        assert!(a.times.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn first_mode_deterministic_decay() {
        let spec = SpectralData::new(vec![1.5, 4.0, 9.0], vec![0.0; 3]).unwrap();
        let model = NondegenerateModel::new(spec, 0.5, DriftSpec::zero(3), 0.0, 0.5).unwrap();
        let g = SegmentGrid::new(0.5, 32).unwrap();
        let c = 2.0;
        let init = Segment::constant(g, &[c, 0.0, 0.0]).unwrap();
        let rec = simulate_nondegenerate(&model, &init, 4.0, 0).unwrap();
        for (t, s) in rec.times.iter().zip(&rec.supnorms) {
            let expected = c * (-1.5 * (t - 0.5).max(0.0)).exp();
            assert!((s - expected).abs() <= 1e-12 * c, "t={t}: {s} vs {expected}");
        }
    }

    #[test]
    fn linear_case_mean_and_variance() {
        // b(ξ) = κ ξ(0), one mode: OU with rate λ - κ
        let (lambda, kappa, s, t) = (1.0, 0.5, 0.8, 1.0);
        let model = single_mode(lambda, s, DriftSpec::point_delay(0.0, kappa), kappa, 0.1);
        let g = SegmentGrid::new(0.1, 100).unwrap();
        let steps = g.steps_in(t).unwrap();
        let x0 = 1.3;
        let mut stepper = NondegStepper::new(&model, &g).unwrap();
        let run = |stepper: &mut NondegStepper, init: f64, impulse: Option<usize>| {
            let mut seg = Segment::constant(g, &[init]).unwrap();
            for k in 0..steps {
                let z = if Some(k) == impulse { 1.0 } else { 0.0 };
                stepper.step(&mut seg, &[z]);
            }
            seg.newest()[0]
        };
        let mean = run(&mut stepper, x0, None);
        let rate = lambda - kappa;
        let exact_mean = x0 * (-rate * t).exp();
        assert!((mean / exact_mean - 1.0).abs() < 1e-3);
        // the scheme is linear: variance is the sum of squared impulse responses
        let var: f64 = (0..steps).map(|k| run(&mut stepper, 0.0, Some(k)).powi(2)).sum();
        let exact_var = s * s * (1.0 - (-2.0 * rate * t).exp()) / (2.0 * rate);
        assert!((var / exact_var - 1.0).abs() < 1e-3, "{var} vs {exact_var}");
    }

    fn diag_degenerate(b: f64, r0: f64) -> DegenerateModel {
        let a2 = SpectralData::new(vec![1.0], vec![0.0]).unwrap();
        DegenerateModel::new(
            DMatrix::from_element(1, 1, -1.0),
            a2,
            DMatrix::from_element(1, 1, b),
            DMatrix::zeros(1, 1),
            DriftSpec2::zero(1, 1),
            1.0,
            r0,
            0.5,
            None,
        )
        .unwrap()
    }

    #[test]
    fn degenerate_commuting_pair_closed_form() {
        let model = diag_degenerate(1.0, 0.5);
        let g = SegmentGrid::new(0.5, 500).unwrap();
        let y = 2.0;
        let x0 = Segment::zeros(g, 1);
        let y0 = Segment::constant(g, &[y]).unwrap();
        let mut stepper = DegStepper::new(&model, &g).unwrap();
        let (mut xs, mut ys) = (x0, y0);
        for k in 1..=3000 {
            stepper.step(&mut xs, &mut ys, &[0.0]);
            let t = k as f64 * g.dt();
            let exact = t * (-t).exp() * y;
            assert!((xs.newest()[0] - exact).abs() < 1e-7, "t={t}");
            assert!((ys.newest()[0] - y * (-t).exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_uncoupled_x_decays() {
        let model = diag_degenerate(0.0, 0.5);
        let g = SegmentGrid::new(0.5, 50).unwrap();
        let x0 = Segment::constant(g, &[1.0]).unwrap();
        let y0 = Segment::zeros(g, 1);
        let rec = simulate_degenerate(&model, (&x0, &y0), 2.0, 9).unwrap();
        let last = *rec.component("supnorm_x").unwrap().last().unwrap();
        assert!((last - (-1.5f64).exp()).abs() < 1e-12);
        let again = simulate_degenerate(&model, (&x0, &y0), 2.0, 9).unwrap();
        assert_eq!(rec, again);
    }

    #[test]
    fn stochastic_convolution() {
        let spec = SpectralData::new(vec![1.0], vec![1.0]).unwrap();
        let rec = stoch_conv_path(&spec, 1.0, 0.0, 0.25, 1, SimOptions::default()).unwrap();
        assert_eq!(rec.supnorms, vec![0.0]);
        let opts = |i| SimOptions {
            path_index: i,
            record_modes: true,
        };
        let finals: Vec<f64> = (0..20_000)
            .map(|i| {
                let r = stoch_conv_path(&spec, 1.0, 1.0, 0.25, 5, opts(i)).unwrap();
                r.modes.unwrap().last().unwrap()[0].powi(2)
            })
            .collect();
        let (m, se) = mean_se(&finals);
        let v = (1.0 - (-2.0f64).exp()) / 2.0;
        assert!((m - v).abs() < 3.0 * se, "{m} vs {v}");
        assert!(stoch_conv_path(&spec, 1.0, 1.0, 0.3, 1, SimOptions::default()).is_err());
    }

    #[test]
    fn supnorm_record_matches_direct_computation() {
        let model = single_mode(2.0, 1.0, DriftSpec::point_delay(-0.5, 0.4), 0.4, 0.5);
        let g = SegmentGrid::new(0.5, 8).unwrap();
        let init = Segment::constant(g, &[0.3]).unwrap();
        let mut stepper = NondegStepper::new(&model, &g).unwrap();
        let mut rng = NoiseStream::new(77, 0);
        let mut seg = init.clone();
        let mut direct = vec![segment_sup_norm(&seg)];
        let mut z = [0.0];
        for _ in 0..80 {
            rng.fill_normal(&mut z);
            stepper.step(&mut seg, &z);
            direct.push(segment_sup_norm(&seg));
        }
        let rec = simulate_nondegenerate(&model, &init, 5.0, 77).unwrap();
        assert_eq!(rec.supnorms, direct);
    }
}
