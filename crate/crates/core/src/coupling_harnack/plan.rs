//! Coupling by change of measure for the degenerate system.
//!
//! The barred process starts from `(ξ̄, η̄)`, uses the drift of the
//! unbarred process plus a deterministic steering term, and meets the
//! unbarred process on the whole terminal segment `[t0 - r0, t0]`. The
//! Girsanov density `R` turns the steered dynamics back into the true ones.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use super::sync::CouplingRecord;
use crate::error::{Error, Result};
use crate::fspde_sim::{segment_sup_norm, DegStepper, Segment, SegmentGrid, WindowMax};
use crate::numerics::expm::expm;
use crate::numerics::quad::GaussLegendre;
use crate::numerics::weighted_gramian;
use crate::rng::NoiseStream;
use crate::spectral_model::{check_b4, CheckTolerances, DegenerateModel};

const COND_LIMIT: f64 = 1e12;
const QTILDE_REL_TOL: f64 = 1e-10;
const PANEL_NODES: usize = 10;

fn guard_condition(q: &DMatrix<f64>, what: &str) -> Result<()> {
    let eig = SymmetricEigen::new(q.clone()).eigenvalues;
    let lo = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = eig.iter().cloned().fold(0.0, f64::max);
    let cond = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(hi > 0.0) || !(cond <= COND_LIMIT) {
        return Err(Error::Singular {
            what: what.to_string(),
            cond,
        });
    }
    Ok(())
}

/// `Q̃_T = ∫_0^T s(T - s) e^{sA0} B B* e^{sA0*} ds`.
pub fn qtilde_matrix(model: &DegenerateModel, t: f64) -> Result<DMatrix<f64>> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::invalid(format!("horizon must be positive, got {t}")));
    }
    let q = weighted_gramian(&model.a0, &model.b, t, |s| s * (t - s), QTILDE_REL_TOL)?;
    guard_condition(&q, "Q~")?;
    Ok(q)
}

/// Precomputed steering for one pair of initial conditions.
#[derive(Debug, Clone)]
pub struct HarnackPlan {
    pub t0: f64,
    pub r0: f64,
    /// `t0 - r0`, the time by which the steering is complete.
    pub t_prime: f64,
    pub grid: SegmentGrid,
    pub qtilde: DMatrix<f64>,
    pub e_vec: DVector<f64>,
    /// `ξ̄(0) - ξ(0)` and `η̄(0) - η(0)`.
    pub dxi0: DVector<f64>,
    pub deta0: DVector<f64>,
    /// Closed-form `X̄ - X` and `Ȳ - Y` at grid times `k dt`, `k = 0..=t0/dt`.
    pub dx: Vec<DVector<f64>>,
    pub dy: Vec<DVector<f64>>,
    pub initial: (Segment, Segment),
    pub initial_bar: (Segment, Segment),
    lambdas: Vec<f64>,
    bt: DMatrix<f64>,
    a0t: DMatrix<f64>,
    steps: usize,
}

impl HarnackPlan {
    /// `v(t) = B* e^{tA0*} e`.
    fn v(&self, t: f64) -> Result<DVector<f64>> {
        Ok(&self.bt * expm(&(&self.a0t * t))? * &self.e_vec)
    }

    /// `h(t) = t (t0 - r0 - t)^+ B* e^{tA0*} e`.
    pub fn h(&self, t: f64) -> Result<DVector<f64>> {
        let w = t * (self.t_prime - t).max(0.0);
        if w == 0.0 {
            return Ok(DVector::zeros(self.bt.nrows()));
        }
        Ok(self.v(t)? * w)
    }

    /// Right derivative of `h`; zero from `t0 - r0` on.
    pub fn h_prime_right(&self, t: f64) -> Result<DVector<f64>> {
        if t >= self.t_prime {
            return Ok(DVector::zeros(self.bt.nrows()));
        }
        let ex = expm(&(&self.a0t * t))?;
        let v = &self.bt * &ex * &self.e_vec;
        let dv = &self.bt * &self.a0t * &ex * &self.e_vec;
        Ok(v * (self.t_prime - 2.0 * t) + dv * (t * (self.t_prime - t)))
    }

    /// Left derivative of `h`.
    pub fn h_prime_left(&self, t: f64) -> Result<DVector<f64>> {
        if t > self.t_prime || t <= 0.0 && self.t_prime <= 0.0 {
            return Ok(DVector::zeros(self.bt.nrows()));
        }
        let ex = expm(&(&self.a0t * t))?;
        let v = &self.bt * &ex * &self.e_vec;
        let dv = &self.bt * &self.a0t * &ex * &self.e_vec;
        Ok(v * (self.t_prime - 2.0 * t) + dv * (t * (self.t_prime - t)))
    }

    /// `Ȳ(t) - Y(t) = e^{tA2} {Δη(0) (t0 - r0 - t)^+ / (t0 - r0) + h(t)}`.
    pub fn dy_at(&self, t: f64) -> Result<DVector<f64>> {
        let ramp = (self.t_prime - t).max(0.0) / self.t_prime;
        let inner = &self.deta0 * ramp + self.h(t)?;
        Ok(DVector::from_iterator(
            inner.len(),
            inner.iter().zip(&self.lambdas).map(|(v, l)| v * (-l * t).exp()),
        ))
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Largest norm of the planned differences over `[t0 - r0, t0]`.
    pub fn terminal_residual(&self) -> (f64, f64) {
        let start = self.grid.steps_in(self.t_prime).unwrap_or(0);
        let rx = self.dx[start..].iter().map(|v| v.norm()).fold(0.0, f64::max);
        let ry = self.dy[start..].iter().map(|v| v.norm()).fold(0.0, f64::max);
        (rx, ry)
    }
}

fn check_pair(model: &DegenerateModel, pair: (&Segment, &Segment), grid: &SegmentGrid) -> Result<()> {
    if !pair.0.grid().same_as(grid) || !pair.1.grid().same_as(grid) {
        return Err(Error::GridMismatch("initial segments use different grids".into()));
    }
    if pair.0.dim() != model.n1() || pair.1.dim() != model.n2() {
        return Err(Error::DimensionMismatch(format!(
            "initial pair has ({}, {}) coordinates, model ({}, {})",
            pair.0.dim(),
            pair.1.dim(),
            model.n1(),
            model.n2()
        )));
    }
    Ok(())
}

/// Builds the steering plan from `(ξ, η)` towards `(ξ̄, η̄)` over `[0, t0]`.
pub fn build_plan(
    model: &DegenerateModel,
    pair: (&Segment, &Segment),
    pair_bar: (&Segment, &Segment),
    t0: f64,
    dt: f64,
) -> Result<HarnackPlan> {
    let grid = *pair.0.grid();
    check_pair(model, pair, &grid)?;
    check_pair(model, pair_bar, &grid)?;
    if (dt - grid.dt()).abs() > 1e-12 * grid.dt() {
        return Err(Error::GridMismatch(format!(
            "plan dt = {dt} differs from the segment grid dt = {}",
            grid.dt()
        )));
    }
    let r0 = model.r0;
    if !(t0 > r0) {
        return Err(Error::invalid(format!("t0 = {t0} must exceed r0 = {r0}")));
    }
    let t_prime = t0 - r0;
    let steps = grid.steps_in(t0)?;
    // the kink of h at t0 - r0 must sit on a node
    grid.steps_in(t_prime)?;

    let b4 = check_b4(model, &[0.5 * t_prime, t_prime], &CheckTolerances::default())?;
    if let Some(e) = b4.get("b4_commutation").filter(|e| !e.passed) {
        return Err(Error::invalid(format!(
            "B e^(tA2) = e^(tA1) e^(tA0) B fails (residual {:.3e}); the closed-form coupling needs it",
            e.value
        )));
    }

    let qtilde = qtilde_matrix(model, t_prime)?;
    let chol = Cholesky::new(qtilde.clone()).ok_or_else(|| Error::Singular {
        what: "Q~ (Cholesky)".into(),
        cond: f64::INFINITY,
    })?;

    let dxi0 = DVector::from_iterator(
        model.n1(),
        pair_bar.0.newest().iter().zip(pair.0.newest()).map(|(a, b)| a - b),
    );
    let deta0 = DVector::from_iterator(
        model.n2(),
        pair_bar.1.newest().iter().zip(pair.1.newest()).map(|(a, b)| a - b),
    );

    let rule = GaussLegendre::new(PANEL_NODES);
    // ∫_0^{T'} (T' - s)/T' e^{sA0} B Δη0 ds
    let bdeta = &model.b * &deta0;
    let mut drive = DVector::zeros(model.n1());
    let k_prime = grid.steps_in(t_prime)?;
    for k in 0..k_prime {
        let (a, b) = (k as f64 * dt, (k + 1) as f64 * dt);
        let mut acc = DVector::zeros(model.n1());
        let mut err = None;
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        for (x, w) in gl_pairs(&rule) {
            let s = mid + half * x;
            match expm(&(&model.a0 * s)) {
                Ok(ex) => acc += (&ex * &bdeta) * (w * half * (t_prime - s) / t_prime),
                Err(e) => err = Some(e),
            }
        }
        if let Some(e) = err {
            return Err(e);
        }
        drive += acc;
    }
    let rhs = &dxi0 + drive;
    let e_vec = -chol.solve(&rhs);

    let lambdas = model.a2.eigenvalues().to_vec();
    let mut plan = HarnackPlan {
        t0,
        r0,
        t_prime,
        grid,
        qtilde,
        e_vec,
        dxi0,
        deta0,
        dx: Vec::with_capacity(steps + 1),
        dy: Vec::with_capacity(steps + 1),
        initial: (pair.0.clone(), pair.1.clone()),
        initial_bar: (pair_bar.0.clone(), pair_bar.1.clone()),
        lambdas,
        bt: model.b.transpose(),
        a0t: model.a0.transpose(),
        steps,
    };

    // X̄ - X = e^{tA1} [Δξ0 + ∫_0^t e^{sA0} B (Δη0 (T'-s)^+/T' + h(s)) ds]
    let step_a1 = expm(&(&model.a1 * dt))?;
    let mut prop_a1 = DMatrix::identity(model.n1(), model.n1());
    let mut inner = plan.dxi0.clone();
    for k in 0..=steps {
        let t = k as f64 * dt;
        plan.dy.push(plan.dy_at(t)?);
        plan.dx.push(&prop_a1 * &inner);
        if k == steps {
            break;
        }
        let (a, b) = (t, t + dt);
        let half = 0.5 * dt;
        let mid = 0.5 * (a + b);
        for (x, w) in gl_pairs(&rule) {
            let s = mid + half * x;
            let ramp = (t_prime - s).max(0.0) / t_prime;
            let yv = &plan.deta0 * ramp + plan.h(s)?;
            inner += expm(&(&model.a0 * s))? * (&model.b * yv) * (w * half);
        }
        prop_a1 = &step_a1 * &prop_a1;
    }
    Ok(plan)
}

fn gl_pairs(rule: &GaussLegendre) -> Vec<(f64, f64)> {
    rule.nodes().iter().copied().zip(rule.weights().iter().copied()).collect()
}

/// Girsanov bookkeeping for one path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GirsanovRecord {
    pub log_r: f64,
    /// `∫|φ(s)|² ds`
    pub phi_sq_integral: f64,
    /// `∫⟨φ(s), dW(s)⟩`
    pub stoch_integral: f64,
    pub seed: u64,
    pub path_index: u64,
}

impl GirsanovRecord {
    fn new(stoch: f64, phi_sq: f64, seed: u64, path_index: u64) -> Self {
        Self {
            log_r: -stoch - 0.5 * phi_sq,
            phi_sq_integral: phi_sq,
            stoch_integral: stoch,
            seed,
            path_index,
        }
    }

    pub fn weight(&self) -> f64 {
        self.log_r.exp()
    }

    /// `log R - (-∫φ dW - ½∫|φ|²)`; zero by construction.
    pub fn bookkeeping_residual(&self) -> f64 {
        self.log_r - (-self.stoch_integral - 0.5 * self.phi_sq_integral)
    }
}

/// Everything a single coupled path produces.
#[derive(Debug, Clone)]
pub struct PlanOutcome {
    pub coupling: CouplingRecord,
    pub girsanov: GirsanovRecord,
    /// Terminal segments `(X_{t0}, Y_{t0})` of the unbarred process.
    pub terminal: (Segment, Segment),
    /// Terminal segments of the barred process.
    pub terminal_bar: (Segment, Segment),
}

/// Simulates the unbarred and steered processes with shared noise and
/// accumulates the Girsanov density.
pub fn run_plan(plan: &HarnackPlan, model: &DegenerateModel, seed: u64) -> Result<(CouplingRecord, GirsanovRecord)> {
    let out = run_plan_path(plan, model, seed, 0)?;
    Ok((out.coupling, out.girsanov))
}

pub fn run_plan_path(
    plan: &HarnackPlan,
    model: &DegenerateModel,
    seed: u64,
    path_index: u64,
) -> Result<PlanOutcome> {
    let sigma_inv = model.sigma_inv.as_ref().ok_or_else(|| {
        Error::invalid("the change of measure needs sigma_inv coefficients for every mode")
    })?;
    let grid = plan.grid;
    let dt = grid.dt();
    let n2 = model.n2();
    let mut stepper = DegStepper::new(model, &grid)?;
    let mut rng = NoiseStream::new(seed, path_index);
    let (mut x, mut y) = plan.initial.clone();
    let (mut xb, mut yb) = plan.initial_bar.clone();

    let diff = |a: &[f64], b: &[f64]| -> f64 {
        a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt()
    };
    let mut wx = WindowMax::new(grid.nodes());
    let mut wy = WindowMax::new(grid.nodes());
    for j in 0..grid.nodes() {
        wx.push(diff(xb.node(j), x.node(j)));
        wy.push(diff(yb.node(j), y.node(j)));
    }
    let gx0 = segment_sup_norm(&xb.diff(&x)?);
    let gy0 = segment_sup_norm(&yb.diff(&y)?);
    let mut times = vec![0.0];
    let mut gap_x = vec![gx0];
    let mut gap_y = vec![gy0];

    let coeffs = stepper.coeffs().to_vec();
    let mut incr = vec![0.0; n2];
    let mut corr = vec![0.0; n2];
    let (mut stoch, mut phi_sq) = (0.0, 0.0);
    let mut h_prev = plan.h(0.0)?;
    for k in 0..plan.steps() {
        let t = k as f64 * dt;
        let t_next = (k + 1) as f64 * dt;
        let b = stepper.drift_of(&x, &y);
        let b_bar = stepper.drift_of(&xb, &yb);
        let hp = plan.h_prime_right(t)?;
        let h_next = plan.h(t_next)?;
        let ramp_rate = if t < plan.t_prime { 1.0 / plan.t_prime } else { 0.0 };
        let overlap = (t_next.min(plan.t_prime) - t.min(plan.t_prime)).max(0.0);
        for i in 0..n2 {
            let (z1, z2) = (rng.normal(), rng.normal());
            let (zeta, dw) = coeffs[i].joint_increment(z1, z2);
            incr[i] = zeta;
            let lam = plan.lambdas[i];
            let steer = (-lam * t).exp() * (hp[i] - plan.deta0[i] * ramp_rate);
            let phi = sigma_inv[i] * (b[i] - b_bar[i] + steer);
            stoch += phi * dw;
            phi_sq += phi * phi * dt;
            corr[i] = (-lam * t_next).exp()
                * (h_next[i] - h_prev[i] - plan.deta0[i] / plan.t_prime * overlap);
        }
        stepper.advance(&mut x, &mut y, &b, &incr, None);
        stepper.advance(&mut xb, &mut yb, &b, &incr, Some(&corr));
        h_prev = h_next;
        wx.push(diff(xb.newest(), x.newest()));
        wy.push(diff(yb.newest(), y.newest()));
        times.push(t_next);
        gap_x.push(wx.max());
        gap_y.push(wy.max());
    }
    if !stoch.is_finite() || !phi_sq.is_finite() {
        return Err(Error::Numerical("Girsanov exponent left the float range".into()));
    }
    let alpha = if model.b_norm() > 0.0 { Some(model.alpha()?) } else { None };
    Ok(PlanOutcome {
        coupling: CouplingRecord {
            times,
            gap_x,
            gap_y: Some(gap_y),
            alpha,
            envelope: None,
            initial_gap_x: gx0,
            initial_gap_y: Some(gy0),
            seed,
            path_index,
        },
        girsanov: GirsanovRecord::new(stoch, phi_sq, seed, path_index),
        terminal: (x, y),
        terminal_bar: (xb, yb),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fspde_sim::{Drift2Form, DriftSpec, DriftSpec2};
    use crate::spectral_model::SpectralData;

    fn scalar_model(lam: f64, r0: f64, drift: DriftSpec2) -> DegenerateModel {
        DegenerateModel::new(
            DMatrix::from_element(1, 1, -lam),
            SpectralData::new(vec![lam], vec![1.0]).unwrap(),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::zeros(1, 1),
            drift,
            0.0,
            r0,
            0.5,
            Some(vec![1.0]),
        )
        .unwrap()
    }

    fn lipschitz_drift() -> DriftSpec2 {
        DriftSpec2 {
            k1: 0.3,
            k2: 0.2,
            form: Drift2Form::Split {
                x: DriftSpec::point_delay(-0.5, 0.3),
                y: DriftSpec::point_delay(-0.25, 0.2),
            },
        }
    }

    #[test]
    fn qtilde_scalar_and_diagonal() {
        let m = scalar_model(1.0, 0.5, DriftSpec2::zero(1, 1));
        let q = qtilde_matrix(&m, 1.0).unwrap();
        assert!((q[(0, 0)] - 1.0 / 6.0).abs() < 1e-10 / 6.0);

        // A0 = -a I: ∫_0^T s(T-s) e^{-2as} ds, antiderivative with c = 2a
        let (a, t) = (0.7_f64, 1.3_f64);
        let mut md = m.clone();
        md.a0 = DMatrix::from_element(1, 1, -a);
        let c = 2.0 * a;
        let f = |s: f64| {
            // d/ds of this equals s(T-s) e^{-cs}
            -(-c * s).exp() / c.powi(3)
                * (c * c * s * (t - s) + c * (t - 2.0 * s) - 2.0)
        };
        let exact = f(t) - f(0.0);
        let q = qtilde_matrix(&md, t).unwrap();
        assert!((q[(0, 0)] - exact).abs() < 1e-10 * exact);
    }

    #[test]
    fn zero_b_is_singular() {
        let mut m = scalar_model(1.0, 0.5, DriftSpec2::zero(1, 1));
        m.b = DMatrix::zeros(1, 1);
        assert!(matches!(qtilde_matrix(&m, 1.0), Err(Error::Singular { .. })));
    }

    #[test]
    fn scalar_shift_and_steering() {
        // A1 = A0 = 0 needs A2 = 0 for the commutation; use a tiny λ instead
        // and A1 = -λ so that B e^{tA2} = e^{tA1} B.
        let lam = 1e-9;
        let m = scalar_model(lam, 0.5, DriftSpec2::zero(1, 1));
        let g = SegmentGrid::new(0.5, 50).unwrap();
        let xi = Segment::zeros(g, 1);
        let eta = Segment::zeros(g, 1);
        let xib = Segment::constant(g, &[1.0]).unwrap();
        let plan = build_plan(&m, (&xi, &eta), (&xib, &eta), 1.5, g.dt()).unwrap();
        assert!((plan.e_vec[0] + 6.0).abs() < 1e-8);
        let integral = GaussLegendre::new(20).integrate(|s| plan.h(s).unwrap()[0], 0.0, 1.0);
        assert!((integral + 1.0).abs() < 1e-8);
        let (rx, ry) = plan.terminal_residual();
        assert!(rx < 1e-8 && ry < 1e-12, "{rx} {ry}");
        assert_eq!(plan.dy[0][0], 0.0);
    }

    #[test]
    fn kink_of_h_derivative() {
        let m = scalar_model(0.5, 0.5, DriftSpec2::zero(1, 1));
        let g = SegmentGrid::new(0.5, 20).unwrap();
        let z = Segment::zeros(g, 1);
        let one = Segment::constant(g, &[1.0]).unwrap();
        let plan = build_plan(&m, (&z, &z), (&one, &one), 1.5, g.dt()).unwrap();
        let right = plan.h_prime_right(1.0).unwrap()[0];
        let left = plan.h_prime_left(1.0).unwrap()[0];
        assert_eq!(right, 0.0);
        // at the kink t = T': h' = -T' v(T')
        let v = plan.v(1.0).unwrap()[0];
        assert!((left + v).abs() < 1e-12 * v.abs().max(1.0));
        // finite difference in the interior
        let t = 0.4;
        let fd = (plan.h(t + 1e-6).unwrap()[0] - plan.h(t - 1e-6).unwrap()[0]) / 2e-6;
        assert!((fd - plan.h_prime_right(t).unwrap()[0]).abs() < 1e-6);
    }

    #[test]
    fn identical_pairs_give_unit_weight() {
        let m = scalar_model(1.0, 0.5, lipschitz_drift());
        let g = SegmentGrid::new(0.5, 32).unwrap();
        let xi = Segment::from_fn(g, 1, |th, _| 0.3 + th).unwrap();
        let eta = Segment::from_fn(g, 1, |th, _| th.sin()).unwrap();
        let plan = build_plan(&m, (&xi, &eta), (&xi, &eta), 1.5, g.dt()).unwrap();
        assert!(plan.e_vec.iter().all(|v| *v == 0.0));
        let (c, r) = run_plan(&plan, &m, 17).unwrap();
        assert_eq!(r.log_r, 0.0);
        assert_eq!(r.weight(), 1.0);
        assert!(c.gap_x.iter().chain(c.gap_y.as_ref().unwrap()).all(|v| *v == 0.0));
    }

    #[test]
    fn coupled_paths_meet_and_bookkeeping_is_exact() {
        let m = scalar_model(1.0, 0.5, lipschitz_drift());
        let g = SegmentGrid::new(0.5, 100).unwrap();
        let xi = Segment::from_fn(g, 1, |th, _| 0.3 + th).unwrap();
        let eta = Segment::from_fn(g, 1, |th, _| th.cos()).unwrap();
        let xib = Segment::constant(g, &[-0.2]).unwrap();
        let etab = Segment::constant(g, &[0.4]).unwrap();
        let plan = build_plan(&m, (&xi, &eta), (&xib, &etab), 1.5, g.dt()).unwrap();
        for seed in 0..4 {
            let out = run_plan_path(&plan, &m, seed, 3).unwrap();
            assert_eq!(out.girsanov.bookkeeping_residual(), 0.0);
            let gx = out.coupling.gap_x.last().copied().unwrap();
            let gy = out.coupling.gap_y.as_ref().unwrap().last().copied().unwrap();
            assert!(gx < 1e-5 && gy < 1e-12, "{gx} {gy}");
            assert_eq!(out.coupling.gap_x[0], out.coupling.initial_gap_x);
            assert!(out.girsanov.phi_sq_integral.is_finite());
        }
    }

    #[test]
    fn missing_sigma_inverse_is_rejected() {
        let mut m = scalar_model(1.0, 0.5, DriftSpec2::zero(1, 1));
        let g = SegmentGrid::new(0.5, 10).unwrap();
        let z = Segment::zeros(g, 1);
        let plan = build_plan(&m, (&z, &z), (&z, &z), 1.0, g.dt()).unwrap();
        m.sigma_inv = None;
        assert!(run_plan(&plan, &m, 1).is_err());
    }

    #[test]
    fn rejects_short_horizon_and_off_grid_kink() {
        let m = scalar_model(1.0, 0.5, DriftSpec2::zero(1, 1));
        let g = SegmentGrid::new(0.5, 10).unwrap();
        let z = Segment::zeros(g, 1);
        assert!(build_plan(&m, (&z, &z), (&z, &z), 0.5, g.dt()).is_err());
        assert!(matches!(
            build_plan(&m, (&z, &z), (&z, &z), 1.0 + 0.013, g.dt()),
            Err(Error::GridMismatch(_))
        ));
    }
}
