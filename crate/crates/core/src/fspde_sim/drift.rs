//! Segment drift functionals `b(ξ)` and `b(ξ, η)`.
//!
//! Specs are grid-free descriptions read from config; [`BoundDrift`] is a
//! spec resolved against a concrete segment grid, ready for evaluation in
//! the inner loop.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::segment::{Segment, SegmentGrid};
use crate::error::{Error, Result};
use crate::numerics::{norm2, operator_norm};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DriftSpec {
    /// `b(ξ) = c + Σ_k M_k ξ(-τ_k)`; matrices are given row by row.
    DiscreteDelay {
        delays: Vec<f64>,
        matrices: Vec<Vec<Vec<f64>>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        offset: Option<Vec<f64>>,
    },
    /// `b(ξ) = L Σ_k w_k ξ(θ_k)` with `Σ|w_k| ≤ 1`; atoms are `[θ, w]`.
    DistributedDelay { atoms: Vec<[f64; 2]>, gain: f64 },
    /// `b(ξ) = max_j ⟨ξ(θ_j), g(θ_j)⟩ · u`. A single weight row is used at
    /// every node; otherwise one row per grid node is required.
    SupForm {
        weights: Vec<Vec<f64>>,
        direction: Vec<f64>,
    },
}

impl DriftSpec {
    /// The zero drift on `dim` coordinates.
    pub fn zero(dim: usize) -> Self {
        DriftSpec::DiscreteDelay {
            delays: vec![0.0],
            matrices: vec![vec![vec![0.0; dim]; dim]],
            offset: None,
        }
    }

    /// Linear feedback `gain · ξ(θ)` from a single atom.
    pub fn point_delay(theta: f64, gain: f64) -> Self {
        DriftSpec::DistributedDelay {
            atoms: vec![[theta, 1.0]],
            gain,
        }
    }

    /// Shape checks that do not depend on the grid resolution.
    pub fn validate(&self, out_dim: usize, in_dim: usize, r0: f64) -> Result<()> {
        let in_window = |th: f64| (-r0 * (1.0 + 1e-12)..=0.0).contains(&th);
        match self {
            DriftSpec::DiscreteDelay {
                delays,
                matrices,
                offset,
            } => {
                if delays.len() != matrices.len() {
                    return Err(Error::DimensionMismatch(format!(
                        "{} delays but {} matrices",
                        delays.len(),
                        matrices.len()
                    )));
                }
                for &tau in delays {
                    if !in_window(-tau) {
                        return Err(Error::invalid(format!("delay {tau} outside [0, {r0}]")));
                    }
                }
                for m in matrices {
                    if m.len() != out_dim || m.iter().any(|row| row.len() != in_dim) {
                        return Err(Error::DimensionMismatch(format!(
                            "delay matrices must be {out_dim}x{in_dim}"
                        )));
                    }
                    if m.iter().flatten().any(|v| !v.is_finite()) {
                        return Err(Error::invalid("delay matrix has non-finite entries"));
                    }
                }
                if let Some(c) = offset {
                    if c.len() != out_dim {
                        return Err(Error::DimensionMismatch(format!(
                            "offset has length {}, expected {out_dim}",
                            c.len()
                        )));
                    }
                }
            }
            DriftSpec::DistributedDelay { atoms, gain } => {
                if in_dim != out_dim {
                    return Err(Error::DimensionMismatch(format!(
                        "distributed delay maps {in_dim} coordinates to {out_dim}"
                    )));
                }
                if !(*gain >= 0.0) || !gain.is_finite() {
                    return Err(Error::invalid("distributed delay gain must be nonnegative"));
                }
                let tv: f64 = atoms.iter().map(|a| a[1].abs()).sum();
                if tv > 1.0 + 1e-12 {
                    return Err(Error::invalid(format!(
                        "atom weights have total variation {tv} > 1"
                    )));
                }
                if let Some(a) = atoms.iter().find(|a| !in_window(a[0])) {
                    return Err(Error::invalid(format!("atom at {} outside [-{r0}, 0]", a[0])));
                }
            }
            DriftSpec::SupForm { weights, direction } => {
                if direction.len() != out_dim {
                    return Err(Error::DimensionMismatch(format!(
                        "direction has length {}, expected {out_dim}",
                        direction.len()
                    )));
                }
                if (norm2(direction) - 1.0).abs() > 1e-12 {
                    return Err(Error::invalid("sup-form direction must be a unit vector"));
                }
                if weights.is_empty() || weights.iter().any(|w| w.len() != in_dim) {
                    return Err(Error::DimensionMismatch(format!(
                        "sup-form weights must be rows of length {in_dim}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Operator bound `sup |b(ξ) - b(η)| / ‖ξ - η‖_∞` of the form.
    pub fn lipschitz_bound(&self) -> f64 {
        match self {
            DriftSpec::DiscreteDelay { matrices, .. } => matrices
                .iter()
                .map(|m| operator_norm(&rows_to_matrix(m)))
                .sum(),
            DriftSpec::DistributedDelay { atoms, gain } => {
                gain * atoms.iter().map(|a| a[1].abs()).sum::<f64>()
            }
            DriftSpec::SupForm { weights, direction } => {
                weights.iter().map(|w| norm2(w)).fold(0.0, f64::max) * norm2(direction)
            }
        }
    }

    /// Resolves delays and atoms to node indices of `grid`.
    pub fn bind(&self, grid: &SegmentGrid, out_dim: usize, in_dim: usize) -> Result<BoundDrift> {
        self.validate(out_dim, in_dim, grid.r0())?;
        let form = match self {
            DriftSpec::DiscreteDelay {
                delays,
                matrices,
                offset,
            } => {
                let mut terms = Vec::with_capacity(delays.len());
                for (tau, m) in delays.iter().zip(matrices) {
                    let mat = rows_to_matrix(m);
                    if mat.iter().any(|&v| v != 0.0) {
                        terms.push((grid.node_of(-tau)?, mat));
                    }
                }
                Bound::Discrete {
                    terms,
                    offset: offset.clone().unwrap_or_else(|| vec![0.0; out_dim]),
                }
            }
            DriftSpec::DistributedDelay { atoms, gain } => {
                let mut terms = Vec::with_capacity(atoms.len());
                for a in atoms {
                    terms.push((grid.node_of(a[0])?, gain * a[1]));
                }
                Bound::Distributed { terms }
            }
            DriftSpec::SupForm { weights, direction } => {
                let per_node = match weights.len() {
                    1 => vec![weights[0].clone(); grid.nodes()],
                    n if n == grid.nodes() => weights.clone(),
                    n => {
                        return Err(Error::GridMismatch(format!(
                            "sup-form has {n} weight rows for {} grid nodes",
                            grid.nodes()
                        )))
                    }
                };
                Bound::Sup {
                    weights: per_node,
                    direction: direction.clone(),
                }
            }
        };
        Ok(BoundDrift {
            grid: *grid,
            in_dim,
            out_dim,
            form,
        })
    }
}

pub(crate) fn rows_to_matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, |r| r.len());
    DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j])
}

#[derive(Debug, Clone)]
enum Bound {
    Discrete {
        terms: Vec<(usize, DMatrix<f64>)>,
        offset: Vec<f64>,
    },
    Distributed {
        terms: Vec<(usize, f64)>,
    },
    Sup {
        weights: Vec<Vec<f64>>,
        direction: Vec<f64>,
    },
}

/// A drift resolved against one segment grid.
#[derive(Debug, Clone)]
pub struct BoundDrift {
    grid: SegmentGrid,
    in_dim: usize,
    out_dim: usize,
    form: Bound,
}

impl BoundDrift {
    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn is_zero(&self) -> bool {
        match &self.form {
            Bound::Discrete { terms, offset } => terms.is_empty() && offset.iter().all(|&c| c == 0.0),
            Bound::Distributed { terms } => terms.iter().all(|t| t.1 == 0.0),
            Bound::Sup { weights, .. } => weights.iter().flatten().all(|&w| w == 0.0),
        }
    }

    fn check(&self, seg: &Segment) -> Result<()> {
        if !seg.grid().same_as(&self.grid) {
            return Err(Error::GridMismatch(format!(
                "drift bound to m = {}, r0 = {} but segment has m = {}, r0 = {}",
                self.grid.m(),
                self.grid.r0(),
                seg.grid().m(),
                seg.grid().r0()
            )));
        }
        if seg.dim() != self.in_dim {
            return Err(Error::DimensionMismatch(format!(
                "drift expects {} coordinates, segment has {}",
                self.in_dim,
                seg.dim()
            )));
        }
        Ok(())
    }

    pub fn eval(&self, seg: &Segment) -> Result<Vec<f64>> {
        self.check(seg)?;
        let mut out = vec![0.0; self.out_dim];
        self.accumulate(seg, &mut out);
        Ok(out)
    }

    /// Adds `b(seg)` to `out` without shape checks.
    pub(crate) fn accumulate(&self, seg: &Segment, out: &mut [f64]) {
        match &self.form {
            Bound::Discrete { terms, offset } => {
                for (o, c) in out.iter_mut().zip(offset) {
                    *o += c;
                }
                for (node, mat) in terms {
                    let x = seg.node(*node);
                    for (r, o) in out.iter_mut().enumerate() {
                        let mut acc = 0.0;
                        for (c, xc) in x.iter().enumerate() {
                            acc += mat[(r, c)] * xc;
                        }
                        *o += acc;
                    }
                }
            }
            Bound::Distributed { terms } => {
                for &(node, w) in terms {
                    for (o, x) in out.iter_mut().zip(seg.node(node)) {
                        *o += w * x;
                    }
                }
            }
            Bound::Sup { weights, direction } => {
                let s = weights
                    .iter()
                    .enumerate()
                    .map(|(j, g)| g.iter().zip(seg.node(j)).map(|(a, b)| a * b).sum::<f64>())
                    .fold(f64::NEG_INFINITY, f64::max);
                for (o, u) in out.iter_mut().zip(direction) {
                    *o += s * u;
                }
            }
        }
    }
}

/// `b(seg)` for a drift spec, in the segment's coordinates.
pub fn eval_drift(drift: &DriftSpec, seg: &Segment) -> Result<Vec<f64>> {
    drift
        .bind(seg.grid(), seg.dim(), seg.dim())?
        .eval(seg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Drift2Form {
    /// `b(ξ, η) = b_x(ξ) + b_y(η)` with `b_x: R^{n1} → R^{n2}`.
    Split { x: DriftSpec, y: DriftSpec },
    /// `b(ξ, η) = ‖K1 ξ + K2 η‖_∞ · u`, for `n1 = n2`.
    JointSup { direction: Vec<f64> },
}

/// Two-argument drift of the degenerate system with declared constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftSpec2 {
    pub k1: f64,
    pub k2: f64,
    pub form: Drift2Form,
}

impl DriftSpec2 {
    pub fn zero(n1: usize, n2: usize) -> Self {
        Self {
            k1: 0.0,
            k2: 0.0,
            form: Drift2Form::Split {
                x: DriftSpec::DiscreteDelay {
                    delays: vec![0.0],
                    matrices: vec![vec![vec![0.0; n1]; n2]],
                    offset: None,
                },
                y: DriftSpec::zero(n2),
            },
        }
    }

    pub fn validate(&self, n1: usize, n2: usize, r0: f64) -> Result<()> {
        if !(self.k1 >= 0.0) || !(self.k2 >= 0.0) {
            return Err(Error::invalid("K1 and K2 must be nonnegative"));
        }
        match &self.form {
            Drift2Form::Split { x, y } => {
                x.validate(n2, n1, r0)?;
                y.validate(n2, n2, r0)
            }
            Drift2Form::JointSup { direction } => {
                if n1 != n2 {
                    return Err(Error::DimensionMismatch(format!(
                        "joint sup form needs n1 = n2, got {n1} and {n2}"
                    )));
                }
                if direction.len() != n2 || (norm2(direction) - 1.0).abs() > 1e-12 {
                    return Err(Error::invalid("joint sup direction must be a unit vector in R^n2"));
                }
                Ok(())
            }
        }
    }

    /// Computed Lipschitz bounds in `ξ` and in `η`.
    pub fn lipschitz_bounds(&self) -> (f64, f64) {
        match &self.form {
            Drift2Form::Split { x, y } => (x.lipschitz_bound(), y.lipschitz_bound()),
            Drift2Form::JointSup { .. } => (self.k1, self.k2),
        }
    }

    pub fn bind(&self, grid: &SegmentGrid, n1: usize, n2: usize) -> Result<BoundDrift2> {
        self.validate(n1, n2, grid.r0())?;
        let form = match &self.form {
            Drift2Form::Split { x, y } => Bound2::Split {
                x: x.bind(grid, n2, n1)?,
                y: y.bind(grid, n2, n2)?,
            },
            Drift2Form::JointSup { direction } => Bound2::JointSup {
                k1: self.k1,
                k2: self.k2,
                direction: direction.clone(),
                scratch: vec![0.0; n1],
            },
        };
        Ok(BoundDrift2 {
            grid: *grid,
            n1,
            n2,
            form,
        })
    }
}

#[derive(Debug, Clone)]
enum Bound2 {
    Split {
        x: BoundDrift,
        y: BoundDrift,
    },
    JointSup {
        k1: f64,
        k2: f64,
        direction: Vec<f64>,
        scratch: Vec<f64>,
    },
}

#[derive(Debug, Clone)]
pub struct BoundDrift2 {
    grid: SegmentGrid,
    n1: usize,
    n2: usize,
    form: Bound2,
}

impl BoundDrift2 {
    pub fn eval(&mut self, xs: &Segment, ys: &Segment) -> Result<Vec<f64>> {
        if !xs.grid().same_as(&self.grid) || !ys.grid().same_as(&self.grid) {
            return Err(Error::GridMismatch("drift and segments use different grids".into()));
        }
        if xs.dim() != self.n1 || ys.dim() != self.n2 {
            return Err(Error::DimensionMismatch(format!(
                "drift expects ({}, {}) coordinates, got ({}, {})",
                self.n1,
                self.n2,
                xs.dim(),
                ys.dim()
            )));
        }
        let mut out = vec![0.0; self.n2];
        self.accumulate(xs, ys, &mut out);
        Ok(out)
    }

    pub(crate) fn accumulate(&mut self, xs: &Segment, ys: &Segment, out: &mut [f64]) {
        match &mut self.form {
            Bound2::Split { x, y } => {
                x.accumulate(xs, out);
                y.accumulate(ys, out);
            }
            Bound2::JointSup {
                k1,
                k2,
                direction,
                scratch,
            } => {
                let mut s = 0.0_f64;
                for j in 0..self.grid.nodes() {
                    for ((v, a), b) in scratch.iter_mut().zip(xs.node(j)).zip(ys.node(j)) {
                        *v = *k1 * a + *k2 * b;
                    }
                    s = s.max(norm2(scratch));
                }
                for (o, u) in out.iter_mut().zip(direction.iter()) {
                    *o += s * u;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fspde_sim::segment::segment_sup_norm;
    use crate::rng::NoiseStream;

    fn grid() -> SegmentGrid {
        SegmentGrid::new(0.5, 8).unwrap()
    }

    #[test]
    fn discrete_delay_zero_segment_gives_offset() {
        let g = grid();
        let d = DriftSpec::DiscreteDelay {
            delays: vec![0.25],
            matrices: vec![vec![vec![1.0, 2.0], vec![0.0, 1.0]]],
            offset: Some(vec![0.5, -1.0]),
        };
        let b = eval_drift(&d, &Segment::zeros(g, 2)).unwrap();
        assert_eq!(b, vec![0.5, -1.0]);
        let lin = DriftSpec::DiscreteDelay {
            delays: vec![0.25],
            matrices: vec![vec![vec![1.0, 2.0], vec![0.0, 1.0]]],
            offset: None,
        };
        assert_eq!(eval_drift(&lin, &Segment::zeros(g, 2)).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn point_mass_at_zero() {
        let g = grid();
        let seg = Segment::from_fn(g, 2, |th, i| th + i as f64 + 3.0).unwrap();
        let b = eval_drift(&DriftSpec::point_delay(0.0, 0.7), &seg).unwrap();
        assert_eq!(b, vec![0.7 * 3.0, 0.7 * 4.0]);
    }

    #[test]
    fn sup_form_constant_segment() {
        let g = grid();
        let c = 1.7;
        let seg = Segment::constant(g, &[c, 0.0, 0.0]).unwrap();
        let dir = vec![0.0, 0.6, 0.8];
        let d = DriftSpec::SupForm {
            weights: vec![vec![1.0, 0.0, 0.0]],
            direction: dir.clone(),
        };
        let b = eval_drift(&d, &seg).unwrap();
        for (bi, ui) in b.iter().zip(&dir) {
            assert!((bi - c * ui).abs() < 1e-15);
        }
    }

    #[test]
    fn grid_mismatch_and_shape_errors() {
        let g = grid();
        let off_grid = DriftSpec::point_delay(-0.3, 1.0);
        assert!(matches!(
            eval_drift(&off_grid, &Segment::zeros(g, 1)),
            Err(Error::GridMismatch(_))
        ));
        let bound = DriftSpec::point_delay(0.0, 1.0).bind(&g, 1, 1).unwrap();
        let other = Segment::zeros(SegmentGrid::new(0.5, 4).unwrap(), 1);
        assert!(matches!(bound.eval(&other), Err(Error::GridMismatch(_))));
        let heavy = DriftSpec::DistributedDelay {
            atoms: vec![[0.0, 0.8], [-0.5, 0.8]],
            gain: 1.0,
        };
        assert!(heavy.validate(1, 1, 0.5).is_err());
    }

    fn random_segment(g: SegmentGrid, dim: usize, rng: &mut NoiseStream) -> Segment {
        Segment::from_fn(g, dim, |_, _| 2.0 * rng.normal()).unwrap()
    }

    fn lipschitz_trials(d: &DriftSpec, dim_out: usize, dim_in: usize, trials: usize) {
        let g = grid();
        let bound = d.bind(&g, dim_out, dim_in).unwrap();
        let l = d.lipschitz_bound();
        let mut rng = NoiseStream::new(99, 0);
        for _ in 0..trials {
            let a = random_segment(g, dim_in, &mut rng);
            let b = random_segment(g, dim_in, &mut rng);
            let fa = bound.eval(&a).unwrap();
            let fb = bound.eval(&b).unwrap();
            let lhs = norm2(&fa.iter().zip(&fb).map(|(x, y)| x - y).collect::<Vec<_>>());
            let rhs = l * segment_sup_norm(&a.diff(&b).unwrap());
            assert!(lhs <= rhs + 1e-12, "{lhs} > {rhs}");
        }
    }

    #[test]
    fn lipschitz_property_all_forms() {
        lipschitz_trials(
            &DriftSpec::DiscreteDelay {
                delays: vec![0.0, 0.125, 0.5],
                matrices: vec![
                    vec![vec![0.3, -0.2], vec![0.1, 0.0], vec![0.0, 0.4]],
                    vec![vec![0.0, 0.5], vec![-0.5, 0.0], vec![0.2, 0.2]],
                    vec![vec![1.0, 0.0], vec![0.0, 0.0], vec![0.0, -0.1]],
                ],
                offset: Some(vec![1.0, 2.0, 3.0]),
            },
            3,
            2,
            10_000,
        );
        lipschitz_trials(
            &DriftSpec::DistributedDelay {
                atoms: vec![[0.0, 0.3], [-0.25, -0.5], [-0.5, 0.2]],
                gain: 1.3,
            },
            2,
            2,
            10_000,
        );
        lipschitz_trials(
            &DriftSpec::SupForm {
                weights: vec![vec![0.5, -0.25]],
                direction: vec![0.6, -0.8],
            },
            2,
            2,
            10_000,
        );
    }

    #[test]
    fn joint_sup_lipschitz() {
        let g = grid();
        let d = DriftSpec2 {
            k1: 0.4,
            k2: 0.9,
            form: Drift2Form::JointSup {
                direction: vec![1.0, 0.0],
            },
        };
        let mut bound = d.bind(&g, 2, 2).unwrap();
        let mut rng = NoiseStream::new(5, 1);
        for _ in 0..10_000 {
            let (x1, y1) = (random_segment(g, 2, &mut rng), random_segment(g, 2, &mut rng));
            let (x2, y2) = (random_segment(g, 2, &mut rng), random_segment(g, 2, &mut rng));
            let a = bound.eval(&x1, &y1).unwrap();
            let b = bound.eval(&x2, &y2).unwrap();
            let lhs = norm2(&[a[0] - b[0], a[1] - b[1]]);
            let rhs = d.k1 * segment_sup_norm(&x1.diff(&x2).unwrap())
                + d.k2 * segment_sup_norm(&y1.diff(&y2).unwrap());
            assert!(lhs <= rhs + 1e-12);
        }
    }

    #[test]
    fn serde_round_trip() {
        let d = DriftSpec::DistributedDelay {
            atoms: vec![[-0.5, 1.0]],
            gain: 0.5,
        };
        let s = toml::to_string(&d).unwrap();
        let back: DriftSpec = toml::from_str(&s).unwrap();
        assert_eq!(back, d);
        assert!(toml::from_str::<DriftSpec>("kind = \"sup_form\"\nweights = [[1.0]]\ndirection = [1.0]\nextra = 1\n").is_err());
    }
}
