use std::collections::VecDeque;

use crate::error::{Error, Result};

/// Uniform grid on `[-r0, 0]` with `m` steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentGrid {
    r0: f64,
    m: usize,
    dt: f64,
}

impl SegmentGrid {
    pub fn new(r0: f64, m: usize) -> Result<Self> {
        if !(r0 > 0.0) || !r0.is_finite() {
            return Err(Error::invalid(format!("r0 must be positive, got {r0}")));
        }
        if m == 0 {
            return Err(Error::invalid("segment grid needs m >= 1"));
        }
        Ok(Self {
            r0,
            m,
            dt: r0 / m as f64,
        })
    }

    pub fn r0(&self) -> f64 {
        self.r0
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn nodes(&self) -> usize {
        self.m + 1
    }

    /// θ of node `j`, with node 0 at `-r0` and node `m` at 0.
    pub fn theta(&self, j: usize) -> f64 {
        if j == self.m {
            0.0
        } else {
            -self.r0 + j as f64 * self.dt
        }
    }

    /// Index of the node at `theta`, which must lie on the grid.
    pub fn node_of(&self, theta: f64) -> Result<usize> {
        if !(-self.r0 - 1e-12 * self.r0..=1e-12 * self.r0).contains(&theta) {
            return Err(Error::GridMismatch(format!(
                "theta = {theta} outside [-{}, 0]",
                self.r0
            )));
        }
        let x = (theta + self.r0) / self.dt;
        let j = x.round();
        if (x - j).abs() > 1e-9 * x.abs().max(1.0) {
            return Err(Error::GridMismatch(format!(
                "theta = {theta} is not a node of the grid with dt = {}",
                self.dt
            )));
        }
        Ok(j as usize)
    }

    /// Number of whole steps in `t`, which must be a multiple of `dt`.
    pub fn steps_in(&self, t: f64) -> Result<usize> {
        if !(t >= 0.0) || !t.is_finite() {
            return Err(Error::invalid(format!("time must be finite and nonnegative, got {t}")));
        }
        let x = t / self.dt;
        let n = x.round();
        if (x - n).abs() > 1e-9 * x.max(1.0) {
            return Err(Error::GridMismatch(format!(
                "time {t} is not a multiple of dt = {}",
                self.dt
            )));
        }
        Ok(n as usize)
    }

    pub fn same_as(&self, other: &SegmentGrid) -> bool {
        self.m == other.m && (self.r0 - other.r0).abs() <= 1e-12 * self.r0
    }
}

/// Path window on the segment grid, one row per node and one column per
/// coordinate. Stored as a ring so that advancing time is O(dim).
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    grid: SegmentGrid,
    dim: usize,
    data: Vec<f64>,
    head: usize,
}

impl Segment {
    pub fn zeros(grid: SegmentGrid, dim: usize) -> Self {
        Self {
            grid,
            dim,
            data: vec![0.0; grid.nodes() * dim],
            head: 0,
        }
    }

    /// Same vector at every node.
    pub fn constant(grid: SegmentGrid, value: &[f64]) -> Result<Self> {
        Self::from_fn(grid, value.len(), |_, i| value[i])
    }

    /// Entry `(j, i)` is `f(theta_j, i)`.
    pub fn from_fn<F: FnMut(f64, usize) -> f64>(grid: SegmentGrid, dim: usize, mut f: F) -> Result<Self> {
        let mut seg = Self::zeros(grid, dim);
        for j in 0..grid.nodes() {
            let th = grid.theta(j);
            for i in 0..dim {
                seg.data[j * dim + i] = f(th, i);
            }
        }
        seg.check_finite()?;
        Ok(seg)
    }

    /// Rows ordered from θ = -r0 to θ = 0.
    pub fn from_rows(grid: SegmentGrid, rows: &[Vec<f64>]) -> Result<Self> {
        if rows.len() != grid.nodes() {
            return Err(Error::GridMismatch(format!(
                "segment needs {} rows, got {}",
                grid.nodes(),
                rows.len()
            )));
        }
        let dim = rows[0].len();
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch("segment rows differ in length".into()));
        }
        let data = rows.iter().flatten().copied().collect();
        let seg = Self {
            grid,
            dim,
            data,
            head: 0,
        };
        seg.check_finite()?;
        Ok(seg)
    }

    fn check_finite(&self) -> Result<()> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::invalid("segment contains non-finite values"))
        }
    }

    pub fn grid(&self) -> &SegmentGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    fn row(&self, j: usize) -> usize {
        let n = self.grid.nodes();
        let r = self.head + j;
        if r >= n {
            r - n
        } else {
            r
        }
    }

    /// Values at node `j` (0 is θ = -r0, `m` is θ = 0).
    #[inline]
    pub fn node(&self, j: usize) -> &[f64] {
        let r = self.row(j);
        &self.data[r * self.dim..(r + 1) * self.dim]
    }

    pub fn newest(&self) -> &[f64] {
        self.node(self.grid.m)
    }

    /// Drops the oldest node and appends `values` at θ = 0.
    #[inline]
    pub fn push(&mut self, values: &[f64]) {
        debug_assert_eq!(values.len(), self.dim);
        let r = self.head;
        self.data[r * self.dim..(r + 1) * self.dim].copy_from_slice(values);
        self.head = if r + 1 == self.grid.nodes() { 0 } else { r + 1 };
    }

    /// Rows ordered from θ = -r0 to θ = 0.
    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.grid.nodes()).map(|j| self.node(j).to_vec()).collect()
    }

    /// Node-wise `self - other`.
    pub fn diff(&self, other: &Segment) -> Result<Segment> {
        if !self.grid.same_as(&other.grid) || self.dim != other.dim {
            return Err(Error::GridMismatch("segments live on different grids".into()));
        }
        let mut out = Segment::zeros(self.grid, self.dim);
        for j in 0..self.grid.nodes() {
            let (a, b) = (self.node(j), other.node(j));
            for i in 0..self.dim {
                out.data[j * self.dim + i] = a[i] - b[i];
            }
        }
        Ok(out)
    }
}

/// Maximum over nodes of the Euclidean norm across coordinates.
pub fn segment_sup_norm(seg: &Segment) -> f64 {
    (0..seg.grid().nodes())
        .map(|j| crate::numerics::norm2(seg.node(j)))
        .fold(0.0, f64::max)
}

/// Sliding maximum over the last `width` pushed values.
#[derive(Debug, Clone)]
pub struct WindowMax {
    width: usize,
    count: usize,
    deque: VecDeque<(usize, f64)>,
}

impl WindowMax {
    pub fn new(width: usize) -> Self {
        Self {
            width: width.max(1),
            count: 0,
            deque: VecDeque::with_capacity(width + 1),
        }
    }

    /// Window of node norms of `seg`.
    pub fn from_segment(seg: &Segment) -> Self {
        let mut w = Self::new(seg.grid().nodes());
        for j in 0..seg.grid().nodes() {
            w.push(crate::numerics::norm2(seg.node(j)));
        }
        w
    }

    pub fn push(&mut self, v: f64) {
        while let Some(&(_, back)) = self.deque.back() {
            if back <= v {
                self.deque.pop_back();
            } else {
                break;
            }
        }
        self.deque.push_back((self.count, v));
        self.count += 1;
        while let Some(&(idx, _)) = self.deque.front() {
            if idx + self.width < self.count {
                self.deque.pop_front();
            } else {
                break;
            }
        }
    }

    pub fn max(&self) -> f64 {
        self.deque.front().map_or(0.0, |&(_, v)| v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn grid_nodes() {
        let g = SegmentGrid::new(1.0, 4).unwrap();
        assert_eq!(g.dt(), 0.25);
        assert_eq!(g.theta(0), -1.0);
        assert_eq!(g.theta(4), 0.0);
        assert_eq!(g.node_of(-0.5).unwrap(), 2);
        assert!(g.node_of(-0.3).is_err());
        assert!(g.node_of(-1.5).is_err());
        assert_eq!(g.steps_in(2.0).unwrap(), 8);
        assert!(g.steps_in(0.1).is_err());
    }

    #[test]
    fn sup_norm_examples() {
        let g = SegmentGrid::new(1.0, 1).unwrap();
        let zero = Segment::zeros(g, 2);
        assert_eq!(segment_sup_norm(&zero), 0.0);
        let s = Segment::from_rows(g, &[vec![3.0, 4.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(segment_sup_norm(&s), 5.0);
        let g = SegmentGrid::new(1.0, 3).unwrap();
        let s = Segment::from_fn(g, 3, |th, i| if th == -1.0 / 3.0 && i == 1 { -2.5 } else { 0.0 });
        assert!(s.is_ok());
        let s = Segment::from_rows(
            g,
            &[vec![0.0; 3], vec![0.0, -2.5, 0.0], vec![0.0; 3], vec![0.0; 3]],
        )
        .unwrap();
        assert_eq!(segment_sup_norm(&s), 2.5);
    }

    #[test]
    fn rejects_non_finite() {
        let g = SegmentGrid::new(1.0, 2).unwrap();
        assert!(Segment::constant(g, &[f64::NAN]).is_err());
    }

    proptest! {
        #[test]
        fn ring_shift_consistency(m in 1usize..12, steps in 0usize..40, seed in any::<u64>()) {
            let g = SegmentGrid::new(1.0, m).unwrap();
            let mut seg = Segment::from_fn(g, 2, |th, i| th * (i as f64 + 1.0)).unwrap();
            let mut x = seed as f64 / u64::MAX as f64;
            for _ in 0..steps {
                let prev = seg.clone();
                x = (x * 3.7 + 0.1).fract();
                seg.push(&[x, -x]);
                for j in 0..m {
                    prop_assert_eq!(seg.node(j), prev.node(j + 1));
                }
                prop_assert_eq!(seg.newest(), &[x, -x][..]);
            }
        }

        #[test]
        fn window_max_matches_brute_force(vals in proptest::collection::vec(-10.0f64..10.0, 1..80), width in 1usize..10) {
            let mut w = WindowMax::new(width);
            for (k, &v) in vals.iter().enumerate() {
                w.push(v);
                let lo = (k + 1).saturating_sub(width);
                let brute = vals[lo..=k].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                prop_assert_eq!(w.max(), brute);
            }
        }
    }
}
