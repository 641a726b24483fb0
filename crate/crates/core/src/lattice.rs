//! Recombining binomial lattice for a one- or two-dimensional Brownian motion.
//!
//! A node at step `i` is identified by its up-move counts `j_k` in `0..=i`
//! per coordinate. Coordinate `k` of the Brownian value at that node is
//! `(2 j_k - i) * sqrt(dt)`, stored as the integer offset `2 j_k - i` so
//! node identity never depends on floating-point matching.
//!
//! Sub-lattices produced by [`LatticeModel::subtree`] keep the parent's time
//! grid and carry the root offset, so a solve on a subtree sees exactly the
//! same time arguments and Brownian values as the corresponding part of the
//! parent lattice.

use std::cmp::Ordering;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LatticeError {
    #[error("lattice dimension must be 1 or 2, got {0}")]
    UnsupportedDimension(usize),
    #[error("horizon must be finite and positive, got {0}")]
    InvalidHorizon(f64),
    #[error("a lattice needs at least one time step")]
    NoSteps,
    #[error("time index {index} is out of range for a lattice with {steps} steps")]
    StepOutOfRange { index: usize, steps: usize },
    #[error("node {node} is out of range at step {step} ({count} nodes)")]
    NodeOutOfRange { step: usize, node: usize, count: usize },
    #[error("expected {expected} successor values, got {got}")]
    SuccessorCount { expected: usize, got: usize },
}

/// Uniform time grid `t_i = i * T / N` on `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
    dt: f64,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self, LatticeError> {
        if !horizon.is_finite() || horizon <= 0.0 {
            return Err(LatticeError::InvalidHorizon(horizon));
        }
        if steps == 0 {
            return Err(LatticeError::NoSteps);
        }
        Ok(Self {
            horizon,
            steps,
            dt: horizon / steps as f64,
        })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Grid time of step `i`; `time(steps)` is the horizon exactly.
    pub fn time(&self, i: usize) -> f64 {
        if i >= self.steps {
            self.horizon
        } else {
            self.horizon * i as f64 / self.steps as f64
        }
    }
}

/// First and second moments of a one-step transition: the conditional mean
/// and the martingale-increment estimate `z_k = E[y dW_k] / dt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepMoments {
    pub mean: f64,
    z: [f64; 2],
    dim: usize,
}

impl StepMoments {
    pub fn z(&self) -> &[f64] {
        &self.z[..self.dim]
    }
}

/// A lattice state: integer Brownian offsets plus the scale that turns them
/// into real values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    dim: usize,
    offsets: [i64; 2],
    horizon: f64,
    grid_steps: usize,
    scale: f64,
}

impl Point {
    pub fn dimension(&self) -> usize {
        self.dim
    }

    /// Integer offset `m_k` with `W_k = m_k * sqrt(dt)`.
    pub fn offset(&self, k: usize) -> i64 {
        self.offsets[k]
    }

    /// Brownian value of coordinate `k` (zero for coordinates beyond the dimension).
    pub fn w(&self, k: usize) -> f64 {
        if k >= self.dim {
            return 0.0;
        }
        self.offsets[k] as f64 * self.scale
    }

    /// `a . W`.
    pub fn projection(&self, a: &[f64]) -> f64 {
        a.iter().enumerate().map(|(k, ak)| ak * self.w(k)).sum()
    }

    /// Orders `W_k` against `c` without rounding `sqrt(dt)`: compares
    /// `m^2 T` with `c^2 N` after a sign split.
    pub fn cmp_coordinate(&self, k: usize, c: f64) -> Ordering {
        let m = if k < self.dim { self.offsets[k] } else { 0 };
        if m == 0 && c == 0.0 {
            return Ordering::Equal;
        }
        if m >= 0 && c <= 0.0 {
            return Ordering::Greater;
        }
        if m <= 0 && c >= 0.0 {
            return Ordering::Less;
        }
        let lhs = (m as f64) * (m as f64) * self.horizon;
        let rhs = c * c * self.grid_steps as f64;
        let magnitude = lhs.partial_cmp(&rhs).unwrap_or(Ordering::Equal);
        if m > 0 {
            magnitude
        } else {
            magnitude.reverse()
        }
    }

    /// `W_k >= c`, decided exactly on the integer offset.
    pub fn w_at_least(&self, k: usize, c: f64) -> bool {
        self.cmp_coordinate(k, c) != Ordering::Less
    }

    /// `W_k <= c`, decided exactly on the integer offset.
    pub fn w_at_most(&self, k: usize, c: f64) -> bool {
        self.cmp_coordinate(k, c) != Ordering::Greater
    }
}

/// One branch of the one-step transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Branch {
    /// Up (1) or down (0) per coordinate.
    pub ups: [usize; 2],
    /// Sign of the Brownian increment per coordinate (`+1` or `-1`).
    pub signs: [f64; 2],
    pub weight: f64,
}

/// Discrete sample space for a `d`-dimensional Brownian motion, `d` in {1, 2}.
///
/// Successor values for a node are always ordered by branch index
/// `b = sum_k up_k * 2^(d-1-k)`: `[down, up]` for `d = 1` and
/// `[dd, du, ud, uu]` for `d = 2` (first letter is coordinate 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatticeModel {
    grid: TimeGrid,
    dim: usize,
    start: usize,
    origin: [i64; 2],
    sqrt_dt: f64,
}

/// Builds the lattice for `dimension` in {1, 2} over `[0, horizon]` with `steps` steps.
pub fn build_lattice(dimension: usize, horizon: f64, steps: usize) -> Result<LatticeModel, LatticeError> {
    LatticeModel::new(dimension, horizon, steps)
}

impl LatticeModel {
    pub fn new(dimension: usize, horizon: f64, steps: usize) -> Result<Self, LatticeError> {
        if !(1..=2).contains(&dimension) {
            return Err(LatticeError::UnsupportedDimension(dimension));
        }
        let grid = TimeGrid::new(horizon, steps)?;
        Ok(Self {
            grid,
            dim: dimension,
            start: 0,
            origin: [0, 0],
            sqrt_dt: grid.dt().sqrt(),
        })
    }

    pub fn dimension(&self) -> usize {
        self.dim
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    /// Number of steps from this lattice's root to the terminal layer.
    pub fn steps(&self) -> usize {
        self.grid.steps() - self.start
    }

    /// Global grid index of this lattice's root (0 unless it is a subtree).
    pub fn start_step(&self) -> usize {
        self.start
    }

    pub fn dt(&self) -> f64 {
        self.grid.dt()
    }

    /// Brownian increment per branch, `sqrt(dt)`.
    pub fn increment(&self) -> f64 {
        self.sqrt_dt
    }

    /// Time of local step `i`.
    pub fn time(&self, i: usize) -> f64 {
        self.grid.time(self.start + i)
    }

    /// Remaining horizon `T - t_0` from this lattice's root.
    pub fn remaining_horizon(&self) -> f64 {
        self.grid.horizon() - self.grid.time(self.start)
    }

    /// Nodes per coordinate at local step `i`.
    pub fn width(&self, i: usize) -> usize {
        i + 1
    }

    pub fn node_count(&self, i: usize) -> usize {
        let w = self.width(i);
        if self.dim == 1 {
            w
        } else {
            w * w
        }
    }

    /// Total number of nodes over all layers.
    pub fn total_nodes(&self) -> usize {
        (0..=self.steps()).map(|i| self.node_count(i)).sum()
    }

    fn check_step(&self, i: usize) -> Result<(), LatticeError> {
        if i > self.steps() {
            return Err(LatticeError::StepOutOfRange { index: i, steps: self.steps() });
        }
        Ok(())
    }

    fn check_node(&self, i: usize, node: usize) -> Result<(), LatticeError> {
        self.check_step(i)?;
        let count = self.node_count(i);
        if node >= count {
            return Err(LatticeError::NodeOutOfRange { step: i, node, count });
        }
        Ok(())
    }

    /// Flat index of the node with up-move counts `ups` at step `i`.
    pub fn node_index(&self, i: usize, ups: &[usize]) -> Result<usize, LatticeError> {
        self.check_step(i)?;
        let w = self.width(i);
        let bad = || LatticeError::NodeOutOfRange {
            step: i,
            node: ups.iter().fold(0, |acc, u| acc * w + u),
            count: self.node_count(i),
        };
        if ups.len() != self.dim || ups.iter().any(|&u| u > i) {
            return Err(bad());
        }
        Ok(if self.dim == 1 { ups[0] } else { ups[0] * w + ups[1] })
    }

    /// Up-move counts of flat node `node` at step `i`.
    pub fn ups(&self, i: usize, node: usize) -> Result<[usize; 2], LatticeError> {
        self.check_node(i, node)?;
        Ok(self.ups_unchecked(i, node))
    }

    fn ups_unchecked(&self, i: usize, node: usize) -> [usize; 2] {
        if self.dim == 1 {
            [node, 0]
        } else {
            let w = self.width(i);
            [node / w, node % w]
        }
    }

    fn point_unchecked(&self, i: usize, node: usize) -> Point {
        let ups = self.ups_unchecked(i, node);
        let mut offsets = [0i64; 2];
        for (k, off) in offsets.iter_mut().enumerate().take(self.dim) {
            *off = self.origin[k] + 2 * ups[k] as i64 - i as i64;
        }
        Point {
            dim: self.dim,
            offsets,
            horizon: self.grid.horizon(),
            grid_steps: self.grid.steps(),
            scale: self.sqrt_dt,
        }
    }

    /// Lattice state of node `node` at local step `i`.
    pub fn point(&self, i: usize, node: usize) -> Result<Point, LatticeError> {
        self.check_node(i, node)?;
        Ok(self.point_unchecked(i, node))
    }

    /// All states of layer `i`, in flat node order.
    pub fn layer_points(&self, i: usize) -> Result<Vec<Point>, LatticeError> {
        self.check_step(i)?;
        Ok((0..self.node_count(i)).map(|n| self.point_unchecked(i, n)).collect())
    }

    pub fn terminal_points(&self) -> Vec<Point> {
        let n = self.steps();
        (0..self.node_count(n)).map(|node| self.point_unchecked(n, node)).collect()
    }

    pub fn branch_count(&self) -> usize {
        1 << self.dim
    }

    pub fn branch_weight(&self) -> f64 {
        if self.dim == 1 {
            0.5
        } else {
            0.25
        }
    }

    pub fn branches(&self) -> Vec<Branch> {
        (0..self.branch_count())
            .map(|b| {
                let mut ups = [0usize; 2];
                let mut signs = [0.0; 2];
                for k in 0..self.dim {
                    ups[k] = (b >> (self.dim - 1 - k)) & 1;
                    signs[k] = if ups[k] == 1 { 1.0 } else { -1.0 };
                }
                Branch { ups, signs, weight: self.branch_weight() }
            })
            .collect()
    }

    /// Flat index at step `i + 1` reached from `node` along branch `branch`.
    pub fn successor(&self, i: usize, node: usize, branch: usize) -> Result<usize, LatticeError> {
        self.check_node(i, node)?;
        if i == self.steps() {
            return Err(LatticeError::StepOutOfRange { index: i + 1, steps: self.steps() });
        }
        let ups = self.ups_unchecked(i, node);
        let b = self.branches()[branch % self.branch_count()].ups;
        let next: Vec<usize> = (0..self.dim).map(|k| ups[k] + b[k]).collect();
        self.node_index(i + 1, &next)
    }

    /// The lattice rooted at node `node` of local step `i`, sharing this grid.
    pub fn subtree(&self, i: usize, node: usize) -> Result<LatticeModel, LatticeError> {
        self.check_node(i, node)?;
        if i == self.steps() {
            return Err(LatticeError::StepOutOfRange { index: i, steps: self.steps() - 1 });
        }
        let p = self.point_unchecked(i, node);
        Ok(LatticeModel {
            grid: self.grid,
            dim: self.dim,
            start: self.start + i,
            origin: p.offsets,
            sqrt_dt: self.sqrt_dt,
        })
    }

    /// Path probabilities of layer `i` under the reference measure.
    pub fn layer_weights(&self, i: usize) -> Result<Vec<f64>, LatticeError> {
        self.check_step(i)?;
        let mut row = vec![1.0];
        for _ in 0..i {
            let mut next = vec![0.0; row.len() + 1];
            for (j, &p) in row.iter().enumerate() {
                next[j] += 0.5 * p;
                next[j + 1] += 0.5 * p;
            }
            row = next;
        }
        if self.dim == 1 {
            return Ok(row);
        }
        let mut out = Vec::with_capacity(row.len() * row.len());
        for &a in &row {
            for &b in &row {
                out.push(a * b);
            }
        }
        Ok(out)
    }

    pub fn terminal_weights(&self) -> Vec<f64> {
        self.layer_weights(self.steps()).expect("terminal layer is in range")
    }

    /// Conditional mean and `z` estimate at `(i, node)` from the successor
    /// values at step `i + 1`, ordered as documented on [`LatticeModel`].
    pub fn one_step_expectation(
        &self,
        i: usize,
        node: usize,
        successors: &[f64],
    ) -> Result<StepMoments, LatticeError> {
        self.check_node(i, node)?;
        if i >= self.steps() {
            return Err(LatticeError::StepOutOfRange { index: i, steps: self.steps() - 1 });
        }
        if successors.len() != self.branch_count() {
            return Err(LatticeError::SuccessorCount {
                expected: self.branch_count(),
                got: successors.len(),
            });
        }
        Ok(if self.dim == 1 {
            moments_1d(successors[0], successors[1], self.sqrt_dt)
        } else {
            moments_2d([successors[0], successors[1], successors[2], successors[3]], self.sqrt_dt)
        })
    }
}

/// `mean = (up + down) / 2`, `z = (up - down) / (2 sqrt(dt))`.
#[inline]
pub(crate) fn moments_1d(down: f64, up: f64, sqrt_dt: f64) -> StepMoments {
    StepMoments {
        mean: 0.5 * (up + down),
        z: [(up - down) / (2.0 * sqrt_dt), 0.0],
        dim: 1,
    }
}

/// Four-branch version. Pairwise sums make a claim that only depends on one
/// coordinate reproduce the one-dimensional arithmetic bit for bit.
#[inline]
pub(crate) fn moments_2d(s: [f64; 4], sqrt_dt: f64) -> StepMoments {
    let [dd, du, ud, uu] = s;
    let denom = 4.0 * sqrt_dt;
    StepMoments {
        mean: 0.25 * ((dd + du) + (ud + uu)),
        z: [((ud + uu) - (dd + du)) / denom, ((du + uu) - (dd + ud)) / denom],
        dim: 2,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_step_terminal_values_and_weights() {
        let m = build_lattice(1, 1.0, 2).unwrap();
        let w: Vec<f64> = m.terminal_points().iter().map(|p| p.w(0)).collect();
        let s = 2f64.sqrt();
        assert_eq!(w.len(), 3);
        assert!((w[0] + s).abs() < 1e-15 && w[1] == 0.0 && (w[2] - s).abs() < 1e-15);
        assert_eq!(m.terminal_weights(), vec![0.25, 0.5, 0.25]);
    }

    #[test]
    fn one_joint_step_in_two_dimensions() {
        let m = build_lattice(2, 1.0, 1).unwrap();
        let pts = m.terminal_points();
        assert_eq!(pts.len(), 4);
        for p in &pts {
            assert_eq!(p.w(0).abs(), 1.0);
            assert_eq!(p.w(1).abs(), 1.0);
        }
        assert_eq!(m.terminal_weights(), vec![0.25; 4]);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert_eq!(build_lattice(1, 1.0, 0), Err(LatticeError::NoSteps));
        assert_eq!(build_lattice(3, 1.0, 4), Err(LatticeError::UnsupportedDimension(3)));
        assert!(matches!(build_lattice(1, f64::NAN, 4), Err(LatticeError::InvalidHorizon(_))));
        assert!(matches!(build_lattice(1, -1.0, 4), Err(LatticeError::InvalidHorizon(_))));
        assert!(matches!(build_lattice(1, f64::INFINITY, 4), Err(LatticeError::InvalidHorizon(_))));
    }

    #[test]
    fn node_counts_and_weights_sum_to_one() {
        for dim in 1..=2 {
            let m = build_lattice(dim, 2.0, 7).unwrap();
            for i in 0..=7 {
                let expected = if dim == 1 { i + 1 } else { (i + 1) * (i + 1) };
                assert_eq!(m.node_count(i), expected);
                let w = m.layer_weights(i).unwrap();
                assert_eq!(w.len(), expected);
                assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
            }
            assert_eq!(m.branches().iter().map(|b| b.weight).sum::<f64>(), 1.0);
        }
    }

    #[test]
    fn grid_invariants() {
        let g = TimeGrid::new(1.7, 13).unwrap();
        assert!((g.dt() * 13.0 - 1.7).abs() <= f64::EPSILON * 1.7);
        assert_eq!(g.time(13), 1.7);
        assert_eq!(g.time(0), 0.0);
        let g = TimeGrid::new(1.0, 400).unwrap();
        assert_eq!(g.time(200), 0.5);
    }

    #[test]
    fn coordinate_values_follow_offsets() {
        let m = build_lattice(2, 1.0, 5).unwrap();
        let dt = m.dt().sqrt();
        for i in 0..=5 {
            for p in m.layer_points(i).unwrap() {
                for k in 0..2 {
                    let off = p.offset(k);
                    assert!(off.abs() <= i as i64 && (off + i as i64) % 2 == 0);
                    assert_eq!(p.w(k), off as f64 * dt);
                }
            }
        }
    }

    #[test]
    fn one_step_examples() {
        let m = build_lattice(1, 1.0, 4).unwrap();
        let s = m.one_step_expectation(0, 0, &[0.0, 1.0]).unwrap();
        assert_eq!(s.mean, 0.5);
        assert_eq!(s.z(), &[1.0]);
        let s = m.one_step_expectation(1, 1, &[3.5, 3.5]).unwrap();
        assert_eq!(s.mean, 3.5);
        assert_eq!(s.z(), &[0.0]);
        assert!(matches!(
            m.one_step_expectation(0, 0, &[1.0]),
            Err(LatticeError::SuccessorCount { expected: 2, got: 1 })
        ));
        assert!(m.one_step_expectation(4, 0, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn first_coordinate_claim_has_unit_z() {
        let m = build_lattice(2, 0.37, 3).unwrap();
        let i = 1;
        for node in 0..m.node_count(i) {
            let succ: Vec<f64> = (0..4)
                .map(|b| {
                    let n = m.successor(i, node, b).unwrap();
                    m.point(i + 1, n).unwrap().w(0)
                })
                .collect();
            let s = m.one_step_expectation(i, node, &succ).unwrap();
            let here = m.point(i, node).unwrap().w(0);
            assert!((s.mean - here).abs() < 1e-15);
            assert!((s.z()[0] - 1.0).abs() < 1e-12);
            assert!(s.z()[1].abs() < 1e-15);
        }
    }

    #[test]
    fn moments_match_weighted_increment_formula() {
        let m = build_lattice(2, 0.8, 6).unwrap();
        let succ = [0.3, -1.25, 2.0, 0.7];
        let s = m.one_step_expectation(2, 3, &succ).unwrap();
        let mut mean = 0.0;
        let mut z = [0.0; 2];
        for (b, br) in m.branches().iter().enumerate() {
            mean += br.weight * succ[b];
            for k in 0..2 {
                z[k] += br.weight * succ[b] * br.signs[k] * m.increment() / m.dt();
            }
        }
        assert!((s.mean - mean).abs() < 1e-15);
        assert!((s.z()[0] - z[0]).abs() < 1e-12);
        assert!((s.z()[1] - z[1]).abs() < 1e-12);
    }

    #[test]
    fn two_dimensional_moments_reduce_to_one_dimensional() {
        let (a, b, s) = (0.123456789, -4.2, 0.05f64.sqrt());
        let one = moments_1d(a, b, s);
        let two = moments_2d([a, a, b, b], s);
        assert_eq!(one.mean, two.mean);
        assert_eq!(one.z()[0], two.z()[0]);
        assert_eq!(two.z()[1], 0.0);
        let two = moments_2d([a, b, a, b], s);
        assert_eq!(one.mean, two.mean);
        assert_eq!(one.z()[0], two.z()[1]);
        assert_eq!(two.z()[0], 0.0);
    }

    #[test]
    fn exact_threshold_comparison_at_atoms() {
        // W = -1 is a node for N = 100 and N = 400 (T = 1).
        for n in [100usize, 400] {
            let m = build_lattice(1, 1.0, n).unwrap();
            let root_n = (n as f64).sqrt() as i64;
            let at = m
                .terminal_points()
                .into_iter()
                .find(|p| p.offset(0) == -root_n)
                .unwrap();
            assert!(at.w_at_least(0, -1.0));
            assert!(at.w_at_most(0, -1.0));
            assert_eq!(at.cmp_coordinate(0, -1.0), Ordering::Equal);
        }
        let m = build_lattice(1, 1.0, 200).unwrap();
        let pts = m.terminal_points();
        let count = pts.iter().filter(|p| p.w_at_least(0, -1.0)).count();
        let brute = pts.iter().filter(|p| p.w(0) >= -1.0).count();
        assert_eq!(count, brute);
    }

    #[test]
    fn symmetric_terminal_distribution() {
        let m = build_lattice(1, 1.0, 9).unwrap();
        let w = m.terminal_weights();
        let pts = m.terminal_points();
        for (a, pa) in pts.iter().enumerate() {
            let b = pts.iter().position(|p| p.offset(0) == -pa.offset(0)).unwrap();
            assert_eq!(w[a], w[b]);
        }
    }

    #[test]
    fn subtree_shares_grid_and_offsets() {
        let m = build_lattice(2, 1.0, 8).unwrap();
        let node = m.node_index(3, &[2, 0]).unwrap();
        let sub = m.subtree(3, node).unwrap();
        assert_eq!(sub.steps(), 5);
        assert_eq!(sub.start_step(), 3);
        assert_eq!(sub.time(0), m.time(3));
        assert_eq!(sub.point(0, 0).unwrap(), m.point(3, node).unwrap());
        // Terminal states of the subtree are a subset of the parent's.
        let parent: Vec<_> = m.terminal_points().iter().map(|p| (p.offset(0), p.offset(1))).collect();
        for p in sub.terminal_points() {
            assert!(parent.contains(&(p.offset(0), p.offset(1))));
        }
        assert!(m.subtree(8, 0).is_err());
    }
}
