//! Backward induction for `y_t = xi + int_t^T g(s, y_s, z_s) ds - int_t^T z_s . dW_s`
//! on a [`LatticeModel`].
//!
//! One step of the explicit scheme at node `(i, n)`:
//!
//! ```text
//! m       = E[y_{i+1} | node]                      (branch-weighted mean)
//! z_i     = E[y_{i+1} dW | node] / dt
//! y_i     = m + g(t_i, m, z_i) dt
//! ```
//!
//! The `y` argument of `g` is the one-step mean, so the scheme is exact in `y`
//! for drivers that do not depend on `y` and carries an `O(dt)` bias
//! otherwise. The scheme is monotone (a comparison principle holds) as long
//! as `K sqrt(dt) <= 1/2`; solves that break this guard are refused.

use rayon::prelude::*;
use thiserror::Error;

use crate::claims::{indicator, Claim, ClaimError, Event};
use crate::lattice::{moments_1d, moments_2d, LatticeError, LatticeModel, Point};
use crate::generators::Generator;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error("monotonicity guard violated: K*sqrt(dt) = {value:.6} > 1/2; use at least {min_steps} steps")]
    Guard { value: f64, min_steps: usize },
    #[error("generator dimension {generator} does not match lattice dimension {lattice}")]
    DimensionMismatch { generator: usize, lattice: usize },
    #[error("non-finite value at step {step}, node {node}")]
    NonFinite { step: usize, node: usize },
    #[error("|y| = {value} exceeds the a-priori bound {bound} at step {step}")]
    BoundExceeded { step: usize, value: f64, bound: f64 },
    #[error("substitution time index {t0} must be below the step count {steps}")]
    SubstitutionTime { t0: usize, steps: usize },
    #[error(transparent)]
    Claim(#[from] ClaimError),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
}

/// Smallest step count on `[0, horizon]` that satisfies `K sqrt(T / N) <= 1/2`.
pub fn min_steps_for(lipschitz: f64, horizon: f64) -> usize {
    let mut n = (4.0 * lipschitz * lipschitz * horizon).ceil().max(1.0) as usize;
    while lipschitz * (horizon / n as f64).sqrt() > 0.5 {
        n += 1;
    }
    n
}

/// Checks dimensions and the monotonicity guard `K sqrt(dt) <= 1/2`.
pub fn check_guard(model: &LatticeModel, g: &Generator) -> Result<(), SolveError> {
    if g.dimension() != model.dimension() {
        return Err(SolveError::DimensionMismatch { generator: g.dimension(), lattice: model.dimension() });
    }
    let value = g.lipschitz() * model.increment();
    if value > 0.5 {
        return Err(SolveError::Guard {
            value,
            min_steps: min_steps_for(g.lipschitz(), model.grid().horizon()),
        });
    }
    Ok(())
}

/// The full `(time, node)` surfaces of a solve.
#[derive(Debug, Clone)]
pub struct BsdeSolution {
    model: LatticeModel,
    generator: Generator,
    claim: Claim,
    /// `y[i][n] = E_g[xi | F_{t_i}]` at node `n`; `y[N]` is the claim.
    y: Vec<Vec<f64>>,
    /// `z[i]` holds `d` values per node, for `i < N`.
    z: Vec<Vec<f64>>,
}

impl BsdeSolution {
    pub fn model(&self) -> &LatticeModel {
        &self.model
    }

    pub fn generator(&self) -> &Generator {
        &self.generator
    }

    pub fn claim(&self) -> &Claim {
        &self.claim
    }

    /// `E_g[xi] = y_0`.
    pub fn g_expectation(&self) -> f64 {
        self.y[0][0]
    }

    /// `E_g[xi | F_{t_i}]` at node `node`.
    pub fn conditional(&self, i: usize, node: usize) -> Result<f64, LatticeError> {
        self.model.ups(i, node)?;
        Ok(self.y[i][node])
    }

    /// `z` at `(i, node)`, `i < N`.
    pub fn z_at(&self, i: usize, node: usize) -> Result<&[f64], LatticeError> {
        self.model.ups(i, node)?;
        if i >= self.z.len() {
            return Err(LatticeError::StepOutOfRange { index: i, steps: self.z.len() - 1 });
        }
        let d = self.model.dimension();
        Ok(&self.z[i][node * d..(node + 1) * d])
    }

    pub fn y_layer(&self, i: usize) -> &[f64] {
        &self.y[i]
    }

    pub fn z_layer(&self, i: usize) -> &[f64] {
        &self.z[i]
    }

    /// `(min, max)` over every component of the `z` surface.
    pub fn z_range(&self) -> (f64, f64) {
        self.z.iter().flatten().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }
}

/// `E_g[xi]` accessor matching [`BsdeSolution::g_expectation`].
pub fn g_expectation(solution: &BsdeSolution) -> f64 {
    solution.g_expectation()
}

/// Root values of a solve that keeps no surfaces.
#[derive(Debug, Clone, PartialEq)]
pub struct RootValue {
    pub y0: f64,
    pub z0: Vec<f64>,
}

/// Shared backward pass. `record(i, y_i, z_i)` sees each interior layer once,
/// from `N - 1` down to 0; returns the root `y` and `z`.
fn backward(
    model: &LatticeModel,
    g: &Generator,
    terminal: Vec<f64>,
    mut record: impl FnMut(usize, &[f64], &[f64]),
) -> Result<RootValue, SolveError> {
    check_guard(model, g)?;
    let n = model.steps();
    let d = model.dimension();
    let s = model.increment();
    let dt = model.dt();
    let k = g.lipschitz();
    let zero = vec![0.0; d];

    if let Some(node) = terminal.iter().position(|v| !v.is_finite()) {
        return Err(SolveError::NonFinite { step: n, node });
    }
    // B_i = B_{i+1} (1 + K dt) + |g(t_i, 0, 0)| dt bounds |y_i| under the guard.
    let mut bound = terminal.iter().fold(0.0f64, |m, v| m.max(v.abs()));

    let mut next = terminal;
    let mut cur: Vec<f64> = Vec::with_capacity(next.len());
    let mut z: Vec<f64> = Vec::with_capacity(next.len() * d);
    let mut root_z = vec![0.0; d];
    for i in (0..n).rev() {
        let t = model.time(i);
        let w = i + 1;
        cur.clear();
        z.clear();
        if d == 1 {
            for j in 0..w {
                let m = moments_1d(next[j], next[j + 1], s);
                let zz = m.z();
                cur.push(m.mean + g.eval(t, m.mean, zz) * dt);
                z.push(zz[0]);
            }
        } else {
            let wn = w + 1;
            for j1 in 0..w {
                let lo = j1 * wn;
                let hi = lo + wn;
                for j2 in 0..w {
                    let m = moments_2d([next[lo + j2], next[lo + j2 + 1], next[hi + j2], next[hi + j2 + 1]], s);
                    let zz = m.z();
                    cur.push(m.mean + g.eval(t, m.mean, zz) * dt);
                    z.extend_from_slice(zz);
                }
            }
        }
        bound = bound * (1.0 + k * dt) + g.eval(t, 0.0, &zero).abs() * dt;
        let slack = 1e-12 * bound.max(1.0);
        for (node, &v) in cur.iter().enumerate() {
            if !v.is_finite() {
                return Err(SolveError::NonFinite { step: i, node });
            }
            if v.abs() > bound + slack {
                return Err(SolveError::BoundExceeded { step: i, value: v.abs(), bound });
            }
        }
        record(i, &cur, &z);
        if i == 0 {
            root_z.copy_from_slice(&z[..d]);
        }
        std::mem::swap(&mut next, &mut cur);
    }
    Ok(RootValue { y0: next[0], z0: root_z })
}

/// Solves the BSDE with terminal value `xi` and keeps every layer of `y` and `z`.
pub fn solve_bsde(model: &LatticeModel, g: &Generator, xi: &Claim) -> Result<BsdeSolution, SolveError> {
    let terminal = xi.terminal_values(model)?;
    let n = model.steps();
    let mut y: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    let mut z: Vec<Vec<f64>> = Vec::with_capacity(n);
    y.push(terminal.clone());
    backward(model, g, terminal, |_, yi, zi| {
        y.push(yi.to_vec());
        z.push(zi.to_vec());
    })?;
    y.reverse();
    z.reverse();
    Ok(BsdeSolution { model: *model, generator: g.clone(), claim: xi.clone(), y, z })
}

/// Same arithmetic as [`solve_bsde`], keeping only two layers in memory.
pub fn solve_root(model: &LatticeModel, g: &Generator, xi: &Claim) -> Result<RootValue, SolveError> {
    let terminal = xi.terminal_values(model)?;
    backward(model, g, terminal, |_, _, _| {})
}

/// Root solve from raw terminal node values (flat node order).
pub fn solve_values(model: &LatticeModel, g: &Generator, terminal: Vec<f64>) -> Result<RootValue, SolveError> {
    backward(model, g, terminal, |_, _, _| {})
}

/// `E_g[xi]` without keeping surfaces.
pub fn evaluate(model: &LatticeModel, g: &Generator, xi: &Claim) -> Result<f64, SolveError> {
    Ok(solve_root(model, g, xi)?.y0)
}

/// `P_g(A) = E_g[I_A]`. Not clipped: the monotone scheme keeps it in `[0, 1]`.
pub fn g_probability(model: &LatticeModel, g: &Generator, event: &Event) -> Result<f64, SolveError> {
    evaluate(model, g, &indicator(event))
}

/// `E_g[xi + eta] - E_g[xi] - E_g[eta]`, from three independent solves.
pub fn comonotonic_additivity_gap(
    model: &LatticeModel,
    g: &Generator,
    xi: &Claim,
    eta: &Claim,
) -> Result<f64, SolveError> {
    let sum = xi.plus(eta);
    let jobs = [&sum, xi, eta];
    let v: Vec<f64> = jobs.par_iter().map(|c| evaluate(model, g, c)).collect::<Result<_, _>>()?;
    Ok(v[0] - v[1] - v[2])
}

/// Lattice versions of both sides of the a-priori estimate at `t = 0`:
///
/// `E[sup_s |y1_s - y2_s|^2] + E[int |z1 - z2|^2 ds] <= C E[|xi1 - xi2|^2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    /// `E[sup_s |y1_s - y2_s|^2]` over lattice paths.
    pub sup_term: f64,
    /// `E[sum_i |z1_i - z2_i|^2 dt]`.
    pub z_term: f64,
    /// `E[|xi1 - xi2|^2]`.
    pub terminal_term: f64,
    /// `(sup_term + z_term) / terminal_term`; 0 when both sides vanish.
    pub ratio: f64,
}

impl StabilityReport {
    pub fn left(&self) -> f64 {
        self.sup_term + self.z_term
    }
}

/// Branch-weighted means of layer `i + 1` values onto layer `i`.
fn layer_means(model: &LatticeModel, i: usize, next: &[f64]) -> Vec<f64> {
    let w = i + 1;
    if model.dimension() == 1 {
        (0..w).map(|j| 0.5 * (next[j] + next[j + 1])).collect()
    } else {
        let wn = w + 1;
        let mut out = Vec::with_capacity(w * w);
        for j1 in 0..w {
            let (lo, hi) = (j1 * wn, (j1 + 1) * wn);
            for j2 in 0..w {
                out.push(0.25 * ((next[lo + j2] + next[lo + j2 + 1]) + (next[hi + j2] + next[hi + j2 + 1])));
            }
        }
        out
    }
}

/// Computes a [`StabilityReport`] for two terminal values under the same driver.
///
/// The sup term is the layered sum `sum_k (u_k - u_{k-1}) P(sup_s D_s >= u_k)`
/// over the distinct values `u_k` of `D = |y1 - y2|^2` (merged at a relative
/// 1e-12), with each hitting probability from its own backward pass. Cost is
/// (distinct values) x (nodes).
pub fn stability_gap(
    model: &LatticeModel,
    g: &Generator,
    xi1: &Claim,
    xi2: &Claim,
) -> Result<StabilityReport, SolveError> {
    let (s1, s2) = rayon::join(|| solve_bsde(model, g, xi1), || solve_bsde(model, g, xi2));
    let (s1, s2) = (s1?, s2?);
    let n = model.steps();
    let dt = model.dt();
    let d = model.dimension();

    let diff: Vec<Vec<f64>> = (0..=n)
        .map(|i| s1.y[i].iter().zip(&s2.y[i]).map(|(a, b)| (a - b) * (a - b)).collect())
        .collect();

    let weights: Vec<Vec<f64>> = (0..=n).map(|i| model.layer_weights(i)).collect::<Result<_, _>>()?;
    let terminal_term: f64 = weights[n].iter().zip(&diff[n]).map(|(w, v)| w * v).sum();
    let mut z_term = 0.0;
    for i in 0..n {
        let (a, b) = (&s1.z[i], &s2.z[i]);
        let layer: f64 = weights[i]
            .iter()
            .enumerate()
            .map(|(node, w)| {
                let sq: f64 = (0..d).map(|k| (a[node * d + k] - b[node * d + k]).powi(2)).sum();
                w * sq
            })
            .sum();
        z_term += layer * dt;
    }

    let mut values: Vec<f64> = diff.iter().flatten().copied().filter(|&v| v > 0.0).collect();
    values.sort_by(f64::total_cmp);
    let mut levels: Vec<f64> = Vec::new();
    for v in values {
        match levels.last() {
            Some(&last) if v - last <= 1e-12 * last.abs() => {}
            _ => levels.push(v),
        }
    }
    let hits: Vec<f64> = levels
        .par_iter()
        .map(|&u| {
            let mut h: Vec<f64> = diff[n].iter().map(|&v| if v >= u { 1.0 } else { 0.0 }).collect();
            for i in (0..n).rev() {
                let mut m = layer_means(model, i, &h);
                for (node, slot) in m.iter_mut().enumerate() {
                    if diff[i][node] >= u {
                        *slot = 1.0;
                    }
                }
                h = m;
            }
            h[0]
        })
        .collect();
    let mut sup_term = 0.0;
    let mut prev = 0.0;
    for (u, p) in levels.iter().zip(&hits) {
        sup_term += (u - prev) * p;
        prev = *u;
    }

    let left = sup_term + z_term;
    let ratio = if terminal_term > 0.0 {
        left / terminal_term
    } else if left == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(StabilityReport { sup_term, z_term, terminal_term, ratio })
}

/// Stability ratios along a step ladder.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityLadder {
    pub steps: Vec<usize>,
    pub reports: Vec<StabilityReport>,
}

impl StabilityLadder {
    /// No doubling grows the ratio by more than `factor`.
    pub fn bounded(&self, factor: f64) -> bool {
        self.reports.windows(2).all(|w| w[1].ratio.is_finite() && w[1].ratio <= factor * w[0].ratio.max(f64::MIN_POSITIVE))
    }
}

pub fn stability_ladder(
    dimension: usize,
    horizon: f64,
    ladder: &[usize],
    g: &Generator,
    xi1: &Claim,
    xi2: &Claim,
) -> Result<StabilityLadder, SolveError> {
    let reports = ladder
        .iter()
        .map(|&n| {
            let m = LatticeModel::new(dimension, horizon, n)?;
            stability_gap(&m, g, xi1, xi2)
        })
        .collect::<Result<Vec<_>, SolveError>>()?;
    Ok(StabilityLadder { steps: ladder.to_vec(), reports })
}

/// Compares `E_g[f(xi, W_T) | F_{t0}]` with `E_g[f(x, W_T) | F_{t0}]` at `x = xi`.
///
/// `xi` is a function of the time-`t0` node. For every node at `t0` the left
/// side is a solve on the subtree rooted there with terminal `f(xi(node), .)`;
/// the right side is a full-lattice solve of `f(x, .)` for each distinct value
/// `x` of `xi`, read at `(t0, node)`. Returns the largest absolute difference.
pub fn substitution_check(
    model: &LatticeModel,
    g: &Generator,
    f: &(dyn Fn(f64, &Point) -> f64 + Sync),
    t0: usize,
    xi: &(dyn Fn(&Point) -> f64 + Sync),
) -> Result<f64, SolveError> {
    if t0 >= model.steps() {
        return Err(SolveError::SubstitutionTime { t0, steps: model.steps() });
    }
    check_guard(model, g)?;
    let points = model.layer_points(t0)?;
    let xs: Vec<f64> = points.iter().map(xi).collect();

    let left: Vec<f64> = (0..points.len())
        .into_par_iter()
        .map(|node| {
            let sub = model.subtree(t0, node)?;
            let x = xs[node];
            let terminal: Vec<f64> = sub.terminal_points().iter().map(|p| f(x, p)).collect();
            Ok(solve_values(&sub, g, terminal)?.y0)
        })
        .collect::<Result<_, SolveError>>()?;

    let mut distinct = xs.clone();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup_by(|a, b| a.to_bits() == b.to_bits());
    let layers: Vec<(f64, Vec<f64>)> = distinct
        .par_iter()
        .map(|&x| {
            let terminal: Vec<f64> = model.terminal_points().iter().map(|p| f(x, p)).collect();
            let mut at_t0 = Vec::new();
            backward(model, g, terminal, |i, yi, _| {
                if i == t0 {
                    at_t0 = yi.to_vec();
                }
            })?;
            Ok((x, at_t0))
        })
        .collect::<Result<_, SolveError>>()?;

    let mut worst: f64 = 0.0;
    for (node, &x) in xs.iter().enumerate() {
        let (_, layer) = layers.iter().find(|(v, _)| v.to_bits() == x.to_bits()).expect("every x was solved");
        worst = worst.max((left[node] - layer[node]).abs());
    }
    Ok(worst)
}
