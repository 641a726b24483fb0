//! Closed-form reference values for the lattice solver.
//!
//! * [`linear_girsanov_expectation`]: for `g(t, z) = b(t) . z` the g-expectation
//!   is `E[f(W_T + int_0^T b)]`.
//! * [`drift_shift_expectation`]: for monotone terminal data `z` keeps one sign,
//!   so `g(t, z) = g(t, 1) z+ + g(t, -1) z-` acts as a constant drift.
//! * [`closed_form_z`]: Gaussian-density `z` processes of tail indicators.

use std::f64::consts::{PI, SQRT_2};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("horizon must be finite and positive, got {0}")]
    InvalidHorizon(f64),
    #[error("drift must have at least one component")]
    EmptyDrift,
    #[error("switch times must increase strictly inside (0, T)")]
    SwitchTimes,
    #[error("{pieces} drift pieces need {} switch times, got {switches}", pieces - 1)]
    PieceCount { pieces: usize, switches: usize },
    #[error("non-finite drift value")]
    NonFiniteDrift,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("function `{label}` exceeded its declared bound {bound}")]
    Unbounded { label: String, bound: f64 },
    #[error("function is not {0}")]
    NonMonotone(Monotone),
    #[error("rate must be finite and >= 0, got {0}")]
    NegativeRate(f64),
    #[error("Gauss-Hermite quadrature did not reach 1e-10 (last change {last_change:e})")]
    Quadrature { last_change: f64 },
    #[error("closed form needs t < T, got t = {t}, T = {horizon}")]
    TimeAtHorizon { t: f64, horizon: f64 },
    #[error("closed form expects {expected} state value(s), got {found}")]
    StateArity { expected: usize, found: usize },
}

/// Standard normal distribution function, `0.5 erfc(-x / sqrt 2)`.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Piecewise-constant drift `b(t)` on `[0, T]` with left-closed pieces.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftSpec {
    horizon: f64,
    /// `0 = s_0 < s_1 < ... < s_m = T`.
    breaks: Vec<f64>,
    values: Vec<Vec<f64>>,
}

impl DriftSpec {
    pub fn constant(b: Vec<f64>, horizon: f64) -> Result<Self, OracleError> {
        Self::piecewise(horizon, Vec::new(), vec![b])
    }

    /// `values[k]` holds on `[switches[k-1], switches[k])`.
    pub fn piecewise(horizon: f64, switches: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self, OracleError> {
        if !horizon.is_finite() || horizon <= 0.0 {
            return Err(OracleError::InvalidHorizon(horizon));
        }
        if values.len() != switches.len() + 1 {
            return Err(OracleError::PieceCount { pieces: values.len().max(1), switches: switches.len() });
        }
        let dim = values[0].len();
        if dim == 0 {
            return Err(OracleError::EmptyDrift);
        }
        if let Some(v) = values.iter().find(|v| v.len() != dim) {
            return Err(OracleError::DimensionMismatch { expected: dim, found: v.len() });
        }
        if values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(OracleError::NonFiniteDrift);
        }
        let mut breaks = Vec::with_capacity(switches.len() + 2);
        breaks.push(0.0);
        breaks.extend(switches);
        breaks.push(horizon);
        if breaks.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(OracleError::SwitchTimes);
        }
        Ok(Self { horizon, breaks, values })
    }

    pub fn dimension(&self) -> usize {
        self.values[0].len()
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn value_at(&self, t: f64) -> &[f64] {
        let k = self.breaks[1..self.breaks.len() - 1].partition_point(|&s| s <= t);
        &self.values[k]
    }

    /// `int_t^T b(s) ds`, per component.
    pub fn integral(&self, t: f64) -> Vec<f64> {
        let t = t.clamp(0.0, self.horizon);
        let mut out = vec![0.0; self.dimension()];
        for (k, v) in self.values.iter().enumerate() {
            let (lo, hi) = (self.breaks[k].max(t), self.breaks[k + 1]);
            if hi > lo {
                for (o, b) in out.iter_mut().zip(v) {
                    *o += b * (hi - lo);
                }
            }
        }
        out
    }

    pub fn total(&self) -> Vec<f64> {
        self.integral(0.0)
    }

    pub fn negated(&self) -> Self {
        let values = self.values.iter().map(|v| v.iter().map(|b| -b).collect()).collect();
        Self { values, ..self.clone() }
    }

    /// The 1-D drift `a . b(t)`.
    pub fn project(&self, a: &[f64]) -> Result<Self, OracleError> {
        if a.len() != self.dimension() {
            return Err(OracleError::DimensionMismatch { expected: self.dimension(), found: a.len() });
        }
        let values = self.values.iter().map(|v| vec![v.iter().zip(a).map(|(b, c)| b * c).sum()]).collect();
        Ok(Self { values, ..self.clone() })
    }
}

/// Monotonicity of a 1-D terminal function.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Monotone {
    Increasing,
    Decreasing,
}

impl fmt::Display for Monotone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Monotone::Increasing => "increasing",
            Monotone::Decreasing => "decreasing",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Shape {
    Flat,
    Up,
    Down,
    Mixed,
}

impl Shape {
    fn join(self, other: Shape) -> Shape {
        match (self, other) {
            (Shape::Flat, s) | (s, Shape::Flat) => s,
            (a, b) if a == b => a,
            _ => Shape::Mixed,
        }
    }

    fn flip(self) -> Shape {
        match self {
            Shape::Up => Shape::Down,
            Shape::Down => Shape::Up,
            s => s,
        }
    }

    fn of_sign(c: f64) -> Shape {
        if c > 0.0 {
            Shape::Up
        } else if c < 0.0 {
            Shape::Down
        } else {
            Shape::Flat
        }
    }

    fn allows(self, m: Monotone) -> bool {
        matches!((self, m), (Shape::Flat, _) | (Shape::Up, Monotone::Increasing) | (Shape::Down, Monotone::Decreasing))
    }
}

type BoundedRule = dyn Fn(&[f64]) -> f64 + Send + Sync;

/// A function of the terminal Gaussian vector.
///
/// Constants, affine maps and interval indicators of `a . x` are integrated
/// in closed form; [`TerminalFunction::Bounded`] goes through quadrature.
#[derive(Clone)]
pub enum TerminalFunction {
    Constant(f64),
    /// `a . x`.
    Linear(Vec<f64>),
    /// `I{lower <= a . x <= upper}`; a missing bound is infinite.
    Interval { direction: Vec<f64>, lower: Option<f64>, upper: Option<f64> },
    Scaled(f64, Box<TerminalFunction>),
    Sum(Vec<TerminalFunction>),
    /// Any function with `|f| <= bound`.
    Bounded { label: String, dim: usize, bound: f64, f: Arc<BoundedRule> },
}

impl fmt::Debug for TerminalFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Constant(c) => write!(f, "Constant({c})"),
            Self::Linear(a) => write!(f, "Linear({a:?})"),
            Self::Interval { direction, lower, upper } => {
                write!(f, "Interval({direction:?}, {lower:?}, {upper:?})")
            }
            Self::Scaled(c, inner) => write!(f, "Scaled({c}, {inner:?})"),
            Self::Sum(parts) => f.debug_tuple("Sum").field(parts).finish(),
            Self::Bounded { label, dim, bound, .. } => write!(f, "Bounded({label}, dim {dim}, |f| <= {bound})"),
        }
    }
}

impl TerminalFunction {
    pub fn coordinate(k: usize, dim: usize) -> Self {
        let mut a = vec![0.0; dim];
        a[k] = 1.0;
        Self::Linear(a)
    }

    /// `I{a . x >= c}`.
    pub fn at_least(direction: Vec<f64>, c: f64) -> Self {
        Self::Interval { direction, lower: Some(c), upper: None }
    }

    /// `I{a . x <= c}`.
    pub fn at_most(direction: Vec<f64>, c: f64) -> Self {
        Self::Interval { direction, lower: None, upper: Some(c) }
    }

    pub fn bounded(
        label: impl Into<String>,
        dim: usize,
        bound: f64,
        f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self::Bounded { label: label.into(), dim, bound, f: Arc::new(f) }
    }

    pub fn scaled(self, c: f64) -> Self {
        Self::Scaled(c, Box::new(self))
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Self::Constant(c) => *c,
            Self::Linear(a) => dot(a, x),
            Self::Interval { direction, lower, upper } => {
                let s = dot(direction, x);
                let inside = lower.is_none_or(|l| s >= l) && upper.is_none_or(|u| s <= u);
                if inside {
                    1.0
                } else {
                    0.0
                }
            }
            Self::Scaled(c, inner) => c * inner.eval(x),
            Self::Sum(parts) => parts.iter().map(|p| p.eval(x)).sum(),
            Self::Bounded { f, .. } => f(x),
        }
    }

    fn check_dimension(&self, dim: usize) -> Result<(), OracleError> {
        let found = match self {
            Self::Linear(a) | Self::Interval { direction: a, .. } => a.len(),
            Self::Bounded { dim: d, .. } => *d,
            Self::Scaled(_, inner) => return inner.check_dimension(dim),
            Self::Sum(parts) => return parts.iter().try_for_each(|p| p.check_dimension(dim)),
            Self::Constant(_) => dim,
        };
        if found == dim {
            Ok(())
        } else {
            Err(OracleError::DimensionMismatch { expected: dim, found })
        }
    }

    /// Structural shape in 1-D; `None` when only sampling can tell.
    fn shape(&self) -> Option<Shape> {
        Some(match self {
            Self::Constant(_) => Shape::Flat,
            Self::Linear(a) => Shape::of_sign(a[0]),
            Self::Interval { direction, lower, upper } => match (lower, upper) {
                (None, None) => Shape::Flat,
                (Some(_), None) => Shape::of_sign(direction[0]),
                (None, Some(_)) => Shape::of_sign(direction[0]).flip(),
                (Some(l), Some(u)) => {
                    if direction[0] == 0.0 || l > u {
                        Shape::Flat
                    } else {
                        Shape::Mixed
                    }
                }
            },
            Self::Scaled(c, inner) => {
                let s = inner.shape()?;
                if *c > 0.0 {
                    s
                } else if *c < 0.0 {
                    s.flip()
                } else {
                    Shape::Flat
                }
            }
            Self::Sum(parts) => parts.iter().try_fold(Shape::Flat, |acc, p| Some(acc.join(p.shape()?)))?,
            Self::Bounded { .. } => return None,
        })
    }

    /// Shape on a dense grid over `+-12 sqrt(T)`.
    fn sampled_shape(&self, horizon: f64) -> Shape {
        let half = 12.0 * horizon.sqrt();
        let n = 4000;
        let mut prev = self.eval(&[-half]);
        let mut shape = Shape::Flat;
        for i in 1..=n {
            let x = -half + 2.0 * half * i as f64 / n as f64;
            let v = self.eval(&[x]);
            shape = shape.join(Shape::of_sign(v - prev));
            prev = v;
        }
        shape
    }
}

fn dot(a: &[f64], x: &[f64]) -> f64 {
    a.iter().zip(x).map(|(a, x)| a * x).sum()
}

/// `P(lower <= Y <= upper)` for `Y ~ N(mu, sigma^2)`.
fn gaussian_interval(mu: f64, sigma: f64, lower: Option<f64>, upper: Option<f64>) -> f64 {
    if sigma == 0.0 {
        let inside = lower.is_none_or(|l| mu >= l) && upper.is_none_or(|u| mu <= u);
        return if inside { 1.0 } else { 0.0 };
    }
    match (lower, upper) {
        (None, None) => 1.0,
        (Some(l), None) => normal_cdf((mu - l) / sigma),
        (None, Some(u)) => normal_cdf((u - mu) / sigma),
        (Some(l), Some(u)) if l > u => 0.0,
        (Some(l), Some(u)) => {
            // Subtract on the side with the smaller tail.
            let (a, b) = ((l - mu) / sigma, (u - mu) / sigma);
            if a > 0.0 {
                normal_cdf(-a) - normal_cdf(-b)
            } else {
                normal_cdf(b) - normal_cdf(a)
            }
        }
    }
}

/// Nodes and weights for `int e^{-x^2} h(x) dx`, by Newton iteration on the
/// normalized Hermite recurrence.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    const PIM4: f64 = 0.751_125_544_464_942_5;
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    let nf = n as f64;
    let mut z = 0.0f64;
    for i in 0..m {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-0.166_67),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let (mut p1, mut p2) = (PIM4, 0.0);
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 3e-14 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

// Alternating parity keeps a jump at a symmetric gap from looking converged.
// The Newton start values lose roots beyond about 180 nodes.
const QUADRATURE_ORDERS: [usize; 4] = [20, 41, 80, 161];
const QUADRATURE_TOLERANCE: f64 = 1e-10;

/// `E[f(mean + sqrt(T) Z)]`, `Z` standard normal in `mean.len()` dimensions.
fn gaussian_quadrature(f: &BoundedRule, label: &str, bound: f64, mean: &[f64], horizon: f64) -> Result<f64, OracleError> {
    let unbounded = || OracleError::Unbounded { label: label.to_string(), bound };
    if !bound.is_finite() {
        return Err(unbounded());
    }
    let scale = (2.0 * horizon).sqrt();
    let norm = PI.sqrt();
    let mut prev: Option<f64> = None;
    let mut last_change = f64::INFINITY;
    for &n in &QUADRATURE_ORDERS {
        let (x, w) = gauss_hermite(n);
        let mut total = 0.0;
        let mut point = mean.to_vec();
        let mut eval = |point: &[f64], weight: f64| -> Result<(), OracleError> {
            let v = f(point);
            if !v.is_finite() || v.abs() > bound {
                return Err(unbounded());
            }
            total += weight * v;
            Ok(())
        };
        match mean.len() {
            1 => {
                for (xi, wi) in x.iter().zip(&w) {
                    point[0] = mean[0] + scale * xi;
                    eval(&point, wi / norm)?;
                }
            }
            2 => {
                for (xi, wi) in x.iter().zip(&w) {
                    point[0] = mean[0] + scale * xi;
                    for (xj, wj) in x.iter().zip(&w) {
                        point[1] = mean[1] + scale * xj;
                        eval(&point, wi * wj / PI)?;
                    }
                }
            }
            d => return Err(OracleError::DimensionMismatch { expected: 2, found: d }),
        }
        if let Some(p) = prev {
            last_change = (total - p).abs();
            if last_change <= QUADRATURE_TOLERANCE {
                return Ok(total);
            }
        }
        prev = Some(total);
    }
    Err(OracleError::Quadrature { last_change })
}

fn gaussian_expectation(f: &TerminalFunction, mean: &[f64], horizon: f64) -> Result<f64, OracleError> {
    let sd = horizon.sqrt();
    Ok(match f {
        TerminalFunction::Constant(c) => *c,
        TerminalFunction::Linear(a) => dot(a, mean),
        TerminalFunction::Interval { direction, lower, upper } => {
            let norm = dot(direction, direction).sqrt();
            gaussian_interval(dot(direction, mean), sd * norm, *lower, *upper)
        }
        TerminalFunction::Scaled(c, inner) => c * gaussian_expectation(inner, mean, horizon)?,
        TerminalFunction::Sum(parts) => {
            parts.iter().map(|p| gaussian_expectation(p, mean, horizon)).sum::<Result<f64, _>>()?
        }
        TerminalFunction::Bounded { label, bound, f, .. } => gaussian_quadrature(f.as_ref(), label, *bound, mean, horizon)?,
    })
}

/// `E[f(W_T + int_0^T b(s) ds)]` with `W_T ~ N(0, T I)`.
pub fn linear_girsanov_expectation(b: &DriftSpec, f: &TerminalFunction, horizon: f64) -> Result<f64, OracleError> {
    if !horizon.is_finite() || horizon <= 0.0 {
        return Err(OracleError::InvalidHorizon(horizon));
    }
    if horizon != b.horizon() {
        return Err(OracleError::InvalidHorizon(horizon));
    }
    f.check_dimension(b.dimension())?;
    gaussian_expectation(f, &b.total(), horizon)
}

/// g-expectation of monotone 1-D data under `g(t, z) = up(t) z+ + down(t) z-`.
///
/// Increasing data sees drift `up`, decreasing data drift `-down`.
pub fn drift_shift_expectation(
    up: &DriftSpec,
    down: &DriftSpec,
    f: &TerminalFunction,
    direction: Monotone,
    horizon: f64,
) -> Result<f64, OracleError> {
    for d in [up, down] {
        if d.dimension() != 1 {
            return Err(OracleError::DimensionMismatch { expected: 1, found: d.dimension() });
        }
    }
    f.check_dimension(1)?;
    let shape = f.shape().unwrap_or_else(|| f.sampled_shape(horizon));
    if !shape.allows(direction) {
        return Err(OracleError::NonMonotone(direction));
    }
    match direction {
        Monotone::Increasing => linear_girsanov_expectation(up, f, horizon),
        Monotone::Decreasing => linear_girsanov_expectation(&down.negated(), f, horizon),
    }
}

/// [`drift_shift_expectation`] for `g = k |z|`.
pub fn drift_shift_monotone_expectation(
    k: f64,
    f: &TerminalFunction,
    direction: Monotone,
    horizon: f64,
) -> Result<f64, OracleError> {
    if !k.is_finite() || k < 0.0 {
        return Err(OracleError::NegativeRate(k));
    }
    let drift = DriftSpec::constant(vec![k], horizon)?;
    drift_shift_expectation(&drift, &drift, f, direction, horizon)
}

/// Closed-form `z` processes of tail indicators, with `s = T - t` and `I` the
/// relevant drift integral over `[t, T]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZFormula {
    /// `exp(-(n + w + I)^2 / 2s) / sqrt(2 pi s)`, for `I{W_T >= -n}`.
    UpperTail,
    /// `-exp(-(w - I)^2 / 2s) / sqrt(2 pi s)`, for `I{W_T <= 0}`.
    LowerTail,
    /// `(exp(-(n - w1 - I)^2 / 2s) / sqrt(2 pi s), 0)`.
    FirstAxisTail,
    /// `(0, exp(-(w2 + I)^2 / 2s) / sqrt(2 pi s))`.
    SecondAxisTail,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ZValue {
    Scalar(f64),
    Pair([f64; 2]),
}

impl ZValue {
    pub fn components(&self) -> &[f64] {
        match self {
            ZValue::Scalar(v) => std::slice::from_ref(v),
            ZValue::Pair(p) => p,
        }
    }
}

/// Evaluates one [`ZFormula`] at time `t`, state `w` (one value for the
/// scalar forms, `(w1, w2)` for the pairs), level `n` and drift integral `I`.
pub fn closed_form_z(
    kind: ZFormula,
    t: f64,
    w: &[f64],
    n: f64,
    drift_integral: f64,
    horizon: f64,
) -> Result<ZValue, OracleError> {
    if !(t < horizon) {
        return Err(OracleError::TimeAtHorizon { t, horizon });
    }
    let expected = match kind {
        ZFormula::UpperTail | ZFormula::LowerTail => 1,
        ZFormula::FirstAxisTail | ZFormula::SecondAxisTail => 2,
    };
    if w.len() != expected {
        return Err(OracleError::StateArity { expected, found: w.len() });
    }
    let s = horizon - t;
    let density = |u: f64| (-(u * u) / (2.0 * s)).exp() / (2.0 * PI * s).sqrt();
    Ok(match kind {
        ZFormula::UpperTail => ZValue::Scalar(density(n + w[0] + drift_integral)),
        ZFormula::LowerTail => ZValue::Scalar(-density(w[0] - drift_integral)),
        ZFormula::FirstAxisTail => ZValue::Pair([density(n - w[0] - drift_integral), 0.0]),
        ZFormula::SecondAxisTail => ZValue::Pair([0.0, density(w[1] + drift_integral)]),
    })
}
