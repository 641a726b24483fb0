//! BSDE drivers `g(t, y, z)`, sample-based hypothesis checks and structural
//! probes, and the direction restriction `g~(t, y, z) = g(t, y, a z)`.
//!
//! The probes work on finite grids, so they can refute a property but never
//! prove it. Measurability in `t` cannot be probed at all; the built-ins are
//! piecewise continuous in `t`, and one of them ([`Generator::step_linear`])
//! jumps on purpose.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeneratorError {
    #[error("generator `{label}` returned a non-finite value at t={t}, y={y}, z={z:?}")]
    NonFinite { label: String, t: f64, y: f64, z: Vec<f64> },
    #[error("generator dimension must be at least 1")]
    ZeroDimension,
    #[error("Lipschitz constant must be finite and non-negative, got {0}")]
    InvalidLipschitz(f64),
    #[error("direction must have unit length (|a| = {norm})")]
    NonUnitDirection { norm: f64 },
    #[error("direction has length {got}, generator needs {expected}")]
    DirectionLength { expected: usize, got: usize },
    #[error("probe sample is empty")]
    EmptySample,
    #[error("homogeneity sample must include lambda = {0}")]
    MissingLambda(f64),
    #[error("homogeneity probe needs lambda >= 0, got {0}")]
    NegativeLambda(f64),
    #[error("z of length {got} does not match generator dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
}

type Rule = dyn Fn(f64, f64, &[f64]) -> f64 + Send + Sync;

/// A deterministic driver with its declared Lipschitz constant.
#[derive(Clone)]
pub struct Generator {
    label: String,
    dim: usize,
    lipschitz: f64,
    rule: Arc<Rule>,
}

impl fmt::Debug for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Generator")
            .field("label", &self.label)
            .field("dim", &self.dim)
            .field("lipschitz", &self.lipschitz)
            .finish()
    }
}

impl Generator {
    pub fn new(
        label: impl Into<String>,
        dim: usize,
        lipschitz: f64,
        rule: impl Fn(f64, f64, &[f64]) -> f64 + Send + Sync + 'static,
    ) -> Result<Self, GeneratorError> {
        if dim == 0 {
            return Err(GeneratorError::ZeroDimension);
        }
        if !lipschitz.is_finite() || lipschitz < 0.0 {
            return Err(GeneratorError::InvalidLipschitz(lipschitz));
        }
        Ok(Self { label: label.into(), dim, lipschitz, rule: Arc::new(rule) })
    }

    /// `g = 0`.
    pub fn zero(dim: usize) -> Self {
        Self::new("zero", dim, 0.0, |_, _, _| 0.0).expect("valid built-in")
    }

    /// `g(t, z) = b . z`; the dimension is `b.len()`.
    pub fn linear(b: Vec<f64>) -> Self {
        let k = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        let label = if b.len() == 1 {
            format!("linear:{}", b[0])
        } else {
            format!("linear{}:{}", b.len(), join(&b))
        };
        let dim = b.len().max(1);
        Self::new(label, dim, k, move |_, _, z| b.iter().zip(z).map(|(bi, zi)| bi * zi).sum())
            .expect("valid built-in")
    }

    /// One-dimensional `g(t, z) = b(t) z` with `b = before` for `t < switch_time`
    /// and `b = after` from `switch_time` on.
    pub fn step_linear(before: f64, after: f64, switch_time: f64) -> Self {
        Self::new(
            format!("step-linear:{before},{after}"),
            1,
            before.abs().max(after.abs()),
            move |t, _, z| if t < switch_time { before * z[0] } else { after * z[0] },
        )
        .expect("valid built-in")
    }

    /// `g(t, z) = k sum_i |z_i|`. Lipschitz in the Euclidean norm with `k sqrt(d)`.
    pub fn abs(k: f64, dim: usize) -> Self {
        Self::new(format!("abs:{k}"), dim, k.abs() * (dim as f64).sqrt(), move |_, _, z| {
            k * z.iter().map(|v| v.abs()).sum::<f64>()
        })
        .expect("valid built-in")
    }

    /// `g(t, z) = k |z|` with the Euclidean norm.
    pub fn euclid(k: f64, dim: usize) -> Self {
        Self::new(format!("euclid:{k}"), dim, k.abs(), move |_, _, z| {
            k * z.iter().map(|v| v * v).sum::<f64>().sqrt()
        })
        .expect("valid built-in")
    }

    /// One-dimensional `g(t, z) = up z^+ + down z^-`, so `g(t, 1) = up` and
    /// `g(t, -1) = down`. Linear exactly when `up + down = 0`.
    pub fn kink(up: f64, down: f64) -> Self {
        Self::new(format!("kink:{up},{down}"), 1, up.abs().max(down.abs()), move |_, _, z| {
            let v = z[0];
            if v >= 0.0 {
                up * v
            } else {
                -down * v
            }
        })
        .expect("valid built-in")
    }

    /// `g(t, y, z) = c y`. Breaks `g(t, y, 0) = 0`; a control for negative tests.
    pub fn y_linear(c: f64, dim: usize) -> Self {
        Self::new(format!("ylin:{c}"), dim, c.abs(), move |_, y, _| c * y).expect("valid built-in")
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn dimension(&self) -> usize {
        self.dim
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn relabel(&self, label: impl Into<String>) -> Self {
        Self { label: label.into(), ..self.clone() }
    }

    #[inline]
    pub fn eval(&self, t: f64, y: f64, z: &[f64]) -> f64 {
        (self.rule)(t, y, z)
    }

    fn eval_checked(&self, t: f64, y: f64, z: &[f64]) -> Result<f64, GeneratorError> {
        if z.len() != self.dim {
            return Err(GeneratorError::DimensionMismatch { expected: self.dim, got: z.len() });
        }
        let v = self.eval(t, y, z);
        if !v.is_finite() {
            return Err(GeneratorError::NonFinite { label: self.label.clone(), t, y, z: z.to_vec() });
        }
        Ok(v)
    }
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn check_unit(a: &[f64]) -> Result<(), GeneratorError> {
    let n = norm(a);
    if (n - 1.0).abs() > 1e-12 {
        return Err(GeneratorError::NonUnitDirection { norm: n });
    }
    Ok(())
}

/// `g~(t, y, z) = g(t, y, a z)` for a unit `a` in `R^d`; the result is
/// one-dimensional and keeps the declared Lipschitz constant.
pub fn restrict_to_direction(g: &Generator, a: &[f64]) -> Result<Generator, GeneratorError> {
    if a.len() != g.dim {
        return Err(GeneratorError::DirectionLength { expected: g.dim, got: a.len() });
    }
    check_unit(a)?;
    let inner = g.clone();
    let a = a.to_vec();
    let label = format!("{}|[{}]", g.label, join(&a));
    Generator::new(label, 1, g.lipschitz, move |t, y, z| {
        let v: Vec<f64> = a.iter().map(|ak| ak * z[0]).collect();
        inner.eval(t, y, &v)
    })
}

/// `g~(t, y, z_1, z_2) = g(t, y, a z_1, z_2)` for a unit `a` in `R^(d-1)`.
/// This is the reduction that takes a `d`-dimensional driver to a planar one.
pub fn restrict_leading(g: &Generator, a: &[f64]) -> Result<Generator, GeneratorError> {
    if g.dim < 2 || a.len() != g.dim - 1 {
        return Err(GeneratorError::DirectionLength { expected: g.dim.saturating_sub(1), got: a.len() });
    }
    check_unit(a)?;
    let inner = g.clone();
    let a = a.to_vec();
    let label = format!("{}|[{}]+last", g.label, join(&a));
    Generator::new(label, 2, g.lipschitz, move |t, y, z| {
        let mut v: Vec<f64> = a.iter().map(|ak| ak * z[0]).collect();
        v.push(z[1]);
        inner.eval(t, y, &v)
    })
}

/// `g_bar(t, y, z) = g(t, y, (z, 0))`: the section with the last coordinate
/// set to zero, dimension `d - 1`.
pub fn drop_last(g: &Generator) -> Result<Generator, GeneratorError> {
    if g.dim < 2 {
        return Err(GeneratorError::ZeroDimension);
    }
    let inner = g.clone();
    let label = format!("{}|drop-last", g.label);
    Generator::new(label, g.dim - 1, g.lipschitz, move |t, y, z| {
        let mut v = z.to_vec();
        v.push(0.0);
        inner.eval(t, y, &v)
    })
}

/// Points at which the probes evaluate a generator.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeSample {
    pub times: Vec<f64>,
    pub ys: Vec<f64>,
    pub zs: Vec<Vec<f64>>,
    /// Slack allowed above the declared Lipschitz constant and on `|g(t,y,0)|`.
    pub tolerance: f64,
}

impl ProbeSample {
    /// The documented default grid: five times over `[0, T]` (the midpoint
    /// included), five `y` values, and a `z` grid of nine values per
    /// coordinate for `d = 1`, a 5x5 grid plus eight unit vectors for `d = 2`,
    /// and scaled basis vectors otherwise.
    pub fn standard(dim: usize, horizon: f64) -> Self {
        let times = (0..5).map(|i| horizon * i as f64 / 4.0).collect();
        let ys = vec![-2.0, -0.5, 0.0, 1.0, 3.0];
        let zs = match dim {
            1 => [-2.0, -1.0, -0.5, -0.1, 0.0, 0.1, 0.5, 1.0, 2.0].iter().map(|&v| vec![v]).collect(),
            2 => {
                let axis = [-1.5, -0.5, 0.0, 0.5, 1.5];
                let mut zs: Vec<Vec<f64>> = axis.iter().flat_map(|&a| axis.iter().map(move |&b| vec![a, b])).collect();
                for k in 0..8 {
                    let th = std::f64::consts::PI * k as f64 / 4.0 + 0.1;
                    zs.push(vec![th.cos(), th.sin()]);
                }
                zs
            }
            d => {
                let mut zs = vec![vec![0.0; d]];
                for i in 0..d {
                    for s in [-1.5, -0.5, 0.5, 1.5] {
                        let mut v = vec![0.0; d];
                        v[i] = s;
                        zs.push(v);
                    }
                }
                zs.push(vec![0.7; d]);
                zs.push((0..d).map(|i| if i % 2 == 0 { 0.4 } else { -0.9 }).collect());
                zs
            }
        };
        Self { times, ys, zs, tolerance: 1e-12 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisReport {
    /// `max |g(t, y, 0)|` over the sample.
    pub h3_max_violation: f64,
    /// Largest `|g(t,y,z) - g(t,y',z')| / (|y-y'| + |z-z'|)` at equal `t`.
    pub lipschitz_estimate: f64,
    pub declared_lipschitz: f64,
    pub tolerance: f64,
    pub sample: String,
}

impl HypothesisReport {
    pub fn zero_at_origin(&self) -> bool {
        self.h3_max_violation <= self.tolerance
    }

    pub fn lipschitz_ok(&self) -> bool {
        self.lipschitz_estimate <= self.declared_lipschitz + self.tolerance
    }

    pub fn passed(&self) -> bool {
        self.zero_at_origin() && self.lipschitz_ok()
    }
}

/// Samples `g(t, y, 0) = 0` and the Lipschitz bound.
pub fn check_hypotheses(g: &Generator, sample: &ProbeSample) -> Result<HypothesisReport, GeneratorError> {
    if sample.times.is_empty() || sample.ys.is_empty() || sample.zs.is_empty() {
        return Err(GeneratorError::EmptySample);
    }
    let zero = vec![0.0; g.dim];
    let mut h3: f64 = 0.0;
    let mut lip: f64 = 0.0;
    for &t in &sample.times {
        let mut pts: Vec<(f64, &[f64], f64)> = Vec::with_capacity(sample.ys.len() * sample.zs.len());
        for &y in &sample.ys {
            h3 = h3.max(g.eval_checked(t, y, &zero)?.abs());
            for z in &sample.zs {
                pts.push((y, z.as_slice(), g.eval_checked(t, y, z)?));
            }
        }
        for (a, pa) in pts.iter().enumerate() {
            for pb in &pts[a + 1..] {
                let dz: Vec<f64> = pa.1.iter().zip(pb.1).map(|(u, v)| u - v).collect();
                let dist = (pa.0 - pb.0).abs() + norm(&dz);
                if dist > 0.0 {
                    lip = lip.max((pa.2 - pb.2).abs() / dist);
                }
            }
        }
    }
    Ok(HypothesisReport {
        h3_max_violation: h3,
        lipschitz_estimate: lip,
        declared_lipschitz: g.lipschitz,
        tolerance: sample.tolerance,
        sample: format!(
            "{} times x {} y x {} z ({} evaluations)",
            sample.times.len(),
            sample.ys.len(),
            sample.zs.len(),
            sample.times.len() * sample.ys.len() * sample.zs.len()
        ),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct HomogeneityReport {
    /// `max |g(t, y, lambda z) - lambda g(t, y, z)|`.
    pub max_deviation: f64,
    /// `(t, y, z, lambda)` of the worst sample, if any deviation was positive.
    pub worst: Option<(f64, f64, Vec<f64>, f64)>,
}

/// Positive homogeneity in `z`. `lambdas` must contain 0, 1/2, 1 and 2.
pub fn probe_positive_homogeneity(
    g: &Generator,
    sample: &ProbeSample,
    lambdas: &[f64],
) -> Result<HomogeneityReport, GeneratorError> {
    if sample.times.is_empty() || sample.ys.is_empty() || sample.zs.is_empty() {
        return Err(GeneratorError::EmptySample);
    }
    if let Some(&l) = lambdas.iter().find(|&&l| l < 0.0) {
        return Err(GeneratorError::NegativeLambda(l));
    }
    for required in [0.0, 0.5, 1.0, 2.0] {
        if !lambdas.contains(&required) {
            return Err(GeneratorError::MissingLambda(required));
        }
    }
    let mut report = HomogeneityReport { max_deviation: 0.0, worst: None };
    for &t in &sample.times {
        for &y in &sample.ys {
            for z in &sample.zs {
                let base = g.eval_checked(t, y, z)?;
                for &l in lambdas {
                    let scaled: Vec<f64> = z.iter().map(|v| l * v).collect();
                    let dev = (g.eval_checked(t, y, &scaled)? - l * base).abs();
                    if dev > report.max_deviation {
                        report = HomogeneityReport { max_deviation: dev, worst: Some((t, y, z.clone(), l)) };
                    }
                }
            }
        }
    }
    Ok(report)
}

/// Default homogeneity factors.
pub const STANDARD_LAMBDAS: [f64; 6] = [0.0, 0.25, 0.5, 1.0, 2.0, 3.0];

#[derive(Debug, Clone, PartialEq)]
pub struct AdditivityReport {
    /// `max |g(t, y, z + z') - g(t, y, z) - g(t, y, z')|` over the sampled pairs.
    pub max_deviation: f64,
    pub worst: Option<(f64, Vec<f64>, Vec<f64>)>,
    /// `h(t) = g(t, 1) + g(t, -1)` per sampled time (one-dimensional drivers only).
    pub h: Vec<(f64, f64)>,
}

/// Additivity in `z` on explicit pairs, evaluated at `y = 0`.
pub fn probe_additivity(
    g: &Generator,
    times: &[f64],
    pairs: &[(Vec<f64>, Vec<f64>)],
) -> Result<AdditivityReport, GeneratorError> {
    if times.is_empty() || pairs.is_empty() {
        return Err(GeneratorError::EmptySample);
    }
    let mut report = AdditivityReport { max_deviation: 0.0, worst: None, h: Vec::new() };
    for &t in times {
        for (a, b) in pairs {
            let sum: Vec<f64> = a.iter().zip(b).map(|(u, v)| u + v).collect();
            let dev = (g.eval_checked(t, 0.0, &sum)? - g.eval_checked(t, 0.0, a)? - g.eval_checked(t, 0.0, b)?).abs();
            if dev > report.max_deviation {
                report.max_deviation = dev;
                report.worst = Some((t, a.clone(), b.clone()));
            }
        }
        if g.dim == 1 {
            report.h.push((t, g.eval_checked(t, 0.0, &[1.0])? + g.eval_checked(t, 0.0, &[-1.0])?));
        }
    }
    Ok(report)
}

/// A default pair grid: all ordered pairs of the probe `z` values.
pub fn standard_pairs(sample: &ProbeSample) -> Vec<(Vec<f64>, Vec<f64>)> {
    let mut out = Vec::new();
    for a in &sample.zs {
        for b in &sample.zs {
            out.push((a.clone(), b.clone()));
        }
    }
    out
}
