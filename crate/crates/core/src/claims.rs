//! Terminal random variables on the lattice and the comonotonicity test.
//!
//! Events use non-strict thresholds everywhere (`W >= c`, `W <= c`). On a
//! lattice with an atom exactly at `c` this is a visible choice; it is the
//! one convention used by every constructor here.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::lattice::{LatticeModel, Point};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClaimError {
    #[error("expected {claims} coefficients, got {coefficients}")]
    LengthMismatch { claims: usize, coefficients: usize },
    #[error("claim `{label}` is not finite at terminal node {node}")]
    NonFinite { label: String, node: usize },
    #[error("coordinate {coordinate} is out of range for dimension {dimension}")]
    Coordinate { coordinate: usize, dimension: usize },
}

type Predicate = dyn Fn(&Point) -> bool + Send + Sync;
type Rule = dyn Fn(&Point) -> f64 + Send + Sync;

/// A terminal event `A`, given as a predicate on terminal lattice states.
#[derive(Clone)]
pub struct Event {
    label: String,
    predicate: Arc<Predicate>,
}

impl Event {
    pub fn new(label: impl Into<String>, predicate: impl Fn(&Point) -> bool + Send + Sync + 'static) -> Self {
        Self { label: label.into(), predicate: Arc::new(predicate) }
    }

    /// The whole sample space.
    pub fn always() -> Self {
        Self::new("true", |_| true)
    }

    /// The empty event.
    pub fn never() -> Self {
        Self::new("false", |_| false)
    }

    /// `W_k >= c`, with `k` zero-based.
    pub fn w_at_least(k: usize, c: f64) -> Self {
        Self::new(format!("w{}>={}", k + 1, c), move |p| p.w_at_least(k, c))
    }

    /// `W_k <= c`.
    pub fn w_at_most(k: usize, c: f64) -> Self {
        Self::new(format!("w{}<={}", k + 1, c), move |p| p.w_at_most(k, c))
    }

    /// `hi >= W_k >= lo`.
    pub fn w_between(k: usize, lo: f64, hi: f64) -> Self {
        Self::new(format!("{}>=w{}>={}", hi, k + 1, lo), move |p| {
            p.w_at_least(k, lo) && p.w_at_most(k, hi)
        })
    }

    /// `a . W >= c`. Projections are compared in floating point.
    pub fn projection_at_least(a: Vec<f64>, c: f64) -> Self {
        Self::new(format!("{a:?}.w>={c}"), move |p| p.projection(&a) >= c)
    }

    pub fn and(&self, other: &Event) -> Self {
        let (a, b) = (self.predicate.clone(), other.predicate.clone());
        Self::new(format!("{}&{}", self.label, other.label), move |p| a(p) && b(p))
    }

    pub fn contains(&self, p: &Point) -> bool {
        (self.predicate)(p)
    }

    pub fn label(&self) -> &str {
        &self.label
    }
}

impl fmt::Debug for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Event").field("label", &self.label).finish()
    }
}

/// A claim `xi`: a real function of the terminal lattice state.
#[derive(Clone)]
pub struct Claim {
    label: String,
    rule: Arc<Rule>,
}

impl Claim {
    pub fn new(label: impl Into<String>, rule: impl Fn(&Point) -> f64 + Send + Sync + 'static) -> Self {
        Self { label: label.into(), rule: Arc::new(rule) }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(format!("const({c})"), move |_| c)
    }

    /// `W_T^k` (zero-based `k`).
    pub fn coordinate(k: usize) -> Self {
        Self::new(format!("coord({})", k + 1), move |p| p.w(k))
    }

    /// `f(a . W_T)`.
    pub fn of_projection(
        label: impl Into<String>,
        a: Vec<f64>,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self::new(label, move |p| f(p.projection(&a)))
    }

    pub fn indicator(event: &Event) -> Self {
        indicator(event)
    }

    /// `c * xi`.
    pub fn scale(&self, c: f64) -> Self {
        let r = self.rule.clone();
        Self::new(format!("scale({c},{})", self.label), move |p| c * r(p))
    }

    /// `xi + c`.
    pub fn shift(&self, c: f64) -> Self {
        let r = self.rule.clone();
        Self::new(format!("sum({},const({c}))", self.label), move |p| r(p) + c)
    }

    pub fn plus(&self, other: &Claim) -> Self {
        let (a, b) = (self.rule.clone(), other.rule.clone());
        Self::new(format!("sum({},{})", self.label, other.label), move |p| a(p) + b(p))
    }

    /// `h(xi)` for a scalar map `h`.
    pub fn map(&self, label: impl Into<String>, h: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        let r = self.rule.clone();
        Self::new(label, move |p| h(r(p)))
    }

    pub fn relabel(&self, label: impl Into<String>) -> Self {
        Self { label: label.into(), rule: self.rule.clone() }
    }

    pub fn value_at(&self, p: &Point) -> f64 {
        (self.rule)(p)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Values on the terminal layer of `model`, in flat node order.
    pub fn terminal_values(&self, model: &LatticeModel) -> Result<Vec<f64>, ClaimError> {
        let values: Vec<f64> = model.terminal_points().iter().map(|p| self.value_at(p)).collect();
        if let Some(node) = values.iter().position(|v| !v.is_finite()) {
            return Err(ClaimError::NonFinite { label: self.label.clone(), node });
        }
        Ok(values)
    }
}

impl fmt::Debug for Claim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Claim").field("label", &self.label).finish()
    }
}

/// `I_A`: 1 on terminal states in `event`, 0 elsewhere.
pub fn indicator(event: &Event) -> Claim {
    let e = event.clone();
    Claim::new(format!("ind({})", event.label()), move |p| if e.contains(p) { 1.0 } else { 0.0 })
}

/// Pointwise linear combination `sum_i c_i xi_i`.
pub fn combine(claims: &[Claim], coefficients: &[f64]) -> Result<Claim, ClaimError> {
    if claims.len() != coefficients.len() {
        return Err(ClaimError::LengthMismatch { claims: claims.len(), coefficients: coefficients.len() });
    }
    let label = if coefficients.iter().all(|&c| c == 1.0) {
        format!("sum({})", claims.iter().map(|c| c.label.as_str()).collect::<Vec<_>>().join(","))
    } else {
        let parts: Vec<String> = claims
            .iter()
            .zip(coefficients)
            .map(|(c, k)| if *k == 1.0 { c.label.clone() } else { format!("scale({k},{})", c.label) })
            .collect();
        format!("sum({})", parts.join(","))
    };
    let terms: Vec<(Arc<Rule>, f64)> = claims.iter().map(|c| c.rule.clone()).zip(coefficients.iter().copied()).collect();
    Ok(Claim::new(label, move |p| terms.iter().fold(0.0, |acc, (r, k)| acc + k * r(p))))
}

/// Exact comonotonicity on the terminal layer:
/// `(xi(a) - xi(b)) (eta(a) - eta(b)) >= 0` for every pair of terminal nodes.
///
/// Equivalent to: whenever `xi(a) < xi(b)` then `eta(a) <= eta(b)`. Sorting by
/// `xi` and sweeping tie groups decides this in `O(n log n)`.
pub fn is_comonotonic(model: &LatticeModel, xi: &Claim, eta: &Claim) -> Result<bool, ClaimError> {
    let x = xi.terminal_values(model)?;
    let y = eta.terminal_values(model)?;
    Ok(comonotonic_values(&x, &y))
}

pub(crate) fn comonotonic_values(x: &[f64], y: &[f64]) -> bool {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    // Largest eta over all strictly smaller xi groups.
    let mut prior_max = f64::NEG_INFINITY;
    let mut start = 0;
    while start < order.len() {
        let mut end = start;
        while end < order.len() && x[order[end]] == x[order[start]] {
            end += 1;
        }
        let group = &order[start..end];
        let group_min = group.iter().map(|&i| y[i]).fold(f64::INFINITY, f64::min);
        if group_min < prior_max {
            return false;
        }
        let group_max = group.iter().map(|&i| y[i]).fold(f64::NEG_INFINITY, f64::max);
        prior_max = prior_max.max(group_max);
        start = end;
    }
    true
}
