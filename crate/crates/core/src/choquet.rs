//! g-capacities `V(A) = E_g[I_A]` and the Choquet expectation
//!
//! ```text
//! C_g[xi] = int_{-inf}^0 (V(xi >= t) - 1) dt + int_0^inf V(xi >= t) dt
//! ```
//!
//! On a lattice `xi` takes finitely many values `v_1 < ... < v_m`, the survival
//! map `t -> V(xi >= t)` is a step function and the integral collapses to the
//! layered sum `v_1 + sum_k (v_k - v_{k-1}) V(xi >= v_k)`.

use rayon::prelude::*;
use thiserror::Error;

use crate::bsde::{solve_values, SolveError};
use crate::claims::{is_comonotonic, Claim, ClaimError};
use crate::generators::Generator;
use crate::lattice::LatticeModel;

/// Default merge tolerance for nearly equal claim values.
pub const MERGE_TOLERANCE: f64 = 1e-12;
/// Rounding slack allowed when checking the capacity curve.
pub const MONOTONE_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChoquetError {
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Claim(#[from] ClaimError),
    #[error("capacity rises from {previous} to {next} at v = {value}: the scheme lost monotonicity")]
    NonMonotone { value: f64, previous: f64, next: f64 },
    #[error("capacity {capacity} at v = {value} lies outside [0, 1]")]
    OutOfRange { value: f64, capacity: f64 },
    #[error("V(Omega) = {0}, expected 1: the generator does not define a capacity")]
    NotNormalized(f64),
    #[error("merge tolerance must be finite and >= 0, got {0}")]
    InvalidTolerance(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CapacityOptions {
    /// Values within `tol * max(1, |v|)` of a cluster's smallest value join it.
    pub merge_tolerance: f64,
    /// Solve thresholds on the rayon pool.
    pub parallel: bool,
}

impl Default for CapacityOptions {
    fn default() -> Self {
        Self { merge_tolerance: MERGE_TOLERANCE, parallel: true }
    }
}

/// Sorted distinct values, each cluster represented by its smallest member.
pub fn distinct_values(values: &[f64], tolerance: f64) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut out: Vec<f64> = Vec::new();
    for v in sorted {
        match out.last() {
            Some(&head) if v - head <= tolerance * head.abs().max(1.0) => {}
            _ => out.push(v),
        }
    }
    out
}

/// Work estimate for a curve: distinct values times lattice nodes.
pub fn estimated_cost(model: &LatticeModel, distinct: usize) -> u128 {
    distinct as u128 * model.total_nodes() as u128
}

/// `v_k` and `V(xi >= v_k)` for the distinct values of a claim.
#[derive(Debug, Clone, PartialEq)]
pub struct CapacityCurve {
    values: Vec<f64>,
    capacities: Vec<f64>,
    generator: String,
    claim: String,
    dimension: usize,
    steps: usize,
    horizon: f64,
}

impl CapacityCurve {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn capacities(&self) -> &[f64] {
        &self.capacities
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn generator(&self) -> &str {
        &self.generator
    }

    pub fn claim(&self) -> &str {
        &self.claim
    }

    /// `(dimension, steps, horizon)` of the lattice used.
    pub fn lattice(&self) -> (usize, usize, f64) {
        (self.dimension, self.steps, self.horizon)
    }

    /// `V(xi >= t)`.
    pub fn survival(&self, t: f64) -> f64 {
        let k = self.values.partition_point(|&v| v < t);
        self.capacities.get(k).copied().unwrap_or(0.0)
    }
}

pub fn capacity_curve(model: &LatticeModel, g: &Generator, xi: &Claim) -> Result<CapacityCurve, ChoquetError> {
    capacity_curve_with(model, g, xi, CapacityOptions::default())
}

/// One solve per distinct value of `xi`, each on the indicator `I{xi >= v_k}`.
pub fn capacity_curve_with(
    model: &LatticeModel,
    g: &Generator,
    xi: &Claim,
    options: CapacityOptions,
) -> Result<CapacityCurve, ChoquetError> {
    if !options.merge_tolerance.is_finite() || options.merge_tolerance < 0.0 {
        return Err(ChoquetError::InvalidTolerance(options.merge_tolerance));
    }
    let terminal = xi.terminal_values(model)?;
    let values = distinct_values(&terminal, options.merge_tolerance);
    let solve = |&v: &f64| -> Result<f64, SolveError> {
        let event: Vec<f64> = terminal.iter().map(|&x| if x >= v { 1.0 } else { 0.0 }).collect();
        Ok(solve_values(model, g, event)?.y0)
    };
    let capacities: Vec<f64> = if options.parallel {
        values.par_iter().map(solve).collect::<Result<_, _>>()?
    } else {
        values.iter().map(solve).collect::<Result<_, _>>()?
    };

    if capacities[0] != 1.0 {
        return Err(ChoquetError::NotNormalized(capacities[0]));
    }
    for (k, (&v, &c)) in values.iter().zip(&capacities).enumerate() {
        if !(-MONOTONE_SLACK..=1.0 + MONOTONE_SLACK).contains(&c) {
            return Err(ChoquetError::OutOfRange { value: v, capacity: c });
        }
        if k > 0 && c > capacities[k - 1] + MONOTONE_SLACK {
            return Err(ChoquetError::NonMonotone { value: v, previous: capacities[k - 1], next: c });
        }
    }
    Ok(CapacityCurve {
        values,
        capacities,
        generator: g.label().to_string(),
        claim: xi.label().to_string(),
        dimension: model.dimension(),
        steps: model.steps(),
        horizon: model.remaining_horizon(),
    })
}

/// A Choquet value with its layered decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct ChoquetResult {
    pub value: f64,
    pub curve: CapacityCurve,
    /// `v_1`.
    pub base: f64,
    /// `(v_k - v_{k-1}) V_k` for `k = 2..m`.
    pub terms: Vec<f64>,
}

impl ChoquetResult {
    pub fn layered_sum(&self) -> f64 {
        self.terms.iter().fold(self.base, |acc, t| acc + t)
    }
}

pub fn choquet_expectation(model: &LatticeModel, g: &Generator, xi: &Claim) -> Result<ChoquetResult, ChoquetError> {
    choquet_expectation_with(model, g, xi, CapacityOptions::default())
}

pub fn choquet_expectation_with(
    model: &LatticeModel,
    g: &Generator,
    xi: &Claim,
    options: CapacityOptions,
) -> Result<ChoquetResult, ChoquetError> {
    let curve = capacity_curve_with(model, g, xi, options)?;
    Ok(layered(curve))
}

/// The layered sum of an existing curve.
pub fn layered(curve: CapacityCurve) -> ChoquetResult {
    let v = curve.values();
    let base = v[0];
    let terms: Vec<f64> = (1..v.len()).map(|k| (v[k] - v[k - 1]) * curve.capacities()[k]).collect();
    let value = terms.iter().fold(base, |acc, t| acc + t);
    ChoquetResult { value, curve, base, terms }
}

/// Claims and pairs on which the four Choquet properties are probed.
#[derive(Debug, Clone, Default)]
pub struct PropertyFamily {
    pub claims: Vec<Claim>,
    /// Candidate comonotone pairs; each is certified before use.
    pub pairs: Vec<(Claim, Claim)>,
    pub scales: Vec<f64>,
    pub shifts: Vec<f64>,
}

impl PropertyFamily {
    pub fn new(claims: Vec<Claim>, pairs: Vec<(Claim, Claim)>) -> Self {
        Self { claims, pairs, scales: vec![0.0, 0.5, 2.0, 3.0], shifts: vec![-2.0, 3.0, 5.0] }
    }
}

/// Largest violation seen for each property.
#[derive(Debug, Clone, PartialEq)]
pub struct PropertyReport {
    /// `max (C[xi] - C[eta])+` over pointwise ordered `xi <= eta` in the family.
    pub monotonicity: f64,
    pub ordered_pairs: usize,
    /// `max |C[l xi] - l C[xi]|`.
    pub homogeneity: f64,
    /// `max |C[xi + c] - C[xi] - c|`.
    pub translation: f64,
    /// `max |C[xi + eta] - C[xi] - C[eta]|` over certified pairs.
    pub comonotonic_additivity: f64,
    pub certified_pairs: usize,
    pub rejected_pairs: usize,
}

impl PropertyReport {
    pub fn passed(&self, tolerance: f64) -> bool {
        self.monotonicity <= tolerance
            && self.homogeneity <= tolerance
            && self.translation <= tolerance
            && self.comonotonic_additivity <= tolerance
    }
}

/// Probes monotonicity, positive homogeneity, translation invariance and
/// comonotonic additivity of `C_g` on a family of claims.
pub fn choquet_property_suite(
    model: &LatticeModel,
    g: &Generator,
    family: &PropertyFamily,
) -> Result<PropertyReport, ChoquetError> {
    let c = |xi: &Claim| choquet_expectation(model, g, xi).map(|r| r.value);
    let base: Vec<f64> = family.claims.iter().map(c).collect::<Result<_, _>>()?;
    let nodes: Vec<Vec<f64>> =
        family.claims.iter().map(|xi| xi.terminal_values(model)).collect::<Result<_, _>>()?;

    let mut monotonicity: f64 = 0.0;
    let mut ordered_pairs = 0;
    for i in 0..nodes.len() {
        for j in 0..nodes.len() {
            if i != j && nodes[i].iter().zip(&nodes[j]).all(|(a, b)| a <= b) {
                ordered_pairs += 1;
                monotonicity = monotonicity.max(base[i] - base[j]);
            }
        }
    }

    let mut homogeneity: f64 = 0.0;
    let mut translation: f64 = 0.0;
    for (xi, &cx) in family.claims.iter().zip(&base) {
        for &l in &family.scales {
            homogeneity = homogeneity.max((c(&xi.scale(l))? - l * cx).abs());
        }
        for &s in &family.shifts {
            translation = translation.max((c(&xi.shift(s))? - cx - s).abs());
        }
    }

    let mut comonotonic_additivity: f64 = 0.0;
    let (mut certified_pairs, mut rejected_pairs) = (0, 0);
    for (xi, eta) in &family.pairs {
        if !is_comonotonic(model, xi, eta)? {
            rejected_pairs += 1;
            continue;
        }
        certified_pairs += 1;
        let gap = c(&xi.plus(eta))? - c(xi)? - c(eta)?;
        comonotonic_additivity = comonotonic_additivity.max(gap.abs());
    }

    Ok(PropertyReport {
        monotonicity,
        ordered_pairs,
        homogeneity,
        translation,
        comonotonic_additivity,
        certified_pairs,
        rejected_pairs,
    })
}
