//! Equivalence, divergence and rotation suites.
//!
//! All three share one cell computation: for a claim and a step count, solve
//! `E_g`, build the capacity curve for `C_g`, and, when the claim is a sum of
//! two certified comonotone parts, the additivity gap
//! `E_g[a + b] - E_g[a] - E_g[b]`. Cells run in parallel and are collected in
//! ladder order, so reports do not depend on scheduling.

use std::time::Instant;

use rayon::prelude::*;

use crate::bsde::evaluate;
use crate::choquet::choquet_expectation;
use crate::claims::is_comonotonic;
use crate::generators::{restrict_to_direction, Generator};
use crate::lattice::LatticeModel;
use crate::oracles::{drift_shift_expectation, linear_girsanov_expectation, Monotone, OracleError};

use super::config::{SuiteConfig, SuiteKind};
use super::report::{ReportRow, SuiteReport, Verdict};
use super::spec::{ClaimExpr, CoordinateMap, GeneratorSpec};
use super::LabError;

/// Values of one `(claim, N)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub e_g: f64,
    pub c_g: Option<f64>,
    pub comono_gap: Option<f64>,
    pub runtime_ms: f64,
}

impl Cell {
    pub fn gap(&self) -> Option<f64> {
        self.c_g.map(|c| self.e_g - c)
    }
}

fn elapsed_ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

/// `E_g`, `C_g` and the comonotone additivity gap of `expr` on `model`.
pub fn measure(model: &LatticeModel, g: &Generator, expr: &ClaimExpr, map: &CoordinateMap) -> Result<Cell, LabError> {
    let start = Instant::now();
    let claim = expr.compile(map);
    let e_g = evaluate(model, g, &claim)?;
    let c_g = choquet_expectation(model, g, &claim)?.value;
    let comono_gap = match expr.pair() {
        Some((a, b)) => {
            let (a, b) = (a.compile(map), b.compile(map));
            if is_comonotonic(model, &a, &b)? {
                Some(e_g - evaluate(model, g, &a)? - evaluate(model, g, &b)?)
            } else {
                None
            }
        }
        None => None,
    };
    Ok(Cell { e_g, c_g: Some(c_g), comono_gap, runtime_ms: elapsed_ms(start) })
}

/// `E_g` alone.
pub fn measure_expectation(model: &LatticeModel, g: &Generator, expr: &ClaimExpr, map: &CoordinateMap) -> Result<Cell, LabError> {
    let start = Instant::now();
    let e_g = evaluate(model, g, &expr.compile(map))?;
    Ok(Cell { e_g, c_g: None, comono_gap: None, runtime_ms: elapsed_ms(start) })
}

type Measure = fn(&LatticeModel, &Generator, &ClaimExpr, &CoordinateMap) -> Result<Cell, LabError>;

/// Every step after the first is below `floor` or strictly below its predecessor.
fn shrinking(values: &[f64], floor: f64) -> bool {
    values.windows(2).all(|w| w[1].abs() <= floor || w[1].abs() < w[0].abs())
}

fn model(config: &SuiteConfig, dimension: usize, steps: usize) -> Result<LatticeModel, LabError> {
    Ok(LatticeModel::new(dimension, config.horizon, steps)?)
}

/// Runs `cell` over claims x ladder, in order.
fn grid(
    config: &SuiteConfig,
    g: &Generator,
    exprs: &[ClaimExpr],
    map: &CoordinateMap,
    dimension: usize,
    cell: Measure,
) -> Result<Vec<Vec<Cell>>, LabError> {
    let jobs: Vec<(usize, usize)> =
        (0..exprs.len()).flat_map(|c| config.steps.iter().map(move |&n| (c, n))).collect();
    let cells: Vec<Cell> = jobs
        .par_iter()
        .map(|&(c, n)| cell(&model(config, dimension, n)?, g, &exprs[c], map))
        .collect::<Result<_, LabError>>()?;
    Ok(cells.chunks(config.steps.len()).map(|c| c.to_vec()).collect())
}

#[allow(clippy::too_many_arguments)]
fn row(
    suite: &str,
    generator: &str,
    claim: &ClaimExpr,
    dimension: usize,
    steps: usize,
    cell: &Cell,
    gap: Option<f64>,
    oracle: Option<f64>,
    verdict: Verdict,
) -> ReportRow {
    ReportRow {
        suite: suite.to_string(),
        generator: generator.to_string(),
        claim: claim.to_string(),
        dimension,
        steps,
        e_g: cell.e_g,
        c_g: cell.c_g,
        gap,
        comono_gap: cell.comono_gap,
        oracle,
        oracle_dev: oracle.map(|o| cell.e_g - o),
        verdict,
        runtime_ms: cell.runtime_ms,
    }
}

/// Girsanov value of `expr` when `spec` is linear.
fn girsanov_oracle(spec: &GeneratorSpec, expr: &ClaimExpr, map: &CoordinateMap, dimension: usize, horizon: f64) -> Result<Option<f64>, LabError> {
    match spec.drift(dimension, horizon)? {
        Some(b) => Ok(Some(linear_girsanov_expectation(&b, &expr.terminal(map, dimension), horizon)?)),
        None => Ok(None),
    }
}

/// Girsanov value for linear 1-D drivers, drift-shift value for monotone
/// claims under `g(t,1) z+ + g(t,-1) z-`.
fn one_dimensional_oracle(spec: &GeneratorSpec, expr: &ClaimExpr, horizon: f64) -> Result<Option<f64>, LabError> {
    if spec.is_linear() {
        return girsanov_oracle(spec, expr, &CoordinateMap::Identity, 1, horizon);
    }
    let Some((up, down)) = spec.sides(horizon)? else {
        return Ok(None);
    };
    let f = expr.terminal(&CoordinateMap::Identity, 1);
    for direction in [Monotone::Increasing, Monotone::Decreasing] {
        match drift_shift_expectation(&up, &down, &f, direction, horizon) {
            Ok(v) => return Ok(Some(v)),
            Err(OracleError::NonMonotone(_)) => continue,
            Err(e) => return Err(e.into()),
        }
    }
    Ok(None)
}

/// Closed-form `E_g[expr]` when one is available: Girsanov for linear drivers
/// in any dimension, drift shift for monotone 1-D claims.
pub fn oracle_value(spec: &GeneratorSpec, expr: &ClaimExpr, dimension: usize, horizon: f64) -> Result<Option<f64>, LabError> {
    if dimension == 1 {
        one_dimensional_oracle(spec, expr, horizon)
    } else {
        girsanov_oracle(spec, expr, &CoordinateMap::Identity, dimension, horizon)
    }
}

pub fn run_suite(config: &SuiteConfig) -> Result<SuiteReport, LabError> {
    match config.suite {
        SuiteKind::Equivalence => run_equivalence_suite(config),
        SuiteKind::Divergence => run_divergence_suite(config),
        SuiteKind::Rotation => rotation_reduction_check(config),
    }
}

/// `E_g - C_g` along the ladder. PASS per claim when `|gap|` shrinks (gaps at
/// or below the exactness tolerance count as converged) and the final `|gap|`
/// is within the oracle tolerance. The oracle column holds the Girsanov value
/// when the driver is linear.
pub fn run_equivalence_suite(config: &SuiteConfig) -> Result<SuiteReport, LabError> {
    config.validate()?;
    let spec = config.generator_spec()?;
    let g = spec.build(config.dimension, config.horizon)?;
    let exprs = config.claim_exprs()?;
    let map = CoordinateMap::Identity;
    let cells = grid(config, &g, &exprs, &map, config.dimension, measure)?;
    let tol = &config.tolerances;

    let mut rows = Vec::new();
    for (expr, cells) in exprs.iter().zip(&cells) {
        let oracle = girsanov_oracle(&spec, expr, &map, config.dimension, config.horizon)?;
        let gaps: Vec<f64> = cells.iter().map(|c| c.gap().expect("C_g computed")).collect();
        let last = *gaps.last().expect("non-empty ladder");
        let verdict = Verdict::from_bool(shrinking(&gaps, tol.exactness) && last.abs() <= tol.oracle);
        for (cell, &n) in cells.iter().zip(&config.steps) {
            rows.push(row("equivalence", g.label(), expr, config.dimension, n, cell, cell.gap(), oracle, verdict));
        }
    }
    Ok(SuiteReport { rows })
}

/// The witness gaps of a nonlinear driver against a linear reference.
///
/// PASS per claim when, with `ref` the reference driver's gap at the same N,
/// the tracked gap (comonotone additivity gap when the claim is a certified
/// pair, otherwise `E_g - C_g`) is nonzero, moves by at most the stability
/// tolerance on the last ladder step, and both it and `|E_g - C_g|` exceed
/// `divergence_factor * |ref|` at every N. Reference rows carry `REF`.
pub fn run_divergence_suite(config: &SuiteConfig) -> Result<SuiteReport, LabError> {
    config.validate()?;
    if config.steps.len() < 2 {
        return Err(LabError::Config("the divergence suite needs at least two ladder entries".into()));
    }
    let spec = config.generator_spec()?;
    let g = spec.build(config.dimension, config.horizon)?;
    let reference = config.reference_spec()?.build(config.dimension, config.horizon)?;
    let exprs = config.claim_exprs()?;
    let map = CoordinateMap::Identity;
    let (cells, ref_cells) = rayon::join(
        || grid(config, &g, &exprs, &map, config.dimension, measure),
        || grid(config, &reference, &exprs, &map, config.dimension, measure),
    );
    let (cells, ref_cells) = (cells?, ref_cells?);
    let tol = &config.tolerances;

    let mut rows = Vec::new();
    for ((expr, cells), ref_cells) in exprs.iter().zip(&cells).zip(&ref_cells) {
        let tracked = |c: &Cell| c.comono_gap.or(c.gap()).expect("C_g computed");
        let series: Vec<f64> = cells.iter().map(tracked).collect();
        let k = series.len();
        let nonzero = series.iter().all(|v| v.abs() > tol.exactness);
        let stable = (series[k - 1] - series[k - 2]).abs() <= tol.stability * series[k - 2].abs();
        let separated = cells.iter().zip(ref_cells).all(|(c, r)| {
            let threshold = tol.divergence_factor * tracked(r).abs();
            tracked(c).abs() > threshold && c.gap().expect("C_g computed").abs() > threshold
        });
        let verdict = Verdict::from_bool(nonzero && stable && separated);
        for (cell, &n) in cells.iter().zip(&config.steps) {
            rows.push(row("divergence", g.label(), expr, config.dimension, n, cell, cell.gap(), None, verdict));
        }
        for (cell, &n) in ref_cells.iter().zip(&config.steps) {
            rows.push(row("divergence", reference.label(), expr, config.dimension, n, cell, cell.gap(), None, Verdict::Ref));
        }
    }
    Ok(SuiteReport { rows })
}

/// `E_g[f(a . W_T)]` on the planar lattice against `E_g~[f(W_T)]` on the line
/// under `g~ = restrict_to_direction(g, a)`.
///
/// Two rows per `(claim, N)`: the 2-D solve and the 1-D solve, both with
/// `gap = E_g(2-D) - E_g(1-D)`. Claims are written in `w1`, read as `a . W_T`
/// on the plane. PASS when `|gap|` stays within the exactness tolerance for a
/// coordinate axis `a`, and shrinks along the ladder otherwise.
pub fn rotation_reduction_check(config: &SuiteConfig) -> Result<SuiteReport, LabError> {
    config.validate()?;
    let spec = config.generator_spec()?;
    let g = spec.build(2, config.horizon)?;
    let a = config.direction.clone();
    let line = restrict_to_direction(&g, &a)?;
    let exprs = config.claim_exprs()?;
    let plane_map = CoordinateMap::Projection(a.clone());
    let (plane, flat) = rayon::join(
        || grid(config, &g, &exprs, &plane_map, 2, measure_expectation),
        || grid(config, &line, &exprs, &CoordinateMap::Identity, 1, measure_expectation),
    );
    let (plane, flat) = (plane?, flat?);
    let axis = plane_map.is_axis();
    let tol = &config.tolerances;

    let mut rows = Vec::new();
    for ((expr, plane), flat) in exprs.iter().zip(&plane).zip(&flat) {
        let oracle = match spec.restrict(&a) {
            Some(r) => one_dimensional_oracle(&r, expr, config.horizon)?,
            None => None,
        };
        let gaps: Vec<f64> = plane.iter().zip(flat).map(|(p, f)| p.e_g - f.e_g).collect();
        let ok = if axis { gaps.iter().all(|v| v.abs() <= tol.exactness) } else { shrinking(&gaps, tol.exactness) };
        let verdict = Verdict::from_bool(ok);
        for (k, &n) in config.steps.iter().enumerate() {
            let gap = Some(gaps[k]);
            let (p, f) = (&plane[k], &flat[k]);
            rows.push(row("rotation", g.label(), expr, 2, n, p, gap, oracle, verdict));
            rows.push(row("rotation", line.label(), expr, 1, n, f, gap, oracle, verdict));
        }
    }
    Ok(SuiteReport { rows })
}

/// One `E_g` vs `C_g` comparison. PASS when `|E_g - C_g|` is within the
/// oracle tolerance, i.e. when the two agree.
pub fn compare(
    spec: &GeneratorSpec,
    expr: &ClaimExpr,
    dimension: usize,
    horizon: f64,
    steps: usize,
    tolerance: f64,
) -> Result<SuiteReport, LabError> {
    let g = spec.build(dimension, horizon)?;
    if expr.max_coordinate() > dimension {
        return Err(LabError::Config(format!("claim `{expr}` uses w{} on a {dimension}-D lattice", expr.max_coordinate())));
    }
    let model = LatticeModel::new(dimension, horizon, steps)?;
    let map = CoordinateMap::Identity;
    let cell = measure(&model, &g, expr, &map)?;
    let oracle = oracle_value(spec, expr, dimension, horizon)?;
    let verdict = Verdict::from_bool(cell.gap().expect("C_g computed").abs() <= tolerance);
    Ok(SuiteReport { rows: vec![row("compare", g.label(), expr, dimension, steps, &cell, cell.gap(), oracle, verdict)] })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(kind: SuiteKind, dim: usize) -> SuiteConfig {
        let mut c = SuiteConfig::defaults(kind, dim);
        c.steps = if dim == 1 { vec![20, 40, 80] } else { vec![10, 20, 40] };
        c
    }

    #[test]
    fn shrinking_rule() {
        assert!(shrinking(&[0.3, 0.2, 0.1], 1e-12));
        assert!(!shrinking(&[0.3, 0.2, 0.25], 1e-12));
        assert!(shrinking(&[1e-16, 3e-16, 2e-16], 1e-12));
        assert!(shrinking(&[0.1], 1e-12));
    }

    #[test]
    fn zero_driver_gaps_are_exact() {
        let mut c = small(SuiteKind::Equivalence, 1);
        c.generator = "zero".into();
        let r = run_equivalence_suite(&c).unwrap();
        assert!(r.rows.iter().all(|row| row.gap.unwrap().abs() <= 1e-12));
        assert_eq!(r.verdict(), Verdict::Pass);
    }

    #[test]
    fn swapping_the_generator_flips_the_verdicts() {
        let lin = small(SuiteKind::Equivalence, 1);
        assert_eq!(run_equivalence_suite(&lin).unwrap().verdict(), Verdict::Pass);
        let mut abs = lin.clone();
        abs.generator = "abs:0.5".into();
        let r = run_equivalence_suite(&abs).unwrap();
        assert_eq!(r.verdict(), Verdict::Fail);
        assert!(r.rows.iter().all(|row| row.oracle.is_none()));

        let div = small(SuiteKind::Divergence, 1);
        assert_eq!(run_divergence_suite(&div).unwrap().verdict(), Verdict::Pass);
        let mut flat = div.clone();
        flat.generator = "linear:0.3".into();
        assert_eq!(run_divergence_suite(&flat).unwrap().verdict(), Verdict::Fail);
    }

    #[test]
    fn divergence_rows_include_reference_rows() {
        let r = run_divergence_suite(&small(SuiteKind::Divergence, 1)).unwrap();
        assert_eq!(r.rows.len(), 6);
        assert!(r.rows[3..].iter().all(|row| row.verdict == Verdict::Ref && row.generator == "linear:0.5"));
        for row in &r.rows {
            assert!(row.comono_gap.is_some());
        }
    }

    #[test]
    fn rotation_on_an_axis_is_exact() {
        let mut c = small(SuiteKind::Rotation, 2);
        c.direction = vec![1.0, 0.0];
        let r = rotation_reduction_check(&c).unwrap();
        assert_eq!(r.verdict(), Verdict::Pass);
        for pair in r.rows.chunks(2) {
            assert_eq!(pair[0].e_g.to_bits(), pair[1].e_g.to_bits());
        }
    }

    #[test]
    fn compare_reports_the_drift_shift_oracle() {
        let spec: GeneratorSpec = "abs:0.5".parse().unwrap();
        let expr: ClaimExpr = "ind(w1>=-1)".parse().unwrap();
        let r = compare(&spec, &expr, 1, 1.0, 100, 5e-3).unwrap();
        let row = &r.rows[0];
        assert_eq!(row.gap, Some(0.0));
        assert!((row.oracle.unwrap() - 0.933_192_798_731_141_9).abs() < 1e-12);
        assert_eq!(r.verdict(), Verdict::Pass);
    }

    #[test]
    fn reports_are_deterministic() {
        let c = small(SuiteKind::Divergence, 2);
        let a = run_divergence_suite(&c).unwrap().to_csv_without_runtime().unwrap();
        let b = run_divergence_suite(&c).unwrap().to_csv_without_runtime().unwrap();
        assert_eq!(a, b);
    }
}
