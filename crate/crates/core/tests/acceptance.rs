//! Acceptance criteria, one line each. Run with `cargo test --test acceptance`.
//!
//! Every criterion runs at its fixed tolerance. The process exits non-zero
//! when any criterion fails.

use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use gexp::bsde::{comonotonic_additivity_gap, evaluate, g_probability, solve_bsde, substitution_check};
use gexp::choquet::{choquet_expectation, choquet_property_suite, PropertyFamily};
use gexp::claims::{indicator, Claim, Event};
use gexp::generators::{probe_additivity, Generator};
use gexp::lab::{run_divergence_suite, run_equivalence_suite, run_suite, SuiteConfig, SuiteKind, Verdict};
use gexp::lattice::{build_lattice, Point};
use gexp::oracles::{closed_form_z, drift_shift_monotone_expectation, normal_cdf, Monotone, TerminalFunction, ZFormula};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn within_runtime(start: Instant, limit_s: f64) -> (bool, String) {
    let s = start.elapsed().as_secs_f64();
    (s <= limit_s, format!("{s:.2} s (limit {limit_s} s)"))
}

/// `ind(W_T >= -1)` on a one-dimensional lattice.
fn upper_tail() -> Claim {
    indicator(&Event::w_at_least(0, -1.0))
}

/// Random bounded function of one state value.
fn random_function(rng: &mut ChaCha8Rng) -> impl Fn(f64) -> f64 + Send + Sync + Clone + 'static {
    let (a, b, c) = (rng.gen_range(-2.0..2.0), rng.gen_range(0.2..3.0), rng.gen_range(-1.0..1.0));
    let (h, d) = (rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5));
    let e = rng.gen_range(-0.5..0.5);
    move |w: f64| a * (b * w + c).sin() + if w >= d { h } else { 0.0 } + e * w.tanh()
}

fn random_claims(rng: &mut ChaCha8Rng, k: usize, n: usize) -> Vec<Claim> {
    (0..n)
        .map(|i| {
            let f = random_function(rng);
            Claim::new(format!("random{i}"), move |p: &Point| f(p.w(k)))
        })
        .collect()
}

/// Binomial-weighted mean of `f` over the terminal layer of a 1-D lattice.
fn binomial_mean(f: impl Fn(f64) -> f64, horizon: f64, steps: usize) -> f64 {
    let scale = (horizon / steps as f64).sqrt();
    let mut p = 0.5f64.powi(steps as i32);
    let mut mean = 0.0;
    for k in 0..=steps {
        mean += p * f((2 * k as i64 - steps as i64) as f64 * scale);
        p *= (steps - k) as f64 / (k + 1) as f64;
    }
    mean
}

fn solver_exactness() -> Outcome {
    let start = Instant::now();
    let (horizon, steps) = (1.0, 200);
    let model = build_lattice(1, horizon, steps).unwrap();
    let g = Generator::zero(1);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for i in 0..20 {
        let f = random_function(&mut rng);
        let h = f.clone();
        let xi = Claim::new(format!("random{i}"), move |p: &Point| h(p.w(0)));
        let y0 = solve_bsde(&model, &g, &xi).unwrap().g_expectation();
        worst = worst.max((y0 - binomial_mean(f, horizon, steps)).abs());
    }
    let (fast, time) = within_runtime(start, 1.0);
    outcome(worst <= 1e-12 && fast, format!("zero driver, 20 claims, N=200: max |y0 - lattice mean| = {worst:.2e} (tol 1e-12); {time}"))
}

fn sci(values: &[f64], digits: usize) -> String {
    let parts: Vec<String> = values.iter().map(|v| format!("{v:.digits$e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn halving(errors: &[f64]) -> (bool, Vec<f64>) {
    let ratios: Vec<f64> = errors.windows(2).map(|w| w[1] / w[0]).collect();
    (ratios.iter().all(|r| (0.35..=0.65).contains(r)), ratios)
}

fn girsanov_convergence() -> Outcome {
    let start = Instant::now();
    let g = Generator::linear(vec![0.3]);
    let exact = normal_cdf(1.3);
    let errors: Vec<f64> = [100, 200, 400]
        .iter()
        .map(|&n| (evaluate(&build_lattice(1, 1.0, n).unwrap(), &g, &upper_tail()).unwrap() - exact).abs())
        .collect();
    let decreasing = errors.windows(2).all(|w| w[1] < w[0]);
    let (halves, ratios) = halving(&errors);
    let (fast, time) = within_runtime(start, 5.0);
    let errors_s = sci(&errors, 3);
    outcome(
        decreasing && errors[2] <= 5e-3 && halves && fast,
        format!(
            "linear:0.3, ind(W>=-1) vs Phi(1.3): errors {errors_s} (final tol 5e-3), ratios {ratios:.3?} (band [0.35, 0.65]); {time}"
        ),
    )
}

fn equivalence_at_desk_scale() -> Outcome {
    let start = Instant::now();
    let mut details = Vec::new();
    let mut pass = true;
    for generator in ["linear:0.3", "step-linear:0.2,0.4"] {
        let mut config = SuiteConfig::defaults(SuiteKind::Equivalence, 1);
        config.generator = generator.into();
        let report = run_equivalence_suite(&config).unwrap();
        let gaps: Vec<f64> = report.rows.iter().map(|r| r.gap.unwrap()).collect();
        pass &= report.verdict() == Verdict::Pass && gaps.last().unwrap().abs() <= 5e-3;
        details.push(format!("{generator}: gaps {} {}", sci(&gaps, 1), report.verdict()));
    }
    let (fast, time) = within_runtime(start, 10.0);
    outcome(pass && fast, format!("witness sum, N=100..400, |E_g - C_g| tol 5e-3: {}; {time}", details.join("; ")))
}

/// N=3200 comonotone additivity gap of `abs:0.5` on the witness pair.
const DIVERGENCE_AT_3200: f64 = -5.952_496_406_977_559e-2;

fn divergence_witness() -> Outcome {
    let start = Instant::now();
    let config = SuiteConfig::defaults(SuiteKind::Divergence, 1);
    let report = run_divergence_suite(&config).unwrap();
    let (rows, refs): (Vec<_>, Vec<_>) = report.rows.iter().partition(|r| r.verdict != Verdict::Ref);
    let gaps: Vec<f64> = rows.iter().map(|r| r.comono_gap.unwrap()).collect();
    let change = ((gaps[2] - gaps[1]) / gaps[1]).abs();
    let threshold = refs.iter().map(|r| r.comono_gap.unwrap().abs()).fold(0.0, f64::max) * 10.0;
    let separated = rows.iter().all(|r| r.comono_gap.unwrap().abs() > threshold && r.gap.unwrap().abs() > threshold);
    let fine = comonotonic_additivity_gap(
        &build_lattice(1, 1.0, 3200).unwrap(),
        &Generator::abs(0.5, 1),
        &upper_tail(),
        &indicator(&Event::w_between(0, -1.0, 0.0)),
    )
    .unwrap();
    let regression = (fine - DIVERGENCE_AT_3200).abs() <= 1e-12;
    let (fast, time) = within_runtime(start, 60.0);
    let gaps_s = sci(&gaps, 5);
    outcome(
        report.verdict() == Verdict::Pass
            && gaps.iter().all(|g| g.abs() > 1e-12)
            && change <= 0.2
            && separated
            && regression
            && fast,
        format!(
            "abs:0.5 comonotone gap {gaps_s}, last change {:.1}% (tol 20%), linear threshold {threshold:.1e}, N=3200 gap {fine:.6e} (frozen {DIVERGENCE_AT_3200:.6e}); {time}",
            change * 100.0
        ),
    )
}

fn z_formula_match() -> Outcome {
    let target = closed_form_z(ZFormula::UpperTail, 0.0, &[0.0], 1.0, 0.5, 1.0).unwrap().components()[0];
    let g = Generator::abs(0.5, 1);
    let signed: Vec<f64> = [100, 200, 400]
        .iter()
        .map(|&n| solve_bsde(&build_lattice(1, 1.0, n).unwrap(), &g, &upper_tail()).unwrap().z_at(0, 0).unwrap()[0] - target)
        .collect();
    let errors: Vec<f64> = signed.iter().map(|e| e.abs()).collect();
    let (halves, ratios) = halving(&errors);
    let signed_s = sci(&signed, 3);
    outcome(
        errors[2] <= 5e-3 && halves,
        format!("abs:0.5 root z vs {target:.5}: errors {signed_s} (final tol 5e-3), ratios {ratios:.3?} (band [0.35, 0.65])"),
    )
}

fn drift_shift_agreement() -> Outcome {
    let model = build_lattice(1, 1.0, 400).unwrap();
    let g = Generator::abs(0.5, 1);
    let (z_min, _) = solve_bsde(&model, &g, &upper_tail()).unwrap().z_range();
    let f = TerminalFunction::at_least(vec![1.0], -1.0);
    let oracle = drift_shift_monotone_expectation(0.5, &f, Monotone::Increasing, 1.0).unwrap();
    let p = g_probability(&model, &g, &Event::w_at_least(0, -1.0)).unwrap();
    let err = p - oracle;
    outcome(
        z_min >= 0.0 && (oracle - normal_cdf(1.5)).abs() <= 1e-10 && err.abs() <= 5e-3,
        format!("abs:0.5 P_g(W>=-1) at N=400 = {p:.6}, oracle {oracle:.6}, error {err:.3e} (tol 5e-3); min z {z_min:.2e} (must be >= 0)"),
    )
}

fn comonotone_pair(rng: &mut ChaCha8Rng) -> (Claim, Claim) {
    let (a, c) = (rng.gen_range(0.1..2.0), rng.gen_range(-1.0..1.0));
    let (b, d, e) = (rng.gen_range(0.1..2.0), rng.gen_range(-1.0..1.0), rng.gen_range(0.0..1.0));
    (
        Claim::new("tanh", move |p: &Point| a * (p.w(0) - c).tanh()),
        Claim::new("call+step", move |p: &Point| b * (p.w(0) - d).max(0.0) + if p.w(0) >= e { 1.0 } else { 0.0 }),
    )
}

fn choquet_properties() -> Outcome {
    let model = build_lattice(1, 1.0, 100).unwrap();
    let g = Generator::abs(0.5, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut claims = random_claims(&mut rng, 0, 10);
    claims[9] = claims[8].plus(&Claim::constant(0.75));
    let pairs: Vec<(Claim, Claim)> = (0..5).map(|_| comonotone_pair(&mut rng)).collect();
    let report = choquet_property_suite(&model, &g, &PropertyFamily::new(claims, pairs)).unwrap();

    let mut identical = true;
    for event in [Event::w_at_least(0, -1.0), Event::w_at_most(0, 0.3), Event::w_between(0, -0.5, 1.2), Event::always()] {
        let e = evaluate(&model, &g, &indicator(&event)).unwrap();
        let c = choquet_expectation(&model, &g, &indicator(&event)).unwrap().value;
        identical &= e.to_bits() == c.to_bits();
    }
    outcome(
        report.passed(1e-10) && report.certified_pairs == 5 && report.ordered_pairs > 0 && identical,
        format!(
            "abs:0.5, 10 claims, {} certified pairs: monotone {:.1e}, homogeneity {:.1e}, translation {:.1e}, comonotone additivity {:.1e} (tol 1e-10); C_g[I_A] == E_g[I_A] bitwise: {identical}",
            report.certified_pairs, report.monotonicity, report.homogeneity, report.translation, report.comonotonic_additivity
        ),
    )
}

fn solver_symmetries() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let cases = [
        (Generator::abs(0.5, 1), 1, 200),
        (Generator::kink(0.5, 0.2), 1, 200),
        (Generator::linear(vec![0.3]), 1, 200),
        (Generator::euclid(0.5, 2), 2, 50),
    ];
    let (mut translation, mut homogeneity): (f64, f64) = (0.0, 0.0);
    for (g, dim, steps) in &cases {
        let model = build_lattice(*dim, 1.0, *steps).unwrap();
        for xi in random_claims(&mut rng, dim - 1, 10) {
            let base = evaluate(&model, g, &xi).unwrap();
            for c in [-2.0, 5.0] {
                translation = translation.max((evaluate(&model, g, &xi.shift(c)).unwrap() - base - c).abs());
            }
            for l in [0.0, 0.5, 3.0] {
                homogeneity = homogeneity.max((evaluate(&model, g, &xi.scale(l)).unwrap() - l * base).abs());
            }
        }
    }
    outcome(
        translation <= 1e-12 && homogeneity <= 1e-12,
        format!("4 drivers x 10 claims: translation {translation:.1e}, homogeneity {homogeneity:.1e} (tol 1e-12)"),
    )
}

type Substitution = (&'static str, fn(&Point) -> f64, fn(f64, &Point) -> f64);

fn substitution_property() -> Outcome {
    let configs: [Substitution; 5] = [
        ("sin(x + W_T)", |p| p.w(0), |x, p| (x + p.w(0)).sin()),
        ("ind(W_T >= x)", |p| p.w(0).clamp(-1.0, 1.0), |x, p| if p.w(0) >= x { 1.0 } else { 0.0 }),
        ("x tanh(W_T)", |p| if p.w(0) >= 0.0 { 1.0 } else { -2.0 }, |x, p| x * p.w(0).tanh()),
        ("cos(x W_T)", |p| p.w(0) * p.w(0), |x, p| (x * p.w(0)).cos()),
        ("min(x, W_T)+", |p| p.w(0).abs(), |x, p| x.min(p.w(0)).clamp(0.0, 3.0)),
    ];
    let model = build_lattice(1, 1.0, 100).unwrap();
    let mut worst: f64 = 0.0;
    let mut lines = Vec::new();
    for g in [Generator::linear(vec![0.3]), Generator::abs(0.5, 1)] {
        for (name, xi, f) in &configs {
            let d = substitution_check(&model, &g, f, 50, xi).unwrap();
            worst = worst.max(d);
            if d > 1e-12 {
                lines.push(format!("{} {name}: {d:.1e}", g.label()));
            }
        }
    }
    outcome(worst <= 1e-12, format!("5 configurations x 2 drivers at t0 = T/2: max discrepancy {worst:.1e} (tol 1e-12) {}", lines.join(", ")))
}

fn rotation_reduction() -> Outcome {
    let mut axis = SuiteConfig::defaults(SuiteKind::Rotation, 2);
    axis.direction = vec![1.0, 0.0];
    let exact = run_suite(&axis).unwrap();
    let axis_gap = exact.rows.iter().map(|r| r.gap.unwrap().abs()).fold(0.0, f64::max);
    let diagonal = run_suite(&SuiteConfig::defaults(SuiteKind::Rotation, 2)).unwrap();
    let diag: Vec<f64> = diagonal.rows.iter().step_by(2).map(|r| r.gap.unwrap()).collect();
    let diag_s = sci(&diag, 2);
    outcome(
        exact.verdict() == Verdict::Pass && axis_gap <= 1e-12 && diagonal.verdict() == Verdict::Pass,
        format!(
            "a = e1: max |gap| {axis_gap:.1e} (tol 1e-12) {}; a = (1,1)/sqrt2: gaps {diag_s} {}",
            exact.verdict(),
            diagonal.verdict()
        ),
    )
}

fn mixing_residual(g: &Generator, steps: usize, lambda: f64) -> f64 {
    let model = build_lattice(2, 1.0, steps).unwrap();
    let i1 = indicator(&Event::w_at_least(0, 1.0));
    let i2 = indicator(&Event::w_at_least(1, 0.0));
    let e = |xi: &Claim| evaluate(&model, g, xi).unwrap();
    e(&i1.plus(&i2.scale(lambda))) - lambda * e(&i1.plus(&i2)) - (1.0 - lambda) * e(&i1)
}

fn mixing_identity() -> Outcome {
    let linear = mixing_residual(&Generator::linear(vec![0.2, 0.4]), 200, 0.5);
    let euclid = mixing_residual(&Generator::euclid(0.5, 2), 200, 0.5);
    let threshold = (10.0 * linear.abs()).max(1e-12);
    outcome(
        linear.abs() <= 5e-3 && euclid.abs() > threshold,
        format!("N=200, lambda 1/2: linear2:0.2,0.4 residual {linear:.1e} (tol 5e-3), euclid:0.5 residual {euclid:.4e} (must exceed {threshold:.1e})"),
    )
}

fn additivity_probe() -> Outcome {
    let g = Generator::euclid(0.5, 2);
    let r = probe_additivity(&g, &[0.0, 0.5, 1.0], &[(vec![1.0, 0.0], vec![0.0, 1.0])]).unwrap();
    let expected = 2.0 - SQRT_2;
    outcome(
        (r.max_deviation - expected).abs() <= 1e-12,
        format!("euclid:0.5 at p=1: residual {:.15} vs 2 - sqrt2 = {expected:.15} (tol 1e-12)", r.max_deviation),
    )
}

fn determinism() -> Outcome {
    let mut configs = Vec::new();
    for kind in [SuiteKind::Equivalence, SuiteKind::Divergence] {
        for dim in [1, 2] {
            configs.push(SuiteConfig::defaults(kind, dim));
        }
    }
    let mut rotation = SuiteConfig::defaults(SuiteKind::Rotation, 2);
    rotation.direction = vec![FRAC_1_SQRT_2, -FRAC_1_SQRT_2];
    configs.push(rotation);
    let mut differing = Vec::new();
    for config in &configs {
        let a = run_suite(config).unwrap().to_csv_without_runtime().unwrap();
        let b = run_suite(config).unwrap().to_csv_without_runtime().unwrap();
        if a != b {
            differing.push(format!("{} {}-D", config.suite.name(), config.dimension));
        }
    }
    outcome(differing.is_empty(), format!("{} suite configs run twice, differing CSVs: {differing:?}", configs.len()))
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 13] = [
        ("1", solver_exactness),
        ("2", girsanov_convergence),
        ("3", equivalence_at_desk_scale),
        ("4", divergence_witness),
        ("5", z_formula_match),
        ("6", drift_shift_agreement),
        ("7", choquet_properties),
        ("8", solver_symmetries),
        ("9", substitution_property),
        ("10a", rotation_reduction),
        ("10b", mixing_identity),
        ("10c", additivity_probe),
        ("11", determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = Vec::new();
    for (id, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| f == id) {
            continue;
        }
        let result = catch_unwind(AssertUnwindSafe(run))
            .unwrap_or_else(|e| outcome(false, format!("panicked: {:?}", e.downcast_ref::<String>().map(String::as_str).or(e.downcast_ref::<&str>().copied()))));
        println!("criterion {id:>3}: {}  {}", if result.pass { "PASS" } else { "FAIL" }, result.detail);
        if !result.pass {
            failed.push(id);
        }
    }
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failed criteria: {}", failed.join(", "));
        ExitCode::FAILURE
    }
}
