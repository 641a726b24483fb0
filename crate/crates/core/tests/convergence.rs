//! Lattice values against closed forms as N grows.

use gexp::bsde::{evaluate, g_probability, solve_bsde, stability_ladder};
use gexp::claims::{indicator, Claim, Event};
use gexp::generators::Generator;
use gexp::lattice::{build_lattice, Point};
use gexp::oracles::{
    closed_form_z, drift_shift_monotone_expectation, linear_girsanov_expectation, normal_cdf, DriftSpec, Monotone,
    TerminalFunction, ZFormula,
};

fn errors(ladder: &[usize], value: impl Fn(usize) -> f64, exact: f64) -> Vec<f64> {
    ladder.iter().map(|&n| (value(n) - exact).abs()).collect()
}

fn assert_first_order(errors: &[f64]) {
    for w in errors.windows(2) {
        let r = w[1] / w[0];
        assert!((0.35..=0.65).contains(&r), "errors {errors:?}");
    }
}

#[test]
fn smooth_claim_under_linear_driver_converges_at_first_order() {
    let g = Generator::linear(vec![0.3]);
    let xi = Claim::new("sin", |p: &Point| p.w(0).sin());
    let b = DriftSpec::constant(vec![0.3], 1.0).unwrap();
    let exact = linear_girsanov_expectation(&b, &TerminalFunction::bounded("sin", 1, 1.0, |x| x[0].sin()), 1.0).unwrap();
    // sin(0.3) e^{-1/2}
    assert!((exact - 0.3f64.sin() * (-0.5f64).exp()).abs() < 1e-10);
    let e = errors(&[100, 200, 400], |n| evaluate(&build_lattice(1, 1.0, n).unwrap(), &g, &xi).unwrap(), exact);
    assert_first_order(&e);
    assert!(e[2] < 5e-4, "{e:?}");
}

#[test]
fn smooth_monotone_claim_under_abs_driver_converges_at_first_order() {
    let g = Generator::abs(0.5, 1);
    let xi = Claim::new("tanh", |p: &Point| p.w(0).tanh());
    let f = TerminalFunction::bounded("tanh", 1, 1.0, |x| x[0].tanh());
    let exact = drift_shift_monotone_expectation(0.5, &f, Monotone::Increasing, 1.0).unwrap();
    let e = errors(&[100, 200, 400], |n| evaluate(&build_lattice(1, 1.0, n).unwrap(), &g, &xi).unwrap(), exact);
    assert_first_order(&e);
}

#[test]
fn decreasing_claim_uses_the_opposite_drift() {
    let g = Generator::abs(0.5, 1);
    let xi = Claim::new("-tanh", |p: &Point| -p.w(0).tanh());
    let f = TerminalFunction::bounded("-tanh", 1, 1.0, |x| -x[0].tanh());
    let exact = drift_shift_monotone_expectation(0.5, &f, Monotone::Decreasing, 1.0).unwrap();
    let up = drift_shift_monotone_expectation(0.5, &TerminalFunction::bounded("tanh", 1, 1.0, |x| x[0].tanh()), Monotone::Increasing, 1.0)
        .unwrap();
    // sublinear, so E_g[-X] is not -E_g[X]
    assert!((exact + up).abs() > 0.1);
    let v = evaluate(&build_lattice(1, 1.0, 800).unwrap(), &g, &xi).unwrap();
    assert!((v - exact).abs() < 2e-3, "{v} vs {exact}");
}

#[test]
fn tail_indicator_errors_fall_below_tolerance_on_a_fine_lattice() {
    let model = build_lattice(1, 1.0, 3200).unwrap();
    let xi = indicator(&Event::w_at_least(0, -1.0));

    let linear = evaluate(&model, &Generator::linear(vec![0.3]), &xi).unwrap();
    assert!((linear - normal_cdf(1.3)).abs() < 5e-3);

    let abs = Generator::abs(0.5, 1);
    let p = g_probability(&model, &abs, &Event::w_at_least(0, -1.0)).unwrap();
    assert!((p - normal_cdf(1.5)).abs() < 5e-3);

    let z = solve_bsde(&model, &abs, &xi).unwrap().z_at(0, 0).unwrap()[0];
    let target = closed_form_z(ZFormula::UpperTail, 0.0, &[0.0], 1.0, 0.5, 1.0).unwrap().components()[0];
    assert!((z - target).abs() < 5e-3, "{z} vs {target}");
}

#[test]
fn tail_indicator_error_is_dominated_by_the_threshold_atom() {
    // half the terminal mass at W_T = -1 accounts for most of the N = 400 error
    let n = 400;
    let model = build_lattice(1, 1.0, n).unwrap();
    let g = Generator::zero(1);
    let at_least = evaluate(&model, &g, &indicator(&Event::w_at_least(0, -1.0))).unwrap();
    let above = evaluate(&model, &g, &indicator(&Event::new("w1>-1", |p| p.w(0) > -1.0 + 1e-9))).unwrap();
    let midpoint = 0.5 * (at_least + above);
    let exact = normal_cdf(1.0);
    assert!((at_least - exact).abs() > 5e-3);
    assert!((midpoint - exact).abs() < 5e-4, "{midpoint} vs {exact}");
}

#[test]
fn stability_ratio_stays_bounded_along_a_ladder() {
    let g = Generator::abs(0.5, 1);
    let a = Claim::new("tanh", |p: &Point| p.w(0).tanh());
    let b = indicator(&Event::w_at_least(0, 0.0));
    let ladder = stability_ladder(1, 1.0, &[25, 50, 100], &g, &a, &b).unwrap();
    assert!(ladder.bounded(10.0), "{ladder:?}");
    for r in &ladder.reports {
        assert!(r.left() <= r.ratio * r.terminal_term + 1e-12);
    }
}
