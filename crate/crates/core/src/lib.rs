//! g-expectations on recombining Brownian lattices.
//!
//! A driver `g(t, y, z)` and a terminal claim `xi` determine the backward
//! equation `y_t = xi + int_t^T g(s, y_s, z_s) ds - int_t^T z_s . dW_s`; its
//! value `y_0` is the g-expectation `E_g[xi]`. Restricted to indicators it gives
//! the g-probability `P_g(A) = E_g[I_A]`, a capacity, and with it the Choquet
//! expectation `C_g`. The crate solves both on binomial lattices in one and two
//! dimensions, compares them against closed forms, and runs the experiments
//! that separate drivers for which `E_g = C_g` from those for which it fails.
//!
//! ```
//! use gexp::{build_lattice, evaluate, choquet_expectation, indicator, Event, Generator};
//!
//! let model = build_lattice(1, 1.0, 200).unwrap();
//! let g = Generator::abs(0.5, 1);
//! let xi = indicator(&Event::w_at_least(0, -1.0));
//! let e = evaluate(&model, &g, &xi).unwrap();
//! let c = choquet_expectation(&model, &g, &xi).unwrap().value;
//! assert_eq!(e, c);
//! ```

pub mod bsde;
pub mod choquet;
pub mod claims;
pub mod generators;
pub mod lab;
pub mod lattice;
pub mod oracles;

pub use bsde::{
    comonotonic_additivity_gap, evaluate, g_probability, solve_bsde, solve_root, stability_gap, substitution_check,
    BsdeSolution, SolveError, StabilityReport,
};
pub use choquet::{capacity_curve, choquet_expectation, CapacityCurve, ChoquetError, ChoquetResult};
pub use claims::{combine, indicator, is_comonotonic, Claim, ClaimError, Event};
pub use generators::{restrict_to_direction, Generator, GeneratorError};
pub use lattice::{build_lattice, LatticeError, LatticeModel, Point};
pub use oracles::{normal_cdf, DriftSpec, Monotone, OracleError, TerminalFunction};

// Book chapters, compiled as doc-tests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/lattice.md")]
    mod lattice {}
    #[doc = include_str!("../../../book/src/generators.md")]
    mod generators {}
    #[doc = include_str!("../../../book/src/bsde.md")]
    mod bsde {}
    #[doc = include_str!("../../../book/src/choquet.md")]
    mod choquet {}
    #[doc = include_str!("../../../book/src/oracles.md")]
    mod oracles {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../book/src/accuracy.md")]
    mod accuracy {}
}
