//! Numerical workbench for semigroup product formulas on dense complex matrices.
//!
//! The crate evaluates Chernoff, Lie-Trotter and Euler approximants of
//! matrix semigroups, computes the defects `‖Cⁿ − e^{n(C−𝟙)}‖` and friends,
//! evaluates the known upper bounds for them, and audits bound against
//! defect. Rate fits over `n`-sweeps summarize the observed convergence.
//!
//! Module map:
//! - [`linalg`]: dense complex kernel (norms, `expm`, powers, resolvents).
//! - [`regions`]: `D_α` / `S_α` geometry and sampled numerical ranges.
//! - [`poisson`]: exact Poisson(n) moment and central/tail sums.
//! - [`defects`]: Chernoff defects, bound formulas, Ritt constant, audits.
//! - [`approximants`]: Chernoff families and the product formulas.
//! - [`families`]: seeded generators of test operators.
//! - [`rates`]: sweeps and power-law fits.
//! - [`cli`]: the `sgbench` command runner.
//! - [`svg`]: the small plotter behind `--svg`.

pub mod approximants;
pub mod cli;
pub mod defects;
pub mod error;
pub mod families;
pub mod linalg;
pub mod poisson;
pub mod rates;
pub mod regions;
pub mod svg;

pub use error::{Error, Result};
pub use linalg::{CVec, Mat};
