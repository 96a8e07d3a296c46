//! Control-landscape analysis of a three-level Λ-atom around the `ε(t) = 0`
//! critical point.
//!
//! * [`linalg`]: small dense complex matrices, Hermitian eigensolver, exact
//!   unitary exponentials.
//! * [`dynamics`]: the Λ-system, piecewise-constant propagation, the
//!   objective `J = P(1→2) - λ P(1→3)` and its gradient.
//! * [`perturbation`]: Dyson-series terms of `⟨3|U_T|1⟩` and `⟨2|U_T|1⟩`
//!   around zero field, the escape pulse and the fourth-order growth test.
//! * [`optimize`]: GRAPE and BFGS ascent producing full run records.
//! * [`experiments`]: seeded ensembles, `c0` sweeps and scaling studies.
//!
//! Ensembles run on rayon when the `parallel` feature (default) is enabled
//! and sequentially otherwise; results are identical either way.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod optimize;
pub mod perturbation;

pub use error::{Error, Result};
