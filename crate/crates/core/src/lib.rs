//! Quantum Zeno and inverse-Zeno dynamics of unstable states.
//!
//! The crate computes survival amplitudes of a state decaying into a
//! structured continuum, with and without measurement, and the effective
//! decay rates that follow from them:
//!
//! * [`model`]: form factors `κ(ω)`, Zeno time, golden-rule rate, discretization.
//! * [`exact`]: closed-form two- and three-level models, dense evolution oracle.
//! * [`volterra`]: memory-kernel solver for `A(t)` and exponential tail fits.
//! * [`rates`]: effective decay rates under pulsed, damped and Rabi observation.
//! * [`zeno`]: the Zeno to inverse-Zeno transition time `τ*` and the `Z` factor.
//! * [`laser`]: self-energy, perturbative pole and the laser-driven decay rate.
//! * [`cli`]: the `zeno` command-line front end.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod exact;
pub mod laser;
pub mod model;
#[allow(clippy::excessive_precision)]
pub mod quadrature;
pub mod rates;
pub mod trace;
pub mod volterra;
pub mod zeno;

pub use error::{Error, Result};
