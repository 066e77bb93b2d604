//! Two-time-scale decentralized gradient descent over time-varying graphs
//! with lossy neighbor estimates.
//!
//! Agents hold local quadratic objectives and mix their states through a
//! sequence of row-stochastic matrices sharing a common stationary
//! distribution `r`. Each agent only sees a noisy (e.g. stochastically
//! quantized) version of its neighbors' weighted average, damped by a
//! diminishing step `β(t)`, while the gradient step shrinks as `α(t)β(t)`.
//!
//! The crate is split along the lines of the simulation:
//!
//! * [`topology`] builds and validates mixing schedules,
//! * [`noise`] realizes lossy neighbor estimates,
//! * [`objective`] synthesizes the regression benchmark,
//! * [`dimix`] runs the dynamics and Monte Carlo ensembles,
//! * [`analysis`] evaluates the convergence constants and diagnostics,
//! * [`lemma_oracle`] numerically checks the supporting inequalities,
//! * [`cli`] owns configuration, file formats and the `dimix` commands.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analysis;
pub mod cli;
pub mod dimix;
pub mod error;
pub mod lemma_oracle;
pub mod noise;
pub mod objective;
pub mod rng;
pub mod topology;

pub use error::{Error, Result};

/// Crate version echoed into run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
