//! Depth-constrained Bayesian phase and expectation estimation.
//!
//! The crate is organised bottom-up:
//!
//! - [`bayes`]: the single-ancilla measurement likelihood, Bayesian updates
//!   (an exact grid route and a rejection-filtering particle route) and the
//!   closed-form Bayes risk of a normal prior.
//! - [`schedule`]: experiment-setting policies (α-QPE, RFPE, β-QPE, statistical
//!   sampling) and the closed-form measurement/depth trade-off laws.
//! - [`phase`]: the iterative estimation loop and ensemble driver.
//! - [`statevector`]: a small dense simulator with the hardware-efficient ansatz,
//!   the amplitude-estimation rotation `U = (RΠR†)(PRΠR†P)` and the
//!   single-ancilla phase-kickback circuit.
//! - [`expectation`]: the two-stage (Hoeffding-gated) expectation estimator.
//! - [`vqe`]: Hamiltonian ingestion, energy estimation and the simplex optimiser loop.
//! - [`experiments`]: the seeded CSV harness behind the `alpha-vqe` binary.

// `!(x > 0.0)` style guards deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bayes;
pub mod error;
pub mod expectation;
pub mod experiments;
pub mod optimizer;
pub mod phase;
pub mod rng;
pub mod schedule;
pub mod statevector;
pub mod stats;
pub mod vqe;

pub use error::{Error, Result};
