//! Simulation toolkit for environment-induced determinacy.
//!
//! The crate is organised bottom-up:
//!
//! * [`quantum`] finite-dimensional states, operators, partial traces, entropy
//!   and Born-rule sampling.
//! * [`decoherence`] spin-bath decoherence factors, exact state-vector
//!   evolution, Gaussian decay fits and decoherence-time estimation.
//! * [`sdc`] layered stable determination chains: sizing, construction,
//!   structural validation and seeded stochastic simulation.
//! * [`causal_quantum`] Choi–Jamiolkowski channels, process operators, the
//!   generalised Born rule, Bell/CHSH and extended Wigner's friend scenarios.
//! * [`causal_classical`] DAGs, d-separation, Markov checks, common-cause
//!   screening and local hidden-variable bounds.
//! * [`interferometer`] a single-photon Mach–Zehnder model with an optional
//!   which-path detector.
//!
//! Batch work (Monte Carlo over seeds, per-layer simulation) runs on rayon when
//! the `parallel` feature is enabled and falls back to plain iterators
//! otherwise; see [`exec`].

// `!(x > 0.0)` style checks reject NaN on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod causal_classical;
pub mod causal_quantum;
pub mod decoherence;
mod error;
pub mod exec;
pub mod fmt;
pub mod interferometer;
pub mod quantum;
pub mod rng;
pub mod sdc;

pub use error::{Error, Result};
