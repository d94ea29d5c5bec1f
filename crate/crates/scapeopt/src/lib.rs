//! Policy optimization for a costly stochastic simulator.
//!
//! The toolkit couples a Sugarscape-style agent-based model with pollution
//! externalities (`sim`) to a Gaussian-process surrogate engine (`gp`).
//! On top of the surrogate sit two analysis tools:
//!
//! - `sensitivity`: a likelihood-ratio test of additivity of the objective
//!   f(x, theta) in policy variables x and state variables theta, which tells
//!   us whether the optimal policy is sensitive to the system state;
//! - `bo`: sequential Expected-Improvement Bayesian optimization of the
//!   policy at fixed state, with a random-search baseline.
//!
//! `runner` evaluates f(x, theta) as a replicate-ensemble average of
//! simulation metrics (`metrics`), `design` provides Latin hypercube initial
//! designs, and `config` holds the experiment configuration schema consumed
//! by the `scapeopt` binary.

pub mod bo;
pub mod config;
pub mod design;
pub mod error;
pub mod gp;
pub mod metrics;
pub mod runner;
pub mod sensitivity;
pub mod sim;

pub use error::{Error, Result};
