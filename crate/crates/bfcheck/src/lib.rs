//! Simulation-based validation of Bayes factor / Bayesian model averaging
//! computation.
//!
//! The crate simulates from the BMA supermodel implied by a pair of models,
//! feeds the simulated datasets to a candidate Bayes factor computer, and
//! checks the resulting posterior model probabilities with several
//! complementary diagnostics:
//!
//! * rank-uniformity checks for the model index and data-dependent test
//!   quantities ([`engine`], [`stats::gamma_statistic`]),
//! * binary prediction calibration via the Brier-score decomposition with a
//!   bootstrap null ([`stats::miscalibration_test`]),
//! * data-averaged posterior tests (one-sample t, Welch, Gaffke, and a
//!   Bayesian t-test Bayes factor) ([`stats`]),
//! * mean-Bayes-factor summaries with nonparametric lower confidence bounds
//!   ([`stats::good_check_summary`]).
//!
//! A small zoo of model pairs with closed-form Bayes factors ([`zoo`]) and a
//! set of fault injectors ([`fault`]) make it possible to measure each
//! check's false-positive rate and detection power against known-wrong
//! computations ([`history`]).

pub mod bma;
pub mod engine;
pub mod error;
pub mod fault;
pub mod history;
pub mod rng;
pub mod scenario;
pub mod stats;
pub mod zoo;

pub use error::{Error, Result};
