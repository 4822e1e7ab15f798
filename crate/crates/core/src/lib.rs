//! Multiclass AUC learning toolkit.
//!
//! The crate is organised bottom-up:
//!
//! * [`dataset`] loads, synthesises and indexes labelled data.
//! * [`metrics`] computes pairwise AUCs and their one-vs-one / one-vs-all
//!   aggregations.
//! * [`surrogates`] holds the pairwise surrogate loss family and the
//!   Bernstein polynomial approximation used for losses without an exact
//!   factorisation.
//! * [`reference`] evaluates the pairwise empirical risk and its gradient by
//!   brute force. Every fast kernel is tested against it.
//! * [`kernels`] evaluates the same risk in `O(N * N_C)` (or
//!   `O(N_C * N log N)` for the hinge loss).
//! * [`model`] and [`trainer`] fit a linear-softmax scorer by empirical
//!   surrogate risk minimisation.
//! * [`verify`] and [`bench`] are the oracle-equivalence and timing harnesses
//!   used by the command-line tool.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bench;
pub mod dataset;
mod error;
pub mod kernels;
pub mod metrics;
pub mod model;
pub mod reference;
pub mod rng;
pub mod surrogates;
pub mod trainer;
pub mod verify;

pub use error::{Error, Result};

pub use dataset::{ClassIndex, Dataset, OneHot};
pub use kernels::{dispatch_fast, FastRiskOutput, KernelCounters};
pub use metrics::{PairAucMatrix, ScoreMatrix};
pub use model::LinearSoftmaxModel;
pub use reference::{RiskValue, ScoreGradient};
pub use surrogates::{BernsteinCoeffs, Loss, SurrogateSpec};
pub use trainer::{Batch, TrainConfig, TrainTrace};
