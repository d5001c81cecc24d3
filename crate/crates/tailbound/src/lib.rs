//! Statistically valid upper confidence bounds on bivariate rare-event
//! probabilities via distributionally robust optimization over
//! orthounimodal (OU) tail distributions.
//!
//! The pipeline has four stages:
//!
//! 1. [`calibration`] turns raw `(x, y)` samples into a [`calibration::ConstraintSet`]:
//!    a tail-mass interval, marginal density caps at the mode, and
//!    Kolmogorov–Smirnov bands on slab probabilities, jointly valid at
//!    confidence `1 - alpha` by a Bonferroni split.
//! 2. [`solver`] maximizes the rare-event probability over all OU tail
//!    distributions satisfying those constraints. The worst case is a
//!    discrete mixture of uniform distributions on "staircase" OU sets,
//!    found by column generation: a small master LP over staircase atoms
//!    plus a multistart derivative-free pricing search.
//! 3. [`pou`] solves the variant where only the first coordinate is in
//!    its tail (partial orthounimodality).
//! 4. [`oracle`] independently audits solver output: a grid-discretized
//!    LP lower bound, Monte Carlo re-estimation, and closed-form
//!    feasibility checks.
//!
//! [`geometry`] holds the exact kernels shared by all of the above, and
//! [`simplex`] the bounded-variable primal simplex used by both the
//! master problems and the grid oracle.

pub mod calibration;
pub mod geometry;
pub mod oracle;
pub mod pou;
pub mod simplex;
pub mod solver;
pub mod synth;

pub mod jsonio;

mod rng;
mod stats;

pub use rng::{derive_seed, substream};
