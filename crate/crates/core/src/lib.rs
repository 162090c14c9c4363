//! Exact and perturbed proximal gradient methods for composite problems
//! `F = f + g`, where `f` is smooth (possibly with an intractable gradient
//! given as an expectation) and `g` is a convex penalty with a closed-form
//! proximal map.
//!
//! The crate is organised as:
//!
//! - [`prox`]: penalties, proximal operators, the proximal-gradient map and
//!   the majorizing surrogate.
//! - [`solvers`]: plain, perturbed and accelerated (FISTA) proximal gradient
//!   loops, weighted averaging, schedules and rate-table presets.
//! - [`oracles`]: gradient approximations (exact, minibatch, i.i.d. Monte
//!   Carlo, MCMC) and their bias/variance diagnostics.
//! - [`models`]: least-squares lasso instances, a discrete Markov random field
//!   with an enumeration ground truth, and logistic regression with random
//!   effects sampled by Polya-Gamma data augmentation.
//! - [`harness`]: experiment configs, metrics, replication, rate fitting and
//!   CSV/JSON export.
//!
//! See the `examples/` directory of this crate for one runnable program per
//! capability.

// `!(x > 0.0)` is used on purpose to reject NaN along with the bad range.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod harness;
pub mod models;
pub mod oracles;
pub mod prox;
pub mod solvers;
pub mod validate;

pub use error::{Error, Result};
pub use prox::{BoxConstraint, ElasticNetPenalty, ParamVector, Penalty, SmoothObjective};
pub use solvers::{BatchSchedule, RunTrace, StepSchedule, TSequence, WeightSchedule};

/// Random stream type used throughout the crate.
pub type Stream = rand_chacha::ChaCha8Rng;

/// Seeded stream, the single entry point for reproducible randomness.
pub fn stream(seed: u64) -> Stream {
    use rand::SeedableRng;
    Stream::seed_from_u64(seed)
}

/// Independent stream for replication `id` of a run seeded with `seed`.
pub fn substream(seed: u64, id: u64) -> Stream {
    use rand::SeedableRng;
    let mut rng = Stream::seed_from_u64(seed);
    rng.set_stream(id.wrapping_add(1));
    rng
}
