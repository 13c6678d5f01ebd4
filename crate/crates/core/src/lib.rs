//! Stochastic linear bandits with OFUL, Thompson sampling, Greedy and
//! Sieved-Greedy policies, regret-bound certificates, and a reproducible
//! simulation harness.

// `!(x > 0.0)` guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytics;
pub mod environment;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod policies;

pub use environment::{ActionSet, GroupStructure, LinearEnvironment, Scenario};
pub use error::{Error, Result};
pub use linalg::RidgeState;
pub use policies::{Agent, PolicyConfig, PolicyKind, RadiusKind, RadiusParams};
