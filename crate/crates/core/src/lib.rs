//! Robbins-Monro augmented Lagrangian method (RMALM) for constrained
//! stochastic convex optimization, with a noise-injected exact-ALM harness,
//! a deterministic reference solver, a primal-dual baseline, benchmark
//! problem generators and convergence-rate utilities.
//!
//! Problems have the form
//!
//! ```text
//! minimize    f0(x) + E[F(x, xi)]
//! subject to  h_j(x) <= 0,  j = 1..M
//!             x in X
//! ```
//!
//! where `X` is a set with a cheap Euclidean projection.

pub mod auglag;
pub mod baseline;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod metrics;
pub mod oracle;
pub mod par;
pub mod problem;
pub mod problems;
pub mod projection;
pub mod rmalm;
pub mod rng;
pub mod salm;
pub mod theory;

pub use auglag::{MultiplierVector, PenaltyState, SampleBatch};
pub use error::{Error, Result};
pub use metrics::{MetricsRow, Monitor};
pub use oracle::GroundTruth;
pub use problem::{ConstraintSet, Draw, ObjectiveSampler, SmoothFunction, StochasticProblem};
pub use projection::FeasibleSet;
pub use rmalm::{RmalmConfig, SolveTrace};
pub use rng::RngStream;
