//! Seeded benchmark problem generators and returns-data ingestion.

pub mod cvar;
pub mod least_squares;
pub mod linear_qp;
pub mod qcqp;
pub mod two_stage;

pub use cvar::{gen_cvar, load_returns_csv, parse_returns_csv, synthetic_returns, PortfolioInstance};
pub use least_squares::LeastSquaresSampler;
pub use linear_qp::{gen_linear_qp, LinearQpConstants, LinearQpInstance};
pub use qcqp::{gen_qcqp, QcqpInstance, SampleMode};
pub use two_stage::{gen_two_stage, TwoStageInstance};
