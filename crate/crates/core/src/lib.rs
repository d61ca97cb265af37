//! Simulation and estimation for optimal sequential search.
//!
//! Consumers search products in descending reservation utility, stop when
//! the best option in hand beats every unsearched reservation utility, and
//! buy the best option found. The crate simulates such data, evaluates its
//! simulated likelihood, and estimates the structural parameters with two
//! estimators: a nested one that reads the reservation margin off a
//! pre-computed look-up table, and an MPEC one that treats the margin as a
//! free variable tied to the search cost by an equality constraint.

pub mod error;
pub mod estimation;
pub mod harness;
pub mod likelihood;
pub mod model;
pub mod optim;
pub mod par;
pub mod reservation;
pub mod stats;

pub use error::{Error, Result};
pub use estimation::{estimate_benchmark, estimate_mpec, EstimationResult, Method, OptimizerConfig};
pub use likelihood::{DrawSet, Smoothing};
pub use model::{ConsumerRecord, Dataset, Parameters};
pub use par::Execution;
pub use reservation::LookupTable;
pub use stats::RngStream;
