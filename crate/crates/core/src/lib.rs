//! Stationary analysis of a two-stage tandem queue with a blocking threshold
//! and Bernoulli feedback.
//!
//! Jobs arrive at station 1 as a Poisson stream, move on to station 2 and,
//! after service there, either leave or return to station 1. Station 1 stops
//! serving while station 2 holds `N` jobs. The process is a quasi-birth-death
//! chain with the station-1 queue as level and the station-2 queue as phase.
//!
//! Solvers:
//!
//! * [`spectral`]: spectral expansion (exact, geometric tail, hybrid).
//! * [`oracle`]: direct solve on a truncated or finite state space.
//! * [`sim`]: discrete-event simulation with batch-means intervals.
//!
//! Model construction, the oracle and the metrics are generic over
//! [`Scalar`], so the same code runs on `f64` or exact rationals; the
//! spectral solver is generic over [`Real`].

// `!(x > y)` is used on purpose to reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod distribution;
mod gth;
pub mod metrics;
pub mod model;
pub mod oracle;
pub mod scalar;
pub mod sim;
pub mod spectral;

pub use distribution::{joint_tv, level_tv, DistributionKind, JointDistribution};
pub use metrics::{compute_metrics, MetricsError, PerformanceMetrics};
pub use model::{build_qbd_matrices, stability_report, ModelError, QbdMatrices, StabilityReport, TandemParams};
pub use oracle::{GeneratorMode, OracleError, TruncatedDistribution, TruncatedGenerator};
pub use scalar::{Real, Scalar};
pub use sim::{run_sim, SimConfig, SimError, SimEstimate};
pub use spectral::{Method, SpectralDistribution, SpectralError, SpectralSolution};

pub use num_rational::BigRational;

/// Double-precision parameters, the common case.
pub type Params = TandemParams<f64>;
/// Parameters over exact rationals.
pub type ExactParams = TandemParams<BigRational>;
pub type Qbd = QbdMatrices<f64>;
pub type ExactQbd = QbdMatrices<BigRational>;
pub type Solution = SpectralSolution<f64>;
pub type Metrics = PerformanceMetrics<f64>;
pub type ExactMetrics = PerformanceMetrics<BigRational>;
pub type Truncated = TruncatedDistribution<f64>;
pub type ExactTruncated = TruncatedDistribution<BigRational>;
