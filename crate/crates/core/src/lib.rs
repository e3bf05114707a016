//! Online resource allocation with Gaussian chance constraints.
//!
//! Requests arrive one at a time, each offering `k` consumption schemes over
//! `m` resources with uncertain (Gaussian) consumption. Every chance
//! constraint `P(sum a_tj' x_t <= b_j) >= eta_j` is equivalent to a
//! second-order cone constraint, which is linearized so that an online
//! primal-dual method can price resources one arrival at a time.
//!
//! The numerical core is generic over [`Scalar`] (`f32` or `f64`); the
//! `*64` aliases below fix it to `f64`, which is what the experiment
//! harness and the command line use.

pub mod cli;
pub mod error;
pub mod experiments;
pub mod format;
pub mod model;
pub mod oracle;
pub mod scalar;
pub mod solvers;
pub mod stats;
pub mod transform;

pub use error::{Error, Result};
pub use model::{
    objective_of, validate, AssignmentMode, Decision, Instance, Matrix, Request, Solution,
    SolverConfig, TieBreak, Violation,
};
pub use scalar::Scalar;

pub type Request64 = Request<f64>;
pub type Instance64 = Instance<f64>;
pub type Solution64 = Solution<f64>;
pub type Matrix64 = Matrix<f64>;
pub type DualState64 = solvers::DualState<f64>;
pub type MetricsReport64 = oracle::MetricsReport<f64>;

pub type Instance32 = Instance<f32>;
pub type Solution32 = Solution<f32>;
