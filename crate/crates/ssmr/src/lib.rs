//! Data-driven reduced-order modeling and control on spectral submanifolds.
//!
//! High-dimensional dissipative mechanical systems settle onto low-dimensional
//! attracting invariant manifolds. This crate learns polynomial models of the
//! manifold geometry and the reduced dynamics on it from decaying trajectory
//! data, augments them with a linear control matrix regressed from excitation
//! data, and closes the loop with a sequential-convex-programming MPC built on
//! an embedded dense QP solver.
//!
//! The crate is organized along the pipeline:
//!
//! - [`basis`]: ordered monomial feature maps and their Jacobians,
//! - [`plant`]: synthetic mechanical testbeds and a ground-truth benchmark
//!   plant with an analytically known invariant manifold,
//! - [`data`]: trajectory containers, truncation, time-delay embedding,
//!   finite differencing, and regression-data assembly,
//! - [`ssm`]: tangent-space estimation (PCA), manifold geometry and reduced
//!   dynamics regression, invariance diagnostics,
//! - [`control`]: control-matrix regression and assembled control models,
//! - [`mpc`]: discretization, linearization, QP/SCP solvers, and the
//!   receding-horizon loop,
//! - [`pipeline`]: config-driven end-to-end commands backing the `ssmr` CLI.
//!
//! Each major capability has a runnable example under `examples/`.

pub mod basis;
pub mod config;
pub mod control;
pub mod data;
pub mod error;
pub mod io;
pub mod model;
pub mod mpc;
pub mod pipeline;
pub mod plant;
pub mod report;
pub mod ssm;

pub use basis::{build_basis, MultiIndexBasis};
pub use control::SSMRModel;
pub use error::{Error, Result};
pub use ssm::{ReducedDynamics, SSMGeometry};


