//! Adaptive radar detection with classical detectors (MF, NMF, AMF, ANMF
//! with SCM and Tyler covariance estimates) and one-class detectors
//! (kernel SVDD and Deep SVDD), all calibrated as CFAR tests from
//! target-free data and benchmarked by Monte Carlo simulation.
//!
//! The linear algebra, the classical statistics and the kernel SVDD solver
//! are generic over [`Real`] (`f32` or `f64`); the aliases below fix the
//! `f64` instantiation used by the simulation and the benchmark.

pub mod cfar;
pub mod classical;
pub mod deep;
pub mod error;
pub mod linalg;
pub mod rng;
pub mod scalar;
pub mod sim;
pub mod svdd;
pub mod verify;

pub use error::{Error, Result};
pub use scalar::Real;

pub type CVector = linalg::ComplexVector<f64>;
pub type CMatrix = linalg::ComplexMatrix<f64>;
pub type HMatrix = linalg::HermitianMatrix<f64>;
