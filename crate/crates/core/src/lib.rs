//! Finite-time blow-up laboratory for the one-dimensional stochastic wave
//! equation `u_tt = u_xx + σ(u) Ẇ + b(u)` driven by space-time white noise.
//!
//! The crate is organised bottom-up:
//!
//! - [`kernels`]: the wave Green kernels on `[0,1]` (Dirichlet), the circle and the line.
//! - [`drift`]: a small expression language for drift functions `b`.
//! - [`osgood`]: the blow-up integral `T(α,β)` with a Finite/Infinite/Inconclusive verdict.
//! - [`volterra`]: solvers for the associated integral equations and blow-up time estimates.
//! - [`noise`]: seeded white-noise grids and the Gaussian processes built from them.
//! - [`spde`]: the leapfrog field solver, observables and Monte Carlo blow-up frequencies.
//! - [`recipes`], [`config`], [`table`]: experiment orchestration and CSV output.

pub mod config;
pub mod drift;
pub mod error;
pub mod kernels;
pub mod noise;
pub mod osgood;
pub mod quadrature;
pub mod recipes;
pub mod rng;
pub mod spde;
pub mod stats;
pub mod table;
pub mod volterra;

pub use error::{Error, Result};
