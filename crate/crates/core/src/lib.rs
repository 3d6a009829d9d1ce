//! Simulation and verification lab for the reaction-diffusion equation
//! `∂u/∂t = ½Δu + b(u) + σ(u)Ẇ` on the real line, driven by space-time
//! white noise, with logarithmically superlinear drift.

pub mod cli;
pub mod coefficients;
pub mod convolution;
pub mod error;
pub mod experiments;
pub mod grid;
pub mod gronwall;
pub mod heat_kernel;
pub mod moment_bounds;
pub mod noise;
pub mod quad;
pub mod solver;
pub mod weighted_norms;

pub use error::{Error, Result};
