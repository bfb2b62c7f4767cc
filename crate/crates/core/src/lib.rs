//! Layered high-contrast elastic composites: layer geometry, stochastic
//! layer processes, fine-scale and effective solvers, and diagnostics.

pub mod analysis;
pub mod effective;
pub mod error;
pub mod fem;
pub mod fine_solver;
pub mod grid;
pub mod io;
pub mod linalg;
pub mod microstructure;
pub mod newmark;
pub mod operators;
pub mod stochastic;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
