//! Simulation and optimal control of trapped Bose-Einstein condensates:
//! Gross-Pitaevskii mean field, multi-orbital MCTDHB, and few-mode Fock
//! models driven by piecewise-linear control parameters, with exact
//! adjoint gradients and quasi-Newton optimization.

pub mod control;
pub mod error;
pub mod fock;
pub mod gp;
pub mod grid;
pub mod io;
pub mod linalg;
pub mod mctdhb;
pub mod oct;
pub mod ode;
pub mod optim;
pub mod units;

pub use error::{Error, Result};
pub use num_complex::Complex64;
