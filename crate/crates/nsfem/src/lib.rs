//! Finite element solver for the 2D incompressible Navier-Stokes equations on
//! the unit square, with a classical one-level Galerkin scheme, a two-level
//! coarse/fine scheme, and a manufactured-solution verification harness.

pub mod assembly;
pub mod config;
pub mod experiment;
pub mod femspace;
pub mod mesh;
pub mod quadrature;
pub mod saddle;
pub mod sparse;
pub mod stepper;
pub mod twolevel;
pub mod verification;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("mesh error: {0}")]
    Mesh(String),
    #[error("function space error: {0}")]
    Space(String),
    #[error("assembly error: {0}")]
    Assembly(String),
    #[error("solver error: {0}")]
    Solve(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("verification error: {0}")]
    Verification(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
