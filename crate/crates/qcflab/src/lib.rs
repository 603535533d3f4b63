//! Linearized 1D quasicontinuum operators, stationary iterative solvers and
//! discrete Sobolev operator norms.
//!
//! Indices follow the global map `j -> j + N - 1` for interior displacements
//! `j = -N+1..N-1` and `l -> l + N - 1` for strains `l = -N+1..N`.

pub mod cli;
pub mod error;
pub mod iteration;
pub mod linalg;
pub mod model;
pub mod operators;
pub mod opnorms;
pub mod spectral;

pub use error::{Error, Result};
pub use model::{make_params, ModelParams, NormKind, P};
pub use operators::{assemble, Operator, OperatorKind};
