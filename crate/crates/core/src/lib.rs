//! Numerical laboratory for conditional expectations on finite-dimensional von Neumann
//! algebras, their generators, and approximate tensorization certificates.

pub mod algebra;
pub mod entropy;
pub mod error;
pub mod generators;
pub mod lattice;
pub mod linops;
pub mod maps;
pub mod sampling;
pub mod sdp;
pub mod tensorization;
pub mod tol;

pub use error::{AtlabError, Result};
pub use linops::{FactorPair, Operator, C64};
