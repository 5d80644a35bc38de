//! Numerical toolkit for fourth-order curvature flows of graphs: the
//! biharmonic heat semigroup, self-similar corner solutions in mild form, and
//! geometric diagnostics for monotonicity-type identities.

pub mod diagnostics;
pub mod error;
pub mod fd;
pub mod grid;
pub mod mild;
pub mod oracle;
pub mod quadrature;
pub mod semigroup;
pub mod spectral;
pub mod surface_calculus;

pub use error::{Error, Result};
pub use grid::{FarField, FarKind, GridFunction, UniformGrid};
pub use semigroup::{KernelConfig, KernelTable};
