//! Numerical laboratory for `−|∇u|^α F(D²u) + b(x)|∇u|^β = f(x)`.
//!
//! * [`operators`]: Pucci / trace / Bellman operators and their property checks.
//! * [`model`]: exponents, coefficient fields, blow-up rate and amplitude.
//! * [`grid`]: uniform grids, stencils, discrete seminorms.
//! * [`solver`]: δ-continuation Dirichlet solver with stabilized, truncated inner iteration.
//! * [`oracle1d`]: closed forms and shooting for the 1D reductions.
//! * [`ergodic`]: ergodic constant estimation and boundary asymptotics checks.

pub mod config;
pub mod error;
pub mod ergodic;
pub mod expr;
pub mod grid;
mod linalg;
pub mod model;
pub mod operators;
pub mod oracle1d;
pub mod solver;

pub use error::{Error, Result};
pub use grid::{GridFunction, GridVector, Region, UniformGrid};
pub use model::{BlowupCase, BoxDomain, EquationInstance, ErgodicData, ExponentPair, ScalarField};
pub use operators::{EllipticityBounds, OperatorSpec, SymMatrix};
