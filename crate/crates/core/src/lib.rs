//! Feller measures, trace Dirichlet forms and excursion estimators for
//! symmetric Markov processes.
//!
//! - [`chain`]: exact objects on finite symmetric chains (hitting operator,
//!   Feller measures, trace forms, Beurling-Deny data, lattices).
//! - [`sphere`]: Brownian motion and a sphere in ℝⁿ in closed form and by
//!   quadrature.

pub mod bm;
pub mod chain;
pub mod linalg;
pub mod mc;
pub mod scalar;
pub mod sphere;
pub mod tolerances;

pub use scalar::{Rational, Scalar};

pub type ChainF64 = chain::SymmetricChain<f64>;
pub type ChainF32 = chain::SymmetricChain<f32>;
pub type ChainExact = chain::SymmetricChain<Rational>;
pub type MatrixF64 = linalg::DenseMatrix<f64>;
