//! Numerical Finsler geometry on the tangent bundle.
//!
//! The crate evaluates the full tensor zoo of a Finsler structure F(x, y) at
//! sample points — fundamental tensor, Cartan tensor, geodesic spray,
//! nonlinear connection, Cartan connection coefficients, covariant
//! derivatives and hh-curvature — assembles lift metrics
//! `alpha*g1 + beta*g2 + gamma*g3` on TM, takes Lie derivatives along
//! complete lifts of base vector fields, and classifies those fields as
//! Killing, homothetic, conformal or none with respect to the lift metric.
//!
//! All derivatives on the primary path come from exact truncated Taylor
//! arithmetic ([`jet`]); finite differences appear only as an independent
//! oracle and alternate evaluation mode ([`fd`]).

pub mod conformal;
pub mod error;
pub mod expr;
pub mod fd;
pub mod finsler;
pub mod geometry;
pub mod grid;
pub mod jet;
pub mod lie;
pub mod lift;
pub mod suites;
pub mod tensor;

pub use error::{Error, Result};
pub use finsler::{FinslerStructure, TangentSample, ValidationReport};
pub use grid::GridSpec;
pub use jet::{Jet, JetOp};
pub use tensor::{Block, IndexInfo, JetTensor, TensorValue, Variance};
