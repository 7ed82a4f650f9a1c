//! Involution algebroids made computable.
//!
//! Lie-algebroid data in a global trivialization is turned into a flip map
//! on the prolongation, and every involution-algebroid axiom is checked
//! numerically with square-free jets standing in for iterated tangent
//! bundles. Matrix groups differentiate into involution algebras, and
//! A-path and A-homotopy transport are integrated as ODE flows.

// `!(x <= tol)` is deliberate: NaN residuals must fail.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod algebroid;
pub mod bundle;
pub mod catalog;
pub mod error;
pub mod fixture;
pub mod flow;
pub mod groupoid;
pub mod jet;
pub mod poly;
pub mod report;
pub mod sampling;
pub mod scalar;

pub use algebroid::{AlgebroidSpec, Anchor, InvolutionAlgebroid};
pub use error::{Error, Result};
pub use jet::{JetPoint, JetScalar};
pub use poly::{PolyMap, Term};
pub use report::{CheckResult, Report};
pub use scalar::Scalar;
