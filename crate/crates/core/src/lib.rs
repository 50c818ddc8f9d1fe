//! Smooth convex extensions of tangency data.
//!
//! Given points with prescribed outer normals, this crate decides whether a
//! convex body of class `C^{1,1}` or `C^{1,omega}` can interpolate them and,
//! when it can, builds and evaluates one.

pub mod body_c11;
pub mod body_c1omega;
pub mod envelope;
pub mod error;
pub mod export;
pub mod feasibility;
pub mod fixtures;
pub mod format;
pub mod geometry;
pub mod modulus;
pub mod sampling;
pub mod verify;

pub use body_c11::BodyC11;
pub use error::{Error, Result};
pub use feasibility::{Datum, FeasibilityReport, TangencyProblem};
pub use geometry::{NormKind, NormSpace, Polytope, Projection};
pub use modulus::{Modulus, ModulusSpec};
pub use verify::{PropertyRecord, VerificationReport};
pub use format::{Body, BodyFile, ProblemFile};
