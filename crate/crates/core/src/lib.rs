//! Numerics for the global-boundary CosFace (GB-CosFace) loss family.
//!
//! The crate is `no_std` (with `alloc`) and holds every pure algorithm:
//!
//! - [`sphere`]: unit vectors, prototype matrices, cosine scores, log-sum-exp.
//! - [`margin`]: normalized softmax, CosFace and ArcFace losses with analytic gradients.
//! - [`boundary`]: balanced threshold, EMA global boundary, mixed boundary and the
//!   GB-CosFace loss and gradient.
//! - [`geometry`]: binary decision-boundary residuals and tracing on the 2-sphere.
//! - [`toy`]: synthetic spherical identities and a free-embedding trainer.
//! - [`eval`]: pair construction, TAR@FAR and cluster statistics.
//! - [`gradcheck`]: finite-difference and gradient-property suites.
//!
//! IO, configuration files and the command line live in the `gbcosface` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod boundary;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod gradcheck;
pub mod margin;
mod math;
pub mod sphere;
pub mod toy;

pub use boundary::{BoundaryDiagnostics, BoundaryState};
pub use error::{Error, Result};
pub use margin::{GradientBundle, LossConfig, ScoreBundle, Variant};
pub use sphere::{PrototypeMatrix, SphereBatch, UnitVector};
