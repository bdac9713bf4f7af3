//! Joint measurability of finite quantum measurement sets, layers of
//! incompatibility under outcome coarse-graining and disjoint convex mixing of
//! inputs, and the operational witnesses (random access codes, CH facets)
//! that certify them.
//!
//! Module map:
//!
//! - [`linalg`]: dense complex Hermitian algebra (Jacobi eigensolver, Kronecker
//!   products, commutators).
//! - [`measurement`]: POVMs, assemblages, coarse-graining and input mixing,
//!   and constructors for the measurement families used throughout.
//! - [`sdp`]: a small dense primal-dual interior-point SDP solver.
//! - [`jm`]: the parent-POVM SDP deciding joint measurability.
//! - [`classify`]: k-incompatibility scans and the closed-form criteria.
//! - [`robustness`]: white-noise visibility thresholds.
//! - [`witness`]: RAC success probabilities and CH-facet Bell violations.

#![forbid(unsafe_code)]

pub mod classify;
pub mod error;
pub mod jm;
pub mod linalg;
pub mod measurement;
pub mod robustness;
pub mod sdp;
pub mod tol;
pub mod witness;

pub use error::{Error, Result};
pub use linalg::{CMatrix, Hermitian, C64};
pub use measurement::{Assemblage, Povm};
