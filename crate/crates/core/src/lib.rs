//! Characteristic (Goursat) solver for second-order quasilinear hyperbolic
//! systems posed on two intersecting null planes.
//!
//! The domain is the wedge between the planes S¹: x⁰ = x¹ and S²: x⁰ = −x¹ in
//! R^4, truncated by the time cap x⁰ ≤ T and the hyperboloidal cap
//! (x⁰)² − (x¹)² ≤ σ². Double-null coordinates a = x⁰ − x¹, b = x⁰ + x¹ turn
//! the wedge into a staircase-shaped lower set of an (a, b) lattice, which is
//! what [`geometry`] builds and [`field`] stores values on.
//!
//! The solver stack, bottom to top:
//!
//! * [`system`] — quasilinear systems Σ A^{λμ}(x, u) ∂_λ∂_μ u_r + f_r(x, u, ∂u) = 0
//!   with structure probes (affine coefficients, restricted-source quadraticity,
//!   characteristic residuals, hyperbolicity signature).
//! * [`constraints`] — transport of the transversal derivative K = [∂₀u] along
//!   each null plane: the restriction of the interior equations to a plane is a
//!   first-order symmetric system for K once the data satisfy the characteristic
//!   condition.
//! * [`evolution`] — the interior box scheme on the (a, b) lattice with a
//!   frozen-coefficient inner fixed point per cell.
//! * [`einstein`] — pointwise curvature algebra (Christoffel, Ricci, harmonic
//!   gauge vector, reduced operator) and metric catalogs, feeding the reduced
//!   Einstein equations through the same pipeline.
//! * [`kirchhoff`] — the flat-cone integral representation (boundary functional
//!   plus retarded volume kernel) and the Picard iteration built on it.
//! * [`norms`] — weighted Sobolev-type lattice norms on slices, planes, and the
//!   wedge, including the τ-weighted families degenerating at the corner.

pub mod constraints;
pub mod einstein;
pub mod error;
pub mod evolution;
pub mod field;
pub mod geometry;
pub mod kirchhoff;
pub mod norms;
pub mod smooth;
pub mod system;
pub mod tol;

pub use error::{Error, Result};
