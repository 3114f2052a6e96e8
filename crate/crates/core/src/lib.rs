//! Spectral laboratory for Taylor dispersion of a passive scalar in a shear flow.
//!
//! The scalar obeys u_T = ν²u_XX + Δ_⊥u − Aχ(y)u_X on ℝ × Ω. Expanding in the
//! Neumann eigenbasis of Ω gives, per axial wavenumber κ, the linear system
//! dÛ/dT = B(κ)Û with B(κ) = B₀ + κB₁ + κ²B₂.

pub mod cross_section;
pub mod error;
pub mod evolution;
pub mod fourier;
pub mod hypocoercivity;
pub mod linalg;
pub mod manifold;
pub mod modal_operator;
pub mod par;
pub mod quadrature;
pub mod similarity;
pub mod spectral;

pub use error::{LabError, Result};
pub use num_complex::Complex64;

pub type CMatrix = nalgebra::DMatrix<Complex64>;
pub type CVector = nalgebra::DVector<Complex64>;
