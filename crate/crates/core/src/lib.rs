//! Spectral theory of the q⁻¹-Al-Salam–Chihara q-difference operator.
//!
//! The operator `L` acts on functions on the lattice `I = -q^ℕ ∪ z q^ℤ`.
//! Its eigenfunctions are little q-Jacobi type `₂φ₁` series, and for `z = 1`
//! its spectral measure solves the indeterminate moment problem of the
//! q⁻¹-Al-Salam–Chihara polynomials.
//!
//! Layers, bottom up:
//! - [`qcore`]: q-shifted factorials, theta functions, `ᵣφₛ` series.
//! - [`lattice`]: parameters, grids, weight, q-integral, Casorati determinant.
//! - [`eigenfun`]: the operator, polynomials, eigenfunctions, c-functions.
//! - [`spectral`]: discrete spectrum, the measure ν, Green kernel.
//! - [`transform`]: the Fourier-type transform pair built on ν.
//! - [`crosscheck`]: finite-matrix eigenvalue check of the spectrum.
//! - [`cli`]: run configuration, verification report, exports.

pub mod cli;
pub mod crosscheck;
pub mod eigenfun;
pub mod error;
pub mod lattice;
pub mod qcore;
pub mod spectral;
pub mod transform;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
