//! Spectral Galerkin simulation of the Wick-renormalized stochastic complex
//! Ginzburg-Landau equation
//!
//! ```text
//! ∂_t u = (i+μ)Δu − ν :|u|²u: + λu + ξ     on 𝕋 = [−1/2, 1/2]²
//! ```
//!
//! driven by complex space-time white noise, together with the numerical
//! machinery used to check the analysis behind it: complex Hermite
//! polynomials and chaos integrals ([`wick`]), Littlewood-Paley blocks and
//! Besov norms ([`dyadic`]), exact Ornstein-Uhlenbeck sampling and Wick powers
//! ([`ou`]), the periodized heat kernels ([`kernels`]), exponential-Euler
//! time stepping ([`solver`]), the linearized flow and the
//! Bismut-Elworthy-Li identity ([`bel`]), and the batch experiment layer
//! ([`experiments`]) behind the `scgl` binary.

pub mod bel;
pub mod config;
pub mod dyadic;
pub mod error;
pub mod experiments;
pub mod kernels;
pub mod ou;
pub mod profile;
pub mod rng;
pub mod snapshot;
pub mod solver;
pub mod spectral;
pub mod stats;
pub mod wick;

pub use error::{Error, Result};
pub use num_complex::Complex64;
pub use spectral::{Grid, GridValues, LinearSymbol, Mode, PhysParams, SpectralField};
