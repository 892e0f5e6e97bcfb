//! Lazy ensembles: exponential-family distributions over pure quantum states
//! `μ(ψ) ∝ exp(-⟨ψ|B|ψ⟩)` that average to a prescribed density matrix while
//! staying as close as possible (in relative entropy) to the Haar measure.
//!
//! - [`spectra`]: validated Hermitian / density matrices and eigendecomposition.
//! - [`partition`]: `ln Z`, occupations, entropy and their oracles.
//! - [`inverse`]: fitting the temperature matrix `B` to a density matrix.
//! - [`sampler`]: Haar and lazy-ensemble sampling, Monte Carlo estimators.
//! - [`conditional`]: scalar-constrained ensembles and composite systems.

pub mod conditional;
pub mod error;
pub mod inverse;
pub mod partition;
pub mod sampler;
pub mod spectra;

pub use error::{Error, Result};
