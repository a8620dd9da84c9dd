//! Pseudospectral simulation of the doubly degenerate fourth-order thin-film
//! equation
//!
//! ```text
//! h_t + (h^{α+2} ψ_σ(h_θ + h_θθθ))_θ = 0,   θ ∈ S¹,
//! ```
//!
//! with `ψ_σ(s) = (s² + σ²)^{(α-1)/2} s`, together with the energy,
//! dissipation and asymptotic diagnostics used to study convergence of the
//! film towards a circle.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod error;
pub mod harness;
pub mod integrator;
pub mod io;
pub mod model;
pub mod spectral;

pub use error::{Error, Result};
pub use model::{ModelParams, SteadyStateParams};
pub use spectral::{Grid, PeriodicField, Spectrum};
