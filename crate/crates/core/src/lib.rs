//! Proximal preconditioned (spectral) gradient methods.
//!
//! The iteration is a nonlinear forward step through the gradient of a
//! conjugate reference function followed by an anisotropic backward step:
//!
//! ```text
//! y      = x - γ ∇φ*(d)
//! x_next ∈ argmin_z  g(z) + γ φ((z - y)/γ)
//! ```
//!
//! `d` is the exact gradient, a Polyak momentum buffer or a STORM estimate;
//! `g` is the indicator of one of the constraint sets in [`prox::Constraint`].

pub mod direction;
pub mod error;
pub mod harness;
pub mod optimizer;
pub mod polar_express;
pub mod problems;
pub mod prox;
pub mod quadrature;
pub mod reference;
pub mod stationarity;
pub mod tensor;
pub mod validation;

pub use error::{Error, Result};
