//! Numerical tools for integral discriminants Z(g) = ∫ exp(-g(x)) dx of
//! positive even-degree forms.

pub mod boltzmann;
pub mod error;
pub mod fixedpoint;
pub mod polyform;
pub mod sdp;
pub mod special;
pub mod spherequad;
pub mod variational;

pub use error::{Error, Result};
