//! High-dimensional independent component analysis.
//!
//! The pipeline is prewhitening ([`whiten`]), an initial direction from
//! random slices of a projected fourth-cumulant estimate ([`init`]), and
//! deflationary fixed-point refinement ([`fastica`]). [`inference`] aligns
//! the result with a reference and attaches asymptotic intervals.

pub mod error;
pub mod experiment;
pub mod fastica;
pub mod inference;
pub mod init;
pub mod io;
pub mod rng;
pub mod pipeline;
pub mod robust_moments;
pub mod simulate;
pub mod tensorops;
pub mod whiten;

pub use error::{Error, Result};
