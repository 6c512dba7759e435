//! Crop-yield regression on a plot graph.
//!
//! Plots become graph nodes joined by spatial proximity and shared
//! population labels; a four-layer GraphSAGE-style network with mean
//! aggregation regresses yield from vegetation indices, soil and genotype
//! features. Everything numeric runs on the small reverse-mode engine in
//! [`tensor`].

pub mod data;
pub mod error;
pub mod graph;
pub mod model;
pub mod pipeline;
pub mod tensor;
pub mod train;
pub mod vegindex;

pub use error::{Error, ErrorClass, Result};
