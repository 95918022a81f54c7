//! Synthetic lattice powder-bed layers, neural and level-set segmentation,
//! and the evaluation harness that compares them.

pub mod autodiff;
pub mod contour;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod image;
pub mod lattice;
pub mod perturb;
pub mod render;
pub mod seed;
pub mod segnet;

pub use error::{Error, Result};
pub use image::{Image, Mask};
