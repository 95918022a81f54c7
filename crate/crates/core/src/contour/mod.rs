//! Level-set active contour with a hybrid region/edge energy.
//!
//! The level set `φ` (negative inside) evolves by
//!
//! ```text
//! φ_t = w·F̂ + (1 − w)·(g·κ|∇φ| + ∇g·∇φ) + μ·κ|∇φ|
//! ```
//!
//! where `F = (I − u_in)² − (I − u_out)²` uses local means over a
//! `(2r + 1)²` window, normalised by its largest magnitude on the band, `g`
//! is the edge indicator of the Gaussian-smoothed image, `κ` the curvature
//! (central differences) and the `∇g·∇φ` advection is upwinded. `φ` is
//! reset to a signed distance every `reinit_every` iterations.

mod calibrate;
mod evolve;
mod levelset;

pub use calibrate::{
    calibrate, mean_accuracy, read_score_table, write_score_table, Calibration, CalibrationGrid,
    CalibrationPair, GridScore,
};
pub use evolve::{edge_indicator, energy, evolve, evolve_traced, AcParams, Evolution, BAND_HALF_WIDTH, EDGE_SIGMA, STOP_WINDOW};
pub use levelset::{init_levelset, reinitialize, LevelSet};
