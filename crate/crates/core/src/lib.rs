//! Matched illumination for camera-based color measurement.
//!
//! Given camera sensitivities `Q`, a multi-channel LED characterization and a
//! target measurement light `e`, find channel weights `c` so that a camera
//! capturing under the LED light, followed by a 3×3 linear correction,
//! reproduces the CIE XYZ values the scene would have under `e`.
//!
//! All spectra live on the 31-point grid 400–700 nm at 10 nm
//! ([`spectral::SpectralGrid::VISIBLE`]).

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod colorimetry;
pub mod correction;
pub mod datasets;
pub mod error;
pub mod illuminator;
pub mod io;
pub mod linalg;
pub mod matcher;
pub mod spectral;
pub mod synth;

pub use error::{Error, Result};
