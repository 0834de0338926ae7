//! Digital-twin assisted beam selection for an amplify-and-forward relay.
//!
//! The crate is organised bottom-up:
//!
//! - [`array`]: planar array geometry, steering vectors, link angles and the
//!   relay phase-control matrix.
//! - [`scene`], [`trace`], [`channel`]: the indoor scene, an image-method ray
//!   tracer (up to two reflections) and MIMO channel synthesis, which together
//!   form the digital twin used to predict received powers and SINR.
//! - [`codebook`], [`measurement`]: quantised beam grids and beam sweeps against
//!   a (hidden) ground-truth scene.
//! - [`localizer`]: a from-scratch multilayer perceptron that maps SINR sweeps
//!   to transmitter positions, with pre-training and layer-frozen fine-tuning.
//! - [`optimizer`]: genetic and multi-start gradient beam search over twin
//!   predictions, and the closed predict-then-optimize loop.
//! - [`harness`]: the experiment runners behind the CLI.
//!
//! Data-parallel loops go through [`exec::Exec`], which uses rayon when the
//! `parallel` feature is enabled and a plain sequential loop otherwise. Both
//! paths produce identical results for a fixed seed.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod array;
pub mod channel;
pub mod codebook;
pub mod error;
pub mod exec;
pub mod geom;
pub mod harness;
pub mod localizer;
pub mod measurement;
pub mod optimizer;
pub mod scene;
pub mod svg;
pub mod trace;

pub use error::{Error, Result};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// Boltzmann constant, J/K.
pub const BOLTZMANN: f64 = 1.380_649e-23;

/// Degrees to radians.
#[inline]
pub fn deg(v: f64) -> f64 {
    v.to_radians()
}

/// Linear power ratio to decibels.
#[inline]
pub fn to_db(v: f64) -> f64 {
    10.0 * v.log10()
}

/// Watts to dBm.
#[inline]
pub fn to_dbm(w: f64) -> f64 {
    10.0 * (w * 1e3).log10()
}
