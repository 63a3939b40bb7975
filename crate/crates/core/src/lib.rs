//! Simulation and analysis of optical lattices formed by a single Gaussian
//! beam split by an n-facet prism.
//!
//! Lengths are in meters, angles in radians and intensities in units of the
//! input `|E0|²` unless stated otherwise.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod field;
pub mod io;
pub mod optics;
pub mod projection;
pub mod stability;

pub use error::{LatticeError, Result};
pub use field::{
    plane_wave_intensity, render_frame, sector_envelope_field, sector_index, CameraSpec, Frame, GridSpec,
    IntensityField, PhaseVector, PlaneWaveModel,
};
pub use optics::{
    beam_wavevectors, deflection_angle, facet_azimuths, overlap_distance, predicted_lattice_constant, BeamSpec,
    DeflectionGeometry, PrismSpec,
};
