//! Prism and beam geometry.
//!
//! A prism with `n` facets splits a collimated beam into `n` sectors. Every
//! sector is deflected toward the optical axis by the thin-prism angle
//! `θ = (μ − 1)·α`. Facet `j` sits at azimuth `φ_j = 2π·j/n` (zero based) and
//! its beam leaves with a transverse wavevector of magnitude `k·sin θ`
//! pointing back through the axis, i.e. along `φ_j + π`.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{LatticeError, Result};

/// Highest facet count accepted by validation.
pub const MAX_FACETS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrismSpec {
    pub facet_count: usize,
    /// Apex angle in radians.
    pub apex_angle: f64,
    pub refractive_index: f64,
}

impl PrismSpec {
    pub fn new(facet_count: usize, apex_angle: f64, refractive_index: f64) -> Result<Self> {
        let spec = Self {
            facet_count,
            apex_angle,
            refractive_index,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_degrees(facet_count: usize, apex_angle_deg: f64, refractive_index: f64) -> Result<Self> {
        Self::new(facet_count, apex_angle_deg.to_radians(), refractive_index)
    }

    pub fn validate(&self) -> Result<()> {
        if self.facet_count < 2 || self.facet_count > MAX_FACETS {
            return Err(LatticeError::InvalidSpec(format!(
                "facet_count must be in [2, {MAX_FACETS}], got {}",
                self.facet_count
            )));
        }
        if !(self.apex_angle > 0.0 && self.apex_angle < PI / 2.0) {
            return Err(LatticeError::InvalidSpec(format!(
                "apex_angle must be in (0, π/2) rad, got {}",
                self.apex_angle
            )));
        }
        if !(self.refractive_index > 1.0) || !self.refractive_index.is_finite() {
            return Err(LatticeError::InvalidSpec(format!(
                "refractive_index must be > 1, got {}",
                self.refractive_index
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamSpec {
    /// Vacuum wavelength in meters.
    pub wavelength: f64,
    /// 1/e² intensity radius of the collimated input beam in meters.
    pub waist: f64,
    /// Optical power in watts.
    pub power: f64,
    /// Field amplitude `E0`; intensities are reported in units of `|E0|²`.
    pub amplitude: f64,
}

impl BeamSpec {
    pub fn new(wavelength: f64, waist: f64, power: f64) -> Result<Self> {
        let spec = Self {
            wavelength,
            waist,
            power,
            amplitude: 1.0,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.wavelength > 0.0) || !self.wavelength.is_finite() {
            return Err(LatticeError::InvalidSpec(format!(
                "wavelength must be > 0, got {}",
                self.wavelength
            )));
        }
        if !(self.waist > 0.0) || !self.waist.is_finite() {
            return Err(LatticeError::InvalidSpec(format!(
                "waist must be > 0, got {}",
                self.waist
            )));
        }
        if !(self.power >= 0.0) || !self.power.is_finite() {
            return Err(LatticeError::InvalidSpec(format!(
                "power must be >= 0, got {}",
                self.power
            )));
        }
        if !self.amplitude.is_finite() {
            return Err(LatticeError::InvalidSpec("amplitude must be finite".into()));
        }
        Ok(())
    }

    pub fn wavenumber(&self) -> f64 {
        2.0 * PI / self.wavelength
    }

    /// Peak intensity `2P/(πw0²)` of the Gaussian input beam, W/m².
    pub fn peak_intensity(&self) -> f64 {
        2.0 * self.power / (PI * self.waist * self.waist)
    }
}

/// Derived wavevectors and placement quantities for one prism/beam pair.
#[derive(Debug, Clone, PartialEq)]
pub struct DeflectionGeometry {
    pub facet_count: usize,
    pub deflection_angle: f64,
    pub wavelength: f64,
    pub wavenumber: f64,
    pub transverse_wavenumber: f64,
    pub facet_azimuths: Vec<f64>,
    pub wavevectors: Vec<Vector3<f64>>,
    /// Distance from the prism vertex to the plane of maximal overlap.
    /// Infinite when the deflection angle is zero.
    pub overlap_distance: f64,
    pub amplitude: f64,
}

impl DeflectionGeometry {
    /// Builds the geometry for an explicit deflection angle. Unlike
    /// [`beam_wavevectors`], `θ = 0` is accepted so that the undeflected limit
    /// can be studied.
    pub fn from_deflection(facet_count: usize, deflection_angle: f64, beam: &BeamSpec) -> Result<Self> {
        beam.validate()?;
        if !(2..=MAX_FACETS).contains(&facet_count) {
            return Err(LatticeError::InvalidSpec(format!(
                "facet_count must be in [2, {MAX_FACETS}], got {facet_count}"
            )));
        }
        if !(0.0..PI / 2.0).contains(&deflection_angle) {
            return Err(LatticeError::DegenerateGeometry(format!(
                "deflection angle {deflection_angle} rad outside [0, π/2)"
            )));
        }
        let k = beam.wavenumber();
        let (sin_t, cos_t) = deflection_angle.sin_cos();
        let facet_azimuths = facet_azimuths(facet_count);
        let wavevectors = facet_azimuths
            .iter()
            .map(|&phi| Vector3::new(-k * sin_t * phi.cos(), -k * sin_t * phi.sin(), k * cos_t))
            .collect();
        let overlap_distance = if deflection_angle > 0.0 {
            beam.waist / deflection_angle.tan()
        } else {
            f64::INFINITY
        };
        Ok(Self {
            facet_count,
            deflection_angle,
            wavelength: beam.wavelength,
            wavenumber: k,
            transverse_wavenumber: k * sin_t,
            facet_azimuths,
            wavevectors,
            overlap_distance,
            amplitude: beam.amplitude,
        })
    }

    /// Transverse (x, y) part of each wavevector.
    pub fn transverse_wavevectors(&self) -> Vec<(f64, f64)> {
        self.wavevectors.iter().map(|k| (k.x, k.y)).collect()
    }

    /// The same geometry rotated about the optical axis.
    pub fn rotated(&self, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        let mut out = self.clone();
        out.facet_azimuths = self.facet_azimuths.iter().map(|a| a + angle).collect();
        out.wavevectors = self
            .wavevectors
            .iter()
            .map(|k| Vector3::new(c * k.x - s * k.y, s * k.x + c * k.y, k.z))
            .collect();
        out
    }
}

/// `φ_j = 2π·j/n` for `j = 0..n`.
pub fn facet_azimuths(facet_count: usize) -> Vec<f64> {
    (0..facet_count)
        .map(|j| 2.0 * PI * j as f64 / facet_count as f64)
        .collect()
}

/// Thin-prism deflection `(μ − 1)·α`.
pub fn deflection_angle(prism: &PrismSpec) -> Result<f64> {
    prism.validate()?;
    Ok((prism.refractive_index - 1.0) * prism.apex_angle)
}

/// Distance `w0 / tan θ` at which the deflected sectors overlap maximally.
pub fn overlap_distance(beam: &BeamSpec, deflection_angle: f64) -> Result<f64> {
    if !(deflection_angle > 0.0) || !deflection_angle.is_finite() {
        return Err(LatticeError::DegenerateGeometry(format!(
            "deflection angle must be > 0, got {deflection_angle}"
        )));
    }
    let t = deflection_angle.tan();
    let d = beam.waist / t;
    if !d.is_finite() || t <= 0.0 {
        return Err(LatticeError::DegenerateGeometry(
            "beams do not overlap at a finite distance".into(),
        ));
    }
    Ok(d)
}

pub fn beam_wavevectors(prism: &PrismSpec, beam: &BeamSpec) -> Result<DeflectionGeometry> {
    let theta = deflection_angle(prism)?;
    DeflectionGeometry::from_deflection(prism.facet_count, theta, beam)
}

/// Nearest-neighbour spacing of the intensity maxima for the periodic cases.
///
/// Three beams at 120° give a triangular lattice with `a = 2λ/(3 sin θ)`;
/// four beams give a square lattice with `a = λ/(√2 sin θ)`. Any other facet
/// count has no closed form here and returns
/// [`LatticeError::UnsupportedFacetCount`].
pub fn predicted_lattice_constant(geometry: &DeflectionGeometry) -> Result<f64> {
    let s = geometry.deflection_angle.sin();
    if s <= 0.0 {
        return Err(LatticeError::DegenerateGeometry(
            "zero deflection gives no lattice".into(),
        ));
    }
    match geometry.facet_count {
        3 => Ok(2.0 * geometry.wavelength / (3.0 * s)),
        4 => Ok(geometry.wavelength / (std::f64::consts::SQRT_2 * s)),
        n => Err(LatticeError::UnsupportedFacetCount(n)),
    }
}
