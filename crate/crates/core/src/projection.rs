//! Telescope projection of the lattice and lattice depth in recoil units.
//!
//! Two recoil conventions are reported side by side:
//!
//! * lattice recoil `h²/(8·m·a²)`, i.e. `ħ²k_L²/2m` with `k_L = π/a` set by the
//!   lattice constant `a`;
//! * photon recoil `h²/(2·m·λ²)`, the kinetic energy of one lattice photon's
//!   momentum.
//!
//! The dipole potential uses the two-level rotating-wave form
//! `U = (3πc²/2ω0³)·(Γ/Δ)·I` with `Δ = ω_L − ω0`. Positive `U` (blue
//! detuning) repels atoms from the bright sites.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::path::Path;

use crate::error::{LatticeError, Result};
use crate::optics::BeamSpec;

pub const PLANCK: f64 = 6.626_070_15e-34;
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

const LI6_DATA: &str = include_str!("../data/li6.species");

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TelescopeSpec {
    /// Focal length of the collecting lens, meters.
    pub f_obj1: f64,
    /// Focal length of the objective, meters.
    pub f_obj2: f64,
}

impl Default for TelescopeSpec {
    fn default() -> Self {
        Self {
            f_obj1: 75e-3,
            f_obj2: 4e-3,
        }
    }
}

impl TelescopeSpec {
    pub fn new(f_obj1: f64, f_obj2: f64) -> Result<Self> {
        let t = Self { f_obj1, f_obj2 };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.f_obj1 > 0.0 && self.f_obj2 > 0.0) || !self.f_obj1.is_finite() || !self.f_obj2.is_finite() {
            return Err(LatticeError::InvalidSpec(format!(
                "focal lengths must be > 0, got {} and {}",
                self.f_obj1, self.f_obj2
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionDirection {
    Demagnify,
    Magnify,
}

/// `f_obj1 / f_obj2`.
pub fn demagnification(t: &TelescopeSpec) -> Result<f64> {
    t.validate()?;
    Ok(t.f_obj1 / t.f_obj2)
}

pub fn project_constant(length: f64, factor: f64, direction: ProjectionDirection) -> Result<f64> {
    if !(factor > 0.0) || !factor.is_finite() {
        return Err(LatticeError::InvalidSpec(format!(
            "projection factor must be > 0, got {factor}"
        )));
    }
    Ok(match direction {
        ProjectionDirection::Demagnify => length / factor,
        ProjectionDirection::Magnify => length * factor,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeciesSpec {
    #[serde(rename = "mass_kg")]
    pub mass: f64,
    #[serde(rename = "transition_wavelength_m")]
    pub transition_wavelength: f64,
    /// Natural linewidth Γ in rad/s.
    #[serde(rename = "linewidth_rad_s")]
    pub natural_linewidth: f64,
}

impl SpeciesSpec {
    /// Parses the `key = value` species format.
    pub fn parse(text: &str) -> Result<Self> {
        let s: Self = toml::from_str(text).map_err(|e| LatticeError::Format(format!("species data: {e}")))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Bundled ⁶Li D2-line data.
    pub fn lithium6() -> Self {
        Self::parse(LI6_DATA).expect("bundled species data is valid")
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("mass_kg", self.mass),
            ("transition_wavelength_m", self.transition_wavelength),
            ("linewidth_rad_s", self.natural_linewidth),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(LatticeError::InvalidSpec(format!("{name} must be > 0, got {v}")));
            }
        }
        Ok(())
    }

    pub fn transition_frequency(&self) -> f64 {
        2.0 * PI * SPEED_OF_LIGHT / self.transition_wavelength
    }
}

/// Lattice recoil `h²/(8·m·a²)`.
pub fn recoil_energy(species: &SpeciesSpec, lattice_constant: f64) -> f64 {
    PLANCK * PLANCK / (8.0 * species.mass * lattice_constant * lattice_constant)
}

/// Photon recoil `h²/(2·m·λ²)`.
pub fn photon_recoil_energy(species: &SpeciesSpec, wavelength: f64) -> f64 {
    PLANCK * PLANCK / (2.0 * species.mass * wavelength * wavelength)
}

/// Potential per unit intensity, J/(W/m²). Errors at zero detuning.
pub fn dipole_coefficient(species: &SpeciesSpec, lattice_wavelength: f64) -> Result<f64> {
    let w0 = species.transition_frequency();
    let wl = 2.0 * PI * SPEED_OF_LIGHT / lattice_wavelength;
    let detuning = wl - w0;
    // closer than this the lattice light is on resonance to within rounding
    if detuning.abs() <= 1e-9 * w0 {
        return Err(LatticeError::ZeroDetuning);
    }
    Ok(3.0 * PI * SPEED_OF_LIGHT * SPEED_OF_LIGHT / (2.0 * w0.powi(3)) * species.natural_linewidth / detuning)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialCharacter {
    /// Red detuning: atoms sit on the bright sites.
    Attractive,
    /// Blue detuning: atoms sit in the dark regions.
    Repulsive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthEstimate {
    /// Peak-to-valley depth in units of the lattice recoil `h²/(8ma²)`.
    pub depth_lattice_recoil: f64,
    /// Same depth in units of the photon recoil `h²/(2mλ²)`.
    pub depth_photon_recoil: f64,
    /// Potential at the intensity maximum, joules (signed).
    pub potential_at_peak: f64,
    pub lattice_recoil: f64,
    pub photon_recoil: f64,
    /// `ω_L − ω0`, rad/s.
    pub detuning: f64,
    pub character: PotentialCharacter,
}

/// Depth of a lattice whose intensity runs from zero to `peak_intensity`.
pub fn lattice_depth_er(
    peak_intensity: f64,
    species: &SpeciesSpec,
    lattice_wavelength: f64,
    lattice_constant: f64,
) -> Result<DepthEstimate> {
    species.validate()?;
    if !(peak_intensity >= 0.0) || !(lattice_wavelength > 0.0) || !(lattice_constant > 0.0) {
        return Err(LatticeError::InvalidSpec(
            "intensity must be >= 0 and wavelength, lattice constant > 0".into(),
        ));
    }
    let coeff = dipole_coefficient(species, lattice_wavelength)?;
    let u_peak = coeff * peak_intensity;
    // valley intensity is zero for full-contrast interference
    let depth = u_peak.abs();
    let er = recoil_energy(species, lattice_constant);
    let ep = photon_recoil_energy(species, lattice_wavelength);
    Ok(DepthEstimate {
        depth_lattice_recoil: depth / er,
        depth_photon_recoil: depth / ep,
        potential_at_peak: u_peak,
        lattice_recoil: er,
        photon_recoil: ep,
        detuning: 2.0 * PI * SPEED_OF_LIGHT / lattice_wavelength - species.transition_frequency(),
        character: if coeff > 0.0 {
            PotentialCharacter::Repulsive
        } else {
            PotentialCharacter::Attractive
        },
    })
}

/// Depth estimates for a full beam → prism → telescope chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainDepth {
    /// Envelope intensity `2P/(πw²)` at the atom plane, W/m².
    pub envelope_intensity: f64,
    /// Lattice maximum `n·I_env` from full-contrast interference of `n` beams.
    pub peak_intensity: f64,
    /// Beam radius at the atom plane, meters.
    pub projected_waist: f64,
    pub peak_to_valley: DepthEstimate,
    /// Depth referenced to the envelope (mean) intensity.
    pub envelope_referenced: DepthEstimate,
}

pub fn chain_depth(
    beam: &BeamSpec,
    facet_count: usize,
    demagnification: f64,
    species: &SpeciesSpec,
    lattice_constant_at_atoms: f64,
) -> Result<ChainDepth> {
    beam.validate()?;
    if !(demagnification > 0.0) {
        return Err(LatticeError::InvalidSpec("demagnification must be > 0".into()));
    }
    let projected_waist = beam.waist / demagnification;
    let envelope_intensity = 2.0 * beam.power / (PI * projected_waist * projected_waist);
    let peak_intensity = facet_count as f64 * envelope_intensity;
    Ok(ChainDepth {
        envelope_intensity,
        peak_intensity,
        projected_waist,
        peak_to_valley: lattice_depth_er(peak_intensity, species, beam.wavelength, lattice_constant_at_atoms)?,
        envelope_referenced: lattice_depth_er(envelope_intensity, species, beam.wavelength, lattice_constant_at_atoms)?,
    })
}
