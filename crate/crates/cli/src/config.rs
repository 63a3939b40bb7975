//! Run configuration.
//!
//! Every physical quantity carries its unit in the key name (`waist_mm`,
//! `wavelength_nm`, ...). Keys without a recognised suffix are rejected with a
//! hint naming the accepted spelling.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use prism_lattice::field::{CameraSpec, GridSpec, PhaseVector};
use prism_lattice::optics::{BeamSpec, PrismSpec};
use prism_lattice::projection::{SpeciesSpec, TelescopeSpec};
use prism_lattice::stability::NoiseModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrismSection {
    pub facet_count: usize,
    pub apex_angle_deg: f64,
    pub refractive_index: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeamSection {
    pub wavelength_nm: f64,
    pub waist_mm: f64,
    #[serde(default = "default_power")]
    pub power_w: f64,
}

fn default_power() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub width_px: usize,
    pub height_px: usize,
    pub pitch_um: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    #[default]
    PlaneWave,
    SectorEnvelope,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct FieldSection {
    #[serde(default)]
    pub model: ModelKind,
    /// Propagation distance for the sector-envelope model; the overlap
    /// distance when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z_mm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phases_rad: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraSection {
    #[serde(default = "default_pixel")]
    pub pixel_size_um: f64,
    #[serde(default = "default_bits")]
    pub bit_depth: u32,
    #[serde(default = "default_gain")]
    pub gain_counts: f64,
    #[serde(default)]
    pub read_noise_counts: f64,
}

fn default_pixel() -> f64 {
    2.8
}
fn default_bits() -> u32 {
    12
}
fn default_gain() -> f64 {
    1000.0
}

impl Default for CameraSection {
    fn default() -> Self {
        Self {
            pixel_size_um: default_pixel(),
            bit_depth: default_bits(),
            gain_counts: default_gain(),
            read_noise_counts: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TelescopeSection {
    #[serde(default = "default_f1")]
    pub f_obj1_mm: f64,
    #[serde(default = "default_f2")]
    pub f_obj2_mm: f64,
    /// Optional imaging telescope used to view the atom plane.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_view1_mm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_view2_mm: Option<f64>,
}

fn default_f1() -> f64 {
    75.0
}
fn default_f2() -> f64 {
    4.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SpeciesSection {
    /// Species data file; the bundled ⁶Li data when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    #[serde(default)]
    pub phase_jitter_rad: f64,
    #[serde(default)]
    pub pointing_drift_rad_per_s: f64,
    #[serde(default)]
    pub intensity_rms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeriesSection {
    pub interval_s: f64,
    pub frame_count: usize,
    #[serde(default)]
    pub write_frames: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pitch_um: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_spacing_um: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_prominence: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub central_fraction: Option<f64>,
    #[serde(default)]
    pub write_spectrum: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ProjectSection {
    /// Lattice constant before the projection telescope.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spacing_um: Option<f64>,
    /// Lattice constant measured through the viewing telescope.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub imaged_spacing_um: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub apex_angle_deg: Vec<f64>,
    pub facet_count: Vec<usize>,
    pub wavelength_nm: Vec<f64>,
    /// Simulate and analyze every point as well as predicting it.
    #[serde(default)]
    pub measure: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prism: Option<PrismSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beam: Option<BeamSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<FieldSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub camera: Option<CameraSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub telescope: Option<TelescopeSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub species: Option<SpeciesSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub series: Option<SeriesSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub analysis: Option<AnalysisSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub project: Option<ProjectSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
}

/// Accepted keys per section, used for unit-suffix hints.
const KEYS: &[(&str, &[&str])] = &[
    ("", &["seed", "output_dir"]),
    ("prism", &["facet_count", "apex_angle_deg", "refractive_index"]),
    ("beam", &["wavelength_nm", "waist_mm", "power_w"]),
    ("grid", &["width_px", "height_px", "pitch_um"]),
    ("field", &["model", "z_mm", "phases_rad"]),
    (
        "camera",
        &["pixel_size_um", "bit_depth", "gain_counts", "read_noise_counts"],
    ),
    ("telescope", &["f_obj1_mm", "f_obj2_mm", "f_view1_mm", "f_view2_mm"]),
    ("species", &["file"]),
    (
        "noise",
        &["phase_jitter_rad", "pointing_drift_rad_per_s", "intensity_rms"],
    ),
    ("series", &["interval_s", "frame_count", "write_frames"]),
    (
        "analysis",
        &[
            "image",
            "pitch_um",
            "expected_spacing_um",
            "min_prominence",
            "central_fraction",
            "write_spectrum",
        ],
    ),
    ("project", &["spacing_um", "imaged_spacing_um"]),
    ("sweep", &["apex_angle_deg", "facet_count", "wavelength_nm", "measure"]),
];

fn check_keys(section: &str, table: &toml::Table) -> Result<()> {
    let known = KEYS
        .iter()
        .find(|(s, _)| *s == section)
        .map(|(_, k)| *k)
        .ok_or_else(|| anyhow!("unknown section [{section}]"))?;
    let label = |k: &str| {
        if section.is_empty() {
            k.to_string()
        } else {
            format!("{section}.{k}")
        }
    };
    for key in table.keys() {
        if section.is_empty() && table[key].is_table() {
            continue;
        }
        if known.contains(&key.as_str()) {
            continue;
        }
        let prefix = format!("{key}_");
        if let Some(k) = known.iter().find(|k| k.starts_with(&prefix)) {
            bail!("key `{}` needs an explicit unit suffix; write `{k}`", label(key));
        }
        bail!("unknown key `{}`; accepted keys: {}", label(key), known.join(", "));
    }
    Ok(())
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let table: toml::Table = text.parse().context("configuration is not valid TOML")?;
        check_keys("", &table)?;
        for (name, value) in &table {
            if let Some(t) = value.as_table() {
                check_keys(name, t)?;
            }
        }
        toml::from_str(text).context("invalid configuration")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).context("serializing configuration")
    }

    pub fn prism(&self) -> Result<PrismSpec> {
        let p = require(&self.prism, "prism")?;
        Ok(PrismSpec::from_degrees(
            p.facet_count,
            p.apex_angle_deg,
            p.refractive_index,
        )?)
    }

    pub fn beam(&self) -> Result<BeamSpec> {
        let b = require(&self.beam, "beam")?;
        Ok(BeamSpec::new(b.wavelength_nm / 1e9, b.waist_mm / 1e3, b.power_w)?)
    }

    pub fn grid(&self) -> Result<GridSpec> {
        let g = require(&self.grid, "grid")?;
        Ok(GridSpec::centered(g.width_px, g.height_px, g.pitch_um / 1e6)?)
    }

    pub fn field(&self) -> FieldSection {
        self.field.clone().unwrap_or_default()
    }

    pub fn phases(&self, facet_count: usize) -> PhaseVector {
        self.field()
            .phases_rad
            .map(PhaseVector)
            .unwrap_or_else(|| PhaseVector::zeros(facet_count))
    }

    pub fn camera(&self) -> Result<CameraSpec> {
        let c = self.camera.clone().unwrap_or_default();
        let spec = CameraSpec {
            pixel_size: c.pixel_size_um / 1e6,
            bit_depth: c.bit_depth,
            exposure_gain: c.gain_counts,
            read_noise_sigma: c.read_noise_counts,
            seed: self.seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn telescope(&self) -> Result<TelescopeSpec> {
        let t = require(&self.telescope, "telescope")?;
        Ok(TelescopeSpec::new(t.f_obj1_mm / 1e3, t.f_obj2_mm / 1e3)?)
    }

    pub fn viewing_telescope(&self) -> Result<Option<TelescopeSpec>> {
        let t = require(&self.telescope, "telescope")?;
        match (t.f_view1_mm, t.f_view2_mm) {
            (Some(a), Some(b)) => Ok(Some(TelescopeSpec::new(a / 1e3, b / 1e3)?)),
            (None, None) => Ok(None),
            _ => bail!("telescope.f_view1_mm and telescope.f_view2_mm must be given together"),
        }
    }

    pub fn species(&self) -> Result<SpeciesSpec> {
        match self.species.as_ref().and_then(|s| s.file.as_ref()) {
            Some(path) => SpeciesSpec::load(path).with_context(|| format!("species file {}", path.display())),
            None => Ok(SpeciesSpec::lithium6()),
        }
    }

    pub fn noise(&self) -> Result<NoiseModel> {
        let n = require(&self.noise, "noise")?;
        let m = NoiseModel {
            phase_jitter_sigma: n.phase_jitter_rad,
            pointing_drift_rate: n.pointing_drift_rad_per_s,
            intensity_rms: n.intensity_rms,
            seed: self.seed,
        };
        m.validate()?;
        Ok(m)
    }
}

pub fn require<'a, T>(section: &'a Option<T>, name: &str) -> Result<&'a T> {
    section
        .as_ref()
        .ok_or_else(|| anyhow!("configuration is missing the [{name}] section"))
}
