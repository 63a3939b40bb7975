//! 16-bit grayscale images with a TOML sidecar.
//!
//! `name.pgm` is accompanied by `name.meta.toml` holding the sampling and
//! acquisition metadata. Fields are quantized with a power-of-two intensity
//! step, so a field read back from disk and written again reproduces the same
//! bytes.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use image::codecs::pnm::{GraymapHeader, PnmEncoder, PnmHeader, SampleEncoding};
use image::{DynamicImage, ExtendedColorType, ImageBuffer, ImageReader};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::analysis::{SampledImage, Spectrum};
use crate::error::{LatticeError, Result};
use crate::field::{CameraSpec, Frame, GridSpec, IntensityField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageKind {
    Field,
    Frame,
    Spectrum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageMetadata {
    pub kind: ImageKind,
    pub width: usize,
    pub height: usize,
    pub pitch_m: f64,
    pub origin_x_m: f64,
    pub origin_y_m: f64,
    pub timestamp_s: f64,
    pub seed: u64,
    pub bit_depth: u32,
    /// Field intensity represented by one count (fields only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intensity_per_count: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exposure_gain: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub read_noise_sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub facet_count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicted_lattice_constant_m: Option<f64>,
}

/// Extra provenance recorded next to a simulated field.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FieldInfo {
    pub seed: u64,
    pub facet_count: Option<usize>,
    pub predicted_lattice_constant: Option<f64>,
}

pub fn sidecar_path(image_path: &Path) -> PathBuf {
    image_path.with_extension("meta.toml")
}

pub fn write_metadata(image_path: &Path, meta: &ImageMetadata) -> Result<()> {
    let text = toml::to_string(meta).map_err(|e| LatticeError::Format(e.to_string()))?;
    fs::write(sidecar_path(image_path), text)?;
    Ok(())
}

pub fn read_metadata(image_path: &Path) -> Result<ImageMetadata> {
    let path = sidecar_path(image_path);
    let text = fs::read_to_string(&path).map_err(|e| LatticeError::Io(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| LatticeError::Format(format!("{}: {e}", path.display())))
}

fn write_pgm16(path: &Path, counts: &Array2<u16>) -> Result<()> {
    let (h, w) = counts.dim();
    let samples: Vec<u16> = counts.iter().copied().collect();
    let file = fs::File::create(path)?;
    let mut writer = std::io::BufWriter::new(file);
    let header = GraymapHeader {
        encoding: SampleEncoding::Binary,
        width: w as u32,
        height: h as u32,
        maxwhite: 65535,
    };
    PnmEncoder::new(&mut writer)
        .with_header(PnmHeader::from(header))
        .encode(samples.as_slice(), w as u32, h as u32, ExtendedColorType::L16)
        .map_err(|e| LatticeError::Format(e.to_string()))?;
    writer.flush()?;
    Ok(())
}

fn decode(path: &Path) -> Result<DynamicImage> {
    ImageReader::open(path)
        .map_err(|e| LatticeError::Io(format!("{}: {e}", path.display())))?
        .with_guessed_format()
        .map_err(|e| LatticeError::Io(format!("{}: {e}", path.display())))?
        .decode()
        .map_err(|e| LatticeError::Format(format!("{}: {e}", path.display())))
}

fn read_gray16(path: &Path) -> Result<Array2<u16>> {
    let img = match decode(path)? {
        DynamicImage::ImageLuma16(b) => b,
        DynamicImage::ImageLuma8(b) => {
            let (w, h) = b.dimensions();
            ImageBuffer::from_raw(w, h, b.into_raw().into_iter().map(u16::from).collect()).expect("same size")
        }
        other => {
            return Err(LatticeError::Format(format!(
                "{}: expected a grayscale image, got {:?}",
                path.display(),
                other.color()
            )))
        }
    };
    let (w, h) = img.dimensions();
    Array2::from_shape_vec((h as usize, w as usize), img.into_raw()).map_err(|e| LatticeError::Format(e.to_string()))
}

fn check_dims(meta: &ImageMetadata, counts: &Array2<u16>) -> Result<()> {
    if counts.dim() != (meta.height, meta.width) {
        return Err(LatticeError::Format(format!(
            "sidecar says {}x{}, image is {}x{}",
            meta.width,
            meta.height,
            counts.ncols(),
            counts.nrows()
        )));
    }
    Ok(())
}

/// Smallest power of two `s` with `max / s ≤ 65535`.
fn intensity_step(max: f64) -> f64 {
    if !(max > 0.0) {
        return 1.0;
    }
    let mut e = (max / 65535.0).log2().ceil() as i32;
    while max / 2f64.powi(e) > 65535.0 {
        e += 1;
    }
    while max / 2f64.powi(e - 1) <= 65535.0 {
        e -= 1;
    }
    2f64.powi(e)
}

/// Quantizes a field to 16 bits and writes it with its sidecar.
pub fn write_field(path: &Path, field: &IntensityField, info: &FieldInfo) -> Result<ImageMetadata> {
    let step = intensity_step(field.max());
    let counts = field.values.mapv(|v| (v / step).round() as u16);
    write_pgm16(path, &counts)?;
    let g = &field.grid;
    let meta = ImageMetadata {
        kind: ImageKind::Field,
        width: g.width,
        height: g.height,
        pitch_m: g.pitch,
        origin_x_m: g.origin.0,
        origin_y_m: g.origin.1,
        timestamp_s: 0.0,
        seed: info.seed,
        bit_depth: 16,
        intensity_per_count: Some(step),
        exposure_gain: None,
        read_noise_sigma: None,
        facet_count: info.facet_count,
        predicted_lattice_constant_m: info.predicted_lattice_constant,
    };
    write_metadata(path, &meta)?;
    Ok(meta)
}

pub fn read_field(path: &Path) -> Result<(IntensityField, ImageMetadata)> {
    let meta = read_metadata(path)?;
    if meta.kind != ImageKind::Field {
        return Err(LatticeError::Format(format!("{} is not a field image", path.display())));
    }
    let step = meta
        .intensity_per_count
        .ok_or_else(|| LatticeError::Format("field sidecar lacks intensity_per_count".into()))?;
    let counts = read_gray16(path)?;
    check_dims(&meta, &counts)?;
    let grid = GridSpec {
        width: meta.width,
        height: meta.height,
        pitch: meta.pitch_m,
        origin: (meta.origin_x_m, meta.origin_y_m),
    };
    let field = IntensityField::new(grid, counts.mapv(|c| c as f64 * step))?;
    Ok((field, meta))
}

pub fn write_frame(path: &Path, frame: &Frame) -> Result<ImageMetadata> {
    write_pgm16(path, &frame.image)?;
    let (h, w) = frame.image.dim();
    let c = &frame.camera;
    let meta = ImageMetadata {
        kind: ImageKind::Frame,
        width: w,
        height: h,
        pitch_m: c.pixel_size,
        origin_x_m: frame.origin.0,
        origin_y_m: frame.origin.1,
        timestamp_s: frame.timestamp,
        seed: c.seed,
        bit_depth: c.bit_depth,
        intensity_per_count: None,
        exposure_gain: Some(c.exposure_gain),
        read_noise_sigma: Some(c.read_noise_sigma),
        facet_count: None,
        predicted_lattice_constant_m: None,
    };
    write_metadata(path, &meta)?;
    Ok(meta)
}

pub fn read_frame(path: &Path) -> Result<Frame> {
    let meta = read_metadata(path)?;
    if meta.kind != ImageKind::Frame {
        return Err(LatticeError::Format(format!(
            "{} is not a camera frame",
            path.display()
        )));
    }
    let image = read_gray16(path)?;
    check_dims(&meta, &image)?;
    let camera = CameraSpec {
        pixel_size: meta.pitch_m,
        bit_depth: meta.bit_depth,
        exposure_gain: meta.exposure_gain.unwrap_or(1.0),
        read_noise_sigma: meta.read_noise_sigma.unwrap_or(0.0),
        seed: meta.seed,
    };
    camera.validate()?;
    Ok(Frame {
        image,
        timestamp: meta.timestamp_s,
        camera,
        origin: (meta.origin_x_m, meta.origin_y_m),
    })
}

/// Loads any grayscale image for analysis. The pixel pitch comes from
/// `pitch_override` if given, otherwise from the sidecar; field images are
/// rescaled to intensity units.
pub fn load_image(path: &Path, pitch_override: Option<f64>) -> Result<SampledImage> {
    let counts = read_gray16(path)?;
    let meta = if sidecar_path(path).exists() {
        Some(read_metadata(path)?)
    } else {
        None
    };
    if let Some(m) = &meta {
        check_dims(m, &counts)?;
    }
    let pitch = pitch_override.or(meta.as_ref().map(|m| m.pitch_m)).ok_or_else(|| {
        LatticeError::InvalidSpec(format!(
            "{} has no sidecar metadata; supply the pixel pitch explicitly",
            path.display()
        ))
    })?;
    let origin = meta.as_ref().map_or((0.0, 0.0), |m| (m.origin_x_m, m.origin_y_m));
    let scale = meta.as_ref().and_then(|m| m.intensity_per_count).unwrap_or(1.0);
    SampledImage::new(counts.mapv(|c| c as f64 * scale), pitch, origin)
}

/// Writes `log(1 + |F|)` scaled to the full 16-bit range.
pub fn write_spectrum(path: &Path, spectrum: &Spectrum) -> Result<()> {
    let logs = spectrum.magnitude.mapv(f64::ln_1p);
    let max = logs.iter().cloned().fold(0.0, f64::max);
    let scale = if max > 0.0 { 65535.0 / max } else { 0.0 };
    let counts = logs.mapv(|v| (v * scale).round() as u16);
    write_pgm16(path, &counts)?;
    let (h, w) = counts.dim();
    let meta = ImageMetadata {
        kind: ImageKind::Spectrum,
        width: w,
        height: h,
        pitch_m: spectrum.step_x,
        origin_x_m: -(spectrum.center.1 as f64) * spectrum.step_x,
        origin_y_m: -(spectrum.center.0 as f64) * spectrum.step_y,
        timestamp_s: 0.0,
        seed: 0,
        bit_depth: 16,
        intensity_per_count: None,
        exposure_gain: None,
        read_noise_sigma: None,
        facet_count: None,
        predicted_lattice_constant_m: None,
    };
    write_metadata(path, &meta)
}
