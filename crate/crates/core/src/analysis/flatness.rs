use ndarray::Array2;
use num_complex::Complex64;
use rustfft::FftDirection;

use super::{dominant_ring, fft2, fft_spectrum, SampledImage, WindowFunction};
use crate::error::{LatticeError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlatnessOptions {
    /// Radius of the evaluated disk as a fraction of the illuminated radius.
    pub central_fraction: f64,
    /// Fraction of the maximum that bounds the illuminated region.
    pub threshold: f64,
    /// Fringe frequency in cycles per meter. Detected from the spectrum when
    /// absent; no low-pass is applied if no fringes are found.
    pub fringe_frequency: Option<f64>,
}

impl Default for FlatnessOptions {
    fn default() -> Self {
        Self {
            central_fraction: 0.5,
            threshold: 0.05,
            fringe_frequency: None,
        }
    }
}

/// Gaussian low-pass with its cutoff at half the fringe frequency
/// (filter σ = cutoff/2).
fn low_pass(values: &Array2<f64>, pitch: f64, fringe_frequency: f64) -> Array2<f64> {
    let (h, w) = values.dim();
    let mut data = values.mapv(|v| Complex64::new(v, 0.0));
    fft2(&mut data, FftDirection::Forward);
    let sigma = 0.25 * fringe_frequency;
    let inv = 1.0 / (2.0 * sigma * sigma);
    let freq = |i: usize, n: usize| {
        let k = if i <= n / 2 { i as f64 } else { i as f64 - n as f64 };
        k / (n as f64 * pitch)
    };
    for ((r, c), v) in data.indexed_iter_mut() {
        let (fx, fy) = (freq(c, w), freq(r, h));
        *v *= (-(fx * fx + fy * fy) * inv).exp();
    }
    fft2(&mut data, FftDirection::Inverse);
    let norm = 1.0 / (h * w) as f64;
    data.mapv(|v| v.re * norm)
}

/// Std/mean of the fringe-free envelope over the central part of the
/// illuminated region. Lower is flatter.
pub fn envelope_flatness(image: &SampledImage, central_fraction: f64) -> Result<f64> {
    envelope_flatness_with(
        image,
        &FlatnessOptions {
            central_fraction,
            ..FlatnessOptions::default()
        },
    )
}

pub fn envelope_flatness_with(image: &SampledImage, options: &FlatnessOptions) -> Result<f64> {
    if !(options.central_fraction > 0.0 && options.central_fraction <= 1.0) {
        return Err(LatticeError::InvalidSpec(format!(
            "central_fraction must be in (0, 1], got {}",
            options.central_fraction
        )));
    }
    let fringe = match options.fringe_frequency {
        Some(f) => Some(f),
        None => fft_spectrum(image, WindowFunction::RaisedCosine)
            .ok()
            .and_then(|s| dominant_ring(&s).ok())
            .map(|r| r.radius),
    };
    let env = match fringe {
        Some(f) if f > 0.0 => low_pass(&image.values, image.pitch, f),
        _ => image.values.clone(),
    };

    let max = env.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(max > 0.0) {
        return Err(LatticeError::RegionNotFound("image has no positive intensity".into()));
    }
    let threshold = options.threshold * max;
    let (mut count, mut sw, mut sx, mut sy) = (0usize, 0.0, 0.0, 0.0);
    for ((r, c), &v) in env.indexed_iter() {
        if v > threshold {
            count += 1;
            sw += v;
            sx += v * c as f64;
            sy += v * r as f64;
        }
    }
    if count == 0 {
        return Err(LatticeError::RegionNotFound("nothing above threshold".into()));
    }
    let (cx, cy) = (sx / sw, sy / sw);
    let radius = options.central_fraction * (count as f64 / std::f64::consts::PI).sqrt();
    let r2 = radius * radius;
    let inside: Vec<f64> = env
        .indexed_iter()
        .filter(|((r, c), _)| {
            let dx = *c as f64 - cx;
            let dy = *r as f64 - cy;
            dx * dx + dy * dy <= r2
        })
        .map(|(_, &v)| v)
        .collect();
    if inside.len() < 4 {
        return Err(LatticeError::RegionNotFound(format!(
            "central disk of radius {radius:.2} px holds {} pixels",
            inside.len()
        )));
    }
    let n = inside.len() as f64;
    let mean = inside.iter().sum::<f64>() / n;
    let var = inside.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Ok(var.sqrt() / mean)
}
