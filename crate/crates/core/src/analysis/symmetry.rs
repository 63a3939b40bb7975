//! Rotational order of the dominant Fourier ring.
//!
//! The ring is the strongest local maximum of the radial profile (maximum
//! magnitude per annulus) beyond the DC lobe. Its angular profile is scored
//! for each candidate order `q` by the normalized circular autocorrelation at
//! a rotation of `2π/q`.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::Spectrum;
use crate::error::{LatticeError, Result};

pub const DEFAULT_ORDERS: [usize; 11] = [2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12];

/// Scores within this distance of the best are treated as ties and resolved
/// toward the larger order (a 6-fold ring is also 2- and 3-fold).
pub const TIE_TOLERANCE: f64 = 0.05;

/// Smallest ring radius considered, in frequency bins.
const MIN_RING_BIN: usize = 4;
/// Ring strength over the median annulus maximum needed to count as structure.
const RING_SNR: f64 = 4.0;
const ANGULAR_SAMPLES: usize = 2520;
const BAND_HALF_WIDTH: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ring {
    /// Ring radius in cycles per meter.
    pub radius: f64,
    pub radius_bins: f64,
    pub strength: f64,
    pub noise_floor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetryReport {
    pub best_order: usize,
    pub score_by_order: BTreeMap<usize, f64>,
    /// Radius of the scored ring in cycles per meter.
    pub ring_radius: f64,
}

fn bin_width(s: &Spectrum) -> f64 {
    s.step_x.max(s.step_y)
}

fn radial_profile(s: &Spectrum) -> Vec<f64> {
    let b = bin_width(s);
    let (h, w) = s.magnitude.dim();
    let n = (h.min(w) / 2).saturating_sub(1);
    let mut profile = vec![0.0f64; n];
    for ((r, c), &m) in s.magnitude.indexed_iter() {
        let (fx, fy) = s.frequency(r as f64, c as f64);
        let i = (fx.hypot(fy) / b).round() as usize;
        if i < n && m > profile[i] {
            profile[i] = m;
        }
    }
    profile
}

/// Locates the dominant non-DC ring.
pub fn dominant_ring(s: &Spectrum) -> Result<Ring> {
    let profile = radial_profile(s);
    let n = profile.len();
    if n < MIN_RING_BIN + 3 {
        return Err(LatticeError::NoRing("spectrum too small".into()));
    }
    // skip the falling edge of the DC lobe
    let mut start = MIN_RING_BIN;
    while start + 1 < n && profile[start + 1] < profile[start] {
        start += 1;
    }
    let mut sorted: Vec<f64> = profile[MIN_RING_BIN..].to_vec();
    sorted.sort_by(f64::total_cmp);
    let floor = sorted[sorted.len() / 2];

    let best = (start.max(MIN_RING_BIN + 1)..n - 1)
        .filter(|&i| profile[i] >= profile[i - 1] && profile[i] >= profile[i + 1] && profile[i] > 0.0)
        .max_by(|&a, &b| profile[a].total_cmp(&profile[b]).then(b.cmp(&a)));
    let Some(i) = best else {
        return Err(LatticeError::NoRing("radial profile has no local maximum".into()));
    };
    if !(profile[i] > RING_SNR * floor) {
        return Err(LatticeError::NoRing(format!(
            "strongest ring {:.3e} is within {RING_SNR}x of the noise floor {:.3e}",
            profile[i], floor
        )));
    }
    let (a, b, c) = (profile[i - 1], profile[i], profile[i + 1]);
    let denom = a - 2.0 * b + c;
    let offset = if denom.abs() > 0.0 {
        (0.5 * (a - c) / denom).clamp(-0.5, 0.5)
    } else {
        0.0
    };
    let radius_bins = i as f64 + offset;
    Ok(Ring {
        radius: radius_bins * bin_width(s),
        radius_bins,
        strength: b,
        noise_floor: floor,
    })
}

fn angular_profile(s: &Spectrum, ring: &Ring) -> Vec<f64> {
    let b = bin_width(s);
    let steps = (2.0 * BAND_HALF_WIDTH / 0.25).round() as usize;
    (0..ANGULAR_SAMPLES)
        .map(|k| {
            let psi = 2.0 * PI * k as f64 / ANGULAR_SAMPLES as f64;
            let (sn, cs) = psi.sin_cos();
            (0..=steps)
                .map(|t| {
                    let rad = (ring.radius_bins - BAND_HALF_WIDTH + 0.25 * t as f64) * b;
                    s.sample(rad * cs, rad * sn)
                })
                .fold(0.0, f64::max)
        })
        .collect()
}

fn autocorrelation(profile: &[f64], shift: f64) -> f64 {
    let m = profile.len();
    let mean = profile.iter().sum::<f64>() / m as f64;
    let centred: Vec<f64> = profile.iter().map(|p| p - mean).collect();
    let var: f64 = centred.iter().map(|v| v * v).sum();
    if var <= 0.0 {
        return 0.0;
    }
    let whole = shift.floor() as usize;
    let frac = shift - whole as f64;
    let cov: f64 = (0..m)
        .map(|i| {
            let a = centred[(i + whole) % m];
            let b = centred[(i + whole + 1) % m];
            centred[i] * ((1.0 - frac) * a + frac * b)
        })
        .sum();
    cov / var
}

/// Scores each candidate order on the dominant ring of `spectrum`.
pub fn symmetry_score(spectrum: &Spectrum, candidate_orders: &[usize]) -> Result<SymmetryReport> {
    if candidate_orders.is_empty() || candidate_orders.contains(&0) {
        return Err(LatticeError::InvalidSpec(
            "candidate orders must be non-empty and positive".into(),
        ));
    }
    let ring = dominant_ring(spectrum)?;
    let profile = angular_profile(spectrum, &ring);
    let score_by_order: BTreeMap<usize, f64> = candidate_orders
        .iter()
        .map(|&q| {
            let shift = ANGULAR_SAMPLES as f64 / q as f64;
            (q, autocorrelation(&profile, shift).clamp(0.0, 1.0))
        })
        .collect();
    let top = score_by_order.values().cloned().fold(0.0, f64::max);
    let best_order = score_by_order
        .iter()
        .filter(|(_, &s)| s >= top - TIE_TOLERANCE)
        .map(|(&q, _)| q)
        .max()
        .expect("at least one order");
    Ok(SymmetryReport {
        best_order,
        score_by_order,
        ring_radius: ring.radius,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{fft_spectrum, SampledImage, WindowFunction};
    use ndarray::Array2;

    fn star_image(order: usize, period_px: f64, rotation: f64) -> SampledImage {
        let v = Array2::from_shape_fn((128, 128), |(r, c)| {
            let (x, y) = (c as f64 - 64.0, r as f64 - 64.0);
            (0..order)
                .map(|j| {
                    let a = rotation + PI * j as f64 / order as f64;
                    (2.0 * PI * (x * a.cos() + y * a.sin()) / period_px).cos()
                })
                .sum::<f64>()
                + order as f64
        });
        SampledImage::new(v, 1.0, (0.0, 0.0)).unwrap()
    }

    #[test]
    fn six_fold_stripes_score_six() {
        // three stripe families at 60° give 6 spectral peaks
        let img = star_image(3, 9.0, 0.1);
        let s = fft_spectrum(&img, WindowFunction::RaisedCosine).unwrap();
        let rep = symmetry_score(&s, &DEFAULT_ORDERS).unwrap();
        assert_eq!(rep.best_order, 6, "{:?}", rep.score_by_order);
        assert!((rep.ring_radius - 1.0 / 9.0).abs() <= s.step_x);
    }

    #[test]
    fn autocorrelation_of_constant_is_zero() {
        assert_eq!(autocorrelation(&[1.0; 16], 3.0), 0.0);
        let p: Vec<f64> = (0..12).map(|i| if i % 3 == 0 { 1.0 } else { 0.0 }).collect();
        assert!((autocorrelation(&p, 3.0) - 1.0).abs() < 1e-12);
        assert!(autocorrelation(&p, 1.5) < 0.0);
    }

    #[test]
    fn flat_spectrum_has_no_ring() {
        let img = SampledImage::new(Array2::from_elem((64, 64), 2.0), 1.0, (0.0, 0.0)).unwrap();
        let s = fft_spectrum(&img, WindowFunction::RaisedCosine).unwrap();
        assert!(matches!(
            symmetry_score(&s, &DEFAULT_ORDERS),
            Err(LatticeError::NoRing(_))
        ));
    }
}
