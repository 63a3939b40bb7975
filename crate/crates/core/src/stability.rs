//! Noisy frame time series and the spacing / position stability metrics.
//!
//! Instability is modelled abstractly: every beam's phase performs a Gaussian
//! random walk, the whole beam tilts at a constant rate (a rigid transverse
//! shift of `overlap_distance·tan(rate·t)` along x), and each field pixel
//! carries multiplicative Gaussian intensity noise.

use ndarray::Array2;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use rustfft::FftDirection;
use serde::{Deserialize, Serialize};

use crate::analysis::{fft2, measure_spacing, AnalysisOptions, SampledImage, SpacingEstimate};
use crate::error::{LatticeError, Result};
use crate::field::{
    plane_wave_intensity, render_frame, sector_envelope_field, CameraSpec, Frame, GridSpec, PhaseVector,
};
use crate::optics::{BeamSpec, DeflectionGeometry};

/// Relative spacing RMSE bound of the target stability envelope.
pub const ENVELOPE_RMSE_RELATIVE: f64 = 0.0114;
/// Relative position drift bound of the target stability envelope.
pub const ENVELOPE_DRIFT_RELATIVE: f64 = 0.0161;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Per-beam phase step standard deviation per frame, radians.
    pub phase_jitter_sigma: f64,
    /// Beam tilt rate, radians per second.
    pub pointing_drift_rate: f64,
    /// Relative standard deviation of the per-pixel intensity noise.
    pub intensity_rms: f64,
    pub seed: u64,
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("phase_jitter_sigma", self.phase_jitter_sigma),
            ("pointing_drift_rate", self.pointing_drift_rate),
            ("intensity_rms", self.intensity_rms),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(LatticeError::InvalidSpec(format!("{name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FieldModel {
    PlaneWave,
    /// Sector-envelope model at distance `z` (meters) from the prism.
    SectorEnvelope {
        z: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesConfig {
    /// Time between frames, seconds.
    pub interval: f64,
    pub frame_count: usize,
    pub camera: CameraSpec,
    pub grid: GridSpec,
    pub model: FieldModel,
}

impl SeriesConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.interval > 0.0) || !self.interval.is_finite() {
            return Err(LatticeError::InvalidSpec(format!(
                "interval must be > 0, got {}",
                self.interval
            )));
        }
        if self.frame_count < 2 {
            return Err(LatticeError::InsufficientData(format!(
                "a series needs at least 2 frames, got {}",
                self.frame_count
            )));
        }
        self.camera.validate()?;
        self.grid.validate()
    }
}

fn phase_walk(n: usize, frames: usize, noise: &NoiseModel) -> Vec<PhaseVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let step = (noise.phase_jitter_sigma > 0.0).then(|| Normal::new(0.0, noise.phase_jitter_sigma).expect("validated"));
    let mut current = vec![0.0; n];
    let mut out = Vec::with_capacity(frames);
    for t in 0..frames {
        if t > 0 {
            if let Some(d) = &step {
                for p in current.iter_mut() {
                    *p += d.sample(&mut rng);
                }
            }
        }
        out.push(PhaseVector(current.clone()));
    }
    out
}

/// Renders `cfg.frame_count` frames at times `i·interval`. Deterministic for
/// a given noise seed and camera seed; frame `i` uses camera seed
/// `camera.seed + i`.
pub fn generate_time_series(
    geometry: &DeflectionGeometry,
    beam: &BeamSpec,
    noise: &NoiseModel,
    cfg: &SeriesConfig,
) -> Result<Vec<Frame>> {
    noise.validate()?;
    cfg.validate()?;
    let phases = phase_walk(geometry.facet_count, cfg.frame_count, noise);
    let intensity = (noise.intensity_rms > 0.0).then(|| Normal::new(0.0, noise.intensity_rms).expect("validated"));
    if noise.pointing_drift_rate > 0.0 && !geometry.overlap_distance.is_finite() {
        return Err(LatticeError::DegenerateGeometry(
            "pointing drift needs a finite overlap distance".into(),
        ));
    }

    (0..cfg.frame_count)
        .into_par_iter()
        .map(|i| {
            let t = i as f64 * cfg.interval;
            let shift = if noise.pointing_drift_rate > 0.0 {
                geometry.overlap_distance * (noise.pointing_drift_rate * t).tan()
            } else {
                0.0
            };
            // sampling the pattern at x − shift moves it by +shift
            let mut g = cfg.grid;
            g.origin.0 -= shift;
            let mut field = match cfg.model {
                FieldModel::PlaneWave => plane_wave_intensity(geometry, &phases[i], &g)?,
                FieldModel::SectorEnvelope { z } => sector_envelope_field(geometry, &phases[i], &g, beam, z)?,
            };
            field.grid = cfg.grid;
            if let Some(d) = &intensity {
                let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
                rng.set_stream(i as u64 + 1);
                field.values.mapv_inplace(|v| (v * (1.0 + d.sample(&mut rng))).max(0.0));
            }
            let camera = CameraSpec {
                seed: cfg.camera.seed.wrapping_add(i as u64),
                ..cfg.camera
            };
            render_frame(&field, &camera, t)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameAnalysis {
    pub index: usize,
    pub time: f64,
    pub spacing: SpacingEstimate,
    /// Fitted peak centres (x, y) in meters.
    pub peaks: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameFailure {
    pub index: usize,
    pub time: f64,
    pub error: LatticeError,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SpacingSeries {
    /// Successful frames in time order.
    pub entries: Vec<FrameAnalysis>,
    pub failures: Vec<FrameFailure>,
}

impl SpacingSeries {
    pub fn spacings(&self) -> Vec<(f64, f64)> {
        self.entries.iter().map(|e| (e.time, e.spacing.mean_spacing)).collect()
    }
}

/// Measures the spacing of every frame. Failed frames are recorded with their index and
/// skipped.
pub fn spacing_series(frames: &[Frame], options: &AnalysisOptions) -> SpacingSeries {
    let results: Vec<(usize, f64, Result<FrameAnalysis>)> = frames
        .par_iter()
        .enumerate()
        .map(|(i, f)| {
            let r = measure_spacing(&SampledImage::from(f), options).map(|rep| FrameAnalysis {
                index: i,
                time: f.timestamp,
                spacing: rep.spacing,
                peaks: rep.peaks.iter().map(|p| p.center).collect(),
            });
            (i, f.timestamp, r)
        })
        .collect();
    let mut series = SpacingSeries::default();
    for (index, time, r) in results {
        match r {
            Ok(a) => series.entries.push(a),
            Err(error) => series.failures.push(FrameFailure { index, time, error }),
        }
    }
    series
        .entries
        .sort_by(|a, b| a.time.total_cmp(&b.time).then(a.index.cmp(&b.index)));
    series
}

fn nearest(peaks: &[(f64, f64)], p: (f64, f64)) -> Option<(f64, f64)> {
    peaks.iter().copied().min_by(|a, b| {
        let da = (a.0 - p.0).powi(2) + (a.1 - p.1).powi(2);
        let db = (b.0 - p.0).powi(2) + (b.1 - p.1).powi(2);
        da.total_cmp(&db)
    })
}

/// Position of the reference site in every successful frame. The reference
/// is the fitted peak nearest `centroid` in the first frame; later frames
/// follow the peak nearest the previous position.
pub fn track_reference_peak(series: &SpacingSeries, centroid: (f64, f64)) -> Result<Vec<(f64, f64)>> {
    let first = series
        .entries
        .first()
        .ok_or_else(|| LatticeError::InsufficientData("no analyzed frames".into()))?;
    let mut pos = nearest(&first.peaks, centroid)
        .ok_or_else(|| LatticeError::InsufficientData("first frame has no peaks".into()))?;
    let mut out = Vec::with_capacity(series.entries.len());
    for e in &series.entries {
        pos = nearest(&e.peaks, pos).unwrap_or(pos);
        out.push(pos);
    }
    Ok(out)
}

/// Intensity-weighted centroid of an image, physical coordinates.
pub fn illumination_centroid(image: &SampledImage) -> (f64, f64) {
    let (mut sw, mut sx, mut sy) = (0.0, 0.0, 0.0);
    for ((r, c), &v) in image.values.indexed_iter() {
        sw += v;
        sx += v * c as f64;
        sy += v * r as f64;
    }
    if sw > 0.0 {
        image.to_physical(sx / sw, sy / sw)
    } else {
        image.to_physical(0.5 * (image.width() as f64 - 1.0), 0.5 * (image.height() as f64 - 1.0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    /// (time s, spacing m).
    pub spacing_series: Vec<(f64, f64)>,
    pub spacing_mean: f64,
    /// RMS deviation about the series mean, meters.
    pub spacing_rmse: f64,
    pub spacing_rmse_relative: f64,
    /// Largest displacement of the reference site from its first position.
    pub position_drift_max: f64,
    pub position_drift_relative: f64,
    pub within_envelope: bool,
}

/// `spacings` are (time, spacing) pairs; `positions` the reference site in
/// the same frames.
pub fn stability_metrics(spacings: &[(f64, f64)], positions: &[(f64, f64)]) -> Result<StabilityReport> {
    if spacings.len() < 2 {
        return Err(LatticeError::InsufficientData(format!(
            "need at least 2 valid frames, got {}",
            spacings.len()
        )));
    }
    if positions.len() != spacings.len() {
        return Err(LatticeError::DimensionMismatch {
            expected: spacings.len(),
            actual: positions.len(),
        });
    }
    let mut ordered = spacings.to_vec();
    ordered.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut values: Vec<f64> = spacings.iter().map(|s| s.1).collect();
    values.sort_by(f64::total_cmp);
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let rmse = (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
    let p0 = positions[0];
    let drift = positions
        .iter()
        .map(|p| (p.0 - p0.0).hypot(p.1 - p0.1))
        .fold(0.0, f64::max);
    let rmse_rel = rmse / mean;
    let drift_rel = drift / mean;
    Ok(StabilityReport {
        spacing_series: ordered,
        spacing_mean: mean,
        spacing_rmse: rmse,
        spacing_rmse_relative: rmse_rel,
        position_drift_max: drift,
        position_drift_relative: drift_rel,
        within_envelope: rmse_rel <= ENVELOPE_RMSE_RELATIVE && drift_rel <= ENVELOPE_DRIFT_RELATIVE,
    })
}

/// Full pipeline: per-frame analysis, reference tracking and metrics.
pub fn analyze_series(frames: &[Frame], options: &AnalysisOptions) -> Result<(SpacingSeries, StabilityReport)> {
    let series = spacing_series(frames, options);
    let first = frames
        .first()
        .ok_or_else(|| LatticeError::InsufficientData("empty series".into()))?;
    let centroid = illumination_centroid(&SampledImage::from(first));
    if series.entries.len() < 2 {
        return Err(LatticeError::InsufficientData(format!(
            "only {} of {} frames analyzed",
            series.entries.len(),
            frames.len()
        )));
    }
    let positions = track_reference_peak(&series, centroid)?;
    let report = stability_metrics(&series.spacings(), &positions)?;
    Ok((series, report))
}

/// Sub-pixel translation `(dx, dy)` of `b` relative to `a`, from the peak of
/// their circular cross-correlation refined by a parabola on each axis.
pub fn cross_correlation_shift(a: &Array2<f64>, b: &Array2<f64>) -> Result<(f64, f64)> {
    if a.dim() != b.dim() {
        return Err(LatticeError::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    let (h, w) = a.dim();
    if h < 3 || w < 3 {
        return Err(LatticeError::ImageTooSmall(
            "cross-correlation needs at least 3x3".into(),
        ));
    }
    let centred = |m: &Array2<f64>| {
        let mean = m.mean().unwrap_or(0.0);
        m.mapv(|v| Complex64::new(v - mean, 0.0))
    };
    let mut fa = centred(a);
    let mut fb = centred(b);
    fft2(&mut fa, FftDirection::Forward);
    fft2(&mut fb, FftDirection::Forward);
    let mut prod = Array2::from_shape_fn((h, w), |i| fa[i].conj() * fb[i]);
    fft2(&mut prod, FftDirection::Inverse);
    let corr = prod.mapv(|v| v.re);

    let ((pr, pc), _) = corr
        .indexed_iter()
        .max_by(|x, y| x.1.total_cmp(y.1))
        .expect("non-empty");
    let refine = |m1: f64, m0: f64, p1: f64| {
        let d = m1 - 2.0 * m0 + p1;
        if d.abs() > 0.0 {
            (0.5 * (m1 - p1) / d).clamp(-0.5, 0.5)
        } else {
            0.0
        }
    };
    let dx = refine(corr[[pr, (pc + w - 1) % w]], corr[[pr, pc]], corr[[pr, (pc + 1) % w]]);
    let dy = refine(corr[[(pr + h - 1) % h, pc]], corr[[pr, pc]], corr[[(pr + 1) % h, pc]]);
    let wrap = |i: usize, n: usize| if i > n / 2 { i as f64 - n as f64 } else { i as f64 };
    Ok((wrap(pc, w) + dx, wrap(pr, h) + dy))
}
