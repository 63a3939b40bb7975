//! Interference intensity synthesis and camera rendering.
//!
//! Two field models are provided. [`plane_wave_intensity`] is the coherent sum
//! of `n` equal-amplitude plane waves with no envelope, the model that sets the
//! lattice geometry. [`sector_envelope_field`] gives every beam the part of
//! the Gaussian input that fell on its facet, shifted toward the axis by the
//! propagation distance, which is what makes the envelope flatten near the
//! plane of maximal overlap.

use ndarray::{Array2, Axis};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{LatticeError, Result};
use crate::optics::{BeamSpec, DeflectionGeometry};

/// Sampling grid. Pixel `(row, col)` sits at
/// `(origin.0 + col·pitch, origin.1 + row·pitch)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub width: usize,
    pub height: usize,
    pub pitch: f64,
    pub origin: (f64, f64),
}

impl GridSpec {
    pub const MIN_SIZE: usize = 16;

    /// Grid with the optical axis on pixel `(height/2, width/2)`.
    pub fn centered(width: usize, height: usize, pitch: f64) -> Result<Self> {
        let g = Self {
            width,
            height,
            pitch,
            origin: (-((width / 2) as f64) * pitch, -((height / 2) as f64) * pitch),
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width < Self::MIN_SIZE || self.height < Self::MIN_SIZE {
            return Err(LatticeError::InvalidSpec(format!(
                "grid must be at least {0}x{0}, got {1}x{2}",
                Self::MIN_SIZE,
                self.width,
                self.height
            )));
        }
        if !(self.pitch > 0.0) || !self.pitch.is_finite() {
            return Err(LatticeError::InvalidSpec(format!(
                "grid pitch must be > 0, got {}",
                self.pitch
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn x(&self, col: usize) -> f64 {
        self.origin.0 + col as f64 * self.pitch
    }

    #[inline]
    pub fn y(&self, row: usize) -> f64 {
        self.origin.1 + row as f64 * self.pitch
    }
}

impl Default for GridSpec {
    fn default() -> Self {
        Self::centered(1024, 1024, 1e-6).expect("default grid is valid")
    }
}

/// Per-beam phase offsets `δ_j` in radians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseVector(pub Vec<f64>);

impl PhaseVector {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    fn check(&self, geometry: &DeflectionGeometry) -> Result<()> {
        if self.0.len() != geometry.facet_count {
            return Err(LatticeError::DimensionMismatch {
                expected: geometry.facet_count,
                actual: self.0.len(),
            });
        }
        if self.0.iter().any(|d| !d.is_finite()) {
            return Err(LatticeError::InvalidSpec("phases must be finite".into()));
        }
        Ok(())
    }

    /// Phases relative to the first beam. The intensity only depends on
    /// these differences.
    fn relative(&self) -> Vec<f64> {
        let d0 = self.0[0];
        self.0.iter().map(|d| d - d0).collect()
    }
}

/// Intensity sampled on a grid, in units of `|E0|²`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityField {
    pub grid: GridSpec,
    /// Indexed `[row, col]`.
    pub values: Array2<f64>,
}

impl IntensityField {
    pub fn new(grid: GridSpec, values: Array2<f64>) -> Result<Self> {
        if values.dim() != (grid.height, grid.width) {
            return Err(LatticeError::DimensionMismatch {
                expected: grid.height * grid.width,
                actual: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(LatticeError::InvalidSpec(
                "intensity must be finite and non-negative".into(),
            ));
        }
        Ok(Self { grid, values })
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }
}

/// Closed-form evaluation of the plane-wave interference at arbitrary points.
#[derive(Debug, Clone)]
pub struct PlaneWaveModel {
    transverse: Vec<(f64, f64)>,
    relative_phases: Vec<f64>,
    scale: f64,
}

impl PlaneWaveModel {
    pub fn new(geometry: &DeflectionGeometry, phases: &PhaseVector) -> Result<Self> {
        phases.check(geometry)?;
        let n = geometry.facet_count as f64;
        Ok(Self {
            transverse: geometry.transverse_wavevectors(),
            relative_phases: phases.relative(),
            scale: geometry.amplitude * geometry.amplitude / n,
        })
    }

    pub fn intensity_at(&self, x: f64, y: f64) -> f64 {
        let sum: Complex64 = self
            .transverse
            .iter()
            .zip(&self.relative_phases)
            .map(|(&(kx, ky), &d)| Complex64::from_polar(1.0, kx * x + ky * y + d))
            .sum();
        self.scale * sum.norm_sqr()
    }
}

/// `I = |Σ_j (E0/√n)·exp(i(k_j·r + δ_j))|²` evaluated on every grid pixel.
pub fn plane_wave_intensity(
    geometry: &DeflectionGeometry,
    phases: &PhaseVector,
    grid: &GridSpec,
) -> Result<IntensityField> {
    grid.validate()?;
    let model = PlaneWaveModel::new(geometry, phases)?;

    // exp(i(kx·x + ky·y + δ)) = exp(i·kx·x) · exp(i(ky·y + δ)) per beam.
    let col_terms: Vec<Vec<Complex64>> = model
        .transverse
        .iter()
        .map(|&(kx, _)| {
            (0..grid.width)
                .map(|c| Complex64::from_polar(1.0, kx * grid.x(c)))
                .collect()
        })
        .collect();
    let row_terms: Vec<Vec<Complex64>> = model
        .transverse
        .iter()
        .zip(&model.relative_phases)
        .map(|(&(_, ky), &d)| {
            (0..grid.height)
                .map(|r| Complex64::from_polar(1.0, ky * grid.y(r) + d))
                .collect()
        })
        .collect();

    let mut values = Array2::<f64>::zeros((grid.height, grid.width));
    values
        .axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(r, mut row)| {
            for (c, v) in row.iter_mut().enumerate() {
                let mut sum = Complex64::new(0.0, 0.0);
                for j in 0..col_terms.len() {
                    sum += col_terms[j][c] * row_terms[j][r];
                }
                *v = model.scale * sum.norm_sqr();
            }
        });
    Ok(IntensityField { grid: *grid, values })
}

/// Index of the facet whose angular sector contains the input-plane point
/// `(x, y)`. Sector `j` spans azimuths `(φ_j − π/n, φ_j + π/n]`; points on a
/// shared edge go to the lower-index facet.
pub fn sector_index(x: f64, y: f64, facet_count: usize) -> usize {
    let n = facet_count as f64;
    let u = y.atan2(x) * n / (2.0 * PI);
    if u + 0.5 == 0.0 {
        return 0;
    }
    let idx = (u - 0.5).ceil() as i64;
    idx.rem_euclid(facet_count as i64) as usize
}

/// Coherent sum of translated Gaussian sectors at distance `z` from the prism.
///
/// Beam `j` carries the input amplitude `E0·exp(−ρ²/w0²)` restricted to facet
/// `j`'s sector, translated by `z·tan θ` along azimuth `φ_j + π`, with the
/// plane-wave phase `k_j·r + δ_j`. Propagation is purely geometric.
pub fn sector_envelope_field(
    geometry: &DeflectionGeometry,
    phases: &PhaseVector,
    grid: &GridSpec,
    beam: &BeamSpec,
    z: f64,
) -> Result<IntensityField> {
    grid.validate()?;
    beam.validate()?;
    phases.check(geometry)?;
    if !(z > 0.0) || !z.is_finite() {
        return Err(LatticeError::InvalidSpec(format!(
            "propagation distance must be > 0, got {z}"
        )));
    }
    let shift = z * geometry.deflection_angle.tan();
    if shift > 3.0 * beam.waist {
        return Err(LatticeError::DegenerateGeometry(format!(
            "sector translation {shift:.3e} m exceeds 3·w0; sectors no longer overlap"
        )));
    }

    let n = geometry.facet_count;
    let offsets: Vec<(f64, f64)> = geometry
        .facet_azimuths
        .iter()
        .map(|&phi| (shift * (phi + PI).cos(), shift * (phi + PI).sin()))
        .collect();
    let transverse = geometry.transverse_wavevectors();
    let rel = phases.relative();
    let inv_w2 = 1.0 / (beam.waist * beam.waist);
    let e0 = geometry.amplitude;

    let mut values = Array2::<f64>::zeros((grid.height, grid.width));
    values
        .axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(r, mut row)| {
            let y = grid.y(r);
            for (c, v) in row.iter_mut().enumerate() {
                let x = grid.x(c);
                let mut sum = Complex64::new(0.0, 0.0);
                for j in 0..n {
                    let (xs, ys) = (x - offsets[j].0, y - offsets[j].1);
                    if sector_index(xs, ys, n) != j {
                        continue;
                    }
                    let amp = e0 * (-(xs * xs + ys * ys) * inv_w2).exp();
                    let (kx, ky) = transverse[j];
                    sum += Complex64::from_polar(amp, kx * x + ky * y + rel[j]);
                }
                *v = sum.norm_sqr();
            }
        });
    Ok(IntensityField { grid: *grid, values })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraSpec {
    pub pixel_size: f64,
    pub bit_depth: u32,
    /// Counts per unit of field intensity.
    pub exposure_gain: f64,
    /// Additive Gaussian read noise, counts.
    pub read_noise_sigma: f64,
    pub seed: u64,
}

impl Default for CameraSpec {
    fn default() -> Self {
        Self {
            pixel_size: 2.8e-6,
            bit_depth: 12,
            exposure_gain: 1000.0,
            read_noise_sigma: 0.0,
            seed: 0,
        }
    }
}

impl CameraSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.pixel_size > 0.0) || !self.pixel_size.is_finite() {
            return Err(LatticeError::InvalidSpec(format!(
                "camera pixel_size must be > 0, got {}",
                self.pixel_size
            )));
        }
        if !(8..=16).contains(&self.bit_depth) {
            return Err(LatticeError::InvalidSpec(format!(
                "camera bit_depth must be in [8, 16], got {}",
                self.bit_depth
            )));
        }
        if !(self.exposure_gain >= 0.0) || !self.exposure_gain.is_finite() {
            return Err(LatticeError::InvalidSpec("exposure_gain must be >= 0".into()));
        }
        if !(self.read_noise_sigma >= 0.0) || !self.read_noise_sigma.is_finite() {
            return Err(LatticeError::InvalidSpec("read_noise_sigma must be >= 0".into()));
        }
        Ok(())
    }

    pub fn max_count(&self) -> u16 {
        ((1u32 << self.bit_depth) - 1) as u16
    }
}

/// Quantized camera image.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    /// Indexed `[row, col]`.
    pub image: Array2<u16>,
    pub timestamp: f64,
    pub camera: CameraSpec,
    /// Physical position of the centre of pixel `(0, 0)`.
    pub origin: (f64, f64),
}

impl Frame {
    pub fn grid(&self) -> GridSpec {
        let (h, w) = self.image.dim();
        GridSpec {
            width: w,
            height: h,
            pitch: self.camera.pixel_size,
            origin: self.origin,
        }
    }
}

/// Area-overlap weights from fine pixels onto coarse pixels along one axis.
/// Returns, for every coarse pixel, `(fine index, weight)` with weights
/// summing to one.
fn overlap_weights(
    fine_count: usize,
    fine_pitch: f64,
    coarse_count: usize,
    coarse_pitch: f64,
) -> Vec<Vec<(usize, f64)>> {
    (0..coarse_count)
        .map(|c| {
            let lo = c as f64 * coarse_pitch;
            let hi = lo + coarse_pitch;
            let first = (lo / fine_pitch).floor().max(0.0) as usize;
            let last = ((hi / fine_pitch).ceil() as usize).min(fine_count);
            (first..last)
                .filter_map(|i| {
                    let a = (i as f64 * fine_pitch).max(lo);
                    let b = ((i + 1) as f64 * fine_pitch).min(hi);
                    (b > a).then(|| (i, (b - a) / coarse_pitch))
                })
                .collect()
        })
        .collect()
}

/// Resamples the field onto camera pixels by area averaging, applies gain and
/// read noise, then clamps and rounds to the camera's bit depth.
pub fn render_frame(field: &IntensityField, camera: &CameraSpec, timestamp: f64) -> Result<Frame> {
    camera.validate()?;
    let g = &field.grid;
    if camera.pixel_size < g.pitch * (1.0 - 1e-12) {
        return Err(LatticeError::Resolution(format!(
            "camera pixel {:.3e} m is finer than the field pitch {:.3e} m",
            camera.pixel_size, g.pitch
        )));
    }
    let ratio = camera.pixel_size / g.pitch;
    let out_w = ((g.width as f64 / ratio) + 1e-9).floor() as usize;
    let out_h = ((g.height as f64 / ratio) + 1e-9).floor() as usize;
    if out_w == 0 || out_h == 0 {
        return Err(LatticeError::Resolution("field smaller than one camera pixel".into()));
    }
    let wx = overlap_weights(g.width, g.pitch, out_w, camera.pixel_size);
    let wy = overlap_weights(g.height, g.pitch, out_h, camera.pixel_size);

    // x pass then y pass
    let mut tmp = Array2::<f64>::zeros((g.height, out_w));
    for (r, mut row) in tmp.axis_iter_mut(Axis(0)).enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            *v = wx[c].iter().map(|&(i, w)| w * field.values[[r, i]]).sum();
        }
    }
    let mut resampled = Array2::<f64>::zeros((out_h, out_w));
    for (r, weights) in wy.iter().enumerate() {
        for &(j, w) in weights {
            for c in 0..out_w {
                resampled[[r, c]] += w * tmp[[j, c]];
            }
        }
    }

    let max = camera.max_count() as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(camera.seed);
    let noise =
        (camera.read_noise_sigma > 0.0).then(|| Normal::new(0.0, camera.read_noise_sigma).expect("sigma validated"));
    let image = resampled.mapv(|v| {
        let mut counts = camera.exposure_gain * v;
        if let Some(n) = &noise {
            counts += n.sample(&mut rng);
        }
        counts.clamp(0.0, max).round() as u16
    });

    // camera pixel (0, 0) shares its top-left edge with field pixel (0, 0)
    let half_diff = 0.5 * (camera.pixel_size - g.pitch);
    Ok(Frame {
        image,
        timestamp,
        camera: *camera,
        origin: (g.origin.0 + half_diff, g.origin.1 + half_diff),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optics::{beam_wavevectors, PrismSpec};

    fn geometry(n: usize) -> (DeflectionGeometry, BeamSpec) {
        let beam = BeamSpec::new(532e-9, 1.8e-3, 1.0).unwrap();
        let prism = PrismSpec::from_degrees(n, 3.0, 1.46).unwrap();
        (beam_wavevectors(&prism, &beam).unwrap(), beam)
    }

    #[test]
    fn origin_intensity_is_n() {
        for n in 2..=7 {
            let (g, _) = geometry(n);
            let grid = GridSpec::centered(32, 32, 1e-6).unwrap();
            let f = plane_wave_intensity(&g, &PhaseVector::zeros(n), &grid).unwrap();
            assert!((f.values[[16, 16]] - n as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn phase_length_mismatch_is_rejected() {
        let (g, _) = geometry(3);
        let grid = GridSpec::centered(32, 32, 1e-6).unwrap();
        assert_eq!(
            plane_wave_intensity(&g, &PhaseVector::zeros(4), &grid),
            Err(LatticeError::DimensionMismatch { expected: 3, actual: 4 })
        );
    }

    #[test]
    fn small_grid_is_rejected() {
        assert!(GridSpec::centered(8, 64, 1e-6).is_err());
        assert!(GridSpec::centered(64, 64, 0.0).is_err());
    }

    #[test]
    fn sector_index_partitions_the_plane() {
        assert_eq!(sector_index(1.0, 0.0, 3), 0);
        assert_eq!(sector_index(-0.5, 0.8, 3), 1);
        assert_eq!(sector_index(-0.5, -0.8, 3), 2);
        // shared edges go to the lower index
        assert_eq!(sector_index(0.0, 1.0, 2), 0);
        assert_eq!(sector_index(0.0, -1.0, 2), 0);
        assert_eq!(sector_index(-1.0, 1.0, 4), 1);
        assert_eq!(sector_index(-1.0, 0.0, 4), 2);
    }

    #[test]
    fn undeflected_sectors_reproduce_the_input_gaussian() {
        let beam = BeamSpec::new(532e-9, 40e-6, 1.0).unwrap();
        for n in [2, 3, 5] {
            let g = DeflectionGeometry::from_deflection(n, 0.0, &beam).unwrap();
            let grid = GridSpec::centered(64, 64, 2e-6).unwrap();
            let f = sector_envelope_field(&g, &PhaseVector(vec![0.3; n]), &grid, &beam, 0.01).unwrap();
            for ((r, c), v) in f.values.indexed_iter() {
                let (x, y) = (grid.x(c), grid.y(r));
                let expect = (-2.0 * (x * x + y * y) / (40e-6f64).powi(2)).exp();
                assert!((v - expect).abs() <= 1e-10 * expect.max(1e-300), "{v} vs {expect}");
            }
        }
    }

    #[test]
    fn sector_translation_limit() {
        let (g, beam) = geometry(3);
        let grid = GridSpec::centered(32, 32, 1e-5).unwrap();
        let z_bad = 3.1 * beam.waist / g.deflection_angle.tan();
        assert!(matches!(
            sector_envelope_field(&g, &PhaseVector::zeros(3), &grid, &beam, z_bad),
            Err(LatticeError::DegenerateGeometry(_))
        ));
        assert!(sector_envelope_field(&g, &PhaseVector::zeros(3), &grid, &beam, -1.0).is_err());
    }

    #[test]
    fn render_zero_field_is_black() {
        let grid = GridSpec::centered(64, 64, 1e-6).unwrap();
        let f = IntensityField::new(grid, Array2::zeros((64, 64))).unwrap();
        let frame = render_frame(&f, &CameraSpec::default(), 0.0).unwrap();
        assert!(frame.image.iter().all(|&v| v == 0));
        assert_eq!(frame.image.dim(), (22, 22));
    }

    #[test]
    fn render_uniform_half_scale() {
        let grid = GridSpec::centered(64, 64, 1e-6).unwrap();
        let f = IntensityField::new(grid, Array2::from_elem((64, 64), 1.0)).unwrap();
        let cam = CameraSpec {
            exposure_gain: 2048.0,
            ..CameraSpec::default()
        };
        let frame = render_frame(&f, &cam, 1.5).unwrap();
        assert!(frame.image.iter().all(|&v| v == 2048));
        assert_eq!(frame.timestamp, 1.5);
    }

    #[test]
    fn render_identity_when_pitches_match() {
        let (g, _) = geometry(3);
        let grid = GridSpec::centered(64, 48, 2.8e-6).unwrap();
        let f = plane_wave_intensity(&g, &PhaseVector::zeros(3), &grid).unwrap();
        let cam = CameraSpec {
            exposure_gain: 1000.0,
            ..CameraSpec::default()
        };
        let frame = render_frame(&f, &cam, 0.0).unwrap();
        assert_eq!(frame.image.dim(), (48, 64));
        assert_eq!(frame.origin, grid.origin);
        for ((r, c), &v) in frame.image.indexed_iter() {
            assert_eq!(v, (1000.0 * f.values[[r, c]]).round() as u16);
        }
    }

    #[test]
    fn render_is_deterministic_and_seed_dependent() {
        let (g, _) = geometry(3);
        let grid = GridSpec::centered(128, 128, 1e-6).unwrap();
        let f = plane_wave_intensity(&g, &PhaseVector::zeros(3), &grid).unwrap();
        let cam = CameraSpec {
            read_noise_sigma: 5.0,
            seed: 7,
            ..CameraSpec::default()
        };
        let a = render_frame(&f, &cam, 0.0).unwrap();
        let b = render_frame(&f, &cam, 0.0).unwrap();
        assert_eq!(a, b);
        let c = render_frame(&f, &CameraSpec { seed: 8, ..cam }, 0.0).unwrap();
        assert_ne!(a.image, c.image);
    }

    #[test]
    fn render_rejects_super_resolution() {
        let grid = GridSpec::centered(64, 64, 5e-6).unwrap();
        let f = IntensityField::new(grid, Array2::zeros((64, 64))).unwrap();
        assert!(matches!(
            render_frame(&f, &CameraSpec::default(), 0.0),
            Err(LatticeError::Resolution(_))
        ));
    }

    #[test]
    fn render_clamps_to_bit_depth() {
        let grid = GridSpec::centered(32, 32, 1e-6).unwrap();
        let f = IntensityField::new(grid, Array2::from_elem((32, 32), 100.0)).unwrap();
        let cam = CameraSpec {
            pixel_size: 1e-6,
            bit_depth: 8,
            ..CameraSpec::default()
        };
        let frame = render_frame(&f, &cam, 0.0).unwrap();
        assert!(frame.image.iter().all(|&v| v == 255));
    }
}
