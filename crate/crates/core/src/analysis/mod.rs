//! Lattice measurement pipeline: peak detection, sub-pixel Gaussian fits,
//! nearest-neighbour spacing, Fourier symmetry and envelope flatness.

mod fit;
mod flatness;
mod peaks;
mod spacing;
mod spectrum;
mod symmetry;

pub use fit::{fit_peak_gaussian, PeakFit, CHI2_2DOF_95};
pub use flatness::{envelope_flatness, envelope_flatness_with, FlatnessOptions};
pub use peaks::{detect_peaks, PeakCandidate, PeakDetection};
pub use spacing::{estimate_lattice_constant, SpacingEstimate};
pub use spectrum::{fft2, fft_spectrum, Spectrum, WindowFunction};
pub use symmetry::{dominant_ring, symmetry_score, Ring, SymmetryReport, DEFAULT_ORDERS, TIE_TOLERANCE};

use ndarray::Array2;
use rayon::prelude::*;

use crate::error::{LatticeError, Result};
use crate::field::{Frame, GridSpec, IntensityField};

/// Real-valued image with physical sampling, the common input of every
/// analysis routine. Pixel `(row, col)` sits at
/// `(origin.0 + col·pitch, origin.1 + row·pitch)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledImage {
    pub values: Array2<f64>,
    pub pitch: f64,
    pub origin: (f64, f64),
}

impl SampledImage {
    pub fn new(values: Array2<f64>, pitch: f64, origin: (f64, f64)) -> Result<Self> {
        if !(pitch > 0.0) || !pitch.is_finite() {
            return Err(LatticeError::InvalidSpec(format!(
                "pixel pitch must be > 0, got {pitch}"
            )));
        }
        Ok(Self { values, pitch, origin })
    }

    pub fn width(&self) -> usize {
        self.values.ncols()
    }

    pub fn height(&self) -> usize {
        self.values.nrows()
    }

    pub fn grid(&self) -> GridSpec {
        GridSpec {
            width: self.width(),
            height: self.height(),
            pitch: self.pitch,
            origin: self.origin,
        }
    }

    /// Physical position of a (possibly fractional) pixel coordinate.
    pub fn to_physical(&self, col: f64, row: f64) -> (f64, f64) {
        (self.origin.0 + col * self.pitch, self.origin.1 + row * self.pitch)
    }

    pub fn to_pixel(&self, x: f64, y: f64) -> (f64, f64) {
        ((x - self.origin.0) / self.pitch, (y - self.origin.1) / self.pitch)
    }
}

impl From<&IntensityField> for SampledImage {
    fn from(f: &IntensityField) -> Self {
        Self {
            values: f.values.clone(),
            pitch: f.grid.pitch,
            origin: f.grid.origin,
        }
    }
}

impl From<&Frame> for SampledImage {
    fn from(f: &Frame) -> Self {
        Self {
            values: f.image.mapv(f64::from),
            pitch: f.camera.pixel_size,
            origin: f.origin,
        }
    }
}

/// Settings for [`analyze_lattice`].
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisOptions {
    /// Expected nearest-site spacing in meters. When absent the fringe
    /// period of the dominant Fourier ring is used instead.
    pub expected_spacing: Option<f64>,
    pub min_prominence: f64,
    /// Fit window radius as a fraction of the expected spacing.
    pub window_fraction: f64,
    pub window: WindowFunction,
    pub candidate_orders: Vec<usize>,
    pub central_fraction: f64,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            expected_spacing: None,
            min_prominence: 0.5,
            window_fraction: 0.4,
            window: WindowFunction::RaisedCosine,
            candidate_orders: DEFAULT_ORDERS.to_vec(),
            central_fraction: 0.5,
        }
    }
}

/// Everything [`analyze_lattice`] measures. Spacing is required; symmetry and
/// flatness failures are kept as errors alongside the successful parts.
#[derive(Debug, Clone)]
pub struct LatticeReport {
    pub expected_spacing: f64,
    pub peaks: Vec<PeakFit>,
    pub failed_fits: usize,
    pub spacing: SpacingEstimate,
    pub symmetry: Result<SymmetryReport>,
    pub flatness: Result<f64>,
}

/// Fits every detected candidate whose window fits inside the image. Results
/// are sorted by centre (y, then x).
pub fn fit_all_peaks(
    image: &SampledImage,
    candidates: &[PeakCandidate],
    window_radius: usize,
) -> (Vec<PeakFit>, usize) {
    let results: Vec<Result<PeakFit>> = candidates
        .par_iter()
        .map(|c| fit_peak_gaussian(image, c, window_radius))
        .collect();
    let failed = results.iter().filter(|r| r.is_err()).count();
    let mut fits: Vec<PeakFit> = results.into_iter().filter_map(|r| r.ok()).collect();
    fits.sort_by(|a, b| {
        a.center
            .1
            .total_cmp(&b.center.1)
            .then(a.center.0.total_cmp(&b.center.0))
    });
    (fits, failed)
}

/// Expected spacing from the dominant Fourier ring: the fringe period `1/f`.
pub fn spacing_hint_from_spectrum(image: &SampledImage) -> Result<f64> {
    let spectrum = fft_spectrum(image, WindowFunction::RaisedCosine)?;
    let ring = dominant_ring(&spectrum)?;
    Ok(1.0 / ring.radius)
}

/// Peaks and spacing of one image, without the symmetry and flatness
/// measurements.
#[derive(Debug, Clone)]
pub struct SpacingMeasurement {
    pub expected_spacing: f64,
    pub peaks: Vec<PeakFit>,
    pub failed_fits: usize,
    pub spacing: SpacingEstimate,
}

fn measure(image: &SampledImage, options: &AnalysisOptions, spectrum: Option<&Spectrum>) -> Result<SpacingMeasurement> {
    let expected = match options.expected_spacing {
        Some(s) => s,
        None => {
            let s = spectrum
                .ok_or_else(|| LatticeError::ImageTooSmall("need an expected spacing for images below 64 px".into()))?;
            1.0 / dominant_ring(s)?.radius
        }
    };
    let detection = PeakDetection {
        min_prominence: options.min_prominence,
        suppression_radius: Some(0.5 * expected),
    };
    let candidates = detect_peaks(image, &detection)?;
    let window_radius = ((options.window_fraction * expected / image.pitch).round() as usize).max(2);
    let (peaks, failed_fits) = fit_all_peaks(image, &candidates, window_radius);
    let spacing = estimate_lattice_constant(&peaks, options.expected_spacing)?;
    Ok(SpacingMeasurement {
        expected_spacing: expected,
        peaks,
        failed_fits,
        spacing,
    })
}

fn spectrum_if_large(image: &SampledImage, options: &AnalysisOptions) -> Result<Option<Spectrum>> {
    if image.width() >= spectrum::MIN_SIZE && image.height() >= spectrum::MIN_SIZE {
        Ok(Some(fft_spectrum(image, options.window)?))
    } else {
        Ok(None)
    }
}

/// Detection, fitting and spacing estimation only.
pub fn measure_spacing(image: &SampledImage, options: &AnalysisOptions) -> Result<SpacingMeasurement> {
    let spectrum = match options.expected_spacing {
        Some(_) => None,
        None => spectrum_if_large(image, options)?,
    };
    measure(image, options, spectrum.as_ref())
}

/// Runs detection, fitting and spacing estimation, plus the symmetry and
/// flatness measurements.
pub fn analyze_lattice(image: &SampledImage, options: &AnalysisOptions) -> Result<LatticeReport> {
    let spectrum = spectrum_if_large(image, options)?;
    let m = measure(image, options, spectrum.as_ref())?;
    let symmetry = match &spectrum {
        Some(s) => symmetry_score(s, &options.candidate_orders),
        None => Err(LatticeError::ImageTooSmall("spectrum needs at least 64 px".into())),
    };
    let flatness = envelope_flatness(image, options.central_fraction);
    Ok(LatticeReport {
        expected_spacing: m.expected_spacing,
        peaks: m.peaks,
        failed_fits: m.failed_fits,
        spacing: m.spacing,
        symmetry,
        flatness,
    })
}
