//! Frame-series generation and stability metrics.

use prism_lattice::analysis::*;
use prism_lattice::error::LatticeError;
use prism_lattice::field::*;
use prism_lattice::optics::*;
use prism_lattice::stability::*;

fn beam() -> BeamSpec {
    BeamSpec::new(532e-9, 1.8e-3, 1.0).unwrap()
}

fn geometry(n: usize) -> DeflectionGeometry {
    DeflectionGeometry::from_deflection(n, 1.38f64.to_radians(), &beam()).unwrap()
}

fn config(frames: usize) -> SeriesConfig {
    SeriesConfig {
        interval: 0.1,
        frame_count: frames,
        camera: CameraSpec {
            exposure_gain: 1000.0,
            ..CameraSpec::default()
        },
        grid: GridSpec::centered(256, 256, 1e-6).unwrap(),
        model: FieldModel::PlaneWave,
    }
}

fn noise(phase: f64, drift: f64, intensity: f64) -> NoiseModel {
    NoiseModel {
        phase_jitter_sigma: phase,
        pointing_drift_rate: drift,
        intensity_rms: intensity,
        seed: 11,
    }
}

fn report(n: &NoiseModel, frames: usize) -> StabilityReport {
    let g = geometry(3);
    let frames = generate_time_series(&g, &beam(), n, &config(frames)).unwrap();
    analyze_series(&frames, &AnalysisOptions::default()).unwrap().1
}

#[test]
fn drift_moves_the_pattern_by_the_lever_arm() {
    // four beams give a square lattice with primitive vectors
    // (±λ/2sinθ, λ/2sinθ); a grid holding ten periods of λ/sinθ keeps the
    // circular cross-correlation exact
    let g = geometry(4);
    let period = g.wavelength / g.deflection_angle.sin();
    let pitch = period / 20.0;
    let rate = 1e-5;
    let cfg = SeriesConfig {
        interval: 1.0,
        frame_count: 8,
        camera: CameraSpec {
            pixel_size: pitch,
            bit_depth: 16,
            exposure_gain: 15000.0,
            ..CameraSpec::default()
        },
        grid: GridSpec::centered(200, 200, pitch).unwrap(),
        model: FieldModel::PlaneWave,
    };
    let frames = generate_time_series(&g, &beam(), &noise(0.0, rate, 0.0), &cfg).unwrap();
    let base = frames[0].image.mapv(f64::from);
    for f in &frames[1..] {
        let (dx, dy) = cross_correlation_shift(&base, &f.image.mapv(f64::from)).unwrap();
        let expected = g.overlap_distance * (rate * f.timestamp).tan() / pitch;
        // distance to the nearest lattice translation (10i, 10j), i + j even
        let err = (-20i32..=20)
            .flat_map(|i| (-20i32..=20).map(move |j| (i, j)))
            .filter(|(i, j)| (i + j) % 2 == 0)
            .map(|(i, j)| (dx - expected - 10.0 * i as f64).hypot(dy - 10.0 * j as f64))
            .fold(f64::INFINITY, f64::min);
        assert!(err < 0.1, "t={}: ({dx}, {dy}) vs {expected}", f.timestamp);
    }
}

#[test]
fn noiseless_series_is_perfectly_stable() {
    let r = report(&noise(0.0, 0.0, 0.0), 10);
    assert!(r.spacing_rmse_relative < 1e-12);
    assert_eq!(r.position_drift_max, 0.0);
    assert!(r.within_envelope);
}

#[test]
fn phase_jitter_leaves_spacing_at_the_sampling_floor() {
    // a common phase walk only translates the lattice; what remains is the
    // fit's sub-pixel sampling bias, far below the stability envelope
    let r = report(&noise(0.5, 0.0, 0.0), 40);
    assert!(r.spacing_rmse_relative < 1e-4, "{}", r.spacing_rmse_relative);
}

#[test]
fn spacing_rmse_grows_with_intensity_noise() {
    let levels = [0.005, 0.01, 0.02];
    let rmse: Vec<f64> = levels
        .iter()
        .map(|&l| report(&noise(0.0, 0.0, l), 60).spacing_rmse_relative)
        .collect();
    assert!(rmse[0] > 0.0);
    assert!(rmse[0] < rmse[1] && rmse[1] < rmse[2], "{rmse:?}");
}

#[test]
fn series_is_reproducible_from_its_seed() {
    let g = geometry(3);
    let n = noise(0.1, 1e-7, 0.01);
    let a = generate_time_series(&g, &beam(), &n, &config(4)).unwrap();
    let b = generate_time_series(&g, &beam(), &n, &config(4)).unwrap();
    assert_eq!(a, b);
    let c = generate_time_series(&g, &beam(), &NoiseModel { seed: 12, ..n }, &config(4)).unwrap();
    assert_ne!(a, c);
}

#[test]
fn single_frame_is_rejected() {
    let g = geometry(3);
    let err = generate_time_series(&g, &beam(), &noise(0.0, 0.0, 0.0), &config(1)).unwrap_err();
    assert!(matches!(err, LatticeError::InsufficientData(_)));
}

#[test]
fn failed_frames_are_reported_by_index() {
    let g = geometry(3);
    let mut frames = generate_time_series(&g, &beam(), &noise(0.0, 0.0, 0.0), &config(4)).unwrap();
    frames[2].image.fill(0);
    let (series, rep) = analyze_series(&frames, &AnalysisOptions::default()).unwrap();
    assert_eq!(series.entries.len(), 3);
    assert_eq!(series.failures.len(), 1);
    assert_eq!(series.failures[0].index, 2);
    assert!(rep.spacing_rmse_relative < 1e-12);
}

#[test]
fn relative_rmse_is_taken_about_the_mean() {
    let d = 1e-5;
    // (time, spacing)
    let spacings = [(0.0, d), (1.0, d * (1.0 + 2.0 * ENVELOPE_RMSE_RELATIVE))];
    let r = stability_metrics(&spacings, &[(0.0, 0.0), (0.0, 0.0)]).unwrap();
    assert!((r.spacing_rmse_relative - ENVELOPE_RMSE_RELATIVE / (1.0 + ENVELOPE_RMSE_RELATIVE)).abs() < 1e-12);
    assert!(r.within_envelope);
}
