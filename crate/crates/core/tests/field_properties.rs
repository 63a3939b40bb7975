//! Field synthesis against independent oracles, plus its invariants.

use std::f64::consts::PI;

use ndarray::Array2;
use proptest::prelude::*;

use prism_lattice::field::*;
use prism_lattice::optics::*;
use prism_lattice::stability::cross_correlation_shift;

const LAMBDA: f64 = 532e-9;

fn beam() -> BeamSpec {
    BeamSpec::new(LAMBDA, 1.8e-3, 1.0).unwrap()
}

/// Pairwise-cosine expansion with wavevectors built from scratch:
/// `I = (1/n)·[n + 2·Σ_{j<m} cos(k⊥ρ(cos(φ − φ_m) − cos(φ − φ_j)) + δ_j − δ_m)]`
/// with beams travelling toward the axis.
fn pairwise_oracle(n: usize, theta: f64, phases: &[f64], x: f64, y: f64) -> f64 {
    let kt = 2.0 * PI / LAMBDA * theta.sin();
    let rho = x.hypot(y);
    let phi = y.atan2(x);
    let mut sum = n as f64;
    for j in 0..n {
        for m in (j + 1)..n {
            let pj = 2.0 * PI * j as f64 / n as f64;
            let pm = 2.0 * PI * m as f64 / n as f64;
            let arg = kt * rho * ((phi - pm).cos() - (phi - pj).cos()) + phases[j] - phases[m];
            sum += 2.0 * arg.cos();
        }
    }
    sum / n as f64
}

/// Direct coherent sum with the full three-dimensional wavevectors at z = 0.
fn direct_sum(geometry: &DeflectionGeometry, phases: &[f64], x: f64, y: f64) -> f64 {
    let (mut re, mut im) = (0.0, 0.0);
    for (k, d) in geometry.wavevectors.iter().zip(phases) {
        let a = k.x * x + k.y * y + k.z * 0.0 + d;
        re += a.cos();
        im += a.sin();
    }
    (re * re + im * im) / geometry.facet_count as f64
}

fn geometry(n: usize, theta_deg: f64) -> DeflectionGeometry {
    DeflectionGeometry::from_deflection(n, theta_deg.to_radians(), &beam()).unwrap()
}

#[test]
fn pairwise_cosine_matches_grid_pointwise() {
    for n in 2..=8 {
        let g = geometry(n, 1.38);
        let phases: Vec<f64> = (0..n).map(|j| 0.37 * j as f64 - 0.2).collect();
        let grid = GridSpec::centered(64, 48, 0.7e-6).unwrap();
        let f = plane_wave_intensity(&g, &PhaseVector(phases.clone()), &grid).unwrap();
        for r in 0..grid.height {
            for c in 0..grid.width {
                let want = pairwise_oracle(n, 1.38f64.to_radians(), &phases, grid.x(c), grid.y(r));
                let got = f.values[[r, c]];
                let scale = want.abs().max(1.0);
                assert!((got - want).abs() <= 1e-10 * scale, "n={n} ({r},{c}): {got} vs {want}");
                let direct = direct_sum(&g, &phases, grid.x(c), grid.y(r));
                assert!((got - direct).abs() <= 1e-10 * scale);
            }
        }
    }
}

#[test]
fn rotated_geometry_gives_the_same_field() {
    // rotating every wavevector by 2π/n permutes the beams
    for n in [3usize, 4, 5, 6] {
        let g = geometry(n, 1.38);
        let grid = GridSpec::centered(96, 96, 0.5e-6).unwrap();
        let a = plane_wave_intensity(&g, &PhaseVector::zeros(n), &grid).unwrap();
        let b = plane_wave_intensity(&g.rotated(2.0 * PI / n as f64), &PhaseVector::zeros(n), &grid).unwrap();
        let diff = a
            .values
            .iter()
            .zip(b.values.iter())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        assert!(diff <= 1e-6, "n={n}: {diff}");
    }
}

#[test]
fn field_resampled_on_rotated_points_is_unchanged() {
    for n in [3usize, 5, 7] {
        let g = geometry(n, 1.38);
        let model = PlaneWaveModel::new(&g, &PhaseVector::zeros(n)).unwrap();
        let grid = GridSpec::centered(80, 80, 0.6e-6).unwrap();
        let f = plane_wave_intensity(&g, &PhaseVector::zeros(n), &grid).unwrap();
        let (s, c) = (2.0 * PI / n as f64).sin_cos();
        for ((r, col), &v) in f.values.indexed_iter() {
            let (x, y) = (grid.x(col), grid.y(r));
            let rotated = model.intensity_at(c * x - s * y, s * x + c * y);
            assert!((rotated - v).abs() <= 1e-6);
        }
    }
}

#[test]
fn spatial_mean_is_unit_intensity() {
    for n in 2..=7 {
        let f = plane_wave_intensity(&geometry(n, 1.38), &PhaseVector::zeros(n), &GridSpec::default()).unwrap();
        let mean = f.values.mean().unwrap();
        assert!((mean - 1.0).abs() < 0.01, "n={n}: mean {mean}");
    }
}

#[test]
fn phase_gradient_translates_two_beam_fringes() {
    // a grid holding exactly eight fringe periods of 32 px keeps the
    // circular cross-correlation free of edge effects
    let theta = 1.38f64.to_radians();
    let g = DeflectionGeometry::from_deflection(2, theta, &beam()).unwrap();
    let dk = 2.0 * g.transverse_wavenumber;
    let period = 2.0 * PI / dk;
    let pitch = period / 32.0;
    let grid = GridSpec::centered(256, 32, pitch).unwrap();
    let base = plane_wave_intensity(&g, &PhaseVector(vec![0.0, 0.0]), &grid).unwrap();
    for c in [0.3, 1.0, 2.5, -1.7] {
        let moved = plane_wave_intensity(&g, &PhaseVector(vec![0.0, c]), &grid).unwrap();
        // the fringes are uniform along y, so only the x shift is defined
        let (dx, _) = cross_correlation_shift(&base.values, &moved.values).unwrap();
        // k1 − k0 points along +x; a phase c on beam 1 moves the fringes by −c/|Δk|
        let expected = -c / dk / pitch;
        // fringe shifts are defined modulo one period
        let err = (dx - expected + 16.0).rem_euclid(32.0) - 16.0;
        assert!(err.abs() < 0.1, "c={c}: {dx} vs {expected}");
    }
}

#[test]
fn rendering_is_deterministic_per_seed() {
    let g = geometry(3, 1.38);
    let f = plane_wave_intensity(&g, &PhaseVector::zeros(3), &GridSpec::centered(256, 256, 1e-6).unwrap()).unwrap();
    let cam = CameraSpec {
        read_noise_sigma: 12.0,
        seed: 99,
        ..CameraSpec::default()
    };
    let a = render_frame(&f, &cam, 0.0).unwrap();
    let b = render_frame(&f, &cam, 0.0).unwrap();
    assert_eq!(a, b);
    let other = render_frame(&f, &CameraSpec { seed: 100, ..cam }, 0.0).unwrap();
    assert_ne!(a.image, other.image);
}

#[test]
fn undeflected_sectors_rebuild_the_gaussian() {
    let b = beam();
    for n in [2usize, 3, 5] {
        let g = DeflectionGeometry::from_deflection(n, 0.0, &b).unwrap();
        let grid = GridSpec::centered(64, 64, 100e-6).unwrap();
        let f = sector_envelope_field(&g, &PhaseVector::zeros(n), &grid, &b, 0.1).unwrap();
        for ((r, c), &v) in f.values.indexed_iter() {
            let rho2 = grid.x(c).powi(2) + grid.y(r).powi(2);
            let want = (-2.0 * rho2 / (b.waist * b.waist)).exp();
            assert!((v - want).abs() < 1e-12);
        }
    }
}

#[test]
fn sector_envelope_near_axis_matches_plane_waves() {
    // close to the axis at the overlap plane every beam is present, so the
    // fringes are those of the plane-wave model up to the envelope amplitude
    let b = beam();
    let g = geometry(3, 1.38);
    let grid = GridSpec::centered(64, 64, 1e-6).unwrap();
    let z = g.overlap_distance;
    let env = sector_envelope_field(&g, &PhaseVector::zeros(3), &grid, &b, z).unwrap();
    let pw = plane_wave_intensity(&g, &PhaseVector::zeros(3), &grid).unwrap();
    let a = (-1.0f64).exp();
    for (e, p) in env.values.iter().zip(pw.values.iter()) {
        // amplitudes e^{-1}·(1 ± small) near the axis
        assert!((e - 3.0 * a * a * p).abs() < 0.05 * 9.0 * a * a);
    }
}

#[test]
fn camera_bins_match_area_average() {
    let grid = GridSpec::centered(30, 30, 1e-6).unwrap();
    let v = Array2::from_shape_fn((30, 30), |(r, c)| ((r * 30 + c) % 7) as f64 * 0.25);
    let f = IntensityField::new(grid, v.clone()).unwrap();
    let cam = CameraSpec {
        pixel_size: 3e-6,
        bit_depth: 16,
        exposure_gain: 1024.0,
        ..CameraSpec::default()
    };
    let frame = render_frame(&f, &cam, 0.0).unwrap();
    assert_eq!(frame.image.dim(), (10, 10));
    for r in 0..10 {
        for c in 0..10 {
            let mean: f64 = (0..3)
                .flat_map(|i| (0..3).map(move |j| (i, j)))
                .map(|(i, j)| v[[3 * r + i, 3 * c + j]])
                .sum::<f64>()
                / 9.0;
            assert_eq!(frame.image[[r, c]], (mean * 1024.0).round() as u16);
        }
    }
}

fn dyadic() -> impl Strategy<Value = f64> {
    (-64i32..64).prop_map(|k| k as f64 / 16.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn intensity_is_bounded(n in 2usize..=12, theta in 0.2f64..5.0, seed in 0u64..1000) {
        let g = geometry(n, theta);
        let phases: Vec<f64> = (0..n).map(|j| ((seed as f64 + 1.0) * (j as f64 + 0.5)).sin() * 3.0).collect();
        let f = plane_wave_intensity(&g, &PhaseVector(phases), &GridSpec::centered(48, 48, 0.9e-6).unwrap()).unwrap();
        for &v in f.values.iter() {
            prop_assert!(v >= 0.0);
            prop_assert!(v <= n as f64 * (1.0 + 1e-12));
        }
    }

    #[test]
    fn common_phase_is_bit_exact(n in 2usize..=8, offset in dyadic(), base in proptest::collection::vec(dyadic(), 8)) {
        let g = geometry(n, 1.38);
        let grid = GridSpec::centered(40, 40, 1e-6).unwrap();
        let p0: Vec<f64> = base[..n].to_vec();
        let p1: Vec<f64> = p0.iter().map(|d| d + offset).collect();
        let a = plane_wave_intensity(&g, &PhaseVector(p0), &grid).unwrap();
        let b = plane_wave_intensity(&g, &PhaseVector(p1), &grid).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn pairwise_oracle_agrees_anywhere(n in 2usize..=12, theta in 0.5f64..5.0, x in -2e-4f64..2e-4, y in -2e-4f64..2e-4, s in 0.0f64..6.0) {
        let g = geometry(n, theta);
        let phases: Vec<f64> = (0..n).map(|j| (s * j as f64).cos()).collect();
        let model = PlaneWaveModel::new(&g, &PhaseVector(phases.clone())).unwrap();
        let got = model.intensity_at(x, y);
        let want = pairwise_oracle(n, theta.to_radians(), &phases, x, y);
        prop_assert!((got - want).abs() <= 1e-10 * want.abs().max(1.0), "{} vs {}", got, want);
    }
}
