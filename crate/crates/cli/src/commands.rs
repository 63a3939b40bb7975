use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::Serialize;

use prism_lattice::analysis::{
    analyze_lattice, fft_spectrum, AnalysisOptions, SampledImage, SpacingEstimate, SymmetryReport,
};
use prism_lattice::field::{plane_wave_intensity, render_frame, sector_envelope_field, IntensityField};
use prism_lattice::io::{load_image, write_field, write_frame, write_spectrum, FieldInfo};
use prism_lattice::optics::{beam_wavevectors, predicted_lattice_constant, BeamSpec, DeflectionGeometry, PrismSpec};
use prism_lattice::projection::{
    chain_depth, demagnification, project_constant, recoil_energy, ChainDepth, ProjectionDirection, PLANCK,
};
use prism_lattice::stability::{
    generate_time_series, illumination_centroid, spacing_series, stability_metrics, track_reference_peak, FieldModel,
    SeriesConfig, StabilityReport, ENVELOPE_DRIFT_RELATIVE, ENVELOPE_RMSE_RELATIVE,
};
use prism_lattice::LatticeError;

use crate::config::{require, ModelKind, RunConfig};
use crate::Outcome;

fn um(x: f64) -> f64 {
    x * 1e6
}

fn analysis_options(cfg: &RunConfig) -> AnalysisOptions {
    let mut o = AnalysisOptions::default();
    if let Some(a) = &cfg.analysis {
        o.expected_spacing = a.expected_spacing_um.map(|s| s / 1e6);
        if let Some(p) = a.min_prominence {
            o.min_prominence = p;
        }
        if let Some(f) = a.central_fraction {
            o.central_fraction = f;
        }
    }
    o
}

fn field_model(cfg: &RunConfig, geometry: &DeflectionGeometry) -> FieldModel {
    let f = cfg.field();
    match f.model {
        ModelKind::PlaneWave => FieldModel::PlaneWave,
        ModelKind::SectorEnvelope => FieldModel::SectorEnvelope {
            z: f.z_mm.map_or(geometry.overlap_distance, |z| z / 1e3),
        },
    }
}

fn synthesize(cfg: &RunConfig, geometry: &DeflectionGeometry, beam: &BeamSpec) -> Result<IntensityField> {
    let grid = cfg.grid()?;
    let phases = cfg.phases(geometry.facet_count);
    Ok(match field_model(cfg, geometry) {
        FieldModel::PlaneWave => plane_wave_intensity(geometry, &phases, &grid)?,
        FieldModel::SectorEnvelope { z } => sector_envelope_field(geometry, &phases, &grid, beam, z)?,
    })
}

fn closed_form(geometry: &DeflectionGeometry) -> Result<Option<f64>> {
    match predicted_lattice_constant(geometry) {
        Ok(a) => Ok(Some(a)),
        Err(LatticeError::UnsupportedFacetCount(_)) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

#[derive(Serialize)]
struct SimulateReport {
    facet_count: usize,
    model: FieldModel,
    deflection_angle_deg: f64,
    overlap_distance_m: f64,
    predicted_lattice_constant_m: Option<f64>,
    max_intensity: f64,
    field_image: String,
    intensity_per_count: f64,
    frame_image: Option<String>,
}

pub fn simulate(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let prism = cfg.prism()?;
    let beam = cfg.beam()?;
    cfg.grid()?;
    let geometry = beam_wavevectors(&prism, &beam)?;
    let field = synthesize(cfg, &geometry, &beam)?;
    let predicted = closed_form(&geometry)?;
    let info = FieldInfo {
        seed: cfg.seed,
        facet_count: Some(prism.facet_count),
        predicted_lattice_constant: predicted,
    };
    let meta = write_field(&out.join("field.pgm"), &field, &info)?;
    let frame_image = match &cfg.camera {
        Some(_) => {
            let frame = render_frame(&field, &cfg.camera()?, 0.0)?;
            write_frame(&out.join("frame.pgm"), &frame)?;
            Some("frame.pgm".to_string())
        }
        None => None,
    };
    let report = SimulateReport {
        facet_count: prism.facet_count,
        model: field_model(cfg, &geometry),
        deflection_angle_deg: geometry.deflection_angle.to_degrees(),
        overlap_distance_m: geometry.overlap_distance,
        predicted_lattice_constant_m: predicted,
        max_intensity: field.max(),
        field_image: "field.pgm".into(),
        intensity_per_count: meta.intensity_per_count.unwrap_or(1.0),
        frame_image,
    };
    let mut t = String::new();
    writeln!(t, "simulate: {}-facet prism", report.facet_count)?;
    writeln!(t, "  deflection angle      {:.4} deg", report.deflection_angle_deg)?;
    writeln!(t, "  overlap distance      {:.2} mm", report.overlap_distance_m * 1e3)?;
    match predicted {
        Some(a) => writeln!(t, "  predicted constant    {:.4} um", um(a))?,
        None => writeln!(
            t,
            "  predicted constant    none (no closed form for n = {})",
            prism.facet_count
        )?,
    }
    writeln!(t, "  peak intensity        {:.4} |E0|^2", report.max_intensity)?;
    writeln!(
        t,
        "  wrote field.pgm{}",
        if report.frame_image.is_some() {
            ", frame.pgm"
        } else {
            ""
        }
    )?;
    Outcome::new(&report, t, Vec::new())
}

#[derive(Serialize)]
struct PeakRow {
    x_m: f64,
    y_m: f64,
    col_px: f64,
    row_px: f64,
    amplitude: f64,
    sigma_m: f64,
    ci95_m: f64,
}

#[derive(Serialize)]
struct AnalyzeReport {
    image: PathBuf,
    width: usize,
    height: usize,
    pitch_m: f64,
    expected_spacing_m: f64,
    peak_count: usize,
    failed_fits: usize,
    spacing: SpacingEstimate,
    symmetry: Option<SymmetryReport>,
    symmetry_error: Option<String>,
    flatness: Option<f64>,
    flatness_error: Option<String>,
}

pub fn analyze(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let a = cfg.analysis.clone().unwrap_or_default();
    let path = a
        .image
        .clone()
        .ok_or_else(|| anyhow!("no image given; pass a path or set analysis.image"))?;
    let image = load_image(&path, a.pitch_um.map(|p| p / 1e6))?;
    let rep = analyze_lattice(&image, &analysis_options(cfg))?;

    let mut w = csv::Writer::from_path(out.join("peaks.csv"))?;
    for p in &rep.peaks {
        w.serialize(PeakRow {
            x_m: p.center.0,
            y_m: p.center.1,
            col_px: p.center_px.0,
            row_px: p.center_px.1,
            amplitude: p.amplitude,
            sigma_m: p.width_sigma,
            ci95_m: p.ci95_center,
        })?;
    }
    w.flush()?;
    if a.write_spectrum {
        write_spectrum(
            &out.join("spectrum.pgm"),
            &fft_spectrum(&image, AnalysisOptions::default().window)?,
        )?;
    }

    let mut errors = Vec::new();
    let symmetry_error = rep.symmetry.as_ref().err().map(|e| format!("symmetry: {e}"));
    let flatness_error = rep.flatness.as_ref().err().map(|e| format!("flatness: {e}"));
    errors.extend(symmetry_error.clone());
    errors.extend(flatness_error.clone());
    let report = AnalyzeReport {
        image: path,
        width: image.width(),
        height: image.height(),
        pitch_m: image.pitch,
        expected_spacing_m: rep.expected_spacing,
        peak_count: rep.peaks.len(),
        failed_fits: rep.failed_fits,
        spacing: rep.spacing,
        symmetry: rep.symmetry.clone().ok(),
        symmetry_error,
        flatness: rep.flatness.clone().ok(),
        flatness_error,
    };

    let mut t = String::new();
    writeln!(
        t,
        "analyze: {} ({}x{}, {:.3} um/px)",
        report.image.display(),
        report.width,
        report.height,
        um(report.pitch_m)
    )?;
    writeln!(
        t,
        "  fitted peaks          {} ({} failed)",
        report.peak_count, report.failed_fits
    )?;
    writeln!(
        t,
        "  lattice constant      {:.4} um +/- {:.4} um (95%, {} pairs, rmse {:.4} um)",
        um(rep.spacing.mean_spacing),
        um(rep.spacing.ci95),
        rep.spacing.sample_count,
        um(rep.spacing.rmse)
    )?;
    match &report.symmetry {
        Some(s) => {
            writeln!(
                t,
                "  rotational order      {} (ring at {:.4} um period)",
                s.best_order,
                um(1.0 / s.ring_radius)
            )?;
            let scores: Vec<String> = s.score_by_order.iter().map(|(q, v)| format!("{q}:{v:.3}")).collect();
            writeln!(t, "  order scores          {}", scores.join(" "))?;
        }
        None => writeln!(
            t,
            "  rotational order      {}",
            report.symmetry_error.as_deref().unwrap_or("-")
        )?,
    }
    match report.flatness {
        Some(f) => writeln!(t, "  envelope flatness     {f:.4} (std/mean)")?,
        None => writeln!(
            t,
            "  envelope flatness     {}",
            report.flatness_error.as_deref().unwrap_or("-")
        )?,
    }
    Outcome::new(&report, t, errors)
}

#[derive(Serialize)]
struct SeriesRow {
    frame: usize,
    time_s: f64,
    spacing_m: f64,
    ci95_m: f64,
    position_x_m: f64,
    position_y_m: f64,
}

#[derive(Serialize)]
struct FailureRow {
    frame: usize,
    time_s: f64,
    error: String,
}

#[derive(Serialize)]
struct StabilityOutput {
    frame_count: usize,
    interval_s: f64,
    rmse_reference: &'static str,
    envelope_rmse_relative: f64,
    envelope_drift_relative: f64,
    metrics: StabilityReport,
    failed_frames: Vec<FailureRow>,
}

pub fn stability(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let prism = cfg.prism()?;
    let beam = cfg.beam()?;
    let noise = cfg.noise()?;
    let s = require(&cfg.series, "series")?;
    let geometry = beam_wavevectors(&prism, &beam)?;
    let series_cfg = SeriesConfig {
        interval: s.interval_s,
        frame_count: s.frame_count,
        camera: cfg.camera()?,
        grid: cfg.grid()?,
        model: field_model(cfg, &geometry),
    };
    let frames = generate_time_series(&geometry, &beam, &noise, &series_cfg)?;
    if s.write_frames {
        let dir = out.join("frames");
        fs::create_dir_all(&dir)?;
        for (i, f) in frames.iter().enumerate() {
            write_frame(&dir.join(format!("frame_{i:04}.pgm")), f)?;
        }
    }
    let series = spacing_series(&frames, &analysis_options(cfg));
    let centroid = illumination_centroid(&SampledImage::from(&frames[0]));
    let positions = track_reference_peak(&series, centroid)?;
    let metrics = stability_metrics(&series.spacings(), &positions)?;

    let mut w = csv::Writer::from_path(out.join("series.csv"))?;
    for (e, p) in series.entries.iter().zip(&positions) {
        w.serialize(SeriesRow {
            frame: e.index,
            time_s: e.time,
            spacing_m: e.spacing.mean_spacing,
            ci95_m: e.spacing.ci95,
            position_x_m: p.0,
            position_y_m: p.1,
        })?;
    }
    w.flush()?;

    let failed_frames: Vec<FailureRow> = series
        .failures
        .iter()
        .map(|f| FailureRow {
            frame: f.index,
            time_s: f.time,
            error: f.error.to_string(),
        })
        .collect();
    let report = StabilityOutput {
        frame_count: frames.len(),
        interval_s: s.interval_s,
        rmse_reference: "series mean",
        envelope_rmse_relative: ENVELOPE_RMSE_RELATIVE,
        envelope_drift_relative: ENVELOPE_DRIFT_RELATIVE,
        metrics,
        failed_frames,
    };
    let m = &report.metrics;
    let mut t = String::new();
    writeln!(
        t,
        "stability: {} frames every {} s",
        report.frame_count, report.interval_s
    )?;
    writeln!(
        t,
        "  analyzed frames       {} ({} failed)",
        m.spacing_series.len(),
        report.failed_frames.len()
    )?;
    writeln!(t, "  mean lattice constant {:.4} um", um(m.spacing_mean))?;
    writeln!(
        t,
        "  spacing rmse          {:.4} um ({:.3}% of the mean, about the series mean)",
        um(m.spacing_rmse),
        100.0 * m.spacing_rmse_relative
    )?;
    writeln!(
        t,
        "  position drift        {:.4} um ({:.3}% of the lattice constant)",
        um(m.position_drift_max),
        100.0 * m.position_drift_relative
    )?;
    writeln!(
        t,
        "  within envelope       {} (rmse <= {:.2}%, drift <= {:.2}%)",
        if m.within_envelope { "yes" } else { "no" },
        100.0 * ENVELOPE_RMSE_RELATIVE,
        100.0 * ENVELOPE_DRIFT_RELATIVE
    )?;
    Outcome::new(&report, t, Vec::new())
}

#[derive(Serialize)]
struct ProjectReport {
    demagnification: f64,
    spacing_m: Option<f64>,
    projected_spacing_m: Option<f64>,
    viewing_magnification: Option<f64>,
    imaged_spacing_m: Option<f64>,
    atom_plane_spacing_from_image_m: Option<f64>,
    lattice_recoil_j: Option<f64>,
    lattice_recoil_hz: Option<f64>,
    depth: Option<ChainDepth>,
    conventions: Vec<&'static str>,
}

pub fn project(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let _ = out;
    let telescope = cfg.telescope()?;
    let species = cfg.species()?;
    let p = cfg.project.clone().unwrap_or_default();
    if p.spacing_um.is_none() && p.imaged_spacing_um.is_none() {
        bail!("no lattice constant given; pass --spacing-um or set project.spacing_um");
    }
    let demag = demagnification(&telescope)?;
    let spacing = p.spacing_um.map(|s| s / 1e6);
    let projected = spacing
        .map(|s| project_constant(s, demag, ProjectionDirection::Demagnify))
        .transpose()?;
    let view = cfg.viewing_telescope()?.map(|t| demagnification(&t)).transpose()?;
    let imaged = p.imaged_spacing_um.map(|s| s / 1e6);
    let from_image = match (imaged, view) {
        (Some(s), Some(m)) => Some(project_constant(s, m, ProjectionDirection::Demagnify)?),
        (Some(_), None) => bail!("imaged_spacing_um needs telescope.f_view1_mm and telescope.f_view2_mm"),
        _ => None,
    };
    let atoms = projected.or(from_image);
    let recoil = atoms.map(|a| recoil_energy(&species, a));
    let depth = match (&cfg.prism, &cfg.beam, atoms) {
        (Some(_), Some(_), Some(a)) => {
            let prism: PrismSpec = cfg.prism()?;
            Some(chain_depth(&cfg.beam()?, prism.facet_count, demag, &species, a)?)
        }
        _ => None,
    };
    let report = ProjectReport {
        demagnification: demag,
        spacing_m: spacing,
        projected_spacing_m: projected,
        viewing_magnification: view,
        imaged_spacing_m: imaged,
        atom_plane_spacing_from_image_m: from_image,
        lattice_recoil_j: recoil,
        lattice_recoil_hz: recoil.map(|e| e / PLANCK),
        depth,
        conventions: vec![
            "lattice recoil Er = h^2/(8 m a^2), i.e. k_L = pi/a",
            "photon recoil = h^2/(2 m lambda^2)",
            "two-level dipole potential U = 3 pi c^2 Gamma I / (2 w0^3 (wL - w0))",
            "peak_to_valley uses the lattice maximum n*I_env; envelope_referenced uses I_env",
        ],
    };

    let mut t = String::new();
    writeln!(t, "project: demagnification {demag:.4}")?;
    if let (Some(s), Some(a)) = (spacing, projected) {
        writeln!(t, "  {:.4} um -> {:.4} um at the atoms", um(s), um(a))?;
    }
    if let (Some(s), Some(m), Some(a)) = (imaged, view, from_image) {
        writeln!(t, "  imaged {:.4} um / {m:.4} -> {:.4} um at the atoms", um(s), um(a))?;
    }
    if let (Some(e), Some(a)) = (recoil, atoms) {
        writeln!(
            t,
            "  lattice recoil        {:.4e} J ({:.1} Hz) for a = {:.4} um",
            e,
            e / PLANCK,
            um(a)
        )?;
    }
    if let Some(d) = &report.depth {
        writeln!(
            t,
            "  beam at atoms         waist {:.1} um, envelope {:.3e} W/m^2, peak {:.3e} W/m^2",
            um(d.projected_waist),
            d.envelope_intensity,
            d.peak_intensity
        )?;
        writeln!(t, "  potential             {:?}", d.peak_to_valley.character)?;
        writeln!(
            t,
            "  depth (peak-valley)   {:.1} Er lattice recoil, {:.1} Er photon recoil",
            d.peak_to_valley.depth_lattice_recoil, d.peak_to_valley.depth_photon_recoil
        )?;
        writeln!(
            t,
            "  depth (envelope)      {:.1} Er lattice recoil, {:.1} Er photon recoil",
            d.envelope_referenced.depth_lattice_recoil, d.envelope_referenced.depth_photon_recoil
        )?;
    }
    Outcome::new(&report, t, Vec::new())
}

#[derive(Serialize, Clone)]
struct SweepRow {
    apex_angle_deg: f64,
    facet_count: usize,
    wavelength_nm: f64,
    deflection_angle_deg: f64,
    overlap_distance_mm: f64,
    predicted_spacing_um: Option<f64>,
    measured_spacing_um: Option<f64>,
    measured_ci95_um: Option<f64>,
    best_order: Option<usize>,
    error: Option<String>,
}

#[derive(Serialize)]
struct SweepReport {
    points: Vec<SweepRow>,
}

pub fn sweep(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let s = require(&cfg.sweep, "sweep")?;
    let base_prism = require(&cfg.prism, "prism")?;
    let base_beam = cfg.beam()?;
    if s.measure {
        cfg.grid()?;
    }
    let options = analysis_options(cfg);
    let mut rows = Vec::new();
    for &alpha in &s.apex_angle_deg {
        for &n in &s.facet_count {
            for &lambda in &s.wavelength_nm {
                let prism = PrismSpec::from_degrees(n, alpha, base_prism.refractive_index)
                    .with_context(|| format!("sweep point alpha={alpha} n={n}"))?;
                let beam = BeamSpec::new(lambda / 1e9, base_beam.waist, base_beam.power)
                    .with_context(|| format!("sweep point lambda={lambda} nm"))?;
                let geometry = beam_wavevectors(&prism, &beam)?;
                let predicted = closed_form(&geometry)?;
                let mut row = SweepRow {
                    apex_angle_deg: alpha,
                    facet_count: n,
                    wavelength_nm: lambda,
                    deflection_angle_deg: geometry.deflection_angle.to_degrees(),
                    overlap_distance_mm: geometry.overlap_distance * 1e3,
                    predicted_spacing_um: predicted.map(um),
                    measured_spacing_um: None,
                    measured_ci95_um: None,
                    best_order: None,
                    error: None,
                };
                if s.measure {
                    let field = plane_wave_intensity(&geometry, &cfg.phases(n), &cfg.grid()?)?;
                    match analyze_lattice(&SampledImage::from(&field), &options) {
                        Ok(r) => {
                            row.measured_spacing_um = Some(um(r.spacing.mean_spacing));
                            row.measured_ci95_um = Some(um(r.spacing.ci95));
                            row.best_order = r.symmetry.ok().map(|s| s.best_order);
                        }
                        Err(e) => row.error = Some(e.to_string()),
                    }
                }
                rows.push(row);
            }
        }
    }
    let mut w = csv::Writer::from_path(out.join("sweep.csv"))?;
    for r in &rows {
        w.serialize(r.clone())?;
    }
    w.flush()?;
    let errors: Vec<String> = rows
        .iter()
        .filter_map(|r| {
            r.error.as_ref().map(|e| {
                format!(
                    "alpha={} n={} lambda={}: {e}",
                    r.apex_angle_deg, r.facet_count, r.wavelength_nm
                )
            })
        })
        .collect();

    let mut t = String::new();
    writeln!(t, "sweep: {} points", rows.len())?;
    writeln!(
        t,
        "  alpha_deg  n  lambda_nm  theta_deg  overlap_mm  predicted_um  measured_um  order"
    )?;
    let opt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
    for r in &rows {
        writeln!(
            t,
            "  {:>9.3} {:>2} {:>10.1} {:>10.4} {:>11.2} {:>13} {:>12} {:>6}",
            r.apex_angle_deg,
            r.facet_count,
            r.wavelength_nm,
            r.deflection_angle_deg,
            r.overlap_distance_mm,
            opt(r.predicted_spacing_um),
            opt(r.measured_spacing_um),
            r.best_order.map_or("-".to_string(), |q| q.to_string())
        )?;
    }
    Outcome::new(&SweepReport { points: rows }, t, errors)
}
