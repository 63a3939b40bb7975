//! Command-line workflow for prism lattice simulation and analysis.
//!
//! Each run resolves one configuration (file plus command-line overrides),
//! writes its outputs into the output directory together with
//! `manifest.toml`, a configuration file that reproduces the run.

pub mod commands;
pub mod config;

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

pub use config::RunConfig;

#[derive(Debug, Parser)]
#[command(
    name = "prism-lattice",
    version,
    about = "Multi-facet prism optical lattice simulator and analyzer"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Seed for every random draw of the run.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Format of the report printed on stdout.
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Structured,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize the interference pattern (and a camera frame if [camera] is set).
    Simulate,
    /// Measure peaks, spacing, symmetry and flatness of an image.
    Analyze {
        /// Image to analyze (16-bit PGM, PNG or TIFF).
        image: Option<PathBuf>,
        /// Pixel pitch in micrometers, required when the image has no sidecar.
        #[arg(long)]
        pitch_um: Option<f64>,
    },
    /// Generate a noisy frame series and compute stability metrics.
    Stability,
    /// Project a lattice constant through the telescope and estimate the depth.
    Project {
        /// Lattice constant before the projection telescope, micrometers.
        #[arg(long)]
        spacing_um: Option<f64>,
        /// Lattice constant seen through the viewing telescope, micrometers.
        #[arg(long)]
        imaged_spacing_um: Option<f64>,
    },
    /// Evaluate a grid of apex angles, facet counts and wavelengths.
    Sweep,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Analyze { .. } => "analyze",
            Command::Stability => "stability",
            Command::Project { .. } => "project",
            Command::Sweep => "sweep",
        }
    }
}

/// Report of one subcommand: a serializable body plus its text rendering.
pub struct Outcome {
    pub json: serde_json::Value,
    pub text: String,
    /// Errors of sub-measurements that did not stop the run.
    pub errors: Vec<String>,
}

impl Outcome {
    pub fn new<T: Serialize>(body: &T, text: String, errors: Vec<String>) -> Result<Self> {
        Ok(Self {
            json: serde_json::to_value(body)?,
            text,
            errors,
        })
    }
}

/// Merges command-line arguments into the configuration.
pub fn resolve(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = Some(out.clone());
    }
    match &cli.command {
        Command::Analyze { image, pitch_um } => {
            let a = cfg.analysis.get_or_insert_with(Default::default);
            if image.is_some() {
                a.image = image.clone();
            }
            if pitch_um.is_some() {
                a.pitch_um = *pitch_um;
            }
        }
        Command::Project {
            spacing_um,
            imaged_spacing_um,
        } => {
            let p = cfg.project.get_or_insert_with(Default::default);
            if spacing_um.is_some() {
                p.spacing_um = *spacing_um;
            }
            if imaged_spacing_um.is_some() {
                p.imaged_spacing_um = *imaged_spacing_um;
            }
        }
        _ => {}
    }
    Ok(cfg)
}

fn write_manifest(out: &Path, command: &str, cfg: &RunConfig) -> Result<()> {
    let mut echo = cfg.clone();
    echo.output_dir = None;
    let text = format!(
        "# prism-lattice {command}\n# rerun: prism-lattice {command} --config manifest.toml --out <dir>\n{}",
        echo.to_toml()?
    );
    fs::write(out.join("manifest.toml"), text).context("writing manifest")
}

/// Runs one subcommand and returns the text to print. An `Err` means a
/// nonzero exit status.
pub fn run(cli: &Cli) -> Result<String> {
    let cfg = resolve(cli)?;
    let out = cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    write_manifest(&out, cli.command.name(), &cfg)?;

    let outcome = match &cli.command {
        Command::Simulate => commands::simulate(&cfg, &out)?,
        Command::Analyze { .. } => commands::analyze(&cfg, &out)?,
        Command::Stability => commands::stability(&cfg, &out)?,
        Command::Project { .. } => commands::project(&cfg, &out)?,
        Command::Sweep => commands::sweep(&cfg, &out)?,
    };
    let json = serde_json::to_string_pretty(&outcome.json)? + "\n";
    fs::write(out.join("report.json"), &json)?;
    fs::write(out.join("report.txt"), &outcome.text)?;
    let printed = match cli.format {
        Format::Text => outcome.text,
        Format::Structured => json,
    };
    if outcome.errors.is_empty() {
        Ok(printed)
    } else {
        print!("{printed}");
        anyhow::bail!("{}", outcome.errors.join("; "))
    }
}
