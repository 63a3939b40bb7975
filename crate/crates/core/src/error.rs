use thiserror::Error;

/// Errors raised across the simulation and analysis pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum LatticeError {
    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("no closed-form lattice constant for facet count {0}")]
    UnsupportedFacetCount(usize),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("resolution error: {0}")]
    Resolution(String),

    #[error("no peaks found: {0}")]
    NoPeaks(String),

    #[error("fit did not converge after {0} iterations")]
    NonConvergence(usize),

    #[error("ill-conditioned fit: {0}")]
    IllConditioned(String),

    #[error("fit window out of bounds: {0}")]
    WindowOutOfBounds(String),

    #[error("insufficient peaks: need at least {needed}, got {got}")]
    InsufficientPeaks { needed: usize, got: usize },

    #[error("image too small: {0}")]
    ImageTooSmall(String),

    #[error("no ring found in spectrum: {0}")]
    NoRing(String),

    #[error("illuminated region not found: {0}")]
    RegionNotFound(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("zero detuning: lattice wavelength equals the transition wavelength")]
    ZeroDetuning,

    #[error("io error: {0}")]
    Io(String),

    #[error("format error: {0}")]
    Format(String),
}

impl From<std::io::Error> for LatticeError {
    fn from(e: std::io::Error) -> Self {
        LatticeError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, LatticeError>;
