use std::io;

use thiserror::Error;

/// Everything that can go wrong inside the toolkit.
///
/// Variants are grouped by the kind of failure so callers (the CLI in
/// particular) can map them onto exit codes without string matching.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),

    /// Bad magic, truncated header, unparsable metadata.
    #[error("format error: {0}")]
    Format(String),

    /// Header and payload disagree.
    #[error("corrupt file: {0}")]
    Corruption(String),

    /// A value violates a documented invariant (non-finite sample, unknown ROI, ...).
    #[error("validation error: {0}")]
    Validation(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("index out of bounds: {0}")]
    Bounds(String),

    /// Requested frequency does not sit on the spectrum's bin grid.
    #[error("frequency {freq_hz} Hz is not on the bin grid (spacing {spacing_hz} Hz)")]
    FrequencyGrid { freq_hz: f64, spacing_hz: f64 },

    #[error("no neighbouring bins within ±{half_width_hz} Hz of {target_hz} Hz")]
    GridTooCoarse { target_hz: f64, half_width_hz: f64 },

    #[error("population too small: need at least {needed}, got {got}")]
    PopulationTooSmall { needed: usize, got: usize },

    /// Zero variance where a spread is required (z-scoring, thresholds).
    #[error("degenerate population: {0}")]
    DegeneratePopulation(String),

    #[error("degenerate feature vector for {0}")]
    DegenerateFeature(String),

    /// Contingency table with an empty margin.
    #[error("undefined test: {0}")]
    UndefinedTest(String),

    #[error("undefined ratio: {0}")]
    UndefinedRatio(String),

    #[error("incomplete design: {0}")]
    IncompleteDesign(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
}

impl Error {
    /// True for the statistical-degeneracy family (zero variance, empty
    /// margins, undefined ratios).
    pub fn is_degeneracy(&self) -> bool {
        matches!(
            self,
            Error::PopulationTooSmall { .. }
                | Error::DegeneratePopulation(_)
                | Error::DegenerateFeature(_)
                | Error::UndefinedTest(_)
                | Error::UndefinedRatio(_)
        )
    }

    /// True for problems with input files.
    pub fn is_input_format(&self) -> bool {
        matches!(
            self,
            Error::Io(_) | Error::Format(_) | Error::Corruption(_) | Error::Validation(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
