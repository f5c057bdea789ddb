use std::path::PathBuf;

/// Errors produced by the hairsketch library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("degenerate braid: {0}")]
    DegenerateBraid(String),

    #[error("coincident strand center-lines ({0} and {1})")]
    CoincidentStrands(usize, usize),

    #[error("attention over {positions} positions exceeds the cap of {cap}")]
    AttentionTooLarge { positions: usize, cap: usize },

    #[error("non-finite loss term `{0}`")]
    NonFiniteLoss(&'static str),

    #[error("at least one hair stroke is required")]
    NoHairStrokes,

    #[error("augmentation moves {0:.1}% of the matte mass off-canvas")]
    MatteOffCanvas(f64),

    #[error("missing checkpoint: {0}")]
    MissingCheckpoint(PathBuf),

    #[error("checkpoint format: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Tensor(#[from] candle_core::Error),
}

impl Error {
    /// Short machine-readable reason code.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid_input",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::DegenerateBraid(_) => "degenerate_braid",
            Error::CoincidentStrands(..) => "coincident_strands",
            Error::AttentionTooLarge { .. } => "attention_too_large",
            Error::NonFiniteLoss(_) => "non_finite_loss",
            Error::NoHairStrokes => "no_hair_strokes",
            Error::MatteOffCanvas(_) => "matte_off_canvas",
            Error::MissingCheckpoint(_) => "missing_checkpoint",
            Error::Checkpoint(_) => "checkpoint_format",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Image(_) => "image",
            Error::Tensor(_) => "tensor",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
