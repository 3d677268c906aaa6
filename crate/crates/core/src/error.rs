use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at {line}:{column}: {message}")]
    Parse { line: u32, column: u32, message: String },

    #[error("unsupported SVG feature `{feature}` on `{path_id}`")]
    Unsupported { feature: String, path_id: String },

    /// A caller broke an operation's precondition (shape mismatch, bad argument).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Geometry too degenerate for the requested construction (e.g. collinear hull input).
    #[error("degenerate geometry: {0}")]
    Degenerate(String),

    #[error("render tape has already been consumed by a backward pass")]
    TapeReused,

    #[error("non-finite gradient on path `{path_id}` at step {step}")]
    NonFiniteGradient { path_id: String, step: usize },

    #[error("backend `{backend}`: {message}")]
    Backend { backend: String, message: String },

    #[error("invalid feature grid: {0}")]
    FeatureGrid(String),

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short machine-readable name of the variant.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "parse",
            Error::Unsupported { .. } => "unsupported",
            Error::Contract(_) => "contract",
            Error::Degenerate(_) => "degenerate",
            Error::TapeReused => "tape_reused",
            Error::NonFiniteGradient { .. } => "non_finite_gradient",
            Error::Backend { .. } => "backend",
            Error::FeatureGrid(_) => "feature_grid",
            Error::Image(_) => "image",
            Error::Json(_) => "json",
            Error::Io(_) => "io",
        }
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }
}
