use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("joint geometry does not fit the {size}x{size} frame with an 8 px margin")]
    GeometryOverflow { size: usize },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("split needs at least 2 distinct config ids, found {0}")]
    InsufficientGroups(usize),

    #[error("keypoint ({x:.3}, {y:.3}) lies outside the region of interest")]
    KeypointOutsideRoi { x: f64, y: f64 },

    #[error("keypoint ({x:.3}, {y:.3}) lies outside the {width}x{height} grid")]
    KeypointOutOfBounds { x: f64, y: f64, width: usize, height: usize },

    #[error("augmentation moved keypoint {index} out of the frame")]
    KeypointEjected { index: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("training manifest has no samples")]
    EmptyDataset,

    #[error("checkpoint mismatch: {0}")]
    CheckpointMismatch(String),

    #[error("prediction and ground-truth lists differ in length ({pred} vs {gt})")]
    LengthMismatch { pred: usize, gt: usize },

    #[error("OKS scale must be positive, got {0}")]
    NonpositiveScale(f64),

    #[error("prediction id {0:?} not present in the manifest")]
    UnknownId(String),

    #[error("sample {0:?} has no usable head radius")]
    MissingHeadRadius(String),

    #[error("bottom keypoint pair is inverted (y6 = {y6:.3} < y5 = {y5:.3})")]
    InvertedPair { y5: f64, y6: f64 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// True for errors caused by the input data or its schema rather than by
    /// the environment or a failed computation. Missing or undecodable input
    /// files count as data errors.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Schema(_)
                | Error::InsufficientGroups(_)
                | Error::KeypointOutsideRoi { .. }
                | Error::KeypointOutOfBounds { .. }
                | Error::Config(_)
                | Error::EmptyDataset
                | Error::CheckpointMismatch(_)
                | Error::LengthMismatch { .. }
                | Error::NonpositiveScale(_)
                | Error::UnknownId(_)
                | Error::MissingHeadRadius(_)
                | Error::InvertedPair { .. }
                | Error::Json { .. }
                | Error::Image { .. }
        ) || matches!(self, Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound)
    }
}
