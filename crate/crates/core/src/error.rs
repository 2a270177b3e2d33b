use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    /// A record parsed fine but breaks a dataset invariant.
    #[error("image {image_id:?}, field `{field}`: {message}")]
    Invalid {
        image_id: String,
        field: String,
        message: String,
    },

    #[error("duplicate image_id {0:?}")]
    DuplicateImage(String),

    #[error("unknown image_id {0:?}")]
    UnknownImage(String),

    #[error("{path}: malformed XML: {message}")]
    Xml { path: PathBuf, message: String },

    #[error("failed to decode image {path}: {message}")]
    Image { path: PathBuf, message: String },

    #[error("region {region} is outside the {width}x{height} image")]
    RegionOutOfBounds {
        region: String,
        width: u32,
        height: u32,
    },

    #[error("cannot normalize a zero vector")]
    ZeroVector,

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("non-finite value in feature vector")]
    NonFinite,

    #[error("duplicate embedding key {image_id}#{roi_index}")]
    DuplicateKey { image_id: String, roi_index: usize },

    #[error("no embedding for {image_id}#{roi_index}")]
    MissingEmbedding { image_id: String, roi_index: usize },

    #[error("{name} = {value} is outside {range}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        range: &'static str,
    },

    #[error("ground truth contains no RoIs")]
    NoGroundTruth,

    #[error("brand {0:?} does not occur in the ground truth")]
    BrandNotInGroundTruth(String),

    #[error("brands missing from the ground truth: {}", .0.join(", "))]
    BrandsNotInGroundTruth(Vec<String>),

    #[error("no query crop for brand {brand:?} in iteration {iteration}")]
    MissingQueryCrop { brand: String, iteration: usize },

    #[error("query set is empty")]
    EmptyQuerySet,

    #[error("{0}")]
    Usage(String),

    /// A computed result broke one of its own invariants.
    #[error("internal invariant violated: {0}")]
    Internal(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(
        image_id: impl Into<String>,
        field: impl Into<String>,
        message: impl Into<String>,
    ) -> Self {
        Error::Invalid {
            image_id: image_id.into(),
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn parse(line: usize, message: impl ToString) -> Self {
        Error::Parse {
            line,
            message: message.to_string(),
        }
    }
}
