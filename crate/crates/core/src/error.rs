use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image error at {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("csv error in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("json error in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("invalid label space: {0}")]
    LabelSpace(String),

    #[error("invalid mapping: {0}")]
    Mapping(String),

    #[error("label space mismatch: expected {expected}, found {found}")]
    SpaceMismatch { expected: String, found: String },

    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    DimMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("quarter-turn count {0} outside 0..=3")]
    InvalidQuarterTurn(i64),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("sync error: {0}")]
    Sync(String),

    #[error("pose interpolation: {0}")]
    Pose(String),

    #[error("ply error: {0}")]
    Ply(String),

    #[error("vote config: {0}")]
    Vote(String),

    #[error("no evaluated elements")]
    EmptyEvaluation,

    #[error("task graph: {0}")]
    Graph(String),

    #[error("scene {0} is locked by another executor")]
    Locked(PathBuf),

    #[error("missing artifact: {0}")]
    Missing(PathBuf),

    #[error("executor aborted during task {0}")]
    Aborted(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
        let path = path.into();
        move |source| Error::Io { path, source }
    }

    pub fn image(path: impl Into<PathBuf>) -> impl FnOnce(image::ImageError) -> Error {
        let path = path.into();
        move |source| Error::Image { path, source }
    }

    pub fn csv(path: impl Into<PathBuf>) -> impl FnOnce(csv::Error) -> Error {
        let path = path.into();
        move |source| Error::Csv { path, source }
    }

    pub fn json(path: impl Into<PathBuf>) -> impl FnOnce(serde_json::Error) -> Error {
        let path = path.into();
        move |source| Error::Json { path, source }
    }
}
