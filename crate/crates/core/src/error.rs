use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty manifest")]
    EmptyManifest,

    #[error("manifest row {row}: {msg}")]
    ManifestRow { row: usize, msg: String },

    #[error("duplicate clip_id `{0}`")]
    DuplicateClip(String),

    #[error("unsupported audio format in {path}: {msg}")]
    UnsupportedFormat { path: PathBuf, msg: String },

    #[error("partition: {0}")]
    Partition(String),

    #[error("clip `{clip_id}` has {len} samples, at least {need} required")]
    ClipTooShort { clip_id: String, len: usize, need: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration: {0}")]
    Config(String),

    #[error("unknown noise source `{0}`")]
    UnknownNoise(String),

    #[error("train and test sets overlap on subset {0}")]
    Overlap(usize),

    #[error("clip `{0}` is in both the training and the test pool")]
    ClipOverlap(String),

    #[error("missing cache entry for clip `{0}`")]
    MissingCache(String),

    #[error("fold mismatch: {0}")]
    FoldMismatch(String),

    #[error("empty test cell: {0}")]
    EmptyCell(String),

    #[error("cache file {path}: {msg}")]
    Cache { path: PathBuf, msg: String },

    #[error("checksum mismatch in {0}")]
    Checksum(PathBuf),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
