//! On-disk formats: flow matrices, manifests, traces, frame sequences.

pub mod frames;
pub mod manifest;
pub mod matrix_file;
pub mod preprocess;
pub mod project;
pub mod trace;

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::epof::EpofError;
use crate::grf::GrfError;
use crate::grid::GridError;
use crate::matrix::MatrixError;
use matrix_file::MatrixFileError;

pub use frames::{write_png_sequence, LumaFrames, PngSequence};
pub use manifest::ProjectManifest;
pub use matrix_file::{load_matrix, save_matrix};
pub use preprocess::{pending_windows, preprocess, resume_preprocess, PreprocessSettings, RunOptions};
pub use project::Project;
pub use trace::{read_epof_csv, read_trace, write_epof_csv, write_trace, EpofRow};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}: {source}", path.display())]
    Image { path: PathBuf, source: image::ImageError },
    #[error("{}: {source}", path.display())]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{}: {source}", path.display())]
    MatrixFile { path: PathBuf, source: MatrixFileError },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("{}: no PNG frames found", .0.display())]
    NoFrames(PathBuf),
    #[error("video does not match manifest (expected digest {expected}, found {found})")]
    VideoMismatch { expected: String, found: String },
    #[error("{}: digest {found} does not match manifest ({expected})", path.display())]
    DigestMismatch { path: PathBuf, expected: String, found: String },
    #[error("preprocessing incomplete: manifest has no flow matrix yet")]
    Incomplete,
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error(transparent)]
    Epof(#[from] EpofError),
    #[error(transparent)]
    Grf(#[from] GrfError),
}

impl StoreError {
    pub(crate) fn io(path: &Path, source: io::Error) -> Self {
        StoreError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn image(path: &Path, source: image::ImageError) -> Self {
        StoreError::Image {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Whether the failure came from the filesystem rather than from
    /// invalid content.
    pub fn is_io(&self) -> bool {
        match self {
            StoreError::Io { .. } => true,
            StoreError::Image { source, .. } => matches!(source, image::ImageError::IoError(_)),
            StoreError::MatrixFile { source, .. } => matches!(source, MatrixFileError::Io(_)),
            StoreError::Csv(e) => e.is_io_error(),
            StoreError::Matrix(MatrixError::Frame { source, .. }) => {
                source.downcast_ref::<StoreError>().is_some_and(StoreError::is_io)
            }
            _ => false,
        }
    }
}

/// Writes `bytes` to a sibling temp file and renames it into place.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}
