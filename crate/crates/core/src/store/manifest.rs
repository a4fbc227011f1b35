//! Project manifest JSON.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::matrix_file::load_matrix;
use super::StoreError;
use crate::flow::{Aggregation, FlowParams};
use crate::grf::GrfConfig;
use crate::grid::{GridParams, GridSpec};
use crate::matrix::FlowMatrix;

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoInfo {
    pub id: String,
    /// Absolute path of the PNG frame directory.
    pub frames_dir: PathBuf,
    pub frame_count: usize,
    pub fps: f64,
    pub width: u32,
    pub height: u32,
    /// SHA-256 over frame names and contents.
    pub digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridInfo {
    #[serde(flatten)]
    pub params: GridParams,
    pub hash: String,
    pub n_windows: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TileInfo {
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixRef {
    /// Relative to the manifest's directory.
    pub path: PathBuf,
    /// SHA-256 of the matrix file.
    pub digest: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Percentiles {
    pub p10: f64,
    pub p90: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectManifest {
    pub format_version: u32,
    pub video: VideoInfo,
    pub grid: GridInfo,
    pub tile: TileInfo,
    pub flow_params: FlowParams,
    pub aggregation: Aggregation,
    /// Per-window progress files, relative to the manifest's directory.
    pub progress_dir: PathBuf,
    pub matrix: Option<MatrixRef>,
    pub percentiles: Option<Percentiles>,
    pub grf: GrfConfig,
}

impl ProjectManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| StoreError::io(path, e))?;
        let m: Self = serde_json::from_str(&text).map_err(|e| StoreError::Json {
            path: path.to_path_buf(),
            source: e,
        })?;
        if m.format_version != MANIFEST_VERSION {
            return Err(StoreError::Invalid(format!(
                "manifest format version {} unsupported (expected {MANIFEST_VERSION})",
                m.format_version
            )));
        }
        m.grid_spec()?;
        if let Some(p) = m.percentiles {
            if p.p10 > p.p90 {
                return Err(StoreError::Invalid(format!("manifest p10 {} exceeds p90 {}", p.p10, p.p90)));
            }
        }
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), StoreError> {
        let path = path.as_ref();
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        super::write_atomic(path, text.as_bytes()).map_err(|e| StoreError::io(path, e))
    }

    /// Rebuilds the grid and checks it against the recorded hash.
    pub fn grid_spec(&self) -> Result<GridSpec, StoreError> {
        let grid = GridSpec::new(self.grid.params)?;
        if grid.hash().to_hex() != self.grid.hash {
            return Err(StoreError::Invalid(format!(
                "grid hash {} does not match parameters ({})",
                self.grid.hash,
                grid.hash().to_hex()
            )));
        }
        Ok(grid)
    }

    pub fn is_complete(&self) -> bool {
        self.matrix.is_some() && self.percentiles.is_some()
    }

    /// Loads the referenced matrix after verifying its digest and pairing.
    pub fn load_matrix(&self, manifest_dir: &Path) -> Result<FlowMatrix, StoreError> {
        let r = self.matrix.as_ref().ok_or(StoreError::Incomplete)?;
        let path = manifest_dir.join(&r.path);
        let digest = file_digest(&path)?;
        if digest != r.digest {
            return Err(StoreError::DigestMismatch {
                path,
                expected: r.digest.clone(),
                found: digest,
            });
        }
        let m = load_matrix(&path).map_err(|source| StoreError::MatrixFile { path: path.clone(), source })?;
        if m.grid_hash().to_hex() != self.grid.hash || m.n_windows() != self.grid.n_windows {
            return Err(StoreError::Invalid(format!("{}: built for a different grid", path.display())));
        }
        if m.n_frames() != self.video.frame_count {
            return Err(StoreError::Invalid(format!(
                "{}: {} frames, video has {}",
                path.display(),
                m.n_frames(),
                self.video.frame_count
            )));
        }
        Ok(m)
    }
}

/// Directory containing `manifest_path`, as a usable base path.
pub fn manifest_dir(manifest_path: &Path) -> PathBuf {
    match manifest_path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

pub fn file_digest(path: &Path) -> Result<String, StoreError> {
    let bytes = fs::read(path).map_err(|e| StoreError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}
