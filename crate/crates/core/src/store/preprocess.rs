//! Resumable flow-matrix preprocessing.
//!
//! Each window's matrix row is written to its own progress file as soon as
//! it is complete. A run may stop at any point; resuming computes only the
//! windows without a valid progress file and merges once all are present.
//! Rows depend only on (frames, grid, job, window), so a resumed matrix is
//! bit-identical to an uninterrupted one.

use std::fs;
use std::path::{Path, PathBuf};

use byteorder::{ByteOrder, LittleEndian};

use super::frames::PngSequence;
use super::manifest::{file_digest, manifest_dir, GridInfo, MatrixRef, Percentiles, ProjectManifest, TileInfo, VideoInfo, MANIFEST_VERSION};
use super::matrix_file::save_matrix;
use super::{write_atomic, StoreError};
use crate::flow::{Aggregation, FlowParams};
use crate::grf::GrfConfig;
use crate::grid::{GridHash, GridParams, GridSpec, WindowId};
use crate::matrix::{compute_window_rows, FlowMatrix, FrameSource, MatrixJob};

const ROW_MAGIC: &[u8; 4] = b"EPRW";
const ROW_HEADER: usize = 4 + 8 + 4 + 4 + 4;
pub const MATRIX_FILE: &str = "flow_matrix.epof";
pub const PROGRESS_DIR: &str = "progress";
/// Decode all frames up front when their luma fits in this many bytes.
const PRELOAD_BUDGET: usize = 1 << 30;

/// What to compute.
#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessSettings {
    pub fps: f64,
    pub grid: GridParams,
    pub tile_width: u32,
    pub flow: FlowParams,
    pub aggregation: Aggregation,
    pub grf: GrfConfig,
    /// Defaults to the frame directory's name.
    pub video_id: Option<String>,
}

impl Default for PreprocessSettings {
    fn default() -> Self {
        Self {
            fps: 30.0,
            grid: GridParams::default(),
            tile_width: 128,
            flow: FlowParams::default(),
            aggregation: Aggregation::Mean,
            grf: GrfConfig::default(),
            video_id: None,
        }
    }
}

/// How much to compute in this run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    /// Windows processed per pass over the frames.
    pub batch_windows: usize,
    /// Stop after this many windows have been computed in this run.
    pub max_windows: Option<usize>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            batch_windows: 24,
            max_windows: None,
        }
    }
}

/// Writes a fresh manifest for `frames_dir` and runs preprocessing.
///
/// Existing progress files next to `manifest_path` are reused when they
/// match the new manifest's grid and video.
pub fn preprocess(
    frames_dir: &Path,
    settings: &PreprocessSettings,
    manifest_path: &Path,
    opts: RunOptions,
) -> Result<ProjectManifest, StoreError> {
    let frames = PngSequence::open(frames_dir)?;
    if frames.len() < 2 {
        return Err(StoreError::Invalid(format!("{}: need at least 2 frames", frames_dir.display())));
    }
    if !(settings.fps > 0.0 && settings.fps.is_finite()) {
        return Err(StoreError::Invalid(format!("fps must be positive, got {}", settings.fps)));
    }
    let grid = GridSpec::new(settings.grid)?;
    settings.grf.validate(settings.grid.hfov_deg)?;
    settings.flow.validate().map_err(|e| StoreError::Invalid(e.to_string()))?;
    let tile_height = MatrixJob::tile_height_for(settings.tile_width, settings.grid.hfov_deg, settings.grid.vfov_deg);

    let abs_dir = fs::canonicalize(frames_dir).map_err(|e| StoreError::io(frames_dir, e))?;
    let id = settings.video_id.clone().unwrap_or_else(|| {
        abs_dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "video".into())
    });
    let (width, height) = frames.dims();
    let manifest = ProjectManifest {
        format_version: MANIFEST_VERSION,
        video: VideoInfo {
            id,
            frames_dir: abs_dir,
            frame_count: frames.len(),
            fps: settings.fps,
            width,
            height,
            digest: frames.digest()?,
        },
        grid: GridInfo {
            params: settings.grid,
            hash: grid.hash().to_hex(),
            n_windows: grid.len(),
        },
        tile: TileInfo {
            width: settings.tile_width,
            height: tile_height,
        },
        flow_params: settings.flow,
        aggregation: settings.aggregation,
        progress_dir: PathBuf::from(PROGRESS_DIR),
        matrix: None,
        percentiles: None,
        grf: settings.grf,
    };
    manifest.save(manifest_path)?;
    run(manifest, manifest_path, &frames, opts)
}

/// Continues an interrupted run, verifying `frames_dir` against the
/// manifest's video digest. A complete manifest is returned unchanged.
pub fn resume_preprocess(manifest_path: &Path, frames_dir: Option<&Path>, opts: RunOptions) -> Result<ProjectManifest, StoreError> {
    let manifest = ProjectManifest::load(manifest_path)?;
    let dir = frames_dir.map(Path::to_path_buf).unwrap_or_else(|| manifest.video.frames_dir.clone());
    let frames = PngSequence::open(&dir)?;
    let digest = frames.digest()?;
    if digest != manifest.video.digest {
        return Err(StoreError::VideoMismatch {
            expected: manifest.video.digest.clone(),
            found: digest,
        });
    }
    if manifest.is_complete() {
        // validates the stored matrix without recomputing anything
        manifest.load_matrix(&manifest_dir(manifest_path))?;
        return Ok(manifest);
    }
    run(manifest, manifest_path, &frames, opts)
}

/// Windows that still lack a valid progress row.
pub fn pending_windows(manifest: &ProjectManifest, manifest_path: &Path) -> Result<Vec<WindowId>, StoreError> {
    let grid = manifest.grid_spec()?;
    let dir = manifest_dir(manifest_path).join(&manifest.progress_dir);
    Ok(grid
        .ids()
        .filter(|id| read_row(&row_path(&dir, *id), grid.hash(), *id, manifest.video.frame_count).is_none())
        .collect())
}

fn run(mut manifest: ProjectManifest, manifest_path: &Path, frames: &PngSequence, opts: RunOptions) -> Result<ProjectManifest, StoreError> {
    let grid = manifest.grid_spec()?;
    let base = manifest_dir(manifest_path);
    let progress = base.join(&manifest.progress_dir);
    fs::create_dir_all(&progress).map_err(|e| StoreError::io(&progress, e))?;
    let job = MatrixJob {
        tile_width: manifest.tile.width,
        tile_height: manifest.tile.height,
        params: manifest.flow_params,
        aggregation: manifest.aggregation,
        fps: manifest.video.fps as f32,
    };

    let mut pending = pending_windows(&manifest, manifest_path)?;
    if let Some(limit) = opts.max_windows {
        pending.truncate(limit);
    }
    if !pending.is_empty() {
        let (w, h) = frames.dims();
        let luma_bytes = frames.len() * w as usize * h as usize * 4;
        let preloaded = if luma_bytes <= PRELOAD_BUDGET { Some(frames.preload_luma()?) } else { None };
        let source: &dyn FrameSource = match &preloaded {
            Some(p) => p,
            None => frames,
        };
        for batch in pending.chunks(opts.batch_windows.max(1)) {
            let rows = compute_window_rows(source, &grid, &job, batch)?;
            for (id, row) in batch.iter().zip(rows) {
                write_row(&row_path(&progress, *id), grid.hash(), *id, &row)?;
            }
        }
    }

    if !pending_windows(&manifest, manifest_path)?.is_empty() {
        return Ok(manifest);
    }
    let rows = grid
        .ids()
        .map(|id| {
            read_row(&row_path(&progress, id), grid.hash(), id, manifest.video.frame_count)
                .ok_or_else(|| StoreError::Invalid(format!("progress row for window {} vanished", id.0)))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let matrix = FlowMatrix::from_rows(rows, job.fps, grid.hash())?;
    let path = base.join(MATRIX_FILE);
    save_matrix(&path, &matrix).map_err(|source| StoreError::MatrixFile { path: path.clone(), source })?;
    let pct = matrix.percentiles(&[0.1, 0.9])?;
    manifest.matrix = Some(MatrixRef {
        path: PathBuf::from(MATRIX_FILE),
        digest: file_digest(&path)?,
    });
    manifest.percentiles = Some(Percentiles { p10: pct[0], p90: pct[1] });
    manifest.save(manifest_path)?;
    Ok(manifest)
}

fn row_path(dir: &Path, id: WindowId) -> PathBuf {
    dir.join(format!("w{:05}.row", id.0))
}

fn write_row(path: &Path, hash: GridHash, id: WindowId, row: &[f32]) -> Result<(), StoreError> {
    let mut buf = vec![0u8; ROW_HEADER + row.len() * 4];
    LittleEndian::write_f32_into(row, &mut buf[ROW_HEADER..]);
    let crc = crc32fast::hash(&buf[ROW_HEADER..]);
    buf[..4].copy_from_slice(ROW_MAGIC);
    buf[4..12].copy_from_slice(&hash.0);
    LittleEndian::write_u32(&mut buf[12..16], id.0 as u32);
    LittleEndian::write_u32(&mut buf[16..20], row.len() as u32);
    LittleEndian::write_u32(&mut buf[20..24], crc);
    write_atomic(path, &buf).map_err(|e| StoreError::io(path, e))
}

/// A valid progress row, or `None` if missing, stale or damaged.
fn read_row(path: &Path, hash: GridHash, id: WindowId, n_frames: usize) -> Option<Vec<f32>> {
    let buf = fs::read(path).ok()?;
    if buf.len() != ROW_HEADER + n_frames * 4 || &buf[..4] != ROW_MAGIC || buf[4..12] != hash.0 {
        return None;
    }
    if LittleEndian::read_u32(&buf[12..16]) as usize != id.0 || LittleEndian::read_u32(&buf[16..20]) as usize != n_frames {
        return None;
    }
    if crc32fast::hash(&buf[ROW_HEADER..]) != LittleEndian::read_u32(&buf[20..24]) {
        return None;
    }
    let mut row = vec![0f32; n_frames];
    LittleEndian::read_f32_into(&buf[ROW_HEADER..], &mut row);
    Some(row)
}
