//! The per-window, per-frame scalar flow matrix.

use std::error::Error as StdError;

use rayon::prelude::*;
use thiserror::Error;

use crate::flow::{aggregate_with, estimate_flow, Aggregation, FlowError, FlowParams};
use crate::grid::{GridHash, GridSpec, WindowId};
use crate::plane::Plane;
use crate::projection::{build_pixel_map, render_viewport_luma, EquirectFrame, PixelMap, ProjectionError, ViewportSpec};
use crate::stats::percentile_sorted;

pub type BoxError = Box<dyn StdError + Send + Sync>;

#[derive(Debug, Error)]
pub enum MatrixError {
    #[error("matrix has no entries")]
    Empty,
    #[error("percentile {0} outside [0, 1]")]
    Percentile(f64),
    #[error("matrix entry [{window}][{frame}] = {value} is negative or not finite")]
    InvalidEntry { window: usize, frame: usize, value: f32 },
    #[error("expected {expected} values, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("need at least 2 frames, got {0}")]
    TooFewFrames(usize),
    #[error("frame {frame} has dimensions {got:?}, expected {expected:?}")]
    FrameDims {
        frame: usize,
        got: (u32, u32),
        expected: (u32, u32),
    },
    #[error("tile {width}x{height} does not match grid FOV {hfov}x{vfov} deg")]
    TileAspect { width: u32, height: u32, hfov: f64, vfov: f64 },
    #[error("loading frame {frame}: {source}")]
    Frame { frame: usize, source: BoxError },
    #[error("window {window}: {source}")]
    Projection { window: usize, source: ProjectionError },
    #[error("window {window}, frame {frame}: {source}")]
    Flow { window: usize, frame: usize, source: FlowError },
}

/// Precomputed scalar optical flow, windows-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowMatrix {
    n_windows: usize,
    n_frames: usize,
    fps: f32,
    grid_hash: GridHash,
    values: Vec<f32>,
}

impl FlowMatrix {
    pub fn new(n_windows: usize, n_frames: usize, fps: f32, grid_hash: GridHash, values: Vec<f32>) -> Result<Self, MatrixError> {
        if values.len() != n_windows * n_frames {
            return Err(MatrixError::Shape {
                expected: n_windows * n_frames,
                got: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(MatrixError::InvalidEntry {
                window: i / n_frames.max(1),
                frame: i % n_frames.max(1),
                value: values[i],
            });
        }
        Ok(Self {
            n_windows,
            n_frames,
            fps,
            grid_hash,
            values,
        })
    }

    /// Assembles a matrix from complete per-window rows.
    pub fn from_rows(rows: Vec<Vec<f32>>, fps: f32, grid_hash: GridHash) -> Result<Self, MatrixError> {
        let n_windows = rows.len();
        let n_frames = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(n_windows * n_frames);
        for row in rows {
            if row.len() != n_frames {
                return Err(MatrixError::Shape {
                    expected: n_frames,
                    got: row.len(),
                });
            }
            values.extend(row);
        }
        Self::new(n_windows, n_frames, fps, grid_hash, values)
    }

    pub fn n_windows(&self) -> usize {
        self.n_windows
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn fps(&self) -> f32 {
        self.fps
    }

    pub fn grid_hash(&self) -> GridHash {
        self.grid_hash
    }

    #[inline]
    pub fn get(&self, window: WindowId, frame: usize) -> f32 {
        self.values[window.0 * self.n_frames + frame]
    }

    pub fn row(&self, window: WindowId) -> &[f32] {
        &self.values[window.0 * self.n_frames..(window.0 + 1) * self.n_frames]
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    /// Linear-interpolated percentile over every entry.
    pub fn percentile(&self, p: f64) -> Result<f64, MatrixError> {
        Ok(self.percentiles(&[p])?[0])
    }

    /// Several percentiles with one sort.
    pub fn percentiles(&self, ps: &[f64]) -> Result<Vec<f64>, MatrixError> {
        if self.values.is_empty() {
            return Err(MatrixError::Empty);
        }
        if let Some(p) = ps.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(MatrixError::Percentile(*p));
        }
        let mut sorted: Vec<f64> = self.values.iter().map(|&v| f64::from(v)).collect();
        sorted.sort_by(f64::total_cmp);
        Ok(ps.iter().map(|&p| percentile_sorted(&sorted, p)).collect())
    }
}

/// Random access to the luma planes of an equirectangular video.
pub trait FrameSource: Sync {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(width, height)` shared by every frame.
    fn dims(&self) -> (u32, u32);

    fn luma(&self, index: usize) -> Result<Plane, BoxError>;
}

impl FrameSource for [EquirectFrame] {
    fn len(&self) -> usize {
        <[EquirectFrame]>::len(self)
    }

    fn dims(&self) -> (u32, u32) {
        self.first().map_or((0, 0), |f| (f.width(), f.height()))
    }

    fn luma(&self, index: usize) -> Result<Plane, BoxError> {
        Ok(self[index].luma())
    }
}

impl FrameSource for Vec<EquirectFrame> {
    fn len(&self) -> usize {
        self.as_slice().len()
    }

    fn dims(&self) -> (u32, u32) {
        self.as_slice().dims()
    }

    fn luma(&self, index: usize) -> Result<Plane, BoxError> {
        self.as_slice().luma(index)
    }
}

/// Everything besides frames and grid that determines matrix values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatrixJob {
    pub tile_width: u32,
    pub tile_height: u32,
    pub params: FlowParams,
    pub aggregation: Aggregation,
    pub fps: f32,
}

impl MatrixJob {
    pub fn new(tile_width: u32, tile_height: u32, fps: f32) -> Self {
        Self {
            tile_width,
            tile_height,
            params: FlowParams::default(),
            aggregation: Aggregation::Mean,
            fps,
        }
    }

    /// Tile height matching the grid's vertical FOV for a given width.
    pub fn tile_height_for(width: u32, hfov_deg: f64, vfov_deg: f64) -> u32 {
        ((width as f64 * vfov_deg / hfov_deg).round() as u32).max(1)
    }

    fn viewport(&self, grid: &GridSpec, id: WindowId) -> Result<ViewportSpec, ProjectionError> {
        let (yaw, pitch) = grid.center(id);
        ViewportSpec::new(yaw, pitch, grid.params().hfov_deg, self.tile_width, self.tile_height)
    }

    fn check(&self, grid: &GridSpec) -> Result<(), MatrixError> {
        let p = grid.params();
        let expect = self.tile_width as f64 * p.vfov_deg / p.hfov_deg;
        if self.tile_width == 0 || (self.tile_height as f64 - expect).abs() > 1.0 {
            return Err(MatrixError::TileAspect {
                width: self.tile_width,
                height: self.tile_height,
                hfov: p.hfov_deg,
                vfov: p.vfov_deg,
            });
        }
        self.params.validate().map_err(|source| MatrixError::Flow {
            window: 0,
            frame: 0,
            source,
        })
    }
}

/// Computes full matrix rows for `windows`.
///
/// Frames are decoded once per call and shared by all windows; windows are
/// processed in parallel and each row depends only on its own window, so the
/// result does not depend on scheduling or on which other windows are in
/// the batch.
pub fn compute_window_rows(
    frames: &(impl FrameSource + ?Sized),
    grid: &GridSpec,
    job: &MatrixJob,
    windows: &[WindowId],
) -> Result<Vec<Vec<f32>>, MatrixError> {
    job.check(grid)?;
    let n = frames.len();
    if n < 2 {
        return Err(MatrixError::TooFewFrames(n));
    }
    let dims = frames.dims();
    let maps: Vec<PixelMap> = windows
        .par_iter()
        .map(|&id| {
            job.viewport(grid, id)
                .and_then(|vp| build_pixel_map(&vp, dims.0, dims.1))
                .map_err(|source| MatrixError::Projection { window: id.0, source })
        })
        .collect::<Result<_, _>>()?;

    let load = |t: usize| -> Result<Plane, MatrixError> {
        let plane = frames.luma(t).map_err(|source| MatrixError::Frame { frame: t, source })?;
        let got = (plane.width() as u32, plane.height() as u32);
        if got != dims {
            return Err(MatrixError::FrameDims {
                frame: t,
                got,
                expected: dims,
            });
        }
        Ok(plane)
    };
    let render = |luma: &Plane| -> Result<Vec<Plane>, MatrixError> {
        maps.par_iter()
            .zip(windows)
            .map(|(m, id)| render_viewport_luma(luma, m).map_err(|source| MatrixError::Projection { window: id.0, source }))
            .collect()
    };

    let mut prev = render(&load(0)?)?;
    let mut rows: Vec<Vec<f32>> = windows.iter().map(|_| Vec::with_capacity(n)).collect();
    for t in 1..n {
        let cur = render(&load(t)?)?;
        let values: Vec<f32> = prev
            .par_iter()
            .zip(&cur)
            .zip(windows)
            .map(|((a, b), id)| {
                estimate_flow(a, b, &job.params)
                    .map(|f| aggregate_with(&f, job.aggregation))
                    .map_err(|source| MatrixError::Flow {
                        window: id.0,
                        frame: t,
                        source,
                    })
            })
            .collect::<Result<_, _>>()?;
        for (row, v) in rows.iter_mut().zip(values) {
            if t == 1 {
                // no flow exists for frame 0; it repeats frame 1
                row.push(v);
            }
            row.push(v);
        }
        prev = cur;
    }
    Ok(rows)
}

/// Full matrix over every window of `grid`.
pub fn build_flow_matrix(frames: &(impl FrameSource + ?Sized), grid: &GridSpec, job: &MatrixJob) -> Result<FlowMatrix, MatrixError> {
    let ids: Vec<WindowId> = grid.ids().collect();
    let rows = compute_window_rows(frames, grid, job, &ids)?;
    FlowMatrix::from_rows(rows, job.fps, grid.hash())
}
