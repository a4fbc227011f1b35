//! Estimated perceived optical flow (EPOF) for arbitrary viewports.
//!
//! EPOF is the overlap-weighted mean of the precomputed flow of the `k`
//! sliding windows nearest the viewport center. A query costs `k` matrix
//! reads and `k` overlap evaluations.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{GridSpec, WindowId};
use crate::matrix::FlowMatrix;
use crate::stats::percentile_sorted;

pub const DEFAULT_K: usize = 4;

/// Slack when comparing trace timestamps against frame times, so that a
/// 60 Hz trace printed with finite precision still lines up with 60 fps.
const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EpofError {
    #[error("flow matrix was built for grid {matrix}, not {grid}")]
    GridMismatch { matrix: String, grid: String },
    #[error("matrix has {matrix} windows but grid has {grid}")]
    WindowCount { matrix: usize, grid: usize },
    #[error("frame {frame} out of range (matrix has {n_frames} frames)")]
    FrameOutOfRange { frame: usize, n_frames: usize },
    #[error("k must be at least 1")]
    ZeroK,
    #[error("no windows overlap the viewport")]
    NoOverlap,
    #[error("empty head trace")]
    EmptyTrace,
    #[error("fps must be positive, got {0}")]
    Fps(f64),
    #[error("no samples to summarize")]
    EmptySamples,
}

/// One head-orientation measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadSample {
    /// Seconds from session start.
    pub t: f64,
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpofSample {
    pub frame_idx: usize,
    pub epof: f64,
    /// Contributing windows and their overlap weights.
    pub windows: Vec<(WindowId, f64)>,
}

/// `sum(pof * ol) / sum(ol)`; `None` if all weights are zero.
///
/// Accumulated relative to the first value, so equal inputs return that
/// value exactly.
pub fn weighted_epof(contributions: &[(f64, f64)]) -> Option<f64> {
    let base = contributions.first()?.0;
    let (num, den) = contributions
        .iter()
        .fold((0.0, 0.0), |(n, d), &(pof, ol)| (n + (pof - base) * ol, d + ol));
    (den > 0.0).then(|| base + num / den)
}

/// Checks that `matrix` was built over `grid`.
pub fn check_pairing(matrix: &FlowMatrix, grid: &GridSpec) -> Result<(), EpofError> {
    if matrix.grid_hash() != grid.hash() {
        return Err(EpofError::GridMismatch {
            matrix: matrix.grid_hash().to_hex(),
            grid: grid.hash().to_hex(),
        });
    }
    if matrix.n_windows() != grid.len() {
        return Err(EpofError::WindowCount {
            matrix: matrix.n_windows(),
            grid: grid.len(),
        });
    }
    Ok(())
}

pub fn epof(center: (f64, f64), frame_idx: usize, matrix: &FlowMatrix, grid: &GridSpec, k: usize) -> Result<EpofSample, EpofError> {
    check_pairing(matrix, grid)?;
    epof_unchecked(center, frame_idx, matrix, grid, k)
}

/// [`epof`] without the grid pairing check, for callers that validated it once.
pub fn epof_unchecked(
    center: (f64, f64),
    frame_idx: usize,
    matrix: &FlowMatrix,
    grid: &GridSpec,
    k: usize,
) -> Result<EpofSample, EpofError> {
    if k == 0 {
        return Err(EpofError::ZeroK);
    }
    if frame_idx >= matrix.n_frames() {
        return Err(EpofError::FrameOutOfRange {
            frame: frame_idx,
            n_frames: matrix.n_frames(),
        });
    }
    let mut windows = grid.overlapping_windows(center, k);
    windows.retain(|(_, w)| *w > 0.0);
    let contributions: Vec<(f64, f64)> = windows
        .iter()
        .map(|&(id, w)| (f64::from(matrix.get(id, frame_idx)), w))
        .collect();
    let epof = weighted_epof(&contributions).ok_or(EpofError::NoOverlap)?;
    Ok(EpofSample {
        frame_idx,
        epof,
        windows,
    })
}

/// Index of the sample in effect at time `t` under zero-order hold.
///
/// `trace` must be sorted by time; times before the first sample use it.
pub fn held_sample_index(trace: &[HeadSample], t: f64) -> usize {
    let after = trace.partition_point(|s| s.t <= t + TIME_EPS);
    after.saturating_sub(1)
}

/// One EPOF value per matrix frame along a recorded head trace.
pub fn epof_trace(
    trace: &[HeadSample],
    matrix: &FlowMatrix,
    grid: &GridSpec,
    video_fps: f64,
    k: usize,
) -> Result<Vec<EpofSample>, EpofError> {
    if trace.is_empty() {
        return Err(EpofError::EmptyTrace);
    }
    if !(video_fps > 0.0 && video_fps.is_finite()) {
        return Err(EpofError::Fps(video_fps));
    }
    check_pairing(matrix, grid)?;
    (0..matrix.n_frames())
        .map(|f| {
            let s = &trace[held_sample_index(trace, f as f64 / video_fps)];
            epof_unchecked((s.yaw, s.pitch), f, matrix, grid, k)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub mean: f64,
    pub sum: f64,
    pub min: f64,
    pub max: f64,
    pub p10: f64,
    pub p90: f64,
}

pub fn session_summary(samples: &[EpofSample]) -> Result<SessionSummary, EpofError> {
    if samples.is_empty() {
        return Err(EpofError::EmptySamples);
    }
    let mut v: Vec<f64> = samples.iter().map(|s| s.epof).collect();
    let sum: f64 = v.iter().sum();
    v.sort_by(f64::total_cmp);
    Ok(SessionSummary {
        mean: sum / v.len() as f64,
        sum,
        min: v[0],
        max: v[v.len() - 1],
        p10: percentile_sorted(&v, 0.1),
        p90: percentile_sorted(&v, 0.9),
    })
}
