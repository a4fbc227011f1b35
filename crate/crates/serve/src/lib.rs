//! HTTP and live WebSocket service over preprocessed EPOF projects.
//!
//! Static resources (video list, manifest summary, frames, grain layout)
//! are plain HTTP. The live channel at `/videos/{id}/live` takes head
//! orientation messages and answers each with the current frame's EPOF and
//! overlay opacity.

pub mod http;
pub mod live;

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use epof_core::store::{PngSequence, Project, StoreError};
use epof_core::{epof::check_pairing, generate_grains, FlowMatrix, FrameSource, GrainSet, GridParams, GridSpec, GrfConfig, DEFAULT_K};
use serde::{Deserialize, Serialize};

pub use http::router;
pub use live::{ClientMessage, LiveSession, Outbox, PlaybackClock, ServerMessage, WindowWeight};

/// What `/videos/{id}/manifest` returns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestSummary {
    pub id: String,
    pub n_frames: usize,
    pub fps: f64,
    pub width: u32,
    pub height: u32,
    pub grid: GridParams,
    pub grid_hash: String,
    pub n_windows: usize,
    pub k: usize,
    pub p10: f64,
    pub p90: f64,
    pub grf: GrfConfig,
}

/// Read-only artifacts for one video, shared by all of its sessions.
pub struct Video {
    pub id: String,
    pub fps: f64,
    pub grid: GridSpec,
    pub matrix: FlowMatrix,
    pub p10: f64,
    pub p90: f64,
    pub k: usize,
    pub grains: GrainSet,
    pub frames: Option<PngSequence>,
    /// Stable per-video validator component for frame ETags.
    pub digest: String,
    pub frame_dims: (u32, u32),
}

impl Video {
    /// Opens a complete project and its frame directory.
    pub fn open(manifest_path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let project = Project::open(manifest_path)?;
        let grains = project.grains()?;
        let frames = PngSequence::open(&project.manifest.video.frames_dir)?;
        if frames.len() != project.manifest.video.frame_count {
            return Err(StoreError::Invalid(format!(
                "{}: {} frames, manifest lists {}",
                frames.dir().display(),
                frames.len(),
                project.manifest.video.frame_count
            )));
        }
        let v = &project.manifest.video;
        Ok(Self {
            id: v.id.clone(),
            fps: v.fps,
            frame_dims: (v.width, v.height),
            digest: v.digest.clone(),
            grid: project.grid,
            matrix: project.matrix,
            p10: project.p10,
            p90: project.p90,
            k: DEFAULT_K,
            grains,
            frames: Some(frames),
        })
    }

    /// A video backed only by a matrix, without frames.
    pub fn from_matrix(
        id: impl Into<String>,
        grid: GridSpec,
        matrix: FlowMatrix,
        p10: f64,
        p90: f64,
        grf: GrfConfig,
    ) -> Result<Self, StoreError> {
        check_pairing(&matrix, &grid)?;
        if p10 > p90 {
            return Err(StoreError::Invalid(format!("p10 {p10} exceeds p90 {p90}")));
        }
        let grains = generate_grains(&grf, grid.params().hfov_deg)?;
        Ok(Self {
            id: id.into(),
            fps: f64::from(matrix.fps()),
            grid,
            matrix,
            p10,
            p90,
            k: DEFAULT_K,
            grains,
            frames: None,
            digest: String::new(),
            frame_dims: (0, 0),
        })
    }

    pub fn summary(&self) -> ManifestSummary {
        ManifestSummary {
            id: self.id.clone(),
            n_frames: self.matrix.n_frames(),
            fps: self.fps,
            width: self.frame_dims.0,
            height: self.frame_dims.1,
            grid: self.grid.params(),
            grid_hash: self.grid.hash().to_hex(),
            n_windows: self.grid.len(),
            k: self.k,
            p10: self.p10,
            p90: self.p90,
            grf: *self.grains.config(),
        }
    }
}

/// Registered videos plus the session counter.
#[derive(Clone, Default)]
pub struct AppState {
    videos: Arc<BTreeMap<String, Arc<Video>>>,
    next_session: Arc<AtomicU64>,
}

impl AppState {
    pub fn new(videos: impl IntoIterator<Item = Video>) -> Result<Self, StoreError> {
        let mut map = BTreeMap::new();
        for v in videos {
            let id = v.id.clone();
            if map.insert(id.clone(), Arc::new(v)).is_some() {
                return Err(StoreError::Invalid(format!("video id {id:?} registered twice")));
            }
        }
        Ok(Self {
            videos: Arc::new(map),
            next_session: Arc::new(AtomicU64::new(1)),
        })
    }

    pub fn video(&self, id: &str) -> Option<Arc<Video>> {
        self.videos.get(id).cloned()
    }

    pub fn videos(&self) -> impl Iterator<Item = &Arc<Video>> {
        self.videos.values()
    }

    fn session_id(&self) -> u64 {
        self.next_session.fetch_add(1, Ordering::Relaxed)
    }
}

/// Serves `state` on `listener` until the task is dropped.
pub async fn serve(listener: tokio::net::TcpListener, state: AppState) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}
