//! A loaded, complete project: everything needed to answer EPOF queries.

use std::fs;
use std::path::{Path, PathBuf};

use super::manifest::{manifest_dir, ProjectManifest};
use super::trace::EpofRow;
use super::StoreError;
use crate::epof::{check_pairing, epof_trace, held_sample_index, HeadSample};
use crate::grf::{generate_grains, global_opacity, render_mask, GrainSet, HeadPose};
use crate::grid::GridSpec;
use crate::matrix::FlowMatrix;
use crate::projection::ViewportSpec;

#[derive(Debug, Clone)]
pub struct Project {
    pub manifest: ProjectManifest,
    pub dir: PathBuf,
    pub grid: GridSpec,
    pub matrix: FlowMatrix,
    pub p10: f64,
    pub p90: f64,
}

impl Project {
    /// Loads and verifies stored artifacts. Nothing is recomputed.
    pub fn open(manifest_path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let path = manifest_path.as_ref();
        let manifest = ProjectManifest::load(path)?;
        let dir = manifest_dir(path);
        let grid = manifest.grid_spec()?;
        let matrix = manifest.load_matrix(&dir)?;
        check_pairing(&matrix, &grid)?;
        let pct = manifest.percentiles.ok_or(StoreError::Incomplete)?;
        Ok(Self {
            manifest,
            dir,
            grid,
            matrix,
            p10: pct.p10,
            p90: pct.p90,
        })
    }

    pub fn fps(&self) -> f64 {
        self.manifest.video.fps
    }

    pub fn grains(&self) -> Result<GrainSet, StoreError> {
        Ok(generate_grains(&self.manifest.grf, self.manifest.grid.params.hfov_deg)?)
    }

    pub fn opacity(&self, epof: f64) -> Result<f64, StoreError> {
        Ok(global_opacity(epof, self.p10, self.p90)?)
    }

    /// EPOF and overlay opacity for every video frame along `trace`.
    pub fn replay(&self, trace: &[HeadSample], k: usize) -> Result<Vec<EpofRow>, StoreError> {
        let fps = self.fps();
        let samples = epof_trace(trace, &self.matrix, &self.grid, fps, k)?;
        samples
            .into_iter()
            .map(|s| {
                let t = s.frame_idx as f64 / fps;
                let head = &trace[held_sample_index(trace, t)];
                Ok(EpofRow {
                    frame_idx: s.frame_idx,
                    t,
                    yaw: head.yaw,
                    pitch: head.pitch,
                    epof: s.epof,
                    opacity: self.opacity(s.epof)?,
                })
            })
            .collect()
    }

    /// Writes one `mask_NNNNN.png` per frame of the replay.
    pub fn render_masks(
        &self,
        trace: &[HeadSample],
        k: usize,
        width: u32,
        height: u32,
        out_dir: &Path,
    ) -> Result<Vec<PathBuf>, StoreError> {
        let rows = self.replay(trace, k)?;
        let grains = self.grains()?;
        let vp = ViewportSpec::new(0.0, 0.0, self.manifest.grid.params.hfov_deg, width, height)
            .map_err(|e| StoreError::Invalid(e.to_string()))?;
        fs::create_dir_all(out_dir).map_err(|e| StoreError::io(out_dir, e))?;
        let mut paths = Vec::with_capacity(rows.len());
        for row in &rows {
            let head = &trace[held_sample_index(trace, row.t)];
            let mask = render_mask(HeadPose::new(head.yaw, head.pitch, head.roll), &grains, row.opacity, &vp)?;
            let path = out_dir.join(format!("mask_{:05}.png", row.frame_idx));
            mask.to_gray8_unit().save(&path).map_err(|e| StoreError::image(&path, e))?;
            paths.push(path);
        }
        Ok(paths)
    }
}
