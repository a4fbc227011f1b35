//! Numbered PNG frame sequences.

use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::StoreError;
use crate::matrix::{BoxError, FrameSource};
use crate::plane::Plane;
use crate::projection::EquirectFrame;

/// A directory of equirect frames, ordered by file name.
#[derive(Debug, Clone)]
pub struct PngSequence {
    dir: PathBuf,
    files: Vec<PathBuf>,
    dims: (u32, u32),
}

impl PngSequence {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, StoreError> {
        let dir = dir.as_ref().to_path_buf();
        let entries = fs::read_dir(&dir).map_err(|e| StoreError::io(&dir, e))?;
        let mut files = Vec::new();
        for entry in entries {
            let path = entry.map_err(|e| StoreError::io(&dir, e))?.path();
            if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")) {
                files.push(path);
            }
        }
        files.sort();
        let first = files.first().ok_or_else(|| StoreError::NoFrames(dir.clone()))?;
        let dims = image::image_dimensions(first).map_err(|e| StoreError::image(first, e))?;
        if dims.1 == 0 || dims.0 != 2 * dims.1 {
            return Err(StoreError::Invalid(format!(
                "{}: equirect frames must be 2:1, got {}x{}",
                first.display(),
                dims.0,
                dims.1
            )));
        }
        Ok(Self { dir, files, dims })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn files(&self) -> &[PathBuf] {
        &self.files
    }

    pub fn frame(&self, index: usize) -> Result<EquirectFrame, StoreError> {
        let path = &self.files[index];
        let img = image::open(path).map_err(|e| StoreError::image(path, e))?.into_rgb8();
        if img.dimensions() != self.dims {
            return Err(StoreError::Invalid(format!(
                "{}: frame is {}x{}, sequence is {}x{}",
                path.display(),
                img.width(),
                img.height(),
                self.dims.0,
                self.dims.1
            )));
        }
        EquirectFrame::new(img).map_err(|e| StoreError::Invalid(e.to_string()))
    }

    /// Raw encoded bytes of a frame file.
    pub fn frame_bytes(&self, index: usize) -> Result<Vec<u8>, StoreError> {
        let path = &self.files[index];
        fs::read(path).map_err(|e| StoreError::io(path, e))
    }

    /// SHA-256 over every frame's file name and contents, in order.
    pub fn digest(&self) -> Result<String, StoreError> {
        let mut h = Sha256::new();
        for f in &self.files {
            let name = f.file_name().unwrap_or_default().to_string_lossy();
            h.update((name.len() as u64).to_le_bytes());
            h.update(name.as_bytes());
            let bytes = fs::read(f).map_err(|e| StoreError::io(f, e))?;
            h.update((bytes.len() as u64).to_le_bytes());
            h.update(&bytes);
        }
        Ok(hex::encode(h.finalize()))
    }

    /// Decodes every frame to luma up front.
    pub fn preload_luma(&self) -> Result<LumaFrames, StoreError> {
        let planes = (0..self.files.len())
            .map(|i| self.frame(i).map(|f| f.luma()))
            .collect::<Result<_, _>>()?;
        Ok(LumaFrames { planes, dims: self.dims })
    }
}

impl FrameSource for PngSequence {
    fn len(&self) -> usize {
        self.files.len()
    }

    fn dims(&self) -> (u32, u32) {
        self.dims
    }

    fn luma(&self, index: usize) -> Result<Plane, BoxError> {
        Ok(self.frame(index)?.luma())
    }
}

/// Luma planes held in memory.
#[derive(Debug, Clone)]
pub struct LumaFrames {
    planes: Vec<Plane>,
    dims: (u32, u32),
}

impl FrameSource for LumaFrames {
    fn len(&self) -> usize {
        self.planes.len()
    }

    fn dims(&self) -> (u32, u32) {
        self.dims
    }

    fn luma(&self, index: usize) -> Result<Plane, BoxError> {
        Ok(self.planes[index].clone())
    }
}

/// Writes frames as `frame_00000.png`, `frame_00001.png`, ...
pub fn write_png_sequence(dir: impl AsRef<Path>, frames: &[EquirectFrame]) -> Result<(), StoreError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| StoreError::io(dir, e))?;
    for (i, f) in frames.iter().enumerate() {
        let path = dir.join(format!("frame_{i:05}.png"));
        f.image().save(&path).map_err(|e| StoreError::image(&path, e))?;
    }
    Ok(())
}
