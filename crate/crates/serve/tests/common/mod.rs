#![allow(dead_code)]

use std::path::{Path, PathBuf};

use epof_core::store::{preprocess, write_png_sequence, PreprocessSettings, RunOptions};
use epof_core::{EquirectFrame, FlowMatrix, FlowParams, GridParams, GridSpec, GrfConfig, WindowId};
use epof_serve::{AppState, Video};
use image::{Rgb, RgbImage};

/// A tiny preprocessed project on disk; returns the manifest path.
pub fn small_project(dir: &Path) -> PathBuf {
    let frames: Vec<EquirectFrame> = (0..5)
        .map(|i| {
            let img = RgbImage::from_fn(128, 64, |x, y| {
                let v = (((x as f64 - 1.5 * i as f64) * 0.3).sin() * 60.0 + (y as f64 * 0.2).cos() * 40.0 + 128.0) as u8;
                Rgb([v, v / 2, 255 - v])
            });
            EquirectFrame::new(img).unwrap()
        })
        .collect();
    let frames_dir = dir.join("frames");
    write_png_sequence(&frames_dir, &frames).unwrap();
    let settings = PreprocessSettings {
        grid: GridParams {
            hfov_deg: 90.0,
            vfov_deg: 90.0,
            h_step_deg: 90.0,
            v_step_deg: 45.0,
        },
        tile_width: 24,
        flow: FlowParams {
            iterations: 20,
            pyramid_levels: 2,
            ..FlowParams::default()
        },
        video_id: Some("tiny".into()),
        ..PreprocessSettings::default()
    };
    let manifest = dir.join("manifest.json");
    preprocess(&frames_dir, &settings, &manifest, RunOptions::default()).unwrap();
    manifest
}

/// Default grid, with POF 16 / 15.5 / 16.8 / 17 around the box
/// (0,0)-(15,7.5) on frame 0 and 10.0 everywhere on frame 1.
pub fn injected_video() -> Video {
    let grid = GridSpec::new(GridParams::default()).unwrap();
    let n_frames = 2;
    let mut values = vec![0.0f32; grid.len() * n_frames];
    let id_at = |yaw, pitch| grid.ids().find(|id| grid.center(*id) == (yaw, pitch)).unwrap();
    for (c, pof) in [((0.0, 0.0), 16.0), ((0.0, 7.5), 15.5), ((15.0, 0.0), 16.8), ((15.0, 7.5), 17.0)] {
        values[id_at(c.0, c.1).0 * n_frames] = pof;
    }
    for w in 0..grid.len() {
        values[w * n_frames + 1] = 10.0;
    }
    let matrix = FlowMatrix::new(grid.len(), n_frames, 30.0, grid.hash(), values).unwrap();
    Video::from_matrix("injected", grid, matrix, 10.0, 20.0, GrfConfig::default()).unwrap()
}

pub fn window_at(video: &Video, yaw: f64, pitch: f64) -> WindowId {
    video.grid.ids().find(|id| video.grid.center(*id) == (yaw, pitch)).unwrap()
}

pub fn state(videos: Vec<Video>) -> AppState {
    AppState::new(videos).unwrap()
}
