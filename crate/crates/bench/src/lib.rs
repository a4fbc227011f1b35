//! Shared fixtures for the criterion benches.

use epof_core::{FlowMatrix, GridSpec, Plane};

/// Smooth periodic texture, shifted right by `dx` pixels.
pub fn texture(width: usize, height: usize, dx: f32) -> Plane {
    let period = width as f32;
    Plane::from_fn(width, height, |x, y| {
        let u = (x as f32 - dx) * std::f32::consts::TAU / period;
        let v = y as f32 * 0.21;
        0.5 + 0.2 * (3.0 * u).sin() + 0.15 * (5.0 * u + v).cos() + 0.1 * (v * 1.3).sin()
    })
}

/// Equirect luma of `width x width/2` with the same texture.
pub fn equirect(width: usize, dx: f32) -> Plane {
    texture(width, width / 2, dx)
}

/// Deterministic matrix paired with `grid`.
pub fn matrix_for(grid: &GridSpec, n_frames: usize) -> FlowMatrix {
    let n = grid.len();
    let values = (0..n * n_frames).map(|i| ((i * 2654435761) % 1000) as f32 / 100.0).collect();
    FlowMatrix::new(n, n_frames, 30.0, grid.hash(), values).expect("matrix dimensions")
}
