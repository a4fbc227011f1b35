#![allow(dead_code)]

use std::f64::consts::PI;

use epof_core::{EquirectFrame, HeadSample, Plane};
use image::{Rgb, RgbImage};

/// Smooth texture, periodic in `x` with period `period`.
pub fn texture(x: f64, y: f64, period: f64) -> f64 {
    let u = 2.0 * PI * x / period;
    let v = y / 9.0;
    128.0
        + 38.0 * (3.0 * u + 0.7 * v).sin()
        + 27.0 * (7.0 * u - 1.3 * v + 0.4).sin()
        + 19.0 * (11.0 * u + 2.1 * v + 1.1).cos()
        + 14.0 * (17.0 * u).sin() * (0.9 * v + 0.3).cos()
}

/// A `w x h` planar tile of the texture, offset by `dx` pixels.
pub fn textured_tile(w: usize, h: usize, dx: f64, dy: f64) -> Plane {
    Plane::from_fn(w, h, |x, y| texture(x as f64 - dx, y as f64 - dy, 160.0) as f32)
}

/// Equirect frame of the texture panned `shift_px` pixels to the right.
pub fn panning_frame(width: u32, shift_px: f64) -> EquirectFrame {
    let height = width / 2;
    let w = width as f64;
    let img = RgbImage::from_fn(width, height, |x, y| {
        let xf = x as f64 - shift_px;
        let yf = y as f64;
        let r = texture(xf, yf, w);
        let g = texture(xf + w / 3.0, yf * 1.1, w);
        let b = texture(xf + 2.0 * w / 3.0, yf * 0.9, w);
        Rgb([q(r), q(g), q(b)])
    });
    EquirectFrame::new(img).unwrap()
}

pub fn panning_video(width: u32, n: usize, px_per_frame: f64) -> Vec<EquirectFrame> {
    (0..n).map(|i| panning_frame(width, i as f64 * px_per_frame)).collect()
}

fn q(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// A slow yaw sweep with a gentle pitch nod, sampled at `hz`.
pub fn synthetic_trace(duration_s: f64, hz: f64) -> Vec<HeadSample> {
    let n = (duration_s * hz).round() as usize + 1;
    (0..n)
        .map(|i| {
            let t = i as f64 / hz;
            HeadSample {
                t,
                yaw: -170.0 + 95.0 * t,
                pitch: 20.0 * (1.7 * t).sin(),
                roll: 5.0 * (0.8 * t).cos(),
            }
        })
        .collect()
}
