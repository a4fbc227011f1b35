//! Perspective viewport <-> equirectangular mapping.
//!
//! A viewport pixel `(x, y)` is lifted onto the unit sphere through a pinhole
//! camera looking down `+z`, rotated by the viewport pitch (about `+x`) and
//! then yaw (about `+y`), and finally converted to longitude/latitude and
//! the equirectangular pixel grid.
//!
//! Axis conventions: image `y` grows downward in both the viewport and the
//! equirectangular frame, so `+y` on the sphere points at the bottom row.
//! A positive pitch therefore looks *up*, toward row 0. Yaw `+90` looks at
//! the three-quarter column.

use std::f64::consts::{FRAC_PI_2, PI};
use std::ops::{Add, Mul, Sub};

use image::{Rgb, RgbImage};
use thiserror::Error;

use crate::plane::Plane;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProjectionError {
    #[error("horizontal FOV {0} deg outside (0, 180)")]
    HorizontalFov(f64),
    #[error("derived vertical FOV {0} deg outside (0, 180)")]
    VerticalFov(f64),
    #[error("pitch {0} deg outside [-90, 90]")]
    Pitch(f64),
    #[error("non-finite yaw")]
    Yaw,
    #[error("viewport resolution must be positive, got {0}x{1}")]
    Resolution(u32, u32),
    #[error("equirectangular frame must be 2:1, got {0}x{1}")]
    FrameAspect(u32, u32),
    #[error("pixel map built for {map_w}x{map_h} equirect frame, got {frame_w}x{frame_h}")]
    MapMismatch {
        map_w: u32,
        map_h: u32,
        frame_w: u32,
        frame_h: u32,
    },
}

/// Minimal 3-vector used for viewing directions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const X: Vec3 = Vec3::new(1.0, 0.0, 0.0);
    pub const Y: Vec3 = Vec3::new(0.0, 1.0, 0.0);
    pub const Z: Vec3 = Vec3::new(0.0, 0.0, 1.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    #[inline]
    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    #[inline]
    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn normalized(self) -> Vec3 {
        self * (1.0 / self.norm())
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

/// Wraps a yaw angle into `[-180, 180)`.
pub fn normalize_yaw(deg: f64) -> f64 {
    let y = (deg + 180.0).rem_euclid(360.0) - 180.0;
    // rem_euclid can round up to exactly 360 for tiny negative inputs
    if y >= 180.0 {
        y - 360.0
    } else {
        y
    }
}

/// Where the viewer looks plus the display geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewportSpec {
    pub yaw_deg: f64,
    pub pitch_deg: f64,
    pub hfov_deg: f64,
    pub width_px: u32,
    pub height_px: u32,
}

impl ViewportSpec {
    pub fn new(
        yaw_deg: f64,
        pitch_deg: f64,
        hfov_deg: f64,
        width_px: u32,
        height_px: u32,
    ) -> Result<Self, ProjectionError> {
        let vp = Self {
            yaw_deg: normalize_yaw(yaw_deg),
            pitch_deg,
            hfov_deg,
            width_px,
            height_px,
        };
        vp.validate()?;
        Ok(vp)
    }

    pub fn validate(&self) -> Result<(), ProjectionError> {
        if !self.yaw_deg.is_finite() {
            return Err(ProjectionError::Yaw);
        }
        if !(-90.0..=90.0).contains(&self.pitch_deg) {
            return Err(ProjectionError::Pitch(self.pitch_deg));
        }
        if self.width_px == 0 || self.height_px == 0 {
            return Err(ProjectionError::Resolution(self.width_px, self.height_px));
        }
        if !(self.hfov_deg > 0.0 && self.hfov_deg < 180.0) {
            return Err(ProjectionError::HorizontalFov(self.hfov_deg));
        }
        let v = self.vfov_deg();
        if !(v > 0.0 && v < 180.0) {
            return Err(ProjectionError::VerticalFov(v));
        }
        Ok(())
    }

    /// Vertical FOV, derived from the horizontal FOV and the aspect ratio.
    pub fn vfov_deg(&self) -> f64 {
        self.hfov_deg * self.height_px as f64 / self.width_px as f64
    }

    /// Optical center `(W/2, H/2)`.
    pub fn center(&self) -> (f64, f64) {
        (self.width_px as f64 / 2.0, self.height_px as f64 / 2.0)
    }

    pub fn looking_at(mut self, yaw_deg: f64, pitch_deg: f64) -> Self {
        self.yaw_deg = normalize_yaw(yaw_deg);
        self.pitch_deg = pitch_deg;
        self
    }
}

/// View-plane units covered by one horizontal and one vertical pixel.
pub fn angular_ratios(vp: &ViewportSpec) -> Result<(f64, f64), ProjectionError> {
    vp.validate()?;
    let w = 2.0 * (vp.hfov_deg.to_radians() / 2.0).tan() / vp.width_px as f64;
    let h = 2.0 * (vp.vfov_deg().to_radians() / 2.0).tan() / vp.height_px as f64;
    Ok((w, h))
}

/// Unit viewing ray for pixel `(x, y)` in the camera frame.
pub fn project_direction(x: f64, y: f64, vp: &ViewportSpec) -> Result<Vec3, ProjectionError> {
    let ratios = angular_ratios(vp)?;
    Ok(project_with_ratios(x, y, vp.center(), ratios))
}

#[inline]
fn project_with_ratios(x: f64, y: f64, (cx, cy): (f64, f64), (wr, hr): (f64, f64)) -> Vec3 {
    let px = (x - cx) * wr;
    let py = (y - cy) * hr;
    let d = (1.0 + px * px + py * py).sqrt();
    Vec3::new(px / d, py / d, 1.0 / d)
}

/// Rodrigues rotation of `v` by `angle` radians about unit axis `k`.
#[inline]
pub fn rotate_about(v: Vec3, k: Vec3, angle: f64) -> Vec3 {
    let (s, c) = angle.sin_cos();
    v * c + k.cross(v) * s + k * (k.dot(v) * (1.0 - c))
}

/// Pitch about the x-axis, then yaw about the y-axis.
pub fn rotate_direction(v: Vec3, pitch_deg: f64, yaw_deg: f64) -> Vec3 {
    let v = rotate_about(v, Vec3::X, pitch_deg.to_radians());
    rotate_about(v, Vec3::Y, yaw_deg.to_radians())
}

/// Longitude in `[-pi, pi)` and latitude in `[-pi/2, pi/2]` of a unit vector.
pub fn direction_to_lon_lat(v: Vec3) -> (f64, f64) {
    let lat = v.y.clamp(-1.0, 1.0).asin();
    let mut lon = v.x.atan2(v.z);
    if lon >= PI {
        lon -= 2.0 * PI;
    }
    (lon, lat)
}

/// Equirectangular pixel coordinate of a unit direction.
///
/// `x` wraps into `[0, W)`; `y` is clamped to `[0, H]`.
pub fn direction_to_equirect(v: Vec3, eq_width: u32, eq_height: u32) -> (f64, f64) {
    let (lon, lat) = direction_to_lon_lat(v);
    let (w, h) = (eq_width as f64, eq_height as f64);
    let x = (lon / PI) * w / 2.0 + w / 2.0;
    let y = (lat / FRAC_PI_2) * h / 2.0 + h / 2.0;
    let mut x = x.rem_euclid(w);
    if x >= w {
        x = 0.0;
    }
    (x, y.clamp(0.0, h))
}

/// Equirect coordinate that a `(yaw, pitch)` orientation looks at.
pub fn orientation_to_equirect(yaw_deg: f64, pitch_deg: f64, eq_width: u32, eq_height: u32) -> (f64, f64) {
    direction_to_equirect(rotate_direction(Vec3::Z, pitch_deg, yaw_deg), eq_width, eq_height)
}

/// An RGB equirectangular frame with 2:1 aspect.
#[derive(Debug, Clone, PartialEq)]
pub struct EquirectFrame {
    image: RgbImage,
}

impl EquirectFrame {
    pub fn new(image: RgbImage) -> Result<Self, ProjectionError> {
        let (w, h) = image.dimensions();
        if h == 0 || w != 2 * h {
            return Err(ProjectionError::FrameAspect(w, h));
        }
        Ok(Self { image })
    }

    pub fn width(&self) -> u32 {
        self.image.width()
    }

    pub fn height(&self) -> u32 {
        self.image.height()
    }

    pub fn image(&self) -> &RgbImage {
        &self.image
    }

    pub fn into_image(self) -> RgbImage {
        self.image
    }

    pub fn luma(&self) -> Plane {
        Plane::luma_of(&self.image)
    }
}

/// Cached source coordinates for every pixel of one viewport.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelMap {
    width: u32,
    height: u32,
    eq_width: u32,
    eq_height: u32,
    coords: Vec<[f32; 2]>,
}

impl PixelMap {
    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn frame_dims(&self) -> (u32, u32) {
        (self.eq_width, self.eq_height)
    }

    /// Source coordinate for output pixel `(x, y)`.
    pub fn source(&self, x: u32, y: u32) -> (f32, f32) {
        let [sx, sy] = self.coords[(y * self.width + x) as usize];
        (sx, sy)
    }

    pub fn coords(&self) -> &[[f32; 2]] {
        &self.coords
    }

    fn check_frame(&self, w: u32, h: u32) -> Result<(), ProjectionError> {
        if (w, h) != (self.eq_width, self.eq_height) {
            return Err(ProjectionError::MapMismatch {
                map_w: self.eq_width,
                map_h: self.eq_height,
                frame_w: w,
                frame_h: h,
            });
        }
        Ok(())
    }
}

pub fn build_pixel_map(vp: &ViewportSpec, eq_width: u32, eq_height: u32) -> Result<PixelMap, ProjectionError> {
    if eq_height == 0 || eq_width != 2 * eq_height {
        return Err(ProjectionError::FrameAspect(eq_width, eq_height));
    }
    let ratios = angular_ratios(vp)?;
    let center = vp.center();
    let mut coords = Vec::with_capacity((vp.width_px * vp.height_px) as usize);
    for y in 0..vp.height_px {
        for x in 0..vp.width_px {
            let v = project_with_ratios(x as f64, y as f64, center, ratios);
            let v = rotate_direction(v, vp.pitch_deg, vp.yaw_deg);
            let (sx, sy) = direction_to_equirect(v, eq_width, eq_height);
            coords.push([sx as f32, sy as f32]);
        }
    }
    Ok(PixelMap {
        width: vp.width_px,
        height: vp.height_px,
        eq_width,
        eq_height,
        coords,
    })
}

#[inline]
fn catmull_rom_weights(t: f32) -> [f32; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    [
        0.5 * (-t3 + 2.0 * t2 - t),
        0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
        0.5 * (-3.0 * t3 + 4.0 * t2 + t),
        0.5 * (t3 - t2),
    ]
}

/// 4x4 neighborhood of `(x, y)`: horizontally wrapped columns, vertically
/// clamped rows, and the separable kernel weights.
#[inline]
fn neighborhood(x: f32, y: f32, w: u32, h: u32) -> ([usize; 4], [usize; 4], [f32; 4], [f32; 4]) {
    let x0 = x.floor();
    let y0 = y.floor();
    let wx = catmull_rom_weights(x - x0);
    let wy = catmull_rom_weights(y - y0);
    let (xi, yi) = (x0 as i64, y0 as i64);
    let (w, h) = (w as i64, h as i64);
    let mut cols = [0usize; 4];
    let mut rows = [0usize; 4];
    for k in 0..4 {
        cols[k] = (xi - 1 + k as i64).rem_euclid(w) as usize;
        rows[k] = (yi - 1 + k as i64).clamp(0, h - 1) as usize;
    }
    (cols, rows, wx, wy)
}

/// Catmull-Rom sample of a single-channel equirect plane.
pub fn sample_plane(plane: &Plane, x: f32, y: f32) -> f32 {
    let (cols, rows, wx, wy) = neighborhood(x, y, plane.width() as u32, plane.height() as u32);
    let mut acc = 0.0;
    for (r, &ry) in rows.iter().enumerate() {
        let mut row = 0.0;
        for (c, &cx) in cols.iter().enumerate() {
            row += wx[c] * plane.get(cx, ry);
        }
        acc += wy[r] * row;
    }
    acc
}

/// Renders the viewport described by `map` out of `frame`.
pub fn render_viewport(frame: &EquirectFrame, map: &PixelMap) -> Result<RgbImage, ProjectionError> {
    map.check_frame(frame.width(), frame.height())?;
    let src = frame.image();
    let (fw, fh) = (frame.width(), frame.height());
    let mut out = RgbImage::new(map.width, map.height);
    for (px, [sx, sy]) in out.pixels_mut().zip(map.coords.iter()) {
        let (cols, rows, wx, wy) = neighborhood(*sx, *sy, fw, fh);
        let mut acc = [0.0f32; 3];
        for (r, &ry) in rows.iter().enumerate() {
            let mut row = [0.0f32; 3];
            for (c, &cx) in cols.iter().enumerate() {
                let p = src.get_pixel(cx as u32, ry as u32);
                for ch in 0..3 {
                    row[ch] += wx[c] * p[ch] as f32;
                }
            }
            for ch in 0..3 {
                acc[ch] += wy[r] * row[ch];
            }
        }
        *px = Rgb(acc.map(|v| v.round().clamp(0.0, 255.0) as u8));
    }
    Ok(out)
}

/// Renders a luma tile from a precomputed equirect luma plane. Values are
/// not clamped or quantized.
pub fn render_viewport_luma(luma: &Plane, map: &PixelMap) -> Result<Plane, ProjectionError> {
    map.check_frame(luma.width() as u32, luma.height() as u32)?;
    let data = map
        .coords
        .iter()
        .map(|[sx, sy]| sample_plane(luma, *sx, *sy))
        .collect();
    Ok(Plane::from_vec(map.width as usize, map.height as usize, data))
}
