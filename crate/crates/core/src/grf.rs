//! Granulated rest frames: body-fixed grains in the visual periphery whose
//! opacity follows the estimated optical flow.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::plane::Plane;
use crate::projection::{angular_ratios, rotate_about, rotate_direction, ProjectionError, Vec3, ViewportSpec};

/// Probe directions used to track coverage while placing grains.
const COVERAGE_PROBES: usize = 200_000;
/// Fraction of the grain radius over which the edge fades out.
const SOFT_EDGE: f64 = 0.1;
const PROBE_STREAM: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GrfError {
    #[error("invalid GRF config: {0}")]
    Config(String),
    #[error("p10 ({p10}) exceeds p90 ({p90})")]
    PercentileOrder { p10: f64, p90: f64 },
    #[error(transparent)]
    Projection(#[from] ProjectionError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrfConfig {
    /// Angular diameter of one grain.
    pub grain_size_deg: f64,
    /// Target fraction of the peripheral annulus covered by grains.
    pub density: f64,
    /// Full inner FOV angle; fully transparent inside.
    pub ifov_deg: f64,
    /// Full outer FOV angle; fully opaque outside.
    pub ofov_deg: f64,
    pub seed: u64,
}

impl Default for GrfConfig {
    fn default() -> Self {
        Self {
            grain_size_deg: 1.5,
            density: 0.5,
            ifov_deg: 36.0,
            ofov_deg: 80.0,
            seed: 0,
        }
    }
}

impl GrfConfig {
    pub fn validate(&self, display_fov_deg: f64) -> Result<(), GrfError> {
        let ok = self.grain_size_deg > 0.0
            && self.grain_size_deg < self.ifov_deg
            && self.ifov_deg < self.ofov_deg
            && self.ofov_deg <= display_fov_deg
            && display_fov_deg < 180.0;
        if !ok {
            return Err(GrfError::Config(format!(
                "need 0 < size ({}) < ifov ({}) < ofov ({}) <= display fov ({display_fov_deg}) < 180",
                self.grain_size_deg, self.ifov_deg, self.ofov_deg
            )));
        }
        if !(0.0..=1.0).contains(&self.density) {
            return Err(GrfError::Config(format!("density {} outside [0, 1]", self.density)));
        }
        Ok(())
    }
}

/// Head orientation in degrees relative to the body.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct HeadPose {
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
}

impl HeadPose {
    pub fn new(yaw: f64, pitch: f64, roll: f64) -> Self {
        Self { yaw, pitch, roll }
    }

    /// Camera-frame direction to body frame: roll about the view axis, then
    /// pitch, then yaw.
    pub fn to_body(&self, v: Vec3) -> Vec3 {
        let v = rotate_about(v, Vec3::Z, self.roll.to_radians());
        rotate_direction(v, self.pitch, self.yaw)
    }
}

/// Body-frame `(yaw, pitch)` of a unit direction, same convention as the
/// viewport orientation.
pub fn direction_angles(v: Vec3) -> (f64, f64) {
    (v.x.atan2(v.z).to_degrees(), (-v.y).clamp(-1.0, 1.0).asin().to_degrees())
}

/// Unit direction of body-frame `(yaw, pitch)`.
pub fn angles_direction(yaw_deg: f64, pitch_deg: f64) -> Vec3 {
    rotate_direction(Vec3::Z, pitch_deg, yaw_deg)
}

/// Unit-sphere bucket index over 1-degree (yaw, pitch) cells.
#[derive(Debug, Clone, Default)]
struct SphereIndex {
    buckets: Vec<Vec<u32>>,
}

const YAW_CELLS: usize = 360;
const PITCH_CELLS: usize = 180;

impl SphereIndex {
    fn new(points: &[Vec3]) -> Self {
        let mut buckets = vec![Vec::new(); YAW_CELLS * PITCH_CELLS];
        for (i, p) in points.iter().enumerate() {
            let (c, r) = Self::cell(*p);
            buckets[r * YAW_CELLS + c].push(i as u32);
        }
        Self { buckets }
    }

    fn cell(p: Vec3) -> (usize, usize) {
        let (yaw, pitch) = direction_angles(p);
        let c = ((yaw + 180.0).floor() as i64).rem_euclid(YAW_CELLS as i64) as usize;
        let r = ((pitch + 90.0).floor() as i64).clamp(0, PITCH_CELLS as i64 - 1) as usize;
        (c, r)
    }

    /// Calls `f` with every indexed point that may lie within `radius_deg`
    /// of `center` (a superset; callers test the exact distance).
    fn for_each_near(&self, center: Vec3, radius_deg: f64, mut f: impl FnMut(u32)) {
        let (yaw, pitch) = direction_angles(center);
        let lo = (pitch - radius_deg - 1.0).max(-90.0);
        let hi = (pitch + radius_deg + 1.0).min(90.0);
        let r_lo = ((lo + 90.0).floor() as usize).min(PITCH_CELLS - 1);
        let r_hi = ((hi + 90.0).floor() as usize).min(PITCH_CELLS - 1);
        let max_abs = lo.abs().max(hi.abs());
        let cos = max_abs.to_radians().cos();
        let span = if cos < 1e-3 { 360.0 } else { radius_deg / cos + 1.0 };
        let all = span >= 180.0;
        let c0 = (yaw + 180.0).floor() as i64;
        let dc = span.ceil() as i64;
        for r in r_lo..=r_hi {
            let row = &self.buckets[r * YAW_CELLS..(r + 1) * YAW_CELLS];
            if all {
                row.iter().flatten().for_each(|&i| f(i));
            } else {
                for c in c0 - dc..=c0 + dc {
                    row[c.rem_euclid(YAW_CELLS as i64) as usize].iter().for_each(|&i| f(i));
                }
            }
        }
    }
}

/// A session's body-fixed grains.
#[derive(Debug, Clone)]
pub struct GrainSet {
    config: GrfConfig,
    display_fov_deg: f64,
    centers: Vec<(f64, f64)>,
    dirs: Vec<Vec3>,
    realized_coverage: f64,
    index: SphereIndex,
}

impl PartialEq for GrainSet {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.display_fov_deg == other.display_fov_deg && self.centers == other.centers
    }
}

/// Uniform solid-angle sample in the annulus of eccentricities
/// `[inner_deg, outer_deg]` around `+z`.
fn sample_annulus(rng: &mut impl Rng, inner_deg: f64, outer_deg: f64) -> Vec3 {
    let (c_hi, c_lo) = (inner_deg.to_radians().cos(), outer_deg.to_radians().cos());
    let cos_e = c_lo + (c_hi - c_lo) * rng.random::<f64>();
    let sin_e = (1.0 - cos_e * cos_e).max(0.0).sqrt();
    let az = 2.0 * PI * rng.random::<f64>();
    Vec3::new(sin_e * az.cos(), sin_e * az.sin(), cos_e)
}

pub fn generate_grains(config: &GrfConfig, display_fov_deg: f64) -> Result<GrainSet, GrfError> {
    config.validate(display_fov_deg)?;
    let inner = config.ifov_deg / 2.0;
    let outer = display_fov_deg / 2.0;
    let radius = config.grain_size_deg / 2.0;
    let cos_r = radius.to_radians().cos();

    let mut dirs = Vec::new();
    let mut realized = 0.0;
    if config.density > 0.0 {
        let mut probe_rng = ChaCha8Rng::seed_from_u64(config.seed ^ PROBE_STREAM);
        let probes: Vec<Vec3> = (0..COVERAGE_PROBES).map(|_| sample_annulus(&mut probe_rng, inner, outer)).collect();
        let index = SphereIndex::new(&probes);
        let mut covered = vec![false; probes.len()];
        let mut n_covered = 0usize;
        let target = (config.density * probes.len() as f64).ceil() as usize;

        // Upper bound on placements: enough to reach 99.99% coverage.
        let annulus = 2.0 * PI * (inner.to_radians().cos() - outer.to_radians().cos());
        let cap = 2.0 * PI * (1.0 - cos_r);
        let max_grains = ((annulus / cap) * 10.0).ceil() as usize + 16;

        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        while n_covered < target && dirs.len() < max_grains {
            let g = sample_annulus(&mut rng, inner, outer);
            index.for_each_near(g, radius, |i| {
                let i = i as usize;
                if !covered[i] && probes[i].dot(g) >= cos_r {
                    covered[i] = true;
                    n_covered += 1;
                }
            });
            dirs.push(g);
        }
        realized = n_covered as f64 / probes.len() as f64;
    }

    let centers = dirs.iter().map(|d| direction_angles(*d)).collect();
    Ok(GrainSet {
        config: *config,
        display_fov_deg,
        centers,
        index: SphereIndex::new(&dirs),
        dirs,
        realized_coverage: realized,
    })
}

impl GrainSet {
    pub fn config(&self) -> &GrfConfig {
        &self.config
    }

    pub fn display_fov_deg(&self) -> f64 {
        self.display_fov_deg
    }

    pub fn len(&self) -> usize {
        self.dirs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dirs.is_empty()
    }

    /// Body-frame `(yaw, pitch)` grain centers in degrees.
    pub fn centers(&self) -> &[(f64, f64)] {
        &self.centers
    }

    pub fn radius_deg(&self) -> f64 {
        self.config.grain_size_deg / 2.0
    }

    /// Coverage measured on the placement probes.
    pub fn realized_coverage(&self) -> f64 {
        self.realized_coverage
    }

    /// SHA-256 over the grain centers, for cross-checking client layouts.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for (y, p) in &self.centers {
            h.update(y.to_le_bytes());
            h.update(p.to_le_bytes());
        }
        hex::encode(h.finalize())
    }

    /// Whether body-frame direction `dir` lies inside any grain.
    pub fn covers(&self, dir: Vec3) -> bool {
        let cos_r = self.radius_deg().to_radians().cos();
        let mut hit = false;
        self.index.for_each_near(dir, self.radius_deg(), |i| {
            hit |= self.dirs[i as usize].dot(dir) >= cos_r;
        });
        hit
    }

    /// Soft-edged grain alpha at `dir`: 1 in the core, ramping to 0 over
    /// the outer tenth of the radius, 0 outside every grain.
    pub fn grain_alpha(&self, dir: Vec3) -> f64 {
        let r = self.radius_deg();
        let cos_r = r.to_radians().cos();
        let mut best = 0.0f64;
        self.index.for_each_near(dir, r, |i| {
            let c = self.dirs[i as usize].dot(dir);
            if c >= cos_r && best < 1.0 {
                let d = c.clamp(-1.0, 1.0).acos().to_degrees();
                let a = ((r - d) / (SOFT_EDGE * r)).clamp(0.0, 1.0);
                best = best.max(a);
            }
        });
        best
    }
}

/// EPOF-driven overlay opacity: 0 at or below `p10`, 1 at or above `p90`.
pub fn global_opacity(epof: f64, p10: f64, p90: f64) -> Result<f64, GrfError> {
    if p10 > p90 {
        return Err(GrfError::PercentileOrder { p10, p90 });
    }
    if p10 == p90 {
        return Ok(if epof >= p90 { 1.0 } else { 0.0 });
    }
    Ok(((epof - p10) / (p90 - p10)).clamp(0.0, 1.0))
}

/// Radial opacity ramp from the inner to the outer FOV half-angle.
pub fn radial_envelope(eccentricity_deg: f64, config: &GrfConfig) -> f64 {
    let inner = config.ifov_deg / 2.0;
    let outer = config.ofov_deg / 2.0;
    ((eccentricity_deg - inner) / (outer - inner)).clamp(0.0, 1.0)
}

/// Per-pixel overlay alpha for one head pose.
///
/// Only the FOV and resolution of `viewport` are used; the orientation
/// comes from `head`.
pub fn render_mask(head: HeadPose, grains: &GrainSet, global_op: f64, viewport: &ViewportSpec) -> Result<Plane, GrfError> {
    let (wr, hr) = angular_ratios(viewport)?;
    let (cx, cy) = viewport.center();
    let (w, h) = (viewport.width_px as usize, viewport.height_px as usize);
    let global_op = global_op.clamp(0.0, 1.0);
    if global_op == 0.0 || grains.is_empty() {
        return Ok(Plane::new(w, h));
    }
    let cfg = grains.config();
    Ok(Plane::from_fn(w, h, |x, y| {
        let px = (x as f64 - cx) * wr;
        let py = (y as f64 - cy) * hr;
        let d = (1.0 + px * px + py * py).sqrt();
        let cam = Vec3::new(px / d, py / d, 1.0 / d);
        let env = radial_envelope(cam.z.clamp(-1.0, 1.0).acos().to_degrees(), cfg);
        if env == 0.0 {
            return 0.0;
        }
        let a = grains.grain_alpha(head.to_body(cam));
        (global_op * env * a) as f32
    }))
}
