//! Sliding-window lattice on the sphere and viewport/window overlap.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::projection::normalize_yaw;

const EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("horizontal step {0} deg does not evenly divide 360")]
    HorizontalStep(f64),
    #[error("vertical step {0} deg must be positive and divide 90 evenly")]
    VerticalStep(f64),
    #[error("FOV ({0}, {1}) deg must lie in (0, 180)")]
    Fov(f64, f64),
}

/// Index into the grid's window list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WindowId(pub usize);

/// Construction parameters of a window grid; what gets persisted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridParams {
    pub hfov_deg: f64,
    pub vfov_deg: f64,
    pub h_step_deg: f64,
    pub v_step_deg: f64,
}

impl Default for GridParams {
    fn default() -> Self {
        Self {
            hfov_deg: 107.0,
            vfov_deg: 107.0,
            h_step_deg: 15.0,
            v_step_deg: 7.5,
        }
    }
}

/// Grid identity: first eight bytes of SHA-256 over the canonical parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridHash(pub [u8; 8]);

impl GridHash {
    pub fn to_hex(self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        let bytes = hex::decode(s).ok()?;
        Some(Self(bytes.try_into().ok()?))
    }
}

/// The sliding-window lattice.
///
/// Windows are ordered row-major: row 0 is the lowest pitch, and within a
/// row yaw increases from -180.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    params: GridParams,
    h_count: usize,
    v_count: usize,
    /// Pitch index of row 0 relative to the equator (non-positive).
    k_min: i64,
    centers: Vec<(f64, f64)>,
    hash: GridHash,
}

pub fn build_grid(hfov_deg: f64, vfov_deg: f64, h_step_deg: f64, v_step_deg: f64) -> Result<GridSpec, GridError> {
    GridSpec::new(GridParams {
        hfov_deg,
        vfov_deg,
        h_step_deg,
        v_step_deg,
    })
}

impl GridSpec {
    pub fn new(params: GridParams) -> Result<Self, GridError> {
        let GridParams {
            hfov_deg,
            vfov_deg,
            h_step_deg,
            v_step_deg,
        } = params;
        for f in [hfov_deg, vfov_deg] {
            if !(f > 0.0 && f < 180.0) {
                return Err(GridError::Fov(hfov_deg, vfov_deg));
            }
        }
        if h_step_deg.is_nan() || h_step_deg <= 0.0 {
            return Err(GridError::HorizontalStep(h_step_deg));
        }
        let hc = 360.0 / h_step_deg;
        if (hc - hc.round()).abs() > EPS {
            return Err(GridError::HorizontalStep(h_step_deg));
        }
        if !(v_step_deg > 0.0 && v_step_deg <= 90.0) {
            return Err(GridError::VerticalStep(v_step_deg));
        }
        let vd = 90.0 / v_step_deg;
        if (vd - vd.round()).abs() > EPS {
            return Err(GridError::VerticalStep(v_step_deg));
        }
        let h_count = hc.round() as usize;

        // Row extent: the free pitch range (180 - vfov) / 2 rounded to the
        // nearest step, ties toward the equator.
        let limit = (180.0 - vfov_deg) / 2.0;
        let k_max = ((limit / v_step_deg - 0.5 - EPS).ceil() as i64).max(0);
        let v_count = (2 * k_max + 1) as usize;

        let mut centers = Vec::with_capacity(h_count * v_count);
        for k in -k_max..=k_max {
            let pitch = k as f64 * v_step_deg;
            for i in 0..h_count {
                centers.push((-180.0 + i as f64 * h_step_deg, pitch));
            }
        }
        Ok(Self {
            params,
            h_count,
            v_count,
            k_min: -k_max,
            centers,
            hash: hash_params(&params),
        })
    }

    pub fn params(&self) -> GridParams {
        self.params
    }

    pub fn h_count(&self) -> usize {
        self.h_count
    }

    pub fn v_count(&self) -> usize {
        self.v_count
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn centers(&self) -> &[(f64, f64)] {
        &self.centers
    }

    pub fn center(&self, id: WindowId) -> (f64, f64) {
        self.centers[id.0]
    }

    pub fn hash(&self) -> GridHash {
        self.hash
    }

    pub fn ids(&self) -> impl Iterator<Item = WindowId> {
        (0..self.len()).map(WindowId)
    }

    fn id_of(&self, row: usize, col: usize) -> WindowId {
        WindowId(row * self.h_count + col)
    }

    /// The `k` windows nearest to `center` with their overlap fractions.
    ///
    /// Distance is Euclidean in (wrapped yaw, pitch) degrees; ties go to
    /// the lower [`WindowId`]. Only a local lattice neighborhood around the
    /// query is scanned, grown until it provably contains the answer.
    pub fn overlapping_windows(&self, center: (f64, f64), k: usize) -> Vec<(WindowId, f64)> {
        let k = k.min(self.len());
        if k == 0 {
            return Vec::new();
        }
        let (yaw, pitch) = (normalize_yaw(center.0), center.1);
        let GridParams {
            h_step_deg,
            v_step_deg,
            ..
        } = self.params;

        // nearest lattice cell
        let col0 = ((yaw + 180.0) / h_step_deg).round() as i64;
        let row_f = pitch / v_step_deg - self.k_min as f64;
        let row0 = row_f.round().clamp(0.0, (self.v_count - 1) as f64) as i64;

        let mut a = 0i64; // column half-width
        let mut b = 0i64; // row half-width
        let mut best: Vec<(f64, WindowId)> = Vec::with_capacity(16);
        loop {
            best.clear();
            let all_cols = 2 * a + 1 >= self.h_count as i64;
            let (c_lo, c_hi) = if all_cols { (0, self.h_count as i64 - 1) } else { (col0 - a, col0 + a) };
            let r_lo = (row0 - b).max(0);
            let r_hi = (row0 + b).min(self.v_count as i64 - 1);
            for r in r_lo..=r_hi {
                for c in c_lo..=c_hi {
                    let col = c.rem_euclid(self.h_count as i64) as usize;
                    let id = self.id_of(r as usize, col);
                    best.push((center_distance_sq((yaw, pitch), self.centers[id.0]), id));
                }
            }
            best.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));

            // Anything outside the scanned box is at least this far away.
            let yaw_guard = if all_cols {
                f64::INFINITY
            } else {
                let cell_yaw = -180.0 + col0 as f64 * h_step_deg;
                let off = wrapped_yaw_delta(yaw, cell_yaw).abs();
                (a as f64 + 1.0) * h_step_deg - off
            };
            let below = if r_lo == 0 {
                f64::INFINITY
            } else {
                pitch - (r_lo - 1 + self.k_min) as f64 * v_step_deg
            };
            let above = if r_hi == self.v_count as i64 - 1 {
                f64::INFINITY
            } else {
                (r_hi + 1 + self.k_min) as f64 * v_step_deg - pitch
            };
            let guard = yaw_guard.min(below).min(above);
            let complete = best.len() >= k && (best[k - 1].0 < guard * guard || guard.is_infinite());
            if complete {
                break;
            }
            // grow the box along whichever axis is the binding constraint
            if yaw_guard <= below.min(above) && !all_cols {
                a += 1;
            } else if below.is_finite() || above.is_finite() {
                b += 1;
            } else {
                a += 1;
            }
        }
        best.truncate(k);
        best.into_iter()
            .map(|(_, id)| {
                let w = self.center(id);
                (id, overlap_fraction((yaw, pitch), w, self.params.hfov_deg, self.params.vfov_deg))
            })
            .collect()
    }
}

fn hash_params(p: &GridParams) -> GridHash {
    let mut h = Sha256::new();
    h.update(b"epof-grid-v1");
    for v in [p.hfov_deg, p.vfov_deg, p.h_step_deg, p.v_step_deg] {
        h.update(v.to_le_bytes());
    }
    let digest = h.finalize();
    let mut out = [0u8; 8];
    out.copy_from_slice(&digest[..8]);
    GridHash(out)
}

/// Signed yaw difference `a - b` wrapped into `[-180, 180)`.
#[inline]
pub fn wrapped_yaw_delta(a: f64, b: f64) -> f64 {
    normalize_yaw(a - b)
}

/// Squared lattice distance between two `(yaw, pitch)` centers.
#[inline]
pub fn center_distance_sq(a: (f64, f64), b: (f64, f64)) -> f64 {
    let dy = wrapped_yaw_delta(a.0, b.0);
    let dp = a.1 - b.1;
    dy * dy + dp * dp
}

/// Length of the intersection of two arcs of length `len` on a 360 circle
/// whose centers are `sep` degrees apart (`0 <= sep <= 180`).
#[inline]
fn arc_overlap(len: f64, sep: f64) -> f64 {
    let direct = (len - sep).max(0.0);
    let around = (len - (360.0 - sep)).max(0.0);
    (direct + around).min(len)
}

/// Intersection area of the two angular rectangles
/// `[yaw +- hfov/2] x [pitch +- vfov/2]`, as a fraction of one rectangle.
pub fn overlap_fraction(a: (f64, f64), b: (f64, f64), hfov_deg: f64, vfov_deg: f64) -> f64 {
    let d = (a.0 - b.0).abs().rem_euclid(360.0);
    let sep = d.min(360.0 - d);
    let yaw_ol = arc_overlap(hfov_deg, sep);
    let pitch_ol = (vfov_deg - (a.1 - b.1).abs()).max(0.0);
    ((yaw_ol * pitch_ol) / (hfov_deg * vfov_deg)).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn paper_grid() -> GridSpec {
        build_grid(107.0, 107.0, 15.0, 7.5).unwrap()
    }

    #[test]
    fn paper_configuration_counts() {
        let g = paper_grid();
        assert_eq!(g.v_count(), 11);
        // 360 / 15 = 24 columns for full wraparound; the HMD study reported 18.
        assert_eq!(g.h_count(), 24);
        assert_eq!(g.len(), 264);
        assert_eq!(g.centers()[0], (-180.0, -37.5));
        assert_eq!(*g.centers().last().unwrap(), (165.0, 37.5));
    }

    #[test]
    fn coarse_grid_has_only_equator() {
        let g = build_grid(90.0, 90.0, 90.0, 90.0).unwrap();
        assert_eq!((g.h_count(), g.v_count()), (4, 1));
        assert_eq!(g.centers(), &[(-180.0, 0.0), (-90.0, 0.0), (0.0, 0.0), (90.0, 0.0)]);
    }

    #[test]
    fn rejects_uneven_steps() {
        assert!(matches!(build_grid(90.0, 90.0, 7.0, 7.5), Err(GridError::HorizontalStep(_))));
        assert!(build_grid(90.0, 90.0, 15.0, 7.0).is_err());
        assert!(build_grid(180.0, 90.0, 15.0, 7.5).is_err());
    }

    #[test]
    fn centers_unique_and_renderable() {
        let g = paper_grid();
        let p = g.params();
        for (i, a) in g.centers().iter().enumerate() {
            assert!(a.1.abs() + p.vfov_deg / 2.0 <= 90.0 + p.v_step_deg / 2.0);
            for b in &g.centers()[i + 1..] {
                assert_ne!(a, b);
            }
        }
    }

    #[test]
    fn grid_hash_depends_on_params() {
        let a = paper_grid();
        let b = build_grid(107.0, 107.0, 15.0, 15.0).unwrap();
        assert_eq!(a.hash(), paper_grid().hash());
        assert_ne!(a.hash(), b.hash());
        assert_eq!(GridHash::from_hex(&a.hash().to_hex()), Some(a.hash()));
    }

    #[test]
    fn overlap_basic_cases() {
        assert_eq!(overlap_fraction((10.0, 5.0), (10.0, 5.0), 107.0, 107.0), 1.0);
        assert_eq!(overlap_fraction((0.0, 0.0), (90.0, 0.0), 90.0, 90.0), 0.0);
        let f = overlap_fraction((0.0, 0.0), (7.5, 3.75), 107.0, 107.0);
        let expect = (99.5 / 107.0) * (103.25 / 107.0);
        assert!((f - expect).abs() < 1e-12);
        assert!((f - 0.8976).abs() < 1e-3);
    }

    #[test]
    fn overlap_wraps_the_seam() {
        let a = overlap_fraction((179.0, 0.0), (-179.0, 0.0), 107.0, 107.0);
        let b = overlap_fraction((0.0, 0.0), (2.0, 0.0), 107.0, 107.0);
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn window_at_center_is_first() {
        let g = paper_grid();
        let c = g.center(WindowId(100));
        let got = g.overlapping_windows(c, 4);
        assert_eq!(got.len(), 4);
        assert_eq!(got[0], (WindowId(100), 1.0));
    }

    #[test]
    fn midpoint_gives_four_equal_weights() {
        let g = paper_grid();
        let got = g.overlapping_windows((7.5, 3.75), 4);
        assert_eq!(got.len(), 4);
        for (_, w) in &got {
            assert!((w - got[0].1).abs() < 1e-12);
        }
        let mut ids: Vec<_> = got.iter().map(|(id, _)| g.center(*id)).collect();
        ids.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(ids, vec![(0.0, 0.0), (0.0, 7.5), (15.0, 0.0), (15.0, 7.5)]);
    }

    #[test]
    fn k_larger_than_grid_is_capped() {
        let g = build_grid(90.0, 90.0, 90.0, 90.0).unwrap();
        assert_eq!(g.overlapping_windows((0.0, 0.0), 10).len(), 4);
    }
}
