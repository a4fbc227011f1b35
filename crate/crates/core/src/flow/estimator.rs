//! Coarse-to-fine Horn-Schunck estimator with image warping.

use super::{FlowError, FlowField, FlowParams};
use crate::plane::Plane;

/// Levels stop shrinking once either side would drop below this.
const MIN_LEVEL_SIDE: usize = 8;

/// Dense flow from `a` to `b` minimizing brightness constancy plus
/// `alpha^2`-weighted smoothness.
///
/// Each pyramid level warps `b` toward `a` by the upsampled coarse flow and
/// runs `iterations` Jacobi updates on the linearized residual.
pub fn estimate_flow(a: &Plane, b: &Plane, params: &FlowParams) -> Result<FlowField, FlowError> {
    params.validate()?;
    if a.dims() != b.dims() {
        return Err(FlowError::DimensionMismatch(a.width(), a.height(), b.width(), b.height()));
    }
    let (w, h) = a.dims();
    if w == 0 || h == 0 {
        return Err(FlowError::Empty);
    }

    let pa = pyramid(a, params.pyramid_levels as usize);
    let pb = pyramid(b, params.pyramid_levels as usize);
    let alpha2 = params.alpha * params.alpha;

    let (cw, ch) = pa.last().unwrap().dims();
    let mut u = Plane::new(cw, ch);
    let mut v = Plane::new(cw, ch);
    for (level, (la, lb)) in pa.iter().zip(&pb).enumerate().rev() {
        if level + 1 < pa.len() {
            u = upsample_flow(&u, la.width(), la.height());
            v = upsample_flow(&v, la.width(), la.height());
        }
        refine_level(la, lb, &mut u, &mut v, alpha2, params.iterations);
    }

    let uv = u.as_slice().iter().zip(v.as_slice()).map(|(&x, &y)| [x, y]).collect();
    FlowField::from_vec(w, h, uv)
}

fn refine_level(a: &Plane, b: &Plane, u: &mut Plane, v: &mut Plane, alpha2: f32, iterations: u32) {
    let (w, h) = a.dims();
    let u0 = u.clone();
    let v0 = v.clone();
    let warped = Plane::from_fn(w, h, |x, y| b.sample_bilinear(x as f32 + u0.get(x, y), y as f32 + v0.get(x, y)));

    let mut ix = Plane::new(w, h);
    let mut iy = Plane::new(w, h);
    let mut it = Plane::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let (xi, yi) = (x as isize, y as isize);
            let gx = 0.5 * (a.get_clamped(xi + 1, yi) - a.get_clamped(xi - 1, yi))
                + 0.5 * (warped.get_clamped(xi + 1, yi) - warped.get_clamped(xi - 1, yi));
            let gy = 0.5 * (a.get_clamped(xi, yi + 1) - a.get_clamped(xi, yi - 1))
                + 0.5 * (warped.get_clamped(xi, yi + 1) - warped.get_clamped(xi, yi - 1));
            ix.set(x, y, 0.5 * gx);
            iy.set(x, y, 0.5 * gy);
            it.set(x, y, warped.get(x, y) - a.get(x, y));
        }
    }

    // per-pixel constants of the update: k = (gx*ub + gy*vb + c) * inv
    let n = w * h;
    let mut c = Vec::with_capacity(n);
    let mut inv = Vec::with_capacity(n);
    for i in 0..n {
        let (gx, gy) = (ix.as_slice()[i], iy.as_slice()[i]);
        c.push(it.as_slice()[i] - gx * u0.as_slice()[i] - gy * v0.as_slice()[i]);
        inv.push(1.0 / (alpha2 + gx * gx + gy * gy));
    }

    let mut pu = Padded::from_plane(u);
    let mut pv = Padded::from_plane(v);
    let mut next_u = pu.clone();
    let mut next_v = pv.clone();
    for _ in 0..iterations {
        pu.replicate_border();
        pv.replicate_border();
        for y in 0..h {
            let row = y * w..(y + 1) * w;
            let (gx, gy, c, inv) = (&ix.as_slice()[row.clone()], &iy.as_slice()[row.clone()], &c[row.clone()], &inv[row]);
            let (u_up, u_mid, u_down) = pu.rows(y);
            let (v_up, v_mid, v_down) = pv.rows(y);
            let out_u = next_u.interior_row_mut(y);
            let out_v = next_v.interior_row_mut(y);
            for x in 0..w {
                let ub = stencil(u_up, u_mid, u_down, x);
                let vb = stencil(v_up, v_mid, v_down, x);
                let k = (gx[x] * ub + gy[x] * vb + c[x]) * inv[x];
                out_u[x] = ub - gx[x] * k;
                out_v[x] = vb - gy[x] * k;
            }
        }
        std::mem::swap(&mut pu, &mut next_u);
        std::mem::swap(&mut pv, &mut next_v);
    }
    pu.write_to(u);
    pv.write_to(v);
}

/// Horn-Schunck weighted 3x3 average (1/6 edge neighbors, 1/12 corners)
/// around interior column `x` of three padded rows.
#[inline(always)]
fn stencil(up: &[f32], mid: &[f32], down: &[f32], x: usize) -> f32 {
    let edges = mid[x] + mid[x + 2] + up[x + 1] + down[x + 1];
    let corners = up[x] + up[x + 2] + down[x] + down[x + 2];
    edges / 6.0 + corners / 12.0
}

/// A plane with a one-pixel border, refreshed by edge replication so the
/// sweep needs no clamping.
#[derive(Clone)]
struct Padded {
    w: usize,
    h: usize,
    data: Vec<f32>,
}

impl Padded {
    fn from_plane(p: &Plane) -> Self {
        let (w, h) = p.dims();
        let mut data = vec![0.0; (w + 2) * (h + 2)];
        for (y, src) in p.as_slice().chunks_exact(w).enumerate() {
            let start = (y + 1) * (w + 2) + 1;
            data[start..start + w].copy_from_slice(src);
        }
        Self { w, h, data }
    }

    fn replicate_border(&mut self) {
        let pw = self.w + 2;
        for y in 1..=self.h {
            let row = &mut self.data[y * pw..(y + 1) * pw];
            row[0] = row[1];
            row[pw - 1] = row[pw - 2];
        }
        self.data.copy_within(pw..2 * pw, 0);
        let last = self.h * pw;
        self.data.copy_within(last..last + pw, last + pw);
    }

    fn rows(&self, y: usize) -> (&[f32], &[f32], &[f32]) {
        let pw = self.w + 2;
        (
            &self.data[y * pw..(y + 1) * pw],
            &self.data[(y + 1) * pw..(y + 2) * pw],
            &self.data[(y + 2) * pw..(y + 3) * pw],
        )
    }

    fn interior_row_mut(&mut self, y: usize) -> &mut [f32] {
        let start = (y + 1) * (self.w + 2) + 1;
        &mut self.data[start..start + self.w]
    }

    fn write_to(&self, p: &mut Plane) {
        let w = self.w;
        for (y, dst) in p.as_mut_slice().chunks_exact_mut(w).enumerate() {
            let start = (y + 1) * (w + 2) + 1;
            dst.copy_from_slice(&self.data[start..start + w]);
        }
    }
}

/// Gaussian pyramid, finest level first.
fn pyramid(base: &Plane, levels: usize) -> Vec<Plane> {
    let mut out = vec![base.clone()];
    while out.len() < levels {
        let last = out.last().unwrap();
        let (w, h) = last.dims();
        if w / 2 < MIN_LEVEL_SIDE || h / 2 < MIN_LEVEL_SIDE {
            break;
        }
        out.push(downsample(last));
    }
    out
}

const BINOMIAL: [f32; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];

fn downsample(p: &Plane) -> Plane {
    let (w, h) = p.dims();
    let horiz = Plane::from_fn(w, h, |x, y| {
        BINOMIAL
            .iter()
            .enumerate()
            .map(|(i, k)| k * p.get_clamped(x as isize + i as isize - 2, y as isize))
            .sum()
    });
    let (nw, nh) = (w.div_ceil(2), h.div_ceil(2));
    Plane::from_fn(nw, nh, |x, y| {
        BINOMIAL
            .iter()
            .enumerate()
            .map(|(i, k)| k * horiz.get_clamped(2 * x as isize, 2 * y as isize + i as isize - 2))
            .sum()
    })
}

/// Bilinear upsampling of one flow component to `(w, h)`, rescaling the
/// displacement by the size ratio.
fn upsample_flow(p: &Plane, w: usize, h: usize) -> Plane {
    let sx = p.width() as f32 / w as f32;
    let sy = p.height() as f32 / h as f32;
    let scale = 1.0 / sx;
    Plane::from_fn(w, h, |x, y| {
        let fx = (x as f32 + 0.5) * sx - 0.5;
        let fy = (y as f32 + 0.5) * sy - 0.5;
        p.sample_bilinear(fx, fy) * scale
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texture(w: usize, h: usize, dx: f32, dy: f32) -> Plane {
        Plane::from_fn(w, h, |x, y| {
            let (x, y) = (x as f32 - dx, y as f32 - dy);
            128.0 + 40.0 * (x * 0.31).sin() * (y * 0.23).cos() + 30.0 * ((x + 2.0 * y) * 0.17).sin()
                + 20.0 * ((x * 0.11 - y * 0.29).cos())
        })
    }

    #[test]
    fn static_scene_has_zero_flow() {
        let a = texture(48, 40, 0.0, 0.0);
        let f = estimate_flow(&a, &a, &FlowParams::default()).unwrap();
        assert!(f.magnitudes().all(|m| m < 1e-6));
    }

    #[test]
    fn rejects_mismatched_tiles() {
        let a = Plane::new(16, 16);
        let b = Plane::new(16, 15);
        assert!(matches!(
            estimate_flow(&a, &b, &FlowParams::default()),
            Err(FlowError::DimensionMismatch(..))
        ));
    }

    #[test]
    fn recovers_small_translation() {
        let a = texture(64, 64, 0.0, 0.0);
        let b = texture(64, 64, 1.0, 0.0);
        let f = estimate_flow(&a, &b, &FlowParams::default()).unwrap();
        let (mut su, mut sv, mut n) = (0.0, 0.0, 0.0);
        for y in 8..56 {
            for x in 8..56 {
                let [u, v] = f.get(x, y);
                su += u;
                sv += v;
                n += 1.0;
            }
        }
        assert!((su / n - 1.0).abs() < 0.1, "mean u = {}", su / n);
        assert!((sv / n).abs() < 0.1);
    }

    #[test]
    fn pyramid_respects_min_side() {
        let p = pyramid(&Plane::new(20, 20), 5);
        assert_eq!(p.len(), 2);
        assert_eq!(p[1].dims(), (10, 10));
    }
}
