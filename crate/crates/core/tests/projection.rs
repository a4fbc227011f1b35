use epof_core::projection::{
    direction_to_equirect, direction_to_lon_lat, orientation_to_equirect, render_viewport, rotate_direction,
};
use epof_core::{angular_ratios, build_pixel_map, project_direction, EquirectFrame, Vec3, ViewportSpec};
use image::{Rgb, RgbImage};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type M3 = [[f64; 3]; 3];

fn mul(m: &M3, v: [f64; 3]) -> [f64; 3] {
    [0, 1, 2].map(|i| m[i][0] * v[0] + m[i][1] * v[1] + m[i][2] * v[2])
}

fn transpose(m: &M3) -> M3 {
    [0, 1, 2].map(|i| [m[0][i], m[1][i], m[2][i]])
}

fn rot_x(deg: f64) -> M3 {
    let (s, c) = deg.to_radians().sin_cos();
    [[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]]
}

fn rot_y(deg: f64) -> M3 {
    let (s, c) = deg.to_radians().sin_cos();
    [[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]]
}

/// Equirect pixel back to the viewport pixel it came from, by matrix algebra.
fn inverse(ex: f64, ey: f64, eq_w: f64, eq_h: f64, vp: &ViewportSpec) -> (f64, f64) {
    use std::f64::consts::PI;
    let lon = (ex - eq_w / 2.0) / (eq_w / 2.0) * PI;
    let lat = (ey - eq_h / 2.0) / (eq_h / 2.0) * (PI / 2.0);
    let d = [lat.cos() * lon.sin(), lat.sin(), lat.cos() * lon.cos()];
    let cam = mul(&transpose(&rot_x(vp.pitch_deg)), mul(&transpose(&rot_y(vp.yaw_deg)), d));
    let w_ratio = 2.0 * (vp.hfov_deg.to_radians() / 2.0).tan() / vp.width_px as f64;
    let h_ratio = 2.0 * (vp.vfov_deg().to_radians() / 2.0).tan() / vp.height_px as f64;
    (
        cam[0] / cam[2] / w_ratio + vp.width_px as f64 / 2.0,
        cam[1] / cam[2] / h_ratio + vp.height_px as f64 / 2.0,
    )
}

#[test]
fn round_trip_recovers_pixels() {
    let (eq_w, eq_h) = (4096u32, 2048u32);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..1000 {
        let width = rng.random_range(64..640);
        let vp = ViewportSpec::new(
            rng.random_range(-180.0..180.0),
            rng.random_range(-45.0..=45.0),
            rng.random_range(40.0..120.0),
            width,
            rng.random_range(48..=width),
        )
        .unwrap();
        let x = rng.random_range(0.0..vp.width_px as f64);
        let y = rng.random_range(0.0..vp.height_px as f64);
        let dir = rotate_direction(project_direction(x, y, &vp).unwrap(), vp.pitch_deg, vp.yaw_deg);
        let (ex, ey) = direction_to_equirect(dir, eq_w, eq_h);
        let (bx, by) = inverse(ex, ey, eq_w as f64, eq_h as f64, &vp);
        assert!((bx - x).abs() < 0.5 && (by - y).abs() < 0.5, "{vp:?} ({x},{y}) -> ({bx},{by})");
    }
}

#[test]
fn rotation_matches_matrices() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..500 {
        let v = Vec3::new(rng.random(), rng.random(), rng.random()).normalized();
        let (p, y) = (rng.random_range(-90.0..90.0), rng.random_range(-180.0..180.0));
        let got = rotate_direction(v, p, y);
        let want = mul(&rot_y(y), mul(&rot_x(p), [v.x, v.y, v.z]));
        assert!((got.x - want[0]).abs() < 1e-12 && (got.y - want[1]).abs() < 1e-12 && (got.z - want[2]).abs() < 1e-12);
    }
}

#[test]
fn norm_preserved_for_a_million_vectors() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for _ in 0..1_000_000 {
        // uniform on the sphere
        let z: f64 = rng.random_range(-1.0..1.0);
        let a: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let r = (1.0 - z * z).sqrt();
        let v = Vec3::new(r * a.cos(), r * a.sin(), z);
        let out = rotate_direction(v, rng.random_range(-180.0..180.0), rng.random_range(-360.0..360.0));
        worst = worst.max((out.norm() - v.norm()).abs());
    }
    assert!(worst < 1e-12, "worst norm drift {worst}");
}

#[test]
fn center_anchor() {
    let (eq_w, eq_h) = (2000u32, 1000u32);
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..2000 {
        let yaw = rng.random_range(-180.0..180.0);
        let pitch = rng.random_range(-89.0..89.0);
        let vp = ViewportSpec::new(yaw, pitch, 90.0, 320, 240).unwrap();
        let (cx, cy) = vp.center();
        let dir = rotate_direction(project_direction(cx, cy, &vp).unwrap(), pitch, yaw);
        let (ex, ey) = direction_to_equirect(dir, eq_w, eq_h);
        let want_x = (yaw / 360.0 + 0.5) * eq_w as f64;
        // positive pitch looks up, toward row 0
        let want_y = (0.5 - pitch / 180.0) * eq_h as f64;
        let dx = (ex - want_x).abs();
        let dx = dx.min(eq_w as f64 - dx);
        assert!(dx < 0.5 && (ey - want_y).abs() < 0.5, "({yaw},{pitch}) -> ({ex},{ey})");
    }
}

#[test]
fn seam_and_poles() {
    let (x, _) = orientation_to_equirect(180.0, 0.0, 1024, 512);
    assert!(x.abs() < 1e-9 || (x - 1024.0).abs() < 1e-9, "x = {x}");
    let (_, y) = orientation_to_equirect(0.0, 90.0, 1024, 512);
    assert!(y < 1e-9);
    let (_, y) = orientation_to_equirect(0.0, -90.0, 1024, 512);
    assert!((y - 512.0).abs() < 1e-9);
}

#[test]
fn gradient_matches_supersampled_reference() {
    // Linear horizontal gradient over the front half of the frame, away
    // from the wrap discontinuity.
    let (eq_w, eq_h) = (2048u32, 1024u32);
    let grad = |x: f64| 20.0 + 200.0 * (x / eq_w as f64);
    let img = RgbImage::from_fn(eq_w, eq_h, |x, _| {
        let v = grad(x as f64).round() as u8;
        Rgb([v, v, v])
    });
    let frame = EquirectFrame::new(img).unwrap();
    let vp = ViewportSpec::new(0.0, 0.0, 90.0, 160, 120).unwrap();
    let out = render_viewport(&frame, &build_pixel_map(&vp, eq_w, eq_h).unwrap()).unwrap();
    let (wr, _) = angular_ratios(&vp).unwrap();
    let (cx, _) = vp.center();
    let ss = 4;
    for y in 0..vp.height_px {
        for x in 0..vp.width_px {
            let mut acc = 0.0;
            // the gradient is constant along y, so only x is subsampled
            for _ in 0..ss {
                for sx in 0..ss {
                    let fx = x as f64 + (sx as f64 + 0.5) / ss as f64 - 0.5;
                    let lon = ((fx - cx) * wr).atan();
                    let ex = (lon / std::f64::consts::PI + 1.0) * eq_w as f64 / 2.0;
                    acc += grad(ex.round()).round();
                }
            }
            let reference = acc / (ss * ss) as f64;
            let got = out.get_pixel(x, y)[0] as f64;
            assert!((got - reference).abs() <= 1.0 + 1e-9, "({x},{y}): {got} vs {reference}");
        }
    }
}

proptest! {
    #[test]
    fn lon_lat_in_range(x in -1.0f64..1.0, y in -1.0f64..1.0, z in -1.0f64..1.0) {
        prop_assume!(x * x + y * y + z * z > 1e-6);
        let (lon, lat) = direction_to_lon_lat(Vec3::new(x, y, z).normalized());
        prop_assert!((-std::f64::consts::PI..std::f64::consts::PI).contains(&lon));
        prop_assert!(lat.abs() <= std::f64::consts::FRAC_PI_2);
    }

    #[test]
    fn equirect_coords_in_frame(x in -1.0f64..1.0, y in -1.0f64..1.0, z in -1.0f64..1.0) {
        prop_assume!(x * x + y * y + z * z > 1e-6);
        let (ex, ey) = direction_to_equirect(Vec3::new(x, y, z).normalized(), 1024, 512);
        prop_assert!((0.0..1024.0).contains(&ex));
        prop_assert!((0.0..=512.0).contains(&ey));
    }
}
