use nalgebra::{Point3, Vector3};

use crate::geometry::OrientedBox3D;
use crate::kitti::GroundPlane;

/// Smallest `t > t_min` with `origin + t·dir` on the surface of `b`.
pub fn ray_box(origin: &Point3<f64>, dir: &Vector3<f64>, b: &OrientedBox3D, t_min: f64) -> Option<f64> {
    let (s, c) = b.yaw.sin_cos();
    let rel = origin - b.center;
    // Rotate into the box frame.
    let o = [c * rel.x + s * rel.y, -s * rel.x + c * rel.y, rel.z];
    let d = [c * dir.x + s * dir.y, -s * dir.x + c * dir.y, dir.z];
    let half = [b.dims.l / 2.0, b.dims.w / 2.0, b.dims.h / 2.0];
    let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
    for i in 0..3 {
        if d[i].abs() < 1e-15 {
            if o[i].abs() > half[i] {
                return None;
            }
            continue;
        }
        let (a, bb) = ((-half[i] - o[i]) / d[i], (half[i] - o[i]) / d[i]);
        t0 = t0.max(a.min(bb));
        t1 = t1.min(a.max(bb));
    }
    if t0 > t1 {
        return None;
    }
    if t0 > t_min {
        Some(t0)
    } else if t1 > t_min {
        // Origin inside the box: the exit face is the first surface.
        Some(t1)
    } else {
        None
    }
}

pub fn ray_plane(origin: &Point3<f64>, dir: &Vector3<f64>, plane: &GroundPlane, t_min: f64) -> Option<f64> {
    let denom = plane.normal.dot(dir);
    if denom.abs() < 1e-15 {
        return None;
    }
    let t = -plane.height(origin) / denom;
    (t > t_min).then_some(t)
}

/// Distance from `p` to the surface of `b`.
pub fn distance_to_box_surface(p: &Point3<f64>, b: &OrientedBox3D) -> f64 {
    let (s, c) = b.yaw.sin_cos();
    let rel = p - b.center;
    let q = [(c * rel.x + s * rel.y).abs(), (-s * rel.x + c * rel.y).abs(), rel.z.abs()];
    let half = [b.dims.l / 2.0, b.dims.w / 2.0, b.dims.h / 2.0];
    let out: Vec<f64> = (0..3).map(|i| (q[i] - half[i]).max(0.0)).collect();
    let outside = (out[0] * out[0] + out[1] * out[1] + out[2] * out[2]).sqrt();
    if outside > 0.0 {
        outside
    } else {
        (0..3).map(|i| half[i] - q[i]).fold(f64::INFINITY, f64::min)
    }
}
