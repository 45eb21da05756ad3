use nalgebra::{Point3, Vector3};

use super::raycast::{ray_box, ray_plane};
use super::LidarSpec;
use crate::geometry::OrientedBox3D;
use crate::kitti::{CalibrationSet, GroundPlane};
use crate::raster::RgbRaster;

pub const OBJECT_GROUND: i32 = -1;
pub const OBJECT_SKY: i32 = -2;

/// One simulated LIDAR return, kept in f64 before storage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LidarHit {
    pub point: Point3<f64>,
    /// Object index, or [`OBJECT_GROUND`].
    pub object: i32,
}

/// Nearest surface along a ray: (t, object index or OBJECT_GROUND).
fn first_hit(origin: &Point3<f64>, dir: &Vector3<f64>, boxes: &[OrientedBox3D], plane: &GroundPlane) -> Option<(f64, i32)> {
    let mut best = ray_plane(origin, dir, plane, 1e-9).map(|t| (t, OBJECT_GROUND));
    for (i, b) in boxes.iter().enumerate() {
        if let Some(t) = ray_box(origin, dir, b, 1e-9) {
            if best.is_none_or(|(bt, _)| t < bt) {
                best = Some((t, i as i32));
            }
        }
    }
    best
}

pub fn simulate_lidar(spec: &LidarSpec, boxes: &[OrientedBox3D], plane: &GroundPlane) -> Vec<LidarHit> {
    let origin = Point3::origin();
    let (top, bottom) = spec.elevation_deg;
    let fov = spec.azimuth_fov_deg.to_radians();
    let mut hits = Vec::with_capacity(spec.rings * spec.azimuth_steps / 2);
    for ring in 0..spec.rings {
        let elev = if spec.rings == 1 {
            top
        } else {
            top + (bottom - top) * ring as f64 / (spec.rings - 1) as f64
        }
        .to_radians();
        for step in 0..spec.azimuth_steps {
            let az = -fov / 2.0 + (step as f64 + 0.5) * fov / spec.azimuth_steps as f64;
            let dir = Vector3::new(elev.cos() * az.cos(), elev.cos() * az.sin(), elev.sin());
            if let Some((t, object)) = first_hit(&origin, &dir, boxes, plane) {
                if t <= spec.max_range {
                    hits.push(LidarHit { point: origin + dir * t, object });
                }
            }
        }
    }
    hits
}

/// Deterministic value noise in [0, 1) for an integer lattice cell.
fn hash_noise(seed: u64, i: i64, j: i64) -> f64 {
    let mut h = seed ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (j as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    h ^= h >> 33;
    h = h.wrapping_mul(0xFF51_AFD7_ED55_8CCD);
    h ^= h >> 33;
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn ground_color(p: &Point3<f64>, seed: u64) -> [u8; 3] {
    // Two octaves of cell noise on a grey-brown asphalt base.
    let coarse = hash_noise(seed, (p.x / 1.5).floor() as i64, (p.y / 1.5).floor() as i64);
    let fine = hash_noise(seed.rotate_left(17), (p.x / 0.25).floor() as i64, (p.y / 0.25).floor() as i64);
    let v = 70.0 + 50.0 * coarse + 30.0 * fine;
    [v as u8, (v * 0.95) as u8, (v * 0.85) as u8]
}

fn sky_color(v: usize, height: usize) -> [u8; 3] {
    let t = v as f64 / height.max(1) as f64;
    [(150.0 + 60.0 * t) as u8, (185.0 + 40.0 * t) as u8, 235]
}

/// Renders the camera image, the dense depth raster and the per-pixel
/// object index by casting one ray through every pixel centre.
pub fn render_camera(
    calib: &CalibrationSet,
    (width, height): (usize, usize),
    boxes: &[OrientedBox3D],
    colors: &[[u8; 3]],
    plane: &GroundPlane,
    texture_seed: u64,
) -> (RgbRaster, Vec<f64>, Vec<i32>) {
    let mut image = RgbRaster::new(width, height);
    let mut depth = vec![0.0; width * height];
    let mut ids = vec![OBJECT_SKY; width * height];
    let origin = calib.rect_point_to_lidar(&Point3::origin());
    for v in 0..height {
        for u in 0..width {
            let target = calib.rect_point_to_lidar(&calib.backproject_rect(u as f64, v as f64, 1.0));
            let dir = target - origin;
            let idx = v * width + u;
            let Some((t, object)) = first_hit(&origin, &dir, boxes, plane) else {
                image.put(u, v, sky_color(v, height));
                continue;
            };
            let hit = origin + dir * t;
            depth[idx] = calib.lidar_point_to_rect(&hit).z;
            ids[idx] = object;
            let color = if object >= 0 { colors[object as usize] } else { ground_color(&hit, texture_seed) };
            image.put(u, v, color);
        }
    }
    (image, depth, ids)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{project_box_to_image, BoxDims};
    use crate::synth::raycast::distance_to_box_surface;

    fn calib() -> CalibrationSet {
        CalibrationSet::pinhole(90.0, 79.5, 29.5, CalibrationSet::lidar_to_camera_axes(Vector3::zeros()))
    }

    fn plane() -> GroundPlane {
        GroundPlane { normal: Vector3::z(), offset: 1.73 }
    }

    fn car() -> OrientedBox3D {
        OrientedBox3D::new(Point3::new(12.0, 0.5, -1.73 + 0.75), BoxDims::new(4.0, 1.7, 1.5), 0.3)
    }

    #[test]
    fn forward_ray_hits_front_face() {
        // Box at rest with its front face at x = 10.
        let b = OrientedBox3D::new(Point3::new(12.0, 0.0, -0.2), BoxDims::new(4.0, 2.0, 1.46), 0.0);
        let spec = LidarSpec { rings: 1, elevation_deg: (0.0, 0.0), azimuth_steps: 1, azimuth_fov_deg: 0.0, max_range: 100.0 };
        let hits = simulate_lidar(&spec, &[b], &plane());
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].object, 0);
        assert!((hits[0].point - Point3::new(10.0, 0.0, 0.0)).norm() < 1e-6);
    }

    #[test]
    fn lidar_points_lie_on_surfaces() {
        let boxes = [car(), OrientedBox3D::new(Point3::new(20.0, -4.0, -0.9), BoxDims::new(1.0, 1.0, 1.66), 1.0)];
        let hits = simulate_lidar(&LidarSpec::default(), &boxes, &plane());
        assert!(hits.iter().any(|h| h.object == 0) && hits.iter().any(|h| h.object == 1));
        for h in &hits {
            let d = if h.object >= 0 {
                distance_to_box_surface(&h.point, &boxes[h.object as usize])
            } else {
                plane().height(&h.point).abs()
            };
            assert!(d <= 1e-6, "{h:?} {d}");
        }
    }

    #[test]
    fn object_pixel_depths_within_box_span() {
        let c = calib();
        let b = car();
        let (image, depth, ids) = render_camera(&c, (160, 60), &[b], &[[200, 10, 10]], &plane(), 7);
        let span = project_box_to_image(&b, &c, (160, 60)).unwrap();
        let mut n = 0;
        for (i, &id) in ids.iter().enumerate() {
            if id == 0 {
                n += 1;
                assert!(depth[i] >= span.d_min - 1e-9 && depth[i] <= span.d_max + 1e-9);
                assert_eq!(image.pixel(i % 160, i / 160), [200, 10, 10]);
                assert!(span.bbox.contains((i % 160) as f64, (i / 160) as f64));
            }
        }
        assert!(n > 50);
        // Bottom rows see the ground, the top row sees sky.
        assert!(ids[..160].iter().all(|&id| id == OBJECT_SKY));
        assert!(ids[59 * 160..].iter().all(|&id| id == OBJECT_GROUND));
    }

    #[test]
    fn ground_depth_matches_plane_geometry() {
        let c = calib();
        let (_, depth, ids) = render_camera(&c, (160, 60), &[], &[], &plane(), 0);
        // Row v sees the ground at depth f·h / (v − cy).
        for v in 40..60 {
            let idx = v * 160 + 80;
            assert_eq!(ids[idx], OBJECT_GROUND);
            let expected = 90.0 * 1.73 / (v as f64 - 29.5);
            assert!((depth[idx] - expected).abs() < 1e-9);
        }
    }
}
