//! Oriented 3D boxes, camera projection, and the two IoU measures used for
//! labeling: rotated footprint IoU in BEV and rectangle IoU in the image.

use nalgebra::{Point2, Point3, Vector2};
use std::f64::consts::PI;
use thiserror::Error;

use crate::kitti::{CalibrationSet, GroundPlane};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("box corner {corner} is behind the camera (depth {depth})")]
    BehindCamera { corner: usize, depth: f64 },
    #[error("projected box has zero area inside the image")]
    DegenerateOnImage,
}

/// Wraps an angle into [-π, π].
pub fn normalize_angle(a: f64) -> f64 {
    if (-PI..=PI).contains(&a) {
        return a;
    }
    let r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxDims {
    /// Extent along the heading.
    pub l: f64,
    pub w: f64,
    pub h: f64,
}

impl BoxDims {
    pub fn new(l: f64, w: f64, h: f64) -> Self {
        Self { l, w, h }
    }
}

/// A 7-DOF box: geometric centre, dimensions and yaw about +z (LIDAR frame).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientedBox3D {
    pub center: Point3<f64>,
    pub dims: BoxDims,
    pub yaw: f64,
}

impl OrientedBox3D {
    pub fn new(center: Point3<f64>, dims: BoxDims, yaw: f64) -> Self {
        Self { center, dims, yaw }
    }

    pub fn is_valid(&self) -> bool {
        self.dims.l > 0.0 && self.dims.w > 0.0 && self.dims.h > 0.0 && self.center.coords.iter().all(|v| v.is_finite())
    }

    /// Footprint corners in counterclockwise order, starting front-left.
    pub fn footprint(&self) -> [Point2<f64>; 4] {
        let (s, c) = self.yaw.sin_cos();
        let (hl, hw) = (self.dims.l / 2.0, self.dims.w / 2.0);
        [(hl, hw), (-hl, hw), (-hl, -hw), (hl, -hw)].map(|(x, y)| {
            Point2::new(self.center.x + c * x - s * y, self.center.y + s * x + c * y)
        })
    }

    pub fn footprint_polygon(&self) -> ConvexPolygon2D {
        ConvexPolygon2D { vertices: self.footprint().to_vec() }
    }

    pub fn bottom_z(&self) -> f64 {
        self.center.z - self.dims.h / 2.0
    }

    pub fn top_z(&self) -> f64 {
        self.center.z + self.dims.h / 2.0
    }

    /// Height of the bottom and top faces above `plane`, measured at the
    /// footprint centre.
    pub fn face_heights(&self, plane: &GroundPlane) -> (f64, f64) {
        let c = self.center;
        (
            plane.height(&Point3::new(c.x, c.y, self.bottom_z())),
            plane.height(&Point3::new(c.x, c.y, self.top_z())),
        )
    }
}

/// The 8 corners: bottom face counterclockwise, then the top face in the same order.
pub fn box_corners_3d(b: &OrientedBox3D) -> [Point3<f64>; 8] {
    let fp = b.footprint();
    let (zb, zt) = (b.bottom_z(), b.top_z());
    std::array::from_fn(|i| {
        let p = fp[i % 4];
        Point3::new(p.x, p.y, if i < 4 { zb } else { zt })
    })
}

/// Convex polygon with counterclockwise vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexPolygon2D {
    pub vertices: Vec<Point2<f64>>,
}

impl ConvexPolygon2D {
    /// Signed shoelace area (positive for counterclockwise).
    pub fn signed_area(&self) -> f64 {
        let v = &self.vertices;
        let n = v.len();
        if n < 3 {
            return 0.0;
        }
        let mut twice = 0.0;
        for i in 0..n {
            let (a, b) = (v[i], v[(i + 1) % n]);
            twice += a.x * b.y - b.x * a.y;
        }
        twice / 2.0
    }

    pub fn area(&self) -> f64 {
        self.signed_area().abs()
    }

    /// Sutherland–Hodgman clip of `self` against the convex `clip` polygon.
    pub fn intersection(&self, clip: &ConvexPolygon2D) -> ConvexPolygon2D {
        let mut output = self.vertices.clone();
        let c = &clip.vertices;
        for i in 0..c.len() {
            if output.is_empty() {
                break;
            }
            let (a, b) = (c[i], c[(i + 1) % c.len()]);
            let edge = b - a;
            let side = |p: &Point2<f64>| edge.perp(&(p - a));
            let input = std::mem::take(&mut output);
            for j in 0..input.len() {
                let (cur, prev) = (input[j], input[(j + input.len() - 1) % input.len()]);
                let (sc, sp) = (side(&cur), side(&prev));
                if sc >= 0.0 {
                    if sp < 0.0 {
                        output.push(crossing(prev, cur, sp, sc));
                    }
                    output.push(cur);
                } else if sp >= 0.0 {
                    output.push(crossing(prev, cur, sp, sc));
                }
            }
        }
        ConvexPolygon2D { vertices: output }
    }
}

fn crossing(p: Point2<f64>, q: Point2<f64>, sp: f64, sq: f64) -> Point2<f64> {
    let t = sp / (sp - sq);
    p + (q - p) * t
}

/// Rotated IoU of the two footprints; heights and z are ignored.
pub fn bev_iou(a: &OrientedBox3D, b: &OrientedBox3D) -> f64 {
    let (pa, pb) = (a.footprint_polygon(), b.footprint_polygon());
    let (area_a, area_b) = (pa.area(), pb.area());
    // Quick reject on bounding circles.
    let reach = (Vector2::new(a.dims.l, a.dims.w).norm() + Vector2::new(b.dims.l, b.dims.w).norm()) / 2.0;
    if Vector2::new(a.center.x - b.center.x, a.center.y - b.center.y).norm() > reach {
        return 0.0;
    }
    let inter = pa.intersection(&pb).area().min(area_a).min(area_b);
    let union = area_a + area_b - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Pixel-space rectangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisAlignedBox2D {
    pub left: f64,
    pub top: f64,
    pub right: f64,
    pub bottom: f64,
}

impl AxisAlignedBox2D {
    pub fn new(left: f64, top: f64, right: f64, bottom: f64) -> Self {
        Self { left, top, right, bottom }
    }

    pub fn width(&self) -> f64 {
        self.right - self.left
    }

    pub fn height(&self) -> f64 {
        self.bottom - self.top
    }

    pub fn area(&self) -> f64 {
        self.width().max(0.0) * self.height().max(0.0)
    }

    pub fn is_valid(&self) -> bool {
        self.right > self.left && self.bottom > self.top
    }

    pub fn contains(&self, u: f64, v: f64) -> bool {
        (self.left..=self.right).contains(&u) && (self.top..=self.bottom).contains(&v)
    }
}

pub fn image_iou(a: &AxisAlignedBox2D, b: &AxisAlignedBox2D) -> f64 {
    let w = (a.right.min(b.right) - a.left.max(b.left)).max(0.0);
    let h = (a.bottom.min(b.bottom) - a.top.max(b.top)).max(0.0);
    let inter = w * h;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Front-view footprint of a 3D box: its 2D hull and camera depth range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectedBox {
    pub bbox: AxisAlignedBox2D,
    pub d_min: f64,
    pub d_max: f64,
}

/// Projects the 8 corners of `b` with P2, takes their axis-aligned hull and
/// clips it to `[0, width-1] × [0, height-1]`.
pub fn project_box_to_image(
    b: &OrientedBox3D,
    calib: &CalibrationSet,
    image_size: (usize, usize),
) -> Result<ProjectedBox, GeometryError> {
    let mut bbox = AxisAlignedBox2D::new(f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    let (mut d_min, mut d_max) = (f64::INFINITY, f64::NEG_INFINITY);
    let to_rect = calib.lidar_to_rect();
    for (corner, p) in box_corners_3d(b).iter().enumerate() {
        let rect = crate::kitti::transform_point(&to_rect, p);
        let (u, v, depth) = calib.project_rect(&rect);
        if !(depth > 0.0) {
            return Err(GeometryError::BehindCamera { corner, depth });
        }
        d_min = d_min.min(depth);
        d_max = d_max.max(depth);
        bbox.left = bbox.left.min(u);
        bbox.right = bbox.right.max(u);
        bbox.top = bbox.top.min(v);
        bbox.bottom = bbox.bottom.max(v);
    }
    let (w, h) = ((image_size.0 as f64 - 1.0).max(0.0), (image_size.1 as f64 - 1.0).max(0.0));
    let clipped = AxisAlignedBox2D::new(
        bbox.left.clamp(0.0, w),
        bbox.top.clamp(0.0, h),
        bbox.right.clamp(0.0, w),
        bbox.bottom.clamp(0.0, h),
    );
    if !clipped.is_valid() {
        return Err(GeometryError::DegenerateOnImage);
    }
    Ok(ProjectedBox { bbox: clipped, d_min, d_max })
}

/// Signed distance of `p` from `plane` along its normal.
pub fn height_above_plane(p: &Point3<f64>, plane: &GroundPlane) -> f64 {
    plane.height(p)
}
