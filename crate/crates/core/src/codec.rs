//! Box regression targets: four footprint corner offsets plus the bottom and
//! top face heights above the ground plane, and a (cos, sin) heading.

use nalgebra::{Matrix2, Point2, Point3, Vector2};
use std::f64::consts::{FRAC_PI_2, PI};
use thiserror::Error;

use crate::geometry::{normalize_angle, BoxDims, OrientedBox3D};
use crate::kitti::GroundPlane;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CodecError {
    #[error("decoded footprint has area {area:.3e} m²")]
    DegenerateCorners { area: f64 },
    #[error("decoded top face ({top}) is not above the bottom face ({bottom})")]
    InvalidHeight { bottom: f64, top: f64 },
    #[error("ground plane is vertical")]
    VerticalPlane,
    #[error("orientation vector is zero")]
    ZeroVector,
}

/// Regression target for one proposal, in metres.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CornerEncoding {
    /// `(Δx, Δy)` for each proposal footprint corner, interleaved.
    pub corner_offsets: [f64; 8],
    /// Bottom and top face height offsets.
    pub height_offsets: [f64; 2],
}

impl CornerEncoding {
    pub fn to_array(&self) -> [f64; 10] {
        let mut out = [0.0; 10];
        out[..8].copy_from_slice(&self.corner_offsets);
        out[8..].copy_from_slice(&self.height_offsets);
        out
    }

    pub fn from_array(v: &[f64; 10]) -> Self {
        let mut enc = Self::default();
        enc.corner_offsets.copy_from_slice(&v[..8]);
        enc.height_offsets.copy_from_slice(&v[8..]);
        enc
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientationEncoding {
    pub cos: f64,
    pub sin: f64,
}

impl OrientationEncoding {
    pub fn to_array(&self) -> [f64; 2] {
        [self.cos, self.sin]
    }
}

pub fn encode_orientation(yaw: f64) -> OrientationEncoding {
    let (sin, cos) = yaw.sin_cos();
    OrientationEncoding { cos, sin }
}

pub fn decode_orientation(enc: &OrientationEncoding) -> Result<f64, CodecError> {
    if enc.cos == 0.0 && enc.sin == 0.0 || !(enc.cos.is_finite() && enc.sin.is_finite()) {
        return Err(CodecError::ZeroVector);
    }
    Ok(enc.sin.atan2(enc.cos))
}

/// Cyclic shift `s` such that gt corner `(i + s) % 4` pairs with proposal
/// corner `i`, minimizing the total squared distance (ties to the smallest shift).
fn best_shift(gt: &[Point2<f64>; 4], prop: &[Point2<f64>; 4]) -> usize {
    let cost = |s: usize| (0..4).map(|i| (gt[(i + s) % 4] - prop[i]).norm_squared()).sum::<f64>();
    (1..4).fold(0, |best, s| if cost(s) < cost(best) { s } else { best })
}

pub fn encode_box(gt: &OrientedBox3D, proposal: &OrientedBox3D, plane: &GroundPlane) -> CornerEncoding {
    let (g, p) = (gt.footprint(), proposal.footprint());
    let s = best_shift(&g, &p);
    let mut enc = CornerEncoding::default();
    for i in 0..4 {
        let d = g[(i + s) % 4] - p[i];
        enc.corner_offsets[2 * i] = d.x;
        enc.corner_offsets[2 * i + 1] = d.y;
    }
    let (gb, gtop) = gt.face_heights(plane);
    let (pb, ptop) = proposal.face_heights(plane);
    enc.height_offsets = [gb - pb, gtop - ptop];
    enc
}

/// Least-squares rectangle through four corners given in counterclockwise
/// order starting front-left.
///
/// Returns the centre, a unit heading `e`, and the side lengths along `e`
/// and its left normal. The fit is exact: for fixed `e` the optimal half
/// sides are projections of the signed corner sums, and the best `e` is the
/// top eigenvector of a 2×2 scatter matrix.
pub fn fit_rectangle(corners: &[Point2<f64>; 4]) -> (Point2<f64>, Vector2<f64>, f64, f64) {
    let mean = corners.iter().fold(Vector2::zeros(), |acc, c| acc + c.coords) / 4.0;
    let q: Vec<Vector2<f64>> = corners.iter().map(|c| c.coords - mean).collect();
    let (s_sign, t_sign) = ([1.0, -1.0, -1.0, 1.0], [1.0, 1.0, -1.0, -1.0]);
    let s: Vector2<f64> = (0..4).map(|i| q[i] * s_sign[i]).sum();
    let t: Vector2<f64> = (0..4).map(|i| q[i] * t_sign[i]).sum();
    let t_rot = Vector2::new(t.y, -t.x);
    let m: Matrix2<f64> = s * s.transpose() + t_rot * t_rot.transpose();
    let angle = 0.5 * (2.0 * m[(0, 1)]).atan2(m[(0, 0)] - m[(1, 1)]);
    let mut e = Vector2::new(angle.cos(), angle.sin());
    let mut l = s.dot(&e) / 2.0;
    if l < 0.0 {
        e = -e;
        l = -l;
    }
    let w = (t_rot.dot(&e) / 2.0).abs();
    (Point2::from(mean), e, l, w)
}

fn face_z(plane: &GroundPlane, xy: &Point2<f64>, height: f64) -> Result<f64, CodecError> {
    let n = plane.normal;
    if n.z.abs() < 1e-9 {
        return Err(CodecError::VerticalPlane);
    }
    Ok((height - plane.offset - n.x * xy.x - n.y * xy.y) / n.z)
}

fn decode_parts(
    enc: &CornerEncoding,
    proposal: &OrientedBox3D,
    plane: &GroundPlane,
) -> Result<(Point3<f64>, f64, f64, f64, f64), CodecError> {
    let p = proposal.footprint();
    let corners: [Point2<f64>; 4] = std::array::from_fn(|i| {
        p[i] + Vector2::new(enc.corner_offsets[2 * i], enc.corner_offsets[2 * i + 1])
    });
    let (center, e, l, w) = fit_rectangle(&corners);
    let area = l * w;
    if !(area >= 1e-6) {
        return Err(CodecError::DegenerateCorners { area });
    }
    let (pb, pt) = proposal.face_heights(plane);
    let (zb, zt) = (face_z(plane, &center, pb + enc.height_offsets[0])?, face_z(plane, &center, pt + enc.height_offsets[1])?);
    if !(zt > zb) {
        return Err(CodecError::InvalidHeight { bottom: zb, top: zt });
    }
    let c = Point3::new(center.x, center.y, 0.5 * (zb + zt));
    Ok((c, e.y.atan2(e.x), l, w, zt - zb))
}

fn angular_distance(a: f64, b: f64) -> f64 {
    normalize_angle(a - b).abs()
}

/// Decodes with the heading of the fitted rectangle resolved towards the
/// proposal's yaw (the rectangle fixes yaw only modulo π).
pub fn decode_box(enc: &CornerEncoding, proposal: &OrientedBox3D, plane: &GroundPlane) -> Result<OrientedBox3D, CodecError> {
    let (center, yaw, l, w, h) = decode_parts(enc, proposal, plane)?;
    let yaw = [yaw, yaw + PI]
        .into_iter()
        .map(normalize_angle)
        .min_by(|a, b| angular_distance(*a, proposal.yaw).total_cmp(&angular_distance(*b, proposal.yaw)))
        .unwrap_or(yaw);
    Ok(OrientedBox3D::new(center, BoxDims::new(l, w, h), yaw))
}

/// Decodes and picks, among the four equivalent parameterizations of the
/// fitted rectangle, the one whose heading is closest to `heading`.
pub fn decode_box_with_heading(
    enc: &CornerEncoding,
    proposal: &OrientedBox3D,
    plane: &GroundPlane,
    heading: &OrientationEncoding,
) -> Result<OrientedBox3D, CodecError> {
    let target = decode_orientation(heading)?;
    let (center, yaw, l, w, h) = decode_parts(enc, proposal, plane)?;
    let (k, yaw) = (0..4)
        .map(|k| (k, normalize_angle(yaw + k as f64 * FRAC_PI_2)))
        .min_by(|a, b| angular_distance(a.1, target).total_cmp(&angular_distance(b.1, target)))
        .unwrap_or((0, yaw));
    let (l, w) = if k % 2 == 1 { (w, l) } else { (l, w) };
    Ok(OrientedBox3D::new(center, BoxDims::new(l, w, h), yaw))
}
