use nalgebra::{Matrix4, Point3, Vector3, Vector4};

use super::{KittiError, Result};

/// Plane `normal · p + offset = 0` with unit normal, oriented so that the
/// frame origin has nonnegative height.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundPlane {
    pub normal: Vector3<f64>,
    pub offset: f64,
}

impl GroundPlane {
    /// Normalizes raw coefficients `(a, b, c, d)`.
    pub fn from_coefficients(a: f64, b: f64, c: f64, d: f64) -> Result<Self> {
        let n = Vector3::new(a, b, c);
        let norm = n.norm();
        if !(norm > 1e-12) || !norm.is_finite() || !d.is_finite() {
            return Err(KittiError::ZeroNormal);
        }
        let sign = if d < 0.0 { -1.0 } else { 1.0 };
        Ok(Self { normal: n * (sign / norm), offset: d * sign / norm })
    }

    /// Signed height of `p` along the normal.
    pub fn height(&self, p: &Point3<f64>) -> f64 {
        self.normal.dot(&p.coords) + self.offset
    }

    /// The plane expressed in a frame `F`, given the map `m` from `F` into
    /// the plane's current frame.
    pub fn pulled_back(&self, m: &Matrix4<f64>) -> Self {
        let row = Vector4::new(self.normal.x, self.normal.y, self.normal.z, self.offset);
        let r = m.transpose() * row;
        // Rigid maps keep the normal unit length; renormalize for drift only.
        Self::from_coefficients(r.x, r.y, r.z, r.w).unwrap_or(*self)
    }

    /// Mirror image under negation of coordinate `axis`.
    pub fn mirrored(&self, axis: usize) -> Self {
        let mut n = self.normal;
        n[axis] = -n[axis];
        Self { normal: n, offset: self.offset }
    }

    pub fn coefficients(&self) -> [f64; 4] {
        [self.normal.x, self.normal.y, self.normal.z, self.offset]
    }
}

/// Parses a planes file: the first line holding exactly four numbers.
/// Comment lines and the `Width`/`Height` header are skipped.
pub fn parse_ground_plane(text: &str) -> Result<GroundPlane> {
    for line in text.lines() {
        let parsed: std::result::Result<Vec<f64>, _> = line.split_whitespace().map(str::parse::<f64>).collect();
        if let Ok(v) = parsed {
            if v.len() == 4 {
                return GroundPlane::from_coefficients(v[0], v[1], v[2], v[3]);
            }
        }
    }
    Err(KittiError::MissingPlane)
}

pub fn write_ground_plane(plane: &GroundPlane) -> String {
    let [a, b, c, d] = plane.coefficients();
    format!("# Plane\nWidth 4\nHeight 1\n{a:e} {b:e} {c:e} {d:e}\n")
}
