use super::{KittiError, Result};

const POINT_BYTES: usize = 16;

/// One LIDAR return in the sensor frame.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: f32,
    pub y: f32,
    pub z: f32,
    pub reflectance: f32,
}

impl Point {
    pub fn new(x: f32, y: f32, z: f32, reflectance: f32) -> Self {
        Self { x, y, z, reflectance }
    }

    pub fn position(&self) -> nalgebra::Point3<f64> {
        nalgebra::Point3::new(self.x as f64, self.y as f64, self.z as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RawPointCloud {
    pub points: Vec<Point>,
}

impl RawPointCloud {
    pub fn new(points: Vec<Point>) -> Self {
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Decodes a velodyne `.bin` blob.
pub fn parse_point_cloud(bytes: &[u8]) -> Result<RawPointCloud> {
    if !bytes.len().is_multiple_of(POINT_BYTES) {
        return Err(KittiError::LengthNotMultipleOf16(bytes.len()));
    }
    let mut points = Vec::with_capacity(bytes.len() / POINT_BYTES);
    for (index, chunk) in bytes.chunks_exact(POINT_BYTES).enumerate() {
        let field = |i: usize| f32::from_le_bytes(chunk[4 * i..4 * i + 4].try_into().unwrap());
        let p = Point::new(field(0), field(1), field(2), field(3));
        if !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite() && p.reflectance.is_finite()) {
            return Err(KittiError::NonFiniteValue { index });
        }
        points.push(p);
    }
    Ok(RawPointCloud { points })
}

pub fn write_point_cloud(cloud: &RawPointCloud) -> Vec<u8> {
    let mut out = Vec::with_capacity(cloud.len() * POINT_BYTES);
    for p in &cloud.points {
        for v in [p.x, p.y, p.z, p.reflectance] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}
