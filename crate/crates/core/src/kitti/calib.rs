use nalgebra::{Matrix3, Matrix3x4, Matrix4, Point3, Vector3, Vector4};

use super::{GroundPlane, KittiError, Result};

const ORTHONORMAL_TOLERANCE: f64 = 1e-3;

/// Camera/LIDAR calibration of one frame.
///
/// `rectification` and `lidar_to_camera` are stored as homogeneous 4×4
/// matrices with last row (0, 0, 0, 1).
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationSet {
    /// P2: rectified camera frame to pixels.
    pub camera_projection: Matrix3x4<f64>,
    /// R0_rect promoted to 4×4.
    pub rectification: Matrix4<f64>,
    /// Tr_velo_to_cam promoted to 4×4.
    pub lidar_to_camera: Matrix4<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationWarning {
    pub key: &'static str,
    pub defect: f64,
}

impl CalibrationSet {
    /// Pinhole calibration with identity rectification.
    pub fn pinhole(focal: f64, cx: f64, cy: f64, lidar_to_camera: Matrix4<f64>) -> Self {
        #[rustfmt::skip]
        let p = Matrix3x4::new(
            focal, 0.0, cx, 0.0,
            0.0, focal, cy, 0.0,
            0.0, 0.0, 1.0, 0.0,
        );
        Self { camera_projection: p, rectification: Matrix4::identity(), lidar_to_camera }
    }

    /// The axis permutation between a LIDAR frame (x forward, y left, z up)
    /// and a camera frame (x right, y down, z forward), plus a translation
    /// expressed in the camera frame.
    pub fn lidar_to_camera_axes(translation: Vector3<f64>) -> Matrix4<f64> {
        #[rustfmt::skip]
        let m = Matrix4::new(
            0.0, -1.0, 0.0, translation.x,
            0.0, 0.0, -1.0, translation.y,
            1.0, 0.0, 0.0, translation.z,
            0.0, 0.0, 0.0, 1.0,
        );
        m
    }

    /// LIDAR frame to rectified camera frame.
    pub fn lidar_to_rect(&self) -> Matrix4<f64> {
        self.rectification * self.lidar_to_camera
    }

    pub fn rect_to_lidar(&self) -> Matrix4<f64> {
        rigid_inverse(&self.lidar_to_rect())
    }

    pub fn lidar_point_to_rect(&self, p: &Point3<f64>) -> Point3<f64> {
        transform_point(&self.lidar_to_rect(), p)
    }

    pub fn rect_point_to_lidar(&self, p: &Point3<f64>) -> Point3<f64> {
        transform_point(&self.rect_to_lidar(), p)
    }

    /// Projects a rectified-camera point; returns `(u, v, depth)` where depth
    /// is the camera-frame z. Pixel centres sit at integer coordinates.
    pub fn project_rect(&self, p: &Point3<f64>) -> (f64, f64, f64) {
        let h = self.camera_projection * Vector4::new(p.x, p.y, p.z, 1.0);
        (h.x / h.z, h.y / h.z, p.z)
    }

    pub fn project_lidar(&self, p: &Point3<f64>) -> (f64, f64, f64) {
        self.project_rect(&self.lidar_point_to_rect(p))
    }

    /// Back-projects pixel `(u, v)` at camera depth `depth` into the
    /// rectified camera frame.
    pub fn backproject_rect(&self, u: f64, v: f64, depth: f64) -> Point3<f64> {
        let p = &self.camera_projection;
        let k = p.fixed_view::<3, 3>(0, 0).into_owned();
        let t = p.fixed_view::<3, 1>(0, 3).into_owned();
        // P [X; 1] = w [u; v; 1] with w = Z + t_z.
        let w = depth + t.z;
        let rhs = Vector3::new(u * w, v * w, w) - t;
        let x = k.lu().solve(&rhs).unwrap_or_else(Vector3::zeros);
        Point3::new(x.x, x.y, depth)
    }

    /// Focal lengths and principal point read off P2.
    pub fn intrinsics(&self) -> (f64, f64, f64, f64) {
        let p = &self.camera_projection;
        (p[(0, 0)], p[(1, 1)], p[(0, 2)], p[(1, 2)])
    }

    /// Re-expresses a rectified-camera plane in the LIDAR frame.
    pub fn plane_rect_to_lidar(&self, plane: &GroundPlane) -> GroundPlane {
        plane.pulled_back(&self.lidar_to_rect())
    }

    pub fn plane_lidar_to_rect(&self, plane: &GroundPlane) -> GroundPlane {
        plane.pulled_back(&self.rect_to_lidar())
    }

    /// Orthonormality defects of the R0 and Tr rotation blocks above tolerance.
    pub fn rotation_warnings(&self) -> Vec<CalibrationWarning> {
        let mut out = Vec::new();
        for (key, m) in [("R0_rect", &self.rectification), ("Tr_velo_to_cam", &self.lidar_to_camera)] {
            let defect = orthonormality_defect(&m.fixed_view::<3, 3>(0, 0).into_owned());
            if defect > ORTHONORMAL_TOLERANCE {
                out.push(CalibrationWarning { key, defect });
            }
        }
        out
    }
}

pub fn transform_point(m: &Matrix4<f64>, p: &Point3<f64>) -> Point3<f64> {
    let h = m * Vector4::new(p.x, p.y, p.z, 1.0);
    Point3::new(h.x, h.y, h.z)
}

fn orthonormality_defect(r: &Matrix3<f64>) -> f64 {
    (r.transpose() * r - Matrix3::identity()).abs().max()
}

fn rigid_inverse(m: &Matrix4<f64>) -> Matrix4<f64> {
    m.try_inverse().unwrap_or_else(|| {
        let r = m.fixed_view::<3, 3>(0, 0).transpose();
        let t = -(r * m.fixed_view::<3, 1>(0, 3));
        let mut inv = Matrix4::identity();
        inv.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
        inv.fixed_view_mut::<3, 1>(0, 3).copy_from(&t);
        inv
    })
}

fn numbers_for(text: &str, key: &'static str) -> Option<Result<Vec<f64>>> {
    for line in text.lines() {
        let Some((k, rest)) = line.split_once(':') else { continue };
        if k.trim() != key {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = rest.split_whitespace().map(str::parse::<f64>).collect();
        return Some(parsed.map_err(|_| KittiError::WrongArity {
            key,
            expected: expected_arity(key),
            found: rest.split_whitespace().count(),
        }));
    }
    None
}

fn expected_arity(key: &str) -> usize {
    if key == "R0_rect" {
        9
    } else {
        12
    }
}

fn values(text: &str, key: &'static str) -> Result<Vec<f64>> {
    let v = numbers_for(text, key).ok_or(KittiError::MissingKey(key))??;
    let expected = expected_arity(key);
    if v.len() != expected {
        return Err(KittiError::WrongArity { key, expected, found: v.len() });
    }
    Ok(v)
}

fn promote_3x4(v: &[f64]) -> Matrix4<f64> {
    let mut m = Matrix4::identity();
    m.fixed_view_mut::<3, 4>(0, 0).copy_from(&Matrix3x4::from_row_slice(v));
    m
}

/// Parses a KITTI calibration file. Non-orthonormal rotation blocks are
/// reported through `log::warn!` only; see [`parse_calibration_strict`].
pub fn parse_calibration(text: &str) -> Result<CalibrationSet> {
    let p2 = values(text, "P2")?;
    let r0 = values(text, "R0_rect")?;
    let tr = values(text, "Tr_velo_to_cam")?;
    let mut rectification = Matrix4::identity();
    rectification.fixed_view_mut::<3, 3>(0, 0).copy_from(&Matrix3::from_row_slice(&r0));
    let calib = CalibrationSet {
        camera_projection: Matrix3x4::from_row_slice(&p2),
        rectification,
        lidar_to_camera: promote_3x4(&tr),
    };
    for w in calib.rotation_warnings() {
        log::warn!("calibration {}: rotation block not orthonormal (defect {:.3e})", w.key, w.defect);
    }
    Ok(calib)
}

/// Like [`parse_calibration`] but rejects non-orthonormal rotations.
pub fn parse_calibration_strict(text: &str) -> Result<CalibrationSet> {
    let calib = parse_calibration(text)?;
    if let Some(w) = calib.rotation_warnings().into_iter().next() {
        return Err(KittiError::NonOrthonormalRotation { key: w.key, defect: w.defect });
    }
    Ok(calib)
}

fn join(values: impl Iterator<Item = f64>) -> String {
    values.map(|v| format!("{v:e}")).collect::<Vec<_>>().join(" ")
}

/// Writes P2, R0_rect and Tr_velo_to_cam with shortest round-trip formatting.
pub fn write_calibration(calib: &CalibrationSet) -> String {
    let p2 = &calib.camera_projection;
    let r0 = calib.rectification.fixed_view::<3, 3>(0, 0);
    let tr = calib.lidar_to_camera.fixed_view::<3, 4>(0, 0);
    let rows = |r: usize, c: usize, get: &dyn Fn(usize, usize) -> f64| {
        join((0..r).flat_map(|i| (0..c).map(move |j| (i, j))).map(|(i, j)| get(i, j)))
    };
    format!(
        "P2: {}\nR0_rect: {}\nTr_velo_to_cam: {}\n",
        rows(3, 4, &|i, j| p2[(i, j)]),
        rows(3, 3, &|i, j| r0[(i, j)]),
        rows(3, 4, &|i, j| tr[(i, j)]),
    )
}
