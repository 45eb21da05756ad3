//! Training-time augmentation: lateral mirroring of a whole frame and PCA
//! colour jitter.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::geometry::{normalize_angle, AxisAlignedBox2D, OrientedBox3D};
use crate::kitti::{CalibrationSet, GroundTruthLabel, RawPointCloud};
use crate::raster::RgbRaster;

/// Everything a frame carries that must stay mutually consistent.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub cloud: RawPointCloud,
    pub image: RgbRaster,
    pub calib: CalibrationSet,
    pub labels: Vec<GroundTruthLabel>,
}

/// Calibration of the mirrored frame: LIDAR y and camera x are negated and
/// pixel column `u` becomes `width - 1 - u`.
///
/// Flipping twice restores a calibration bit for bit when the third row of
/// P2 is `(0, 0, 1, 0)` and the principal point lies in `[w/2, 2w]`,
/// `w = width - 1`.
pub fn flip_calibration(calib: &CalibrationSet, width: usize) -> CalibrationSet {
    let w = width as f64 - 1.0;
    let mut p = calib.camera_projection;
    for j in 0..4 {
        p[(0, j)] = w * p[(2, j)] - p[(0, j)];
    }
    // The camera mirror negates column 0.
    p.column_mut(0).neg_mut();
    // s_cam · R · s_cam: entries with exactly one index 0 change sign.
    let mut r = calib.rectification;
    for i in 0..4 {
        for j in 0..4 {
            if (i == 0) != (j == 0) {
                r[(i, j)] = -r[(i, j)];
            }
        }
    }
    // s_cam · T · s_lidar: row 0 and column 1 change sign.
    let mut t = calib.lidar_to_camera;
    for i in 0..4 {
        for j in 0..4 {
            if (i == 0) != (j == 1) {
                t[(i, j)] = -t[(i, j)];
            }
        }
    }
    CalibrationSet { camera_projection: p, rectification: r, lidar_to_camera: t }
}

/// Mirror of a camera-frame label about the camera's x = 0 plane.
pub fn flip_label(label: &GroundTruthLabel, width: usize) -> GroundTruthLabel {
    let w = width as f64 - 1.0;
    let b = label.bbox2d;
    let mut out = label.clone();
    out.location[0] = -label.location[0];
    out.rotation_y = normalize_angle(std::f64::consts::PI - label.rotation_y);
    out.alpha = normalize_angle(std::f64::consts::PI - label.alpha);
    out.bbox2d = AxisAlignedBox2D::new(w - b.right, b.top, w - b.left, b.bottom);
    out
}

/// Mirror of a LIDAR-frame box about y = 0.
pub fn flip_box(b: &OrientedBox3D) -> OrientedBox3D {
    let mut out = *b;
    out.center.y = -b.center.y;
    out.yaw = -b.yaw;
    out
}

pub fn flip_cloud(cloud: &RawPointCloud) -> RawPointCloud {
    RawPointCloud::new(cloud.points.iter().map(|p| crate::kitti::Point { y: -p.y, ..*p }).collect())
}

pub fn flip_scene(frame: &Frame) -> Frame {
    let width = frame.image.width;
    Frame {
        cloud: flip_cloud(&frame.cloud),
        image: frame.image.mirrored(),
        calib: flip_calibration(&frame.calib, width),
        labels: frame.labels.iter().map(|l| flip_label(l, width)).collect(),
    }
}

/// Principal axes of a set of RGB values in [0, 1] units.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaBasis {
    /// Descending.
    pub eigenvalues: [f64; 3],
    /// Column `c` is the axis of `eigenvalues[c]`.
    pub eigenvectors: Matrix3<f64>,
}

/// Population covariance of all pixels of `images`, or `None` without pixels.
pub fn rgb_covariance(images: &[RgbRaster]) -> Option<Matrix3<f64>> {
    let n: usize = images.iter().map(|im| im.width * im.height).sum();
    if n == 0 {
        return None;
    }
    let mut mean = Vector3::zeros();
    for im in images {
        for p in im.pixels() {
            mean += Vector3::new(p[0] as f64, p[1] as f64, p[2] as f64) / 255.0;
        }
    }
    mean /= n as f64;
    let mut cov = Matrix3::zeros();
    for im in images {
        for p in im.pixels() {
            let d = Vector3::new(p[0] as f64, p[1] as f64, p[2] as f64) / 255.0 - mean;
            cov += d * d.transpose();
        }
    }
    Some(cov / n as f64)
}

pub fn fit_pca_basis(images: &[RgbRaster]) -> Option<PcaBasis> {
    let cov = rgb_covariance(images)?;
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let eigenvalues = order.map(|i| eig.eigenvalues[i].max(0.0));
    let eigenvectors = Matrix3::from_columns(&order.map(|i| eig.eigenvectors.column(i).into_owned()));
    Some(PcaBasis { eigenvalues, eigenvectors })
}

/// Colour shift `Σ_c alphas[c]·λ_c·v_c`, in [0, 1] units.
pub fn pca_offset(basis: &PcaBasis, alphas: [f64; 3]) -> Vector3<f64> {
    (0..3).map(|c| basis.eigenvectors.column(c) * (alphas[c] * basis.eigenvalues[c])).sum()
}

pub fn pca_jitter(image: &RgbRaster, basis: &PcaBasis, alphas: [f64; 3]) -> RgbRaster {
    let shift = pca_offset(basis, alphas) * 255.0;
    let mut out = image.clone();
    for px in out.data.chunks_exact_mut(3) {
        for c in 0..3 {
            px[c] = (px[c] as f64 + shift[c]).round().clamp(0.0, 255.0) as u8;
        }
    }
    out
}

/// Gaussian jitter coefficients with standard deviation `sigma`.
pub fn sample_alphas<R: Rng + ?Sized>(rng: &mut R, sigma: f64) -> [f64; 3] {
    let n = Normal::new(0.0, sigma).expect("sigma must be finite and non-negative");
    [n.sample(rng), n.sample(rng), n.sample(rng)]
}
