use nalgebra::{Point3, Vector3, Vector4};

use super::{CalibrationSet, KittiError, Result};
use crate::geometry::{normalize_angle, project_box_to_image, AxisAlignedBox2D, BoxDims, OrientedBox3D};

/// One line of a KITTI label (or result) file, in the rectified camera frame.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthLabel {
    pub class_name: String,
    pub truncation: f64,
    /// 0..=3; -1 on DontCare and result lines.
    pub occlusion: i32,
    pub alpha: f64,
    pub bbox2d: AxisAlignedBox2D,
    /// (h, w, l) in meters.
    pub dimensions: [f64; 3],
    /// Bottom-centre of the box, camera frame.
    pub location: [f64; 3],
    pub rotation_y: f64,
    /// Present on result lines only.
    pub score: Option<f64>,
}

impl GroundTruthLabel {
    pub fn is_dont_care(&self) -> bool {
        self.class_name == "DontCare"
    }

    pub fn bbox_height(&self) -> f64 {
        self.bbox2d.bottom - self.bbox2d.top
    }
}

/// A scored box destined for a KITTI result file.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub class_name: String,
    pub box3d: OrientedBox3D,
    pub score: f64,
}

fn field(tokens: &[&str], line: usize, i: usize) -> Result<f64> {
    tokens[i].parse::<f64>().map_err(|_| KittiError::BadNumber { line, field: i + 1, text: tokens[i].to_string() })
}

/// Parses label or result text. Blank lines are skipped; DontCare entries
/// are kept (see [`GroundTruthLabel::is_dont_care`]).
pub fn parse_labels(text: &str) -> Result<Vec<GroundTruthLabel>> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let tokens: Vec<&str> = raw.split_whitespace().collect();
        if tokens.is_empty() {
            continue;
        }
        if tokens.len() != 15 && tokens.len() != 16 {
            return Err(KittiError::WrongFieldCount { line, found: tokens.len() });
        }
        let f = |i| field(&tokens, line, i);
        let occlusion = f(2)?;
        out.push(GroundTruthLabel {
            class_name: tokens[0].to_string(),
            truncation: f(1)?,
            occlusion: occlusion as i32,
            alpha: f(3)?,
            bbox2d: AxisAlignedBox2D::new(f(4)?, f(5)?, f(6)?, f(7)?),
            dimensions: [f(8)?, f(9)?, f(10)?],
            location: [f(11)?, f(12)?, f(13)?],
            rotation_y: f(14)?,
            score: if tokens.len() == 16 { Some(f(15)?) } else { None },
        });
    }
    Ok(out)
}

fn format_line(l: &GroundTruthLabel) -> String {
    let b = &l.bbox2d;
    let [h, w, len] = l.dimensions;
    let [x, y, z] = l.location;
    let mut s = format!(
        "{} {:.2} {} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2}",
        l.class_name, l.truncation, l.occlusion, l.alpha, b.left, b.top, b.right, b.bottom, h, w, len, x, y, z, l.rotation_y
    );
    if let Some(score) = l.score {
        s.push_str(&format!(" {score:.4}"));
    }
    s
}

/// Writes labels with the two-decimal precision of the KITTI files.
pub fn write_labels(labels: &[GroundTruthLabel]) -> String {
    labels.iter().map(|l| format_line(l) + "\n").collect()
}

/// Converts a camera-frame label into a LIDAR-frame box.
pub fn label_to_box(label: &GroundTruthLabel, calib: &CalibrationSet) -> Result<OrientedBox3D> {
    let [h, w, l] = label.dimensions;
    if !(h > 0.0 && w > 0.0 && l > 0.0) {
        return Err(KittiError::InvalidDimensions(label.class_name.clone()));
    }
    let [x, y, z] = label.location;
    let centre_rect = Point3::new(x, y - h / 2.0, z);
    let to_lidar = calib.rect_to_lidar();
    let centre = super::calib::transform_point(&to_lidar, &centre_rect);
    let ry = label.rotation_y;
    let heading = to_lidar * Vector4::new(ry.cos(), 0.0, -ry.sin(), 0.0);
    Ok(OrientedBox3D::new(centre, BoxDims::new(l, w, h), heading.y.atan2(heading.x)))
}

/// Converts a LIDAR-frame box into a camera-frame label, projecting its
/// 2D box into an image of `image_size` (width, height). Boxes that do not
/// project get a zero 2D box.
pub fn box_to_label(
    box3d: &OrientedBox3D,
    class_name: &str,
    calib: &CalibrationSet,
    image_size: (usize, usize),
    score: Option<f64>,
) -> GroundTruthLabel {
    let to_rect = calib.lidar_to_rect();
    let centre = super::calib::transform_point(&to_rect, &box3d.center);
    let h = box3d.dims.h;
    let location = [centre.x, centre.y + h / 2.0, centre.z];
    let d = to_rect * Vector4::new(box3d.yaw.cos(), box3d.yaw.sin(), 0.0, 0.0);
    let heading = Vector3::new(d.x, d.y, d.z);
    let rotation_y = normalize_angle((-heading.z).atan2(heading.x));
    let alpha = normalize_angle(rotation_y - centre.x.atan2(centre.z));
    let bbox2d = project_box_to_image(box3d, calib, image_size)
        .map(|p| p.bbox)
        .unwrap_or(AxisAlignedBox2D { left: 0.0, top: 0.0, right: 0.0, bottom: 0.0 });
    GroundTruthLabel {
        class_name: class_name.to_string(),
        truncation: if score.is_some() { -1.0 } else { 0.0 },
        occlusion: if score.is_some() { -1 } else { 0 },
        alpha,
        bbox2d,
        dimensions: [h, box3d.dims.w, box3d.dims.l],
        location,
        rotation_y,
        score,
    }
}

/// KITTI result lines (16 fields, score last).
pub fn write_detections(detections: &[Detection], calib: &CalibrationSet, image_size: (usize, usize)) -> String {
    let labels: Vec<GroundTruthLabel> = detections
        .iter()
        .map(|d| box_to_label(&d.box3d, &d.class_name, calib, image_size, Some(d.score)))
        .collect();
    write_labels(&labels)
}
