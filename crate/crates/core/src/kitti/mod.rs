//! Readers and writers for the KITTI object-detection file formats.
//!
//! | file              | layout                                               |
//! |-------------------|------------------------------------------------------|
//! | `velodyne/*.bin`  | 4 × f32 little-endian per point (x, y, z, reflectance) |
//! | `calib/*.txt`     | `KEY: v0 v1 ...` lines; P2, R0_rect, Tr_velo_to_cam  |
//! | `label_2/*.txt`   | 15 whitespace-separated fields per object            |
//! | `planes/*.txt`    | 4 plane coefficients (a, b, c, d), camera frame      |
//! | results           | label fields plus a trailing score (16 fields)       |

mod calib;
mod label;
mod plane;
mod velodyne;

pub use calib::{
    parse_calibration, parse_calibration_strict, transform_point, write_calibration, CalibrationSet, CalibrationWarning,
};
pub use label::{
    box_to_label, label_to_box, parse_labels, write_detections, write_labels, Detection, GroundTruthLabel,
};
pub use plane::{parse_ground_plane, write_ground_plane, GroundPlane};
pub use velodyne::{parse_point_cloud, write_point_cloud, Point, RawPointCloud};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KittiError {
    #[error("point cloud blob is {0} bytes, not a multiple of 16")]
    LengthNotMultipleOf16(usize),
    #[error("non-finite value in point {index}")]
    NonFiniteValue { index: usize },
    #[error("calibration key {0} is missing")]
    MissingKey(&'static str),
    #[error("calibration key {key} has {found} values, expected {expected}")]
    WrongArity { key: &'static str, expected: usize, found: usize },
    #[error("calibration key {key}: rotation block is not orthonormal (defect {defect:.3e})")]
    NonOrthonormalRotation { key: &'static str, defect: f64 },
    #[error("line {line}: expected 15 or 16 fields, found {found}")]
    WrongFieldCount { line: usize, found: usize },
    #[error("line {line}: could not parse field {field} ({text:?})")]
    BadNumber { line: usize, field: usize, text: String },
    #[error("ground plane has a zero normal")]
    ZeroNormal,
    #[error("no line with four plane coefficients")]
    MissingPlane,
    #[error("label {0} has non-positive dimensions")]
    InvalidDimensions(String),
}

pub type Result<T> = std::result::Result<T, KittiError>;
