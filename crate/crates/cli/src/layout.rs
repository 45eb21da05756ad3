//! KITTI directory layout and file IO.

use std::path::{Path, PathBuf};

use mvdet_core::kitti::{
    parse_calibration, parse_ground_plane, parse_labels, parse_point_cloud, write_calibration, write_ground_plane,
    write_labels, write_point_cloud,
};
use mvdet_core::{CalibrationSet, GroundPlane, GroundTruthLabel, RawPointCloud, RgbRaster};

use crate::error::{CliError, Result};

pub const VELODYNE: &str = "velodyne";
pub const CALIB: &str = "calib";
pub const LABELS: &str = "label_2";
pub const PLANES: &str = "planes";
pub const IMAGES: &str = "image_2";
pub const PROPOSALS: &str = "proposals";

/// A dataset root holding one sub-directory per file kind.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn path(&self, kind: &str, id: &str) -> PathBuf {
        let ext = match kind {
            VELODYNE => "bin",
            IMAGES => "png",
            _ => "txt",
        };
        self.root.join(kind).join(format!("{id}.{ext}"))
    }

    /// Frame ids with a file of `kind`, sorted.
    pub fn ids(&self, kind: &str) -> Result<Vec<String>> {
        let dir = self.root.join(kind);
        let entries = std::fs::read_dir(&dir).map_err(|e| CliError::input(&dir, e))?;
        let mut ids: Vec<String> = entries
            .filter_map(|e| e.ok())
            .filter(|e| e.file_type().is_ok_and(|t| t.is_file()))
            .filter_map(|e| e.path().file_stem().and_then(|s| s.to_str()).map(str::to_string))
            .collect();
        ids.sort();
        Ok(ids)
    }

    pub fn read_cloud(&self, id: &str) -> Result<RawPointCloud> {
        let p = self.path(VELODYNE, id);
        parse_point_cloud(&read_bytes(&p)?).map_err(|e| CliError::input(&p, e))
    }

    pub fn read_calib(&self, id: &str) -> Result<CalibrationSet> {
        let p = self.path(CALIB, id);
        parse_calibration(&read_text(&p)?).map_err(|e| CliError::input(&p, e))
    }

    /// Ground plane in the LIDAR frame.
    pub fn read_plane(&self, id: &str, calib: &CalibrationSet) -> Result<GroundPlane> {
        let p = self.path(PLANES, id);
        let rect = parse_ground_plane(&read_text(&p)?).map_err(|e| CliError::input(&p, e))?;
        Ok(calib.plane_rect_to_lidar(&rect))
    }

    pub fn read_labels(&self, kind: &str, id: &str) -> Result<Vec<GroundTruthLabel>> {
        let p = self.path(kind, id);
        parse_labels(&read_text(&p)?).map_err(|e| CliError::input(&p, e))
    }

    pub fn read_image(&self, id: &str) -> Result<RgbRaster> {
        read_png(&self.path(IMAGES, id))
    }

    pub fn image_size(&self, id: &str) -> Result<(usize, usize)> {
        let p = self.path(IMAGES, id);
        let (w, h) = image::image_dimensions(&p).map_err(|e| CliError::input(&p, e))?;
        Ok((w as usize, h as usize))
    }

    pub fn write_cloud(&self, id: &str, cloud: &RawPointCloud) -> Result<()> {
        write_file(&self.path(VELODYNE, id), &write_point_cloud(cloud))
    }

    pub fn write_calib(&self, id: &str, calib: &CalibrationSet) -> Result<()> {
        write_file(&self.path(CALIB, id), write_calibration(calib).as_bytes())
    }

    /// Writes a LIDAR-frame plane in the camera frame.
    pub fn write_plane(&self, id: &str, plane: &GroundPlane, calib: &CalibrationSet) -> Result<()> {
        write_file(&self.path(PLANES, id), write_ground_plane(&calib.plane_lidar_to_rect(plane)).as_bytes())
    }

    pub fn write_labels(&self, kind: &str, id: &str, labels: &[GroundTruthLabel]) -> Result<()> {
        write_file(&self.path(kind, id), write_labels(labels).as_bytes())
    }

    pub fn write_text(&self, kind: &str, id: &str, text: &str) -> Result<()> {
        write_file(&self.path(kind, id), text.as_bytes())
    }

    pub fn write_image(&self, id: &str, image: &RgbRaster) -> Result<()> {
        write_png(&self.path(IMAGES, id), image)
    }
}

pub fn read_bytes(p: &Path) -> Result<Vec<u8>> {
    std::fs::read(p).map_err(|e| CliError::input(p, e))
}

pub fn read_text(p: &Path) -> Result<String> {
    std::fs::read_to_string(p).map_err(|e| CliError::input(p, e))
}

/// Writes `bytes`, creating parent directories.
pub fn write_file(p: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = p.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::output(dir, e))?;
    }
    std::fs::write(p, bytes).map_err(|e| CliError::output(p, e))
}

pub fn read_png(p: &Path) -> Result<RgbRaster> {
    let img = image::open(p).map_err(|e| CliError::input(p, e))?.to_rgb8();
    let (w, h) = img.dimensions();
    Ok(RgbRaster::from_raw(w as usize, h as usize, img.into_raw()).expect("decoded buffer matches its size"))
}

fn save(p: &Path, result: image::ImageResult<()>) -> Result<()> {
    result.map_err(|e| CliError::output(p, std::io::Error::other(e)))
}

pub fn write_png(p: &Path, image: &RgbRaster) -> Result<()> {
    let buf = image::RgbImage::from_raw(image.width as u32, image.height as u32, image.data.clone())
        .expect("raster buffer matches its size");
    write_file(p, &[])?;
    save(p, buf.save_with_format(p, image::ImageFormat::Png))
}

/// 8-bit grayscale PNG of a `rows × cols` grid, scaled so `max` maps to 255.
pub fn write_gray_png(p: &Path, rows: usize, cols: usize, values: &[f32], max: f32) -> Result<()> {
    let scale = if max > 0.0 { 255.0 / max } else { 0.0 };
    let data = values.iter().map(|&v| (v * scale).round().clamp(0.0, 255.0) as u8).collect();
    let buf = image::GrayImage::from_raw(cols as u32, rows as u32, data).expect("grid matches its size");
    write_file(p, &[])?;
    save(p, buf.save_with_format(p, image::ImageFormat::Png))
}
