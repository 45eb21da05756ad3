use std::path::Path;

use mvdet_core::geometry::{project_box_to_image, GeometryError};
use mvdet_core::kitti::label_to_box;
use mvdet_core::mask::{build_sparse_depth_map, foreground_mask};
use mvdet_core::{AxisAlignedBox2D, ForegroundMask, RgbRaster};

use super::{csv_done, csv_row, csv_writer};
use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::layout::{read_text, write_png, Layout};
use crate::FrameArgs;

/// One line of `masks.csv`. `cells` is the k×k mask, row-major, as a
/// string of `0`/`1`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MaskRow {
    pub proposal: usize,
    pub class: String,
    pub d_min: f64,
    pub d_max: f64,
    pub cells: String,
}

/// Mask cell `(row, col)` covering pixel `(x, y)` of the crop of `bbox`.
pub fn cell_of(bbox: &AxisAlignedBox2D, k: usize, x: usize, y: usize) -> (usize, usize) {
    let frac = |v: usize, lo: f64, hi: f64| {
        let t = if hi > lo { (v as f64 - lo) / (hi - lo) } else { 0.0 };
        ((t * k as f64).floor().max(0.0) as usize).min(k - 1)
    };
    (frac(y, bbox.top, bbox.bottom), frac(x, bbox.left, bbox.right))
}

/// Pixels of the bbox crop with masked-out cells dimmed by 70%.
fn overlay(image: &RgbRaster, bbox: &AxisAlignedBox2D, mask: &ForegroundMask) -> RgbRaster {
    let (x0, x1) = (bbox.left.floor() as usize, (bbox.right.ceil() as usize).min(image.width - 1));
    let (y0, y1) = (bbox.top.floor() as usize, (bbox.bottom.ceil() as usize).min(image.height - 1));
    let mut out = RgbRaster::new(x1 - x0 + 1, y1 - y0 + 1);
    for y in y0..=y1 {
        for x in x0..=x1 {
            let (r, c) = cell_of(bbox, mask.k, x, y);
            let mut px = image.pixel(x, y);
            if mask.get(r, c) == 0 {
                px = px.map(|v| (v as f64 * 0.3).round() as u8);
            }
            out.put(x - x0, y - y0, px);
        }
    }
    out
}

pub fn run(frame: &FrameArgs, proposals: &Path, out: &Path, cfg: &RunConfig) -> Result<()> {
    let layout = Layout::new(&frame.frame_dir);
    let calib = layout.read_calib(&frame.id)?;
    let cloud = layout.read_cloud(&frame.id)?;
    let image = layout.read_image(&frame.id)?;
    let lines = mvdet_core::kitti::parse_labels(&read_text(proposals)?).map_err(|e| CliError::input(proposals, e))?;
    let size = (image.width, image.height);
    let depth = build_sparse_depth_map(&cloud, &calib, size);
    let csv_path = out.join("masks.csv");
    let mut w = csv_writer(&csv_path)?;
    for (i, line) in lines.iter().enumerate() {
        let b = label_to_box(line, &calib).map_err(|e| CliError::input(proposals, e))?;
        let proj = match project_box_to_image(&b, &calib, size) {
            Ok(p) => p,
            Err(e @ (GeometryError::BehindCamera { .. } | GeometryError::DegenerateOnImage)) => {
                log::warn!("proposal {i} skipped: {e}");
                continue;
            }
        };
        let mask = foreground_mask(&depth, &proj, &cfg.mask).map_err(|e| CliError::Usage(e.to_string()))?;
        let cells = mask.cells.iter().map(|&c| if c == 1 { '1' } else { '0' }).collect();
        let row = MaskRow { proposal: i, class: line.class_name.clone(), d_min: proj.d_min, d_max: proj.d_max, cells };
        csv_row(&csv_path, &mut w, row)?;
        write_png(&out.join(format!("overlay_{i:03}.png")), &overlay(&image, &proj.bbox, &mask))?;
    }
    csv_done(&csv_path, w)
}
