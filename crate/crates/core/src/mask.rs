//! Depth-driven foreground mask for image feature crops.
//!
//! LIDAR depths are splatted into a sparse image-sized map, the proposal's
//! 2D box is cropped at `n·k × n·k` with nearest-neighbour sampling, each
//! `n × n` block is reduced to the median of its nonzero depths, and a cell
//! is kept when that median falls inside the proposal's depth span (padded
//! by `eps1`) or carries no depth at all (`<= eps2`).

use thiserror::Error;

use crate::geometry::{AxisAlignedBox2D, ProjectedBox};
use crate::kitti::{CalibrationSet, RawPointCloud};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MaskError {
    #[error("crop box {0:?} has no area")]
    DegenerateBox(AxisAlignedBox2D),
    #[error("expected {expected} values, found {found}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("invalid depth range [{d_min}, {d_max}]")]
    InvalidDepthRange { d_min: f64, d_max: f64 },
    #[error("invalid mask configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, MaskError>;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaskConfig {
    /// Side of the feature crop.
    pub k: usize,
    /// Depth crop resolution multiplier.
    pub n: usize,
    /// Padding around `[d_min, d_max]`, metres.
    pub eps1: f64,
    /// Depths at or below this count as missing, metres.
    pub eps2: f64,
}

impl Default for MaskConfig {
    fn default() -> Self {
        Self { k: 7, n: 4, eps1: 0.5, eps2: 0.1 }
    }
}

impl MaskConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.n == 0 {
            return Err(MaskError::InvalidConfig("k and n must be at least 1".into()));
        }
        if !(self.eps1 >= 0.0 && self.eps2 >= 0.0) {
            return Err(MaskError::InvalidConfig("eps1 and eps2 must be non-negative".into()));
        }
        Ok(())
    }

    pub fn depth_side(&self) -> usize {
        self.n * self.k
    }
}

/// Image-sized depth grid, row-major; 0 marks pixels without a LIDAR return.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseDepthMap {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl SparseDepthMap {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![0.0; width * height] }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Writes `depth` at a pixel unless a nearer return is already there.
    pub fn splat(&mut self, x: usize, y: usize, depth: f64) {
        let v = &mut self.data[y * self.width + x];
        if *v == 0.0 || depth < *v {
            *v = depth;
        }
    }

    pub fn nonzero_count(&self) -> usize {
        self.data.iter().filter(|&&d| d != 0.0).count()
    }
}

/// `k × k` binary grid, row-major, entries 0 or 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForegroundMask {
    pub k: usize,
    pub cells: Vec<u8>,
}

impl ForegroundMask {
    pub fn ones(k: usize) -> Self {
        Self { k, cells: vec![1; k * k] }
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.cells[row * self.k + col]
    }

    pub fn kept(&self) -> usize {
        self.cells.iter().filter(|&&c| c == 1).count()
    }
}

pub fn build_sparse_depth_map(cloud: &RawPointCloud, calib: &CalibrationSet, image_size: (usize, usize)) -> SparseDepthMap {
    let (w, h) = image_size;
    let mut map = SparseDepthMap::new(w, h);
    for p in &cloud.points {
        let (u, v, depth) = calib.project_lidar(&p.position());
        if !(depth > 0.0 && u.is_finite() && v.is_finite()) {
            continue;
        }
        let (px, py) = (u.round(), v.round());
        if px < 0.0 || py < 0.0 || px > (w as f64 - 1.0) || py > (h as f64 - 1.0) {
            continue;
        }
        map.splat(px as usize, py as usize, depth);
    }
    map
}

/// Nearest-neighbour crop of `bbox` (pixel centres at integer coordinates)
/// to `n·k × n·k`.
pub fn crop_resize_depth_nearest(map: &SparseDepthMap, bbox: &AxisAlignedBox2D, cfg: &MaskConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    if !(bbox.width() > 0.0 && bbox.height() > 0.0) || map.width == 0 || map.height == 0 {
        return Err(MaskError::DegenerateBox(*bbox));
    }
    let side = cfg.depth_side();
    let sample = |lo: f64, hi: f64, j: usize, limit: usize| -> usize {
        let x = lo + (j as f64 + 0.5) * (hi - lo) / side as f64;
        (x + 0.5).floor().clamp(0.0, (limit - 1) as f64) as usize
    };
    let cols: Vec<usize> = (0..side).map(|j| sample(bbox.left, bbox.right, j, map.width)).collect();
    let mut out = Vec::with_capacity(side * side);
    for i in 0..side {
        let y = sample(bbox.top, bbox.bottom, i, map.height);
        out.extend(cols.iter().map(|&x| map.get(x, y)));
    }
    Ok(out)
}

/// Median of the nonzero depths in each `n × n` block (0 for an empty block).
pub fn cell_medians(grid: &[f64], cfg: &MaskConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let (k, n) = (cfg.k, cfg.n);
    let side = k * n;
    if grid.len() != side * side {
        return Err(MaskError::ShapeMismatch { expected: side * side, found: grid.len() });
    }
    let mut block = Vec::with_capacity(n * n);
    let mut out = Vec::with_capacity(k * k);
    for ci in 0..k {
        for cj in 0..k {
            block.clear();
            for r in ci * n..(ci + 1) * n {
                block.extend(grid[r * side + cj * n..r * side + (cj + 1) * n].iter().copied().filter(|&d| d != 0.0));
            }
            out.push(median(&mut block));
        }
    }
    Ok(out)
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_unstable_by(f64::total_cmp);
    let m = values.len() / 2;
    if values.len() % 2 == 1 {
        values[m]
    } else {
        0.5 * (values[m - 1] + values[m])
    }
}

/// A cell is kept iff its median lies in `[d_min - eps1, d_max + eps1] ∪ [0, eps2]`.
pub fn compute_mask(medians: &[f64], d_min: f64, d_max: f64, cfg: &MaskConfig) -> Result<ForegroundMask> {
    cfg.validate()?;
    if !(d_min.is_finite() && d_max.is_finite() && d_min <= d_max) {
        return Err(MaskError::InvalidDepthRange { d_min, d_max });
    }
    if medians.len() != cfg.k * cfg.k {
        return Err(MaskError::ShapeMismatch { expected: cfg.k * cfg.k, found: medians.len() });
    }
    let (lo, hi) = (d_min - cfg.eps1, d_max + cfg.eps1);
    let cells = medians.iter().map(|&m| ((lo <= m && m <= hi) || (0.0 <= m && m <= cfg.eps2)) as u8).collect();
    Ok(ForegroundMask { k: cfg.k, cells })
}

/// Zeroes the masked cells of a `k × k × channels` feature crop.
pub fn apply_mask(features: &[f32], channels: usize, mask: &ForegroundMask) -> Result<Vec<f32>> {
    let expected = mask.k * mask.k * channels;
    if features.len() != expected {
        return Err(MaskError::ShapeMismatch { expected, found: features.len() });
    }
    Ok(features
        .chunks_exact(channels.max(1))
        .zip(&mask.cells)
        .flat_map(|(cell, &m)| cell.iter().map(move |&v| if m == 1 { v } else { 0.0 }))
        .collect())
}

/// Crop, median and threshold for one projected proposal.
pub fn foreground_mask(map: &SparseDepthMap, proj: &ProjectedBox, cfg: &MaskConfig) -> Result<ForegroundMask> {
    let grid = crop_resize_depth_nearest(map, &proj.bbox, cfg)?;
    let medians = cell_medians(&grid, cfg)?;
    compute_mask(&medians, proj.d_min, proj.d_max, cfg)
}
