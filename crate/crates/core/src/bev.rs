//! Six-channel bird's eye view rasterization and per-proposal BEV crops.
//!
//! Rows run along the sensor x axis (forward), columns along y (left).
//! Channels `0..num_slices` hold the maximum height above the ground plane
//! of the points falling into each height slice; the last channel holds the
//! saturating point density.

use thiserror::Error;

use crate::geometry::OrientedBox3D;
use crate::kitti::{GroundPlane, RawPointCloud};
use crate::resample::crop_resize_bilinear;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BevError {
    #[error("invalid BEV configuration: {0}")]
    InvalidConfig(String),
    #[error("box footprint does not intersect the BEV extents")]
    OutsideExtents,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BevConfig {
    /// Cell side in metres.
    pub resolution: f64,
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    /// Heights above the ground plane kept by the rasterizer.
    pub height_range: (f64, f64),
    pub num_slices: usize,
}

impl Default for BevConfig {
    fn default() -> Self {
        Self { resolution: 0.1, x_range: (0.0, 70.0), y_range: (-40.0, 40.0), height_range: (0.0, 2.5), num_slices: 5 }
    }
}

impl BevConfig {
    pub fn validate(&self) -> Result<(), BevError> {
        let ordered = |(lo, hi): (f64, f64)| lo.is_finite() && hi.is_finite() && lo < hi;
        if !(self.resolution > 0.0 && self.resolution.is_finite()) {
            return Err(BevError::InvalidConfig(format!("resolution {} must be positive", self.resolution)));
        }
        if !ordered(self.x_range) || !ordered(self.y_range) || !ordered(self.height_range) {
            return Err(BevError::InvalidConfig("ranges must be finite with lo < hi".into()));
        }
        if self.num_slices == 0 {
            return Err(BevError::InvalidConfig("num_slices must be at least 1".into()));
        }
        if self.rows() == 0 || self.cols() == 0 {
            return Err(BevError::InvalidConfig("extents are smaller than one cell".into()));
        }
        Ok(())
    }

    pub fn rows(&self) -> usize {
        ((self.x_range.1 - self.x_range.0) / self.resolution).round() as usize
    }

    pub fn cols(&self) -> usize {
        ((self.y_range.1 - self.y_range.0) / self.resolution).round() as usize
    }

    pub fn channels(&self) -> usize {
        self.num_slices + 1
    }

    pub fn slice_width(&self) -> f64 {
        (self.height_range.1 - self.height_range.0) / self.num_slices as f64
    }

    fn slice_of(&self, h: f64) -> Option<usize> {
        let (lo, hi) = self.height_range;
        if !(lo..=hi).contains(&h) {
            return None;
        }
        let delta = self.slice_width();
        let mut s = (((h - lo) / delta).floor() as usize).min(self.num_slices - 1);
        // Division can round up across a boundary; keep h inside its slice.
        while s > 0 && lo + s as f64 * delta > h {
            s -= 1;
        }
        Some(s)
    }
}

/// Index of the cell holding `v` on an axis of `n` cells spanning `range`.
///
/// With an even `n` the cells are laid out symmetrically about the axis
/// centre, so `v` and its mirror image about the centre land in mirrored
/// cells bit for bit.
fn axis_cell(v: f64, range: (f64, f64), n: usize, res: f64) -> Option<usize> {
    let (lo, hi) = range;
    if !(lo..=hi).contains(&v) {
        return None;
    }
    if n % 2 == 1 {
        return Some((((v - lo) / res).floor() as usize).min(n - 1));
    }
    let half = n / 2;
    let d = v - 0.5 * (lo + hi);
    let k = ((d.abs() / res).floor() as usize).min(half - 1);
    Some(if d.is_sign_negative() { half - 1 - k } else { half + k })
}

/// Continuous cell coordinate of `v` (cell `i` spans `[i, i+1)`).
fn axis_coord(v: f64, range: (f64, f64), n: usize, res: f64) -> f64 {
    (v - 0.5 * (range.0 + range.1)) / res + n as f64 / 2.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct BevMap {
    pub config: BevConfig,
    pub rows: usize,
    pub cols: usize,
    pub channels: usize,
    /// `[row][col][channel]`, row-major.
    pub data: Vec<f32>,
    /// In-range point count per cell, `[row][col]`.
    pub counts: Vec<u32>,
}

impl BevMap {
    pub fn zeros(config: BevConfig) -> Self {
        let (rows, cols, channels) = (config.rows(), config.cols(), config.channels());
        Self { config, rows, cols, channels, data: vec![0.0; rows * cols * channels], counts: vec![0; rows * cols] }
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, ch: usize) -> f32 {
        self.data[(row * self.cols + col) * self.channels + ch]
    }

    #[inline]
    pub fn count(&self, row: usize, col: usize) -> u32 {
        self.counts[row * self.cols + col]
    }

    pub fn density_channel(&self) -> usize {
        self.channels - 1
    }

    /// Single channel as a `rows × cols` grid.
    pub fn channel(&self, ch: usize) -> Vec<f32> {
        self.data.iter().skip(ch).step_by(self.channels).copied().collect()
    }

    /// The map mirrored across the x axis (column `c` → `cols - 1 - c`).
    pub fn mirrored_y(&self) -> Self {
        let mut out = self.clone();
        for r in 0..self.rows {
            for c in 0..self.cols {
                let (src, dst) = (r * self.cols + c, r * self.cols + self.cols - 1 - c);
                out.counts[dst] = self.counts[src];
                out.data[dst * self.channels..(dst + 1) * self.channels]
                    .copy_from_slice(&self.data[src * self.channels..(src + 1) * self.channels]);
            }
        }
        out
    }
}

/// `min(1, ln(N + 1) / ln 16)`: saturates at exactly 1 from 15 points on.
pub fn density(count: u32) -> f32 {
    ((count as f64 + 1.0).ln() / 16f64.ln()).min(1.0) as f32
}

pub fn rasterize(cloud: &RawPointCloud, plane: &GroundPlane, cfg: &BevConfig) -> Result<BevMap, BevError> {
    cfg.validate()?;
    let mut map = BevMap::zeros(*cfg);
    let (cols, channels) = (map.cols, map.channels);
    for p in &cloud.points {
        let pos = p.position();
        let Some(r) = axis_cell(pos.x, cfg.x_range, map.rows, cfg.resolution) else { continue };
        let Some(c) = axis_cell(pos.y, cfg.y_range, cols, cfg.resolution) else { continue };
        let h = plane.height(&pos);
        let Some(s) = cfg.slice_of(h) else { continue };
        let cell = r * cols + c;
        map.counts[cell] += 1;
        let v = &mut map.data[cell * channels + s];
        *v = v.max(h as f32);
    }
    let dc = map.density_channel();
    for (cell, &n) in map.counts.iter().enumerate() {
        map.data[cell * channels + dc] = density(n);
    }
    Ok(map)
}

/// Crops the axis-aligned hull of the box footprint and resizes it to
/// `k × k × channels` with bilinear interpolation.
pub fn crop_resize_bev(map: &BevMap, b: &OrientedBox3D, k: usize) -> Result<Vec<f32>, BevError> {
    let fp = b.footprint();
    let (x0, x1) = fp.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.x), hi.max(p.x)));
    let (y0, y1) = fp.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.y), hi.max(p.y)));
    let cfg = &map.config;
    if x1 < cfg.x_range.0 || x0 > cfg.x_range.1 || y1 < cfg.y_range.0 || y0 > cfg.y_range.1 {
        return Err(BevError::OutsideExtents);
    }
    let rows = (
        axis_coord(x0, cfg.x_range, map.rows, cfg.resolution),
        axis_coord(x1, cfg.x_range, map.rows, cfg.resolution),
    );
    let cols = (
        axis_coord(y0, cfg.y_range, map.cols, cfg.resolution),
        axis_coord(y1, cfg.y_range, map.cols, cfg.resolution),
    );
    Ok(crop_resize_bilinear(&map.data, map.rows, map.cols, map.channels, rows, cols, k, k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BoxDims;
    use crate::kitti::Point;
    use nalgebra::{Point3, Vector3};
    use proptest::prelude::*;

    fn flat() -> GroundPlane {
        GroundPlane { normal: Vector3::z(), offset: 0.0 }
    }

    fn cloud(pts: &[(f32, f32, f32)]) -> RawPointCloud {
        RawPointCloud::new(pts.iter().map(|&(x, y, z)| Point::new(x, y, z, 0.5)).collect())
    }

    #[test]
    fn default_grid_shape() {
        let cfg = BevConfig::default();
        assert_eq!((cfg.rows(), cfg.cols(), cfg.channels()), (700, 800, 6));
        assert!((cfg.slice_width() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn empty_cloud_is_zero() {
        let map = rasterize(&RawPointCloud::default(), &flat(), &BevConfig::default()).unwrap();
        assert!(map.data.iter().all(|&v| v == 0.0) && map.counts.iter().all(|&n| n == 0));
    }

    #[test]
    fn single_point_lands_in_slice_two() {
        let map = rasterize(&cloud(&[(10.05, 0.05, 1.2)]), &flat(), &BevConfig::default()).unwrap();
        let (r, c) = (100, 400);
        assert_eq!(map.count(r, c), 1);
        for ch in 0..5 {
            assert_eq!(map.get(r, c, ch), if ch == 2 { 1.2 } else { 0.0 });
        }
        let expected = (2f64.ln() / 16f64.ln()) as f32;
        assert_eq!(map.get(r, c, 5), expected);
        assert_eq!(map.counts.iter().sum::<u32>(), 1);
    }

    #[test]
    fn slice_boundary_goes_up_and_top_is_closed() {
        let cfg = BevConfig::default();
        assert_eq!(cfg.slice_of(0.5), Some(1));
        assert_eq!(cfg.slice_of(0.0), Some(0));
        assert_eq!(cfg.slice_of(2.5), Some(4));
        assert_eq!(cfg.slice_of(2.5000001), None);
        assert_eq!(cfg.slice_of(-1e-9), None);
    }

    #[test]
    fn density_saturates_at_fifteen() {
        assert!(density(14) < 1.0);
        assert_eq!(density(15), 1.0);
        assert_eq!(density(1000), 1.0);
        let pts: Vec<_> = (0..15).map(|i| (5.02, 1.02, 0.1 * i as f32)).collect();
        let map = rasterize(&cloud(&pts), &flat(), &BevConfig::default()).unwrap();
        assert_eq!(map.get(50, 410, 5), 1.0);
    }

    #[test]
    fn out_of_range_points_dropped() {
        let pts = [(-1.0, 0.0, 1.0), (71.0, 0.0, 1.0), (5.0, 41.0, 1.0), (5.0, 0.0, 2.6), (5.0, 0.0, -0.2)];
        let map = rasterize(&cloud(&pts), &flat(), &BevConfig::default()).unwrap();
        assert_eq!(map.counts.iter().sum::<u32>(), 0);
    }

    #[test]
    fn heights_are_measured_from_the_plane() {
        let plane = GroundPlane { normal: Vector3::z(), offset: 1.73 };
        let map = rasterize(&cloud(&[(5.05, 0.05, -0.53)]), &plane, &BevConfig::default()).unwrap();
        assert!((map.get(50, 400, 2) - 1.2).abs() < 1e-6);
    }

    #[test]
    fn bad_config_rejected() {
        let cfg = BevConfig { resolution: 0.0, ..Default::default() };
        assert!(matches!(rasterize(&RawPointCloud::default(), &flat(), &cfg), Err(BevError::InvalidConfig(_))));
        let cfg = BevConfig { num_slices: 0, ..Default::default() };
        assert!(cfg.validate().is_err());
    }

    fn small_cfg() -> BevConfig {
        BevConfig { resolution: 1.0, x_range: (0.0, 4.0), y_range: (-2.0, 2.0), height_range: (0.0, 2.5), num_slices: 5 }
    }

    #[test]
    fn aligned_crop_copies_cells() {
        let pts: Vec<_> = (0..4)
            .flat_map(|r| (0..4).map(move |c| (r as f32 + 0.5, c as f32 - 1.5, 0.1 + 0.5 * ((r + c) % 5) as f32)))
            .collect();
        let map = rasterize(&cloud(&pts), &flat(), &small_cfg()).unwrap();
        let b = OrientedBox3D::new(Point3::new(2.0, 0.0, 0.5), BoxDims::new(2.0, 2.0, 1.0), 0.0);
        let crop = crop_resize_bev(&map, &b, 2).unwrap();
        for a in 0..2 {
            for bb in 0..2 {
                for ch in 0..6 {
                    assert_eq!(crop[(a * 2 + bb) * 6 + ch], map.get(a + 1, bb + 1, ch));
                }
            }
        }
    }

    #[test]
    fn constant_map_crops_to_constant() {
        let mut map = BevMap::zeros(small_cfg());
        map.data.iter_mut().for_each(|v| *v = 0.75);
        let b = OrientedBox3D::new(Point3::new(1.7, 0.3, 0.5), BoxDims::new(1.3, 0.9, 1.0), 0.4);
        assert!(crop_resize_bev(&map, &b, 7).unwrap().iter().all(|&v| v == 0.75));
    }

    #[test]
    fn crop_outside_extents_fails() {
        let map = BevMap::zeros(small_cfg());
        let b = OrientedBox3D::new(Point3::new(-5.0, 0.0, 0.5), BoxDims::new(1.0, 1.0, 1.0), 0.0);
        assert_eq!(crop_resize_bev(&map, &b, 3), Err(BevError::OutsideExtents));
    }

    fn arb_points(n: usize) -> impl Strategy<Value = Vec<(f32, f32, f32)>> {
        prop::collection::vec((-1.0f32..5.0, -2.5f32..2.5, -0.3f32..2.8), 0..n)
    }

    proptest! {
        #[test]
        fn conservation_and_permutation(pts in arb_points(300), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let cfg = small_cfg();
            let map = rasterize(&cloud(&pts), &flat(), &cfg).unwrap();
            let in_range = pts.iter().filter(|p| {
                let (x, y, z) = (p.0 as f64, p.1 as f64, p.2 as f64);
                (0.0..=4.0).contains(&x) && (-2.0..=2.0).contains(&y) && (0.0..=2.5).contains(&z)
            }).count();
            prop_assert_eq!(map.counts.iter().sum::<u32>() as usize, in_range);
            let mut shuffled = pts.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(&rasterize(&cloud(&shuffled), &flat(), &cfg).unwrap(), &map);
        }

        #[test]
        fn slice_values_stay_in_their_band(pts in arb_points(200)) {
            let cfg = small_cfg();
            let map = rasterize(&cloud(&pts), &flat(), &cfg).unwrap();
            let d = cfg.slice_width();
            for cell in 0..map.rows * map.cols {
                for s in 0..cfg.num_slices {
                    let v = map.data[cell * 6 + s] as f64;
                    prop_assert!(v == 0.0 || (v >= s as f64 * d - 1e-6 && v <= (s + 1) as f64 * d + 1e-6));
                }
                let dens = map.data[cell * 6 + 5];
                prop_assert!((0.0..=1.0).contains(&dens));
                prop_assert_eq!(dens, density(map.counts[cell]));
            }
        }

        #[test]
        fn mirror_equivariance(pts in arb_points(300)) {
            let cfg = small_cfg();
            let mirrored: Vec<_> = pts.iter().map(|&(x, y, z)| (x, -y, z)).collect();
            let a = rasterize(&cloud(&mirrored), &flat(), &cfg).unwrap();
            let b = rasterize(&cloud(&pts), &flat(), &cfg).unwrap().mirrored_y();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn density_is_monotone(n in 0u32..100) {
            prop_assert!(density(n) <= density(n + 1));
        }
    }
}
