use super::SyntheticScene;
use crate::geometry::{project_box_to_image, AxisAlignedBox2D, OrientedBox3D, ProjectedBox};
use crate::mask::{foreground_mask, ForegroundMask, MaskConfig, MaskError, SparseDepthMap};

/// The mask a perfectly dense depth sensor would produce: the regular mask
/// pipeline run on the rendered depth raster instead of the LIDAR splats.
///
/// Returns `Ok(None)` when the proposal does not project into the image.
pub fn silhouette_mask_oracle(
    scene: &SyntheticScene,
    proposal: &OrientedBox3D,
    cfg: &MaskConfig,
) -> Result<Option<ForegroundMask>, MaskError> {
    let Ok(proj) = project_box_to_image(proposal, &scene.calib, scene.image_size()) else { return Ok(None) };
    let (width, height) = scene.image_size();
    let dense = SparseDepthMap { width, height, data: scene.dense_depth.clone() };
    foreground_mask(&dense, &proj, cfg).map(Some)
}

/// Which piece of the depth axis `d` falls in, as seen by the mask test:
/// 0 = missing (`<= eps2`), 1 = in front of the padded span, 2 = inside it,
/// 3 = behind it.
pub fn depth_component(d: f64, proj: &ProjectedBox, cfg: &MaskConfig) -> u8 {
    let (lo, hi) = (proj.d_min - cfg.eps1, proj.d_max + cfg.eps1);
    if (lo..=hi).contains(&d) {
        2
    } else if d <= cfg.eps2 {
        0
    } else if d < lo {
        1
    } else {
        3
    }
}

/// Pixel index range read by one cell's nearest-neighbour samples.
fn sample_span(lo: f64, hi: f64, cell: usize, cfg: &MaskConfig, limit: usize) -> (usize, usize) {
    let side = cfg.depth_side();
    let at = |j: usize| {
        let x = lo + (j as f64 + 0.5) * (hi - lo) / side as f64;
        (x + 0.5).floor().clamp(0.0, (limit - 1) as f64) as usize
    };
    (at(cell * cfg.n), at((cell + 1) * cfg.n - 1))
}

/// Cells whose sampled pixels, grown by one pixel, all see depths in the
/// same [`depth_component`]. On such cells any depth evidence, dense or
/// sparse, lands on the same side of every mask threshold.
pub fn homogeneous_cells(scene: &SyntheticScene, proj: &ProjectedBox, cfg: &MaskConfig) -> Vec<bool> {
    let (w, h) = scene.image_size();
    let b: AxisAlignedBox2D = proj.bbox;
    let mut out = Vec::with_capacity(cfg.k * cfg.k);
    for ci in 0..cfg.k {
        let (r0, r1) = sample_span(b.top, b.bottom, ci, cfg, h);
        for cj in 0..cfg.k {
            let (c0, c1) = sample_span(b.left, b.right, cj, cfg, w);
            let mut seen = None;
            let mut same = true;
            'scan: for y in r0.saturating_sub(1)..=(r1 + 1).min(h - 1) {
                for x in c0.saturating_sub(1)..=(c1 + 1).min(w - 1) {
                    let c = depth_component(scene.dense_depth[y * w + x], proj, cfg);
                    if *seen.get_or_insert(c) != c {
                        same = false;
                        break 'scan;
                    }
                }
            }
            out.push(same);
        }
    }
    out
}
