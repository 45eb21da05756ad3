//! Crop-and-resize over channel-interleaved grids.
//!
//! Region bounds are continuous cell coordinates: cell `i` spans `[i, i+1)`
//! and its value sits at its centre `i + 0.5`.

/// Bilinear crop of `src` (rows × cols × channels) over the region
/// `[r0, r1] × [c0, c1]`, resampled to `out_rows × out_cols`.
///
/// Samples inside the grid interpolate between cell centres with edge
/// replication; samples outside `[0, rows] × [0, cols]` are zero.
#[allow(clippy::too_many_arguments)]
pub fn crop_resize_bilinear(
    src: &[f32],
    rows: usize,
    cols: usize,
    channels: usize,
    (r0, r1): (f64, f64),
    (c0, c1): (f64, f64),
    out_rows: usize,
    out_cols: usize,
) -> Vec<f32> {
    debug_assert_eq!(src.len(), rows * cols * channels);
    let mut out = vec![0.0f32; out_rows * out_cols * channels];
    if rows == 0 || cols == 0 {
        return out;
    }
    let axis = |a: usize, lo: f64, hi: f64, n_out: usize, n_src: usize| -> Option<(usize, usize, f64)> {
        let pos = lo + (a as f64 + 0.5) * (hi - lo) / n_out as f64;
        if !(0.0..=n_src as f64).contains(&pos) {
            return None;
        }
        let f = pos - 0.5;
        let base = f.floor();
        let t = f - base;
        let clamp = |i: f64| i.clamp(0.0, (n_src - 1) as f64) as usize;
        Some((clamp(base), clamp(base + 1.0), t))
    };
    for a in 0..out_rows {
        let Some((ra, rb, tr)) = axis(a, r0, r1, out_rows, rows) else { continue };
        for b in 0..out_cols {
            let Some((ca, cb, tc)) = axis(b, c0, c1, out_cols, cols) else { continue };
            for ch in 0..channels {
                let at = |r: usize, c: usize| src[(r * cols + c) * channels + ch] as f64;
                let top = at(ra, ca) * (1.0 - tc) + at(ra, cb) * tc;
                let bottom = at(rb, ca) * (1.0 - tc) + at(rb, cb) * tc;
                out[(a * out_cols + b) * channels + ch] = (top * (1.0 - tr) + bottom * tr) as f32;
            }
        }
    }
    out
}
