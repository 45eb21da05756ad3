use std::path::Path;

use mvdet_core::bev::rasterize;

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::grid::Grid;
use crate::layout::{write_file, write_gray_png, Layout};
use crate::FrameArgs;

/// `height_<i>` for slice channels, `density` for the last.
pub fn channel_name(ch: usize, channels: usize) -> String {
    if ch + 1 == channels {
        "density".into()
    } else {
        format!("height_{ch}")
    }
}

pub fn run(frame: &FrameArgs, out: &Path, cfg: &RunConfig) -> Result<()> {
    let layout = Layout::new(&frame.frame_dir);
    let cloud = layout.read_cloud(&frame.id)?;
    let calib = layout.read_calib(&frame.id)?;
    let plane = layout.read_plane(&frame.id, &calib)?;
    let map = rasterize(&cloud, &plane, &cfg.bev).map_err(|e| CliError::Usage(e.to_string()))?;
    for ch in 0..map.channels {
        let values = map.channel(ch);
        let max = values.iter().copied().fold(0.0f32, f32::max);
        let name = channel_name(ch, map.channels);
        write_gray_png(&out.join(format!("{name}.png")), map.rows, map.cols, &values, max)?;
    }
    let grid = Grid { rows: map.rows, cols: map.cols, channels: map.channels, data: map.data };
    write_file(&out.join("bev.grid"), &grid.to_bytes())?;
    log::info!("{}: {} points, {}×{}×{} grid", frame.id, cloud.len(), grid.rows, grid.cols, grid.channels);
    Ok(())
}
