mod augment;
mod bev;
mod experiment;
mod labels;
mod mask;
mod scenes;

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::Command;

pub use bev::channel_name;
pub use mask::{cell_of, MaskRow};

pub fn dispatch(cmd: &Command, cfg: &RunConfig) -> Result<()> {
    match cmd {
        Command::Bev { frame, out } => bev::run(frame, out, cfg),
        Command::Mask { frame, proposals, out } => mask::run(frame, proposals, out, cfg),
        Command::LabelStats { frame_dir, proposals_dir, out } => labels::stats(frame_dir, proposals_dir, out, cfg),
        Command::GenScenes { count, proposals, out } => scenes::run(*count, *proposals, out, cfg),
        Command::Experiment { kind, ratios, out } => experiment::run(*kind, ratios, out, cfg),
        Command::EvalAp { gt_dir, det_dir, class, out } => labels::eval_ap(gt_dir, det_dir, *class, out),
        Command::Flip { frame, out } => augment::flip(frame, out),
        Command::Jitter { frame_dir, out } => augment::jitter(frame_dir, out, cfg),
    }
}

fn require(path: &std::path::Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::input(path, "no such file or directory"))
    }
}

/// Rejects missing inputs before anything is written.
pub fn check_inputs(cmd: &Command) -> Result<()> {
    use crate::layout::{Layout, CALIB, IMAGES, LABELS, PLANES, VELODYNE};
    let frame_files = |f: &crate::FrameArgs, kinds: &[&str]| -> Result<()> {
        let layout = Layout::new(&f.frame_dir);
        kinds.iter().try_for_each(|k| require(&layout.path(k, &f.id)))
    };
    match cmd {
        Command::Bev { frame, .. } => frame_files(frame, &[VELODYNE, CALIB, PLANES]),
        Command::Mask { frame, proposals, .. } => {
            frame_files(frame, &[VELODYNE, CALIB, IMAGES])?;
            require(proposals)
        }
        Command::Flip { frame, .. } => frame_files(frame, &[VELODYNE, CALIB, IMAGES, LABELS]),
        Command::LabelStats { frame_dir, proposals_dir, .. } => {
            require(&frame_dir.join(LABELS))?;
            require(proposals_dir)
        }
        Command::EvalAp { gt_dir, det_dir, .. } => {
            require(&gt_dir.join(LABELS))?;
            require(det_dir)
        }
        Command::Jitter { frame_dir, .. } => require(&frame_dir.join(IMAGES)),
        Command::GenScenes { .. } | Command::Experiment { .. } => Ok(()),
    }
}

fn csv_writer(path: &std::path::Path) -> Result<csv::Writer<std::fs::File>> {
    crate::layout::write_file(path, &[])?;
    csv::Writer::from_path(path).map_err(|e| CliError::output(path, std::io::Error::other(e)))
}

fn csv_done<W: std::io::Write>(path: &std::path::Path, w: csv::Writer<W>) -> Result<()> {
    w.into_inner().map_err(|e| CliError::output(path, e.into_error())).map(drop)
}

fn csv_row<W: std::io::Write>(path: &std::path::Path, w: &mut csv::Writer<W>, row: impl serde::Serialize) -> Result<()> {
    w.serialize(row).map_err(|e| CliError::output(path, std::io::Error::other(e)))
}
