use std::path::Path;

use mvdet_core::kitti::label_to_box;
use mvdet_core::labeling::{
    assign_labels, average_precision, discrepancy_stats, DiscrepancyStats, Difficulty, EvalFrame, GtObject, ImageView,
};
use mvdet_core::{GroundTruthLabel, ObjectClass, Proposal};
use rayon::prelude::*;

use super::{csv_done, csv_row, csv_writer};
use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::layout::{read_text, Layout, LABELS};

/// Columns of `discrepancy.csv`; the last row has frame `all`.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct DiscrepancyRow {
    pub frame: String,
    pub bev_neg_img_pos: usize,
    pub bev_pos_img_neg: usize,
    pub agree_pos: usize,
    pub agree_neg: usize,
    pub any_ignore: usize,
    pub total: usize,
}

impl DiscrepancyRow {
    fn new(frame: &str, s: &DiscrepancyStats) -> Self {
        Self {
            frame: frame.into(),
            bev_neg_img_pos: s.bev_neg_img_pos,
            bev_pos_img_neg: s.bev_pos_img_neg,
            agree_pos: s.agree_pos,
            agree_neg: s.agree_neg,
            any_ignore: s.any_ignore,
            total: s.total(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ApRow {
    pub class: String,
    pub difficulty: String,
    pub iou_threshold: f64,
    pub ap: f64,
}

fn read_results(path: &Path) -> Result<Vec<GroundTruthLabel>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    mvdet_core::kitti::parse_labels(&read_text(path)?).map_err(|e| CliError::input(path, e))
}

fn gt_objects(labels: &[GroundTruthLabel], layout: &Layout, id: &str) -> Result<Vec<GtObject>> {
    let calib = layout.read_calib(id)?;
    let mut out = Vec::new();
    for l in labels {
        if let Some(class) = ObjectClass::from_kitti_name(&l.class_name) {
            let box3d = label_to_box(l, &calib).map_err(|e| CliError::input(&layout.path(LABELS, id), e))?;
            out.push(GtObject { box3d, class });
        }
    }
    Ok(out)
}

fn frame_stats(layout: &Layout, proposals_dir: &Path, id: &str, cfg: &RunConfig) -> Result<DiscrepancyStats> {
    let calib = layout.read_calib(id)?;
    let gts = gt_objects(&layout.read_labels(LABELS, id)?, layout, id)?;
    let path = proposals_dir.join(format!("{id}.txt"));
    let mut proposals = Vec::new();
    for line in read_results(&path)? {
        let class = ObjectClass::from_kitti_name(&line.class_name)
            .ok_or_else(|| CliError::input(&path, format!("unknown proposal class {:?}", line.class_name)))?;
        let box3d = label_to_box(&line, &calib).map_err(|e| CliError::input(&path, e))?;
        proposals.push(Proposal { box3d, class, score: line.score.unwrap_or(1.0) });
    }
    let view = ImageView { calib: &calib, image_size: layout.image_size(id)? };
    let labels = assign_labels(&proposals, &gts, view, &cfg.thresholds).map_err(|e| CliError::input(&path, e))?;
    Ok(discrepancy_stats(&labels))
}

pub fn stats(frame_dir: &Path, proposals_dir: &Path, out: &Path, cfg: &RunConfig) -> Result<()> {
    let layout = Layout::new(frame_dir);
    let ids = layout.ids(LABELS)?;
    let per_frame: Vec<DiscrepancyStats> =
        ids.par_iter().map(|id| frame_stats(&layout, proposals_dir, id, cfg)).collect::<Result<_>>()?;
    let path = out.join("discrepancy.csv");
    let mut w = csv_writer(&path)?;
    let mut all = DiscrepancyStats::default();
    for (id, s) in ids.iter().zip(&per_frame) {
        all.add(s);
        csv_row(&path, &mut w, DiscrepancyRow::new(id, s))?;
    }
    csv_row(&path, &mut w, DiscrepancyRow::new("all", &all))?;
    log::info!("{} frames: {all:?}", ids.len());
    csv_done(&path, w)
}

pub fn eval_ap(gt_dir: &Path, det_dir: &Path, class: ObjectClass, out: &Path) -> Result<()> {
    let layout = Layout::new(gt_dir);
    let ids = layout.ids(LABELS)?;
    let loaded: Vec<_> = ids
        .par_iter()
        .map(|id| {
            let calib = layout.read_calib(id)?;
            let gts = layout.read_labels(LABELS, id)?;
            let dets = read_results(&det_dir.join(format!("{id}.txt")))?;
            Ok((id, calib, gts, dets))
        })
        .collect::<Result<_>>()?;
    let threshold = class.ap_iou_threshold();
    let path = out.join("ap.csv");
    let mut w = csv_writer(&path)?;
    for difficulty in Difficulty::ALL {
        let mut frames = Vec::with_capacity(loaded.len());
        for (id, calib, gts, dets) in &loaded {
            let frame = EvalFrame::from_labels(dets, gts, class, difficulty, calib)
                .map_err(|e| CliError::input(&layout.path(LABELS, id), e))?;
            frames.push(frame);
        }
        let ap = average_precision(&frames, threshold);
        log::info!("{class} {}: AP {ap:.4}", difficulty.name());
        csv_row(&path, &mut w, ApRow { class: class.name().into(), difficulty: difficulty.name().into(), iou_threshold: threshold, ap })?;
    }
    csv_done(&path, w)
}
