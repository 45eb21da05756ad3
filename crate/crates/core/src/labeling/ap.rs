use super::ObjectClass;
use crate::geometry::{bev_iou, OrientedBox3D};
use crate::kitti::{label_to_box, CalibrationSet, GroundTruthLabel, Result};

const RECALL_POINTS: usize = 40;

/// KITTI difficulty levels, each admitting ground truths by 2D box height,
/// occlusion level and truncation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Difficulty {
    Easy,
    Moderate,
    Hard,
}

impl Difficulty {
    pub const ALL: [Difficulty; 3] = [Difficulty::Easy, Difficulty::Moderate, Difficulty::Hard];

    pub fn name(self) -> &'static str {
        match self {
            Difficulty::Easy => "easy",
            Difficulty::Moderate => "moderate",
            Difficulty::Hard => "hard",
        }
    }

    /// (min bbox height px, max occlusion, max truncation)
    fn limits(self) -> (f64, i32, f64) {
        match self {
            Difficulty::Easy => (40.0, 0, 0.15),
            Difficulty::Moderate => (25.0, 1, 0.3),
            Difficulty::Hard => (25.0, 2, 0.5),
        }
    }

    pub fn admits(self, label: &GroundTruthLabel) -> bool {
        let (min_h, max_occ, max_trunc) = self.limits();
        label.bbox_height() >= min_h && label.occlusion <= max_occ && label.truncation <= max_trunc
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalGt {
    pub box3d: OrientedBox3D,
    /// Matches to an ignored ground truth are neither true nor false positives.
    pub ignore: bool,
}

/// Detections and ground truths of one frame for one class.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalFrame {
    pub detections: Vec<(OrientedBox3D, f64)>,
    pub gts: Vec<EvalGt>,
}

impl EvalFrame {
    /// Builds an evaluation frame from KITTI label and result lines.
    ///
    /// Ground truths of `class` outside `difficulty`, and those of its
    /// neighbouring class (Van for Car, Person_sitting for Pedestrian), are
    /// kept as ignored. Results of other classes are dropped.
    pub fn from_labels(
        detections: &[GroundTruthLabel],
        gts: &[GroundTruthLabel],
        class: ObjectClass,
        difficulty: Difficulty,
        calib: &CalibrationSet,
    ) -> Result<Self> {
        let mut frame = EvalFrame::default();
        for d in detections.iter().filter(|d| d.class_name == class.name()) {
            frame.detections.push((label_to_box(d, calib)?, d.score.unwrap_or(1.0)));
        }
        for g in gts {
            let ignore = if g.class_name == class.name() {
                !difficulty.admits(g)
            } else if Some(g.class_name.as_str()) == class.neighbor_name() {
                true
            } else {
                continue;
            };
            frame.gts.push(EvalGt { box3d: label_to_box(g, calib)?, ignore });
        }
        Ok(frame)
    }
}

/// (recall, precision) after each counted detection, in descending score order
/// across all frames (ties broken by frame, then detection index).
///
/// Each detection greedily takes the unmatched ground truth with the highest
/// BEV IoU at or above `iou_threshold`, preferring non-ignored ones.
pub fn precision_recall(frames: &[EvalFrame], iou_threshold: f64) -> Vec<(f64, f64)> {
    let n_gt: usize = frames.iter().map(|f| f.gts.iter().filter(|g| !g.ignore).count()).sum();
    let mut order: Vec<(usize, usize)> =
        frames.iter().enumerate().flat_map(|(fi, f)| (0..f.detections.len()).map(move |di| (fi, di))).collect();
    order.sort_by(|a, b| {
        let (sa, sb) = (frames[a.0].detections[a.1].1, frames[b.0].detections[b.1].1);
        sb.total_cmp(&sa).then(a.cmp(b))
    });
    let mut taken: Vec<Vec<bool>> = frames.iter().map(|f| vec![false; f.gts.len()]).collect();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut curve = Vec::new();
    for (fi, di) in order {
        let det = &frames[fi].detections[di].0;
        let mut best: Option<(bool, f64, usize)> = None;
        for (gi, g) in frames[fi].gts.iter().enumerate() {
            if taken[fi][gi] {
                continue;
            }
            let iou = bev_iou(det, &g.box3d);
            if iou < iou_threshold {
                continue;
            }
            // Non-ignored beats ignored, then higher IoU.
            let key = (!g.ignore, iou, gi);
            let better = match best {
                None => true,
                Some((bn, bi, _)) => (key.0, key.1) > (bn, bi),
            };
            if better {
                best = Some(key);
            }
        }
        match best {
            Some((counted, _, gi)) => {
                taken[fi][gi] = true;
                if !counted {
                    continue;
                }
                tp += 1;
            }
            None => fp += 1,
        }
        let recall = if n_gt == 0 { 0.0 } else { tp as f64 / n_gt as f64 };
        curve.push((recall, tp as f64 / (tp + fp) as f64));
    }
    curve
}

/// 40-point interpolated AP: mean over r ∈ {1/40, ..., 1} of the best
/// precision at recall ≥ r.
pub fn interpolated_ap(curve: &[(f64, f64)]) -> f64 {
    let mut sum = 0.0;
    for k in 1..=RECALL_POINTS {
        let r = k as f64 / RECALL_POINTS as f64;
        sum += curve.iter().filter(|(rec, _)| *rec >= r).map(|(_, p)| *p).fold(0.0, f64::max);
    }
    sum / RECALL_POINTS as f64
}

/// BEV average precision; 0 when there is no counted ground truth.
pub fn average_precision(frames: &[EvalFrame], iou_threshold: f64) -> f64 {
    if frames.iter().all(|f| f.gts.iter().all(|g| g.ignore)) {
        return 0.0;
    }
    interpolated_ap(&precision_recall(frames, iou_threshold))
}
