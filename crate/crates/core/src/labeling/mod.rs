//! Per-view label assignment for proposals, mini-batch selection, BEV/image
//! disagreement counts and average precision.
//!
//! A proposal is labeled twice: once by its rotated footprint IoU with the
//! ground truths (BEV view) and once by the IoU of the projected 2D boxes
//! (image view). The two labels frequently disagree for boxes displaced
//! along the viewing ray.

mod ap;

pub use ap::{average_precision, interpolated_ap, precision_recall, Difficulty, EvalFrame, EvalGt};

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::geometry::{bev_iou, image_iou, project_box_to_image, AxisAlignedBox2D, OrientedBox3D};
use crate::kitti::CalibrationSet;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabelError {
    #[error("class {0} has no thresholds")]
    UnknownClass(ObjectClass),
    #[error("{what}: expected {expected} entries, found {found}")]
    ShapeMismatch { what: &'static str, expected: usize, found: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub enum ObjectClass {
    Car,
    Pedestrian,
    Cyclist,
}

impl ObjectClass {
    pub const ALL: [ObjectClass; 3] = [ObjectClass::Car, ObjectClass::Pedestrian, ObjectClass::Cyclist];

    /// Label-file name of the class.
    pub fn name(self) -> &'static str {
        match self {
            ObjectClass::Car => "Car",
            ObjectClass::Pedestrian => "Pedestrian",
            ObjectClass::Cyclist => "Cyclist",
        }
    }

    /// Maps KITTI label names onto the three evaluated classes; everything
    /// else (Van, Truck, DontCare, ...) is `None`.
    pub fn from_kitti_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == name)
    }

    /// Similar classes whose ground truths are ignored rather than counted
    /// as misses during evaluation.
    pub fn neighbor_name(self) -> Option<&'static str> {
        match self {
            ObjectClass::Car => Some("Van"),
            ObjectClass::Pedestrian => Some("Person_sitting"),
            ObjectClass::Cyclist => None,
        }
    }

    /// BEV IoU needed for a true positive in AP evaluation.
    pub fn ap_iou_threshold(self) -> f64 {
        match self {
            ObjectClass::Car => 0.7,
            _ => 0.5,
        }
    }
}

impl fmt::Display for ObjectClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ObjectClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown class {s:?} (expected Car, Pedestrian or Cyclist)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum View {
    Bev,
    Image,
}

/// Thresholds of one class in one view.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    /// Positive when IoU >= `pos_min`.
    pub pos_min: f64,
    /// Negative when IoU <= `neg_max` (or < with `neg_strict`).
    pub neg_max: f64,
    #[serde(default)]
    pub neg_strict: bool,
}

impl Thresholds {
    pub fn state(&self, iou: f64, class: ObjectClass) -> LabelState {
        let negative = if self.neg_strict { iou < self.neg_max } else { iou <= self.neg_max };
        if iou >= self.pos_min {
            LabelState::Positive(class)
        } else if negative {
            LabelState::Negative
        } else {
            LabelState::Ignore
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassThresholds {
    pub bev: Thresholds,
    pub image: Thresholds,
}

/// Thresholds per class. Serialized as a map from KITTI class name.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(try_from = "BTreeMap<String, ClassThresholds>", into = "BTreeMap<String, ClassThresholds>")]
pub struct ThresholdTable {
    pub entries: Vec<(ObjectClass, ClassThresholds)>,
}

impl TryFrom<BTreeMap<String, ClassThresholds>> for ThresholdTable {
    type Error = String;

    fn try_from(map: BTreeMap<String, ClassThresholds>) -> Result<Self, String> {
        let mut entries = Vec::with_capacity(map.len());
        for (name, t) in map {
            let class = ObjectClass::from_kitti_name(&name).ok_or_else(|| format!("unknown class {name}"))?;
            entries.push((class, t));
        }
        entries.sort_by_key(|e| e.0);
        Ok(Self { entries })
    }
}

impl From<ThresholdTable> for BTreeMap<String, ClassThresholds> {
    fn from(t: ThresholdTable) -> Self {
        t.entries.into_iter().map(|(c, v)| (c.name().to_string(), v)).collect()
    }
}

impl Default for ThresholdTable {
    fn default() -> Self {
        let car = ClassThresholds {
            bev: Thresholds { pos_min: 0.65, neg_max: 0.55, neg_strict: true },
            image: Thresholds { pos_min: 0.7, neg_max: 0.5, neg_strict: true },
        };
        let small = ClassThresholds {
            bev: Thresholds { pos_min: 0.45, neg_max: 0.4, neg_strict: false },
            image: Thresholds { pos_min: 0.6, neg_max: 0.4, neg_strict: false },
        };
        Self {
            entries: vec![(ObjectClass::Car, car), (ObjectClass::Pedestrian, small), (ObjectClass::Cyclist, small)],
        }
    }
}

impl ThresholdTable {
    pub fn get(&self, class: ObjectClass) -> Result<&ClassThresholds, LabelError> {
        self.entries.iter().find(|(c, _)| *c == class).map(|(_, t)| t).ok_or(LabelError::UnknownClass(class))
    }

    pub fn state(&self, class: ObjectClass, view: View, iou: f64) -> Result<LabelState, LabelError> {
        let t = self.get(class)?;
        Ok(match view {
            View::Bev => t.bev.state(iou, class),
            View::Image => t.image.state(iou, class),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelState {
    Positive(ObjectClass),
    Negative,
    Ignore,
}

impl LabelState {
    pub fn is_positive(self) -> bool {
        matches!(self, LabelState::Positive(_))
    }

    pub fn is_ignore(self) -> bool {
        self == LabelState::Ignore
    }

    pub fn short_name(self) -> &'static str {
        match self {
            LabelState::Positive(_) => "pos",
            LabelState::Negative => "neg",
            LabelState::Ignore => "ignore",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewLabel {
    pub state: LabelState,
    pub iou: f64,
    /// Best-overlapping ground truth of the same class, when any overlaps.
    pub matched_gt: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ProposalLabelSet {
    pub bev: Vec<ViewLabel>,
    pub img: Vec<ViewLabel>,
}

impl ProposalLabelSet {
    pub fn len(&self) -> usize {
        self.bev.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bev.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Proposal {
    pub box3d: OrientedBox3D,
    pub class: ObjectClass,
    /// Objectness score from the proposal stage.
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GtObject {
    pub box3d: OrientedBox3D,
    pub class: ObjectClass,
}

/// Camera setup used for image-view IoU.
#[derive(Debug, Clone, Copy)]
pub struct ImageView<'a> {
    pub calib: &'a CalibrationSet,
    pub image_size: (usize, usize),
}

impl ImageView<'_> {
    pub fn project(&self, b: &OrientedBox3D) -> Option<AxisAlignedBox2D> {
        project_box_to_image(b, self.calib, self.image_size).ok().map(|p| p.bbox)
    }
}

fn best_match(ious: impl Iterator<Item = (usize, f64)>) -> (f64, Option<usize>) {
    let (best, iou) = ious.fold((None, 0.0), |(bi, bv), (i, v)| if v > bv { (Some(i), v) } else { (bi, bv) });
    (iou, best)
}

/// Labels every proposal in both views against the ground truths of its class.
///
/// A proposal (or ground truth) that does not project into the image has
/// image IoU 0 with everything.
pub fn assign_labels(
    proposals: &[Proposal],
    gts: &[GtObject],
    view: ImageView<'_>,
    table: &ThresholdTable,
) -> Result<ProposalLabelSet, LabelError> {
    let gt_2d: Vec<Option<AxisAlignedBox2D>> = gts.iter().map(|g| view.project(&g.box3d)).collect();
    let mut out = ProposalLabelSet { bev: Vec::with_capacity(proposals.len()), img: Vec::with_capacity(proposals.len()) };
    for p in proposals {
        let t = table.get(p.class)?;
        let same = || gts.iter().enumerate().filter(|(_, g)| g.class == p.class);
        let (iou, matched_gt) = best_match(same().map(|(i, g)| (i, bev_iou(&p.box3d, &g.box3d))));
        out.bev.push(ViewLabel { state: t.bev.state(iou, p.class), iou, matched_gt });
        let p_2d = view.project(&p.box3d);
        let (iou, matched_gt) = best_match(same().map(|(i, _)| {
            let v = match (&p_2d, &gt_2d[i]) {
                (Some(a), Some(b)) => image_iou(a, b),
                _ => 0.0,
            };
            (i, v)
        }));
        out.img.push(ViewLabel { state: t.image.state(iou, p.class), iou, matched_gt });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MiniBatch {
    /// Selected proposal indices: positives, then negatives by descending score.
    pub indices: Vec<usize>,
    /// Members of `indices` that are not ignored in the image view.
    pub image_participants: Vec<usize>,
}

/// Selects all BEV positives plus the highest-scoring BEV negatives up to
/// `size`, then flags the members usable by the image-view sub-loss.
///
/// Selection is a pure function of its inputs: ties in score go to the lower
/// index.
pub fn sample_minibatch(labels: &ProposalLabelSet, scores: &[f64], size: usize) -> Result<MiniBatch, LabelError> {
    if scores.len() != labels.len() || labels.img.len() != labels.len() {
        return Err(LabelError::ShapeMismatch { what: "scores", expected: labels.len(), found: scores.len() });
    }
    let by_score = |idx: &mut Vec<usize>| idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut pos: Vec<usize> = (0..labels.len()).filter(|&i| labels.bev[i].state.is_positive()).collect();
    let mut neg: Vec<usize> = (0..labels.len()).filter(|&i| labels.bev[i].state == LabelState::Negative).collect();
    if pos.len() > size {
        by_score(&mut pos);
        pos.truncate(size);
        pos.sort_unstable();
    }
    by_score(&mut neg);
    neg.truncate(size - pos.len());
    let indices: Vec<usize> = pos.into_iter().chain(neg).collect();
    let image_participants = indices.iter().copied().filter(|&i| !labels.img[i].state.is_ignore()).collect();
    Ok(MiniBatch { indices, image_participants })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize)]
pub struct DiscrepancyStats {
    pub bev_neg_img_pos: usize,
    pub bev_pos_img_neg: usize,
    pub agree_pos: usize,
    pub agree_neg: usize,
    pub any_ignore: usize,
}

impl DiscrepancyStats {
    pub fn total(&self) -> usize {
        self.bev_neg_img_pos + self.bev_pos_img_neg + self.agree_pos + self.agree_neg + self.any_ignore
    }

    pub fn add(&mut self, other: &DiscrepancyStats) {
        self.bev_neg_img_pos += other.bev_neg_img_pos;
        self.bev_pos_img_neg += other.bev_pos_img_neg;
        self.agree_pos += other.agree_pos;
        self.agree_neg += other.agree_neg;
        self.any_ignore += other.any_ignore;
    }
}

pub fn discrepancy_stats(labels: &ProposalLabelSet) -> DiscrepancyStats {
    let mut s = DiscrepancyStats::default();
    for (b, i) in labels.bev.iter().zip(&labels.img) {
        use LabelState::*;
        match (b.state, i.state) {
            (Ignore, _) | (_, Ignore) => s.any_ignore += 1,
            (Negative, Positive(_)) => s.bev_neg_img_pos += 1,
            (Positive(_), Negative) => s.bev_pos_img_neg += 1,
            (Positive(_), Positive(_)) => s.agree_pos += 1,
            (Negative, Negative) => s.agree_neg += 1,
        }
    }
    s
}
