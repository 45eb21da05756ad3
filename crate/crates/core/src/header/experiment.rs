use super::dataset::{build_dataset, ChannelScaler, Dataset, DatasetConfig};
use super::train::{train, TrainConfig};
use super::{HeaderError, HeaderInput, Result, ToyHeaderModel};
use crate::codec::{decode_box_with_heading, CornerEncoding, OrientationEncoding};
use crate::geometry::bev_iou;
use crate::labeling::{assign_labels, ImageView, LabelState, Proposal, ThresholdTable};
use crate::mask::ForegroundMask;

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    pub train_scenes: usize,
    pub test_scenes: usize,
    /// Selects the scenes; shared by every run of an ablation.
    pub data_seed: u64,
    pub hidden: usize,
    /// [`TrainConfig::default`] with learning rate 3e-4.
    pub train: TrainConfig,
    /// One run per seed, which drives initialization and batch order.
    pub seeds: Vec<u64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetConfig::default(),
            train_scenes: 60,
            test_scenes: 30,
            data_seed: 0,
            hidden: 32,
            train: TrainConfig { learning_rate: 3e-4, ..TrainConfig::default() },
            seeds: (0..5).collect(),
        }
    }
}

impl ExperimentConfig {
    /// Ten unlabeled boxes per scene, most of them next to a labeled object.
    pub fn clutter_heavy() -> Self {
        let mut cfg = Self::default();
        cfg.dataset.scene.clutter = 10;
        cfg.dataset.scene.clutter_near_objects = 0.8;
        cfg
    }

    /// No clutter in the scenes and no proposals sized after clutter.
    pub fn clutter_free() -> Self {
        let mut cfg = Self::default();
        cfg.dataset.scene.clutter = 0;
        cfg.dataset.mix.clutter = 0;
        cfg
    }

    fn scene_seeds(&self) -> (std::ops::Range<u64>, std::ops::Range<u64>) {
        let base = self.data_seed.wrapping_mul(1 << 32);
        let train = base..base + self.train_scenes as u64;
        let test_base = base + (1 << 31);
        (train, test_base..test_base + self.test_scenes as u64)
    }

    /// Training and held-out sets, both standardized with the training
    /// set's channel statistics.
    pub fn datasets(&self) -> Result<(Dataset, Dataset)> {
        let (tr, te) = self.scene_seeds();
        let build = |seeds| build_dataset(&self.dataset, seeds).map_err(|e| HeaderError::InvalidConfig(e.to_string()));
        let (mut train, mut test) = (build(tr)?, build(te)?);
        let scaler = ChannelScaler::fit(&train);
        train.standardize(&scaler);
        test.standardize(&scaler);
        Ok((train, test))
    }
}

/// Held-out accuracies in [0, 1] and decoded-box quality.
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct BranchMetrics {
    /// Image scores against the image label of the fusion-decoded box.
    pub image_accuracy: f64,
    /// Fusion scores against the BEV label of the fusion-decoded box.
    pub fusion_accuracy: f64,
    /// BEV scores against the proposal's BEV label.
    pub bev_accuracy: f64,
    /// Image scores against the proposal's own image label.
    pub image_accuracy_proposal: f64,
    /// Fusion scores against the proposal's own BEV label.
    pub fusion_accuracy_proposal: f64,
    /// BEV IoU between fusion-decoded boxes and their ground truth, over
    /// BEV-positive proposals.
    pub mean_iou_decoded: f64,
}

impl BranchMetrics {
    fn fields(&self) -> [(&'static str, &'static str, f64); 6] {
        [
            ("image", "accuracy", self.image_accuracy),
            ("fusion", "accuracy", self.fusion_accuracy),
            ("bev", "accuracy", self.bev_accuracy),
            ("image", "accuracy_proposal_labels", self.image_accuracy_proposal),
            ("fusion", "accuracy_proposal_labels", self.fusion_accuracy_proposal),
            ("fusion", "mean_iou_decoded", self.mean_iou_decoded),
        ]
    }

    fn mean(items: &[BranchMetrics]) -> BranchMetrics {
        let n = items.len().max(1) as f64;
        let avg = |f: fn(&BranchMetrics) -> f64| items.iter().map(f).fold(0.0, |a, b| a + b) / n;
        BranchMetrics {
            image_accuracy: avg(|m| m.image_accuracy),
            fusion_accuracy: avg(|m| m.fusion_accuracy),
            bev_accuracy: avg(|m| m.bev_accuracy),
            image_accuracy_proposal: avg(|m| m.image_accuracy_proposal),
            fusion_accuracy_proposal: avg(|m| m.fusion_accuracy_proposal),
            mean_iou_decoded: avg(|m| m.mean_iou_decoded),
        }
    }
}

fn argmax(v: &[f64]) -> usize {
    v.iter().enumerate().fold(0, |best, (i, &x)| if x > v[best] { i } else { best })
}

#[derive(Default)]
struct Tally {
    hit: usize,
    total: usize,
}

impl Tally {
    fn add(&mut self, predicted: usize, label: Option<usize>) {
        if let Some(l) = label {
            self.total += 1;
            self.hit += (predicted == l) as usize;
        }
    }

    fn rate(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.hit as f64 / self.total as f64
        }
    }
}

/// Held-out metrics of `model` on `data`. Each fusion output is decoded to a
/// box that is labeled again in both views, so the image branch is scored
/// on the same boxes as the fusion branch.
pub fn evaluate(model: &ToyHeaderModel, data: &Dataset, use_mask: bool) -> Result<BranchMetrics> {
    let table = ThresholdTable::default();
    let ones = ForegroundMask::ones(model.config.k);
    let index = |state: LabelState| match state {
        LabelState::Negative => Some(0),
        LabelState::Ignore => None,
        LabelState::Positive(c) => data.classes.iter().position(|&k| k == c).map(|i| i + 1),
    };
    let [mut img, mut fus, mut bev, mut img_p, mut fus_p] = std::array::from_fn::<Tally, 5, _>(|_| Tally::default());
    let (mut iou_sum, mut iou_n) = (0.0, 0usize);
    for (s, m) in data.samples.iter().zip(&data.meta) {
        let input = HeaderInput { image: &s.image, bev: &s.bev, mask: if use_mask { &s.mask } else { &ones } };
        let out = model.forward(&input)?;
        let scene = &data.scenes[m.scene];
        let enc = CornerEncoding::from_array(&out.s_fusion);
        let heading = OrientationEncoding { cos: out.a_fusion[0], sin: out.a_fusion[1] };
        let decoded = decode_box_with_heading(&enc, &m.proposal.box3d, &scene.plane, &heading).unwrap_or(m.proposal.box3d);
        let view = ImageView { calib: &scene.calib, image_size: scene.image_size };
        let relabel = assign_labels(&[Proposal { box3d: decoded, ..m.proposal }], &scene.gts, view, &table)
            .expect("default table covers every class");
        let (y_img, y_fus, y_bev) = (argmax(&out.y_img), argmax(&out.y_fusion), argmax(&out.y_bev));
        img.add(y_img, index(relabel.img[0].state));
        fus.add(y_fus, index(relabel.bev[0].state));
        bev.add(y_bev, index(m.bev.state));
        img_p.add(y_img, index(m.img.state));
        fus_p.add(y_fus, index(m.bev.state));
        if let (true, Some(g)) = (m.bev.state.is_positive(), m.bev.matched_gt) {
            iou_sum += bev_iou(&decoded, &scene.gts[g].box3d);
            iou_n += 1;
        }
    }
    Ok(BranchMetrics {
        image_accuracy: img.rate(),
        fusion_accuracy: fus.rate(),
        bev_accuracy: bev.rate(),
        image_accuracy_proposal: img_p.rate(),
        fusion_accuracy_proposal: fus_p.rate(),
        mean_iou_decoded: if iou_n == 0 { 0.0 } else { iou_sum / iou_n as f64 },
    })
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub metrics: BranchMetrics,
    /// Training loss per step.
    pub trace: Vec<f64>,
}

/// All runs of one setting of an ablation.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ExperimentReport {
    /// `ratio` or `mask`.
    pub setting: String,
    /// λ_sub/λ_cls, or 1/0 for mask on/off.
    pub value: f64,
    pub runs: Vec<RunRecord>,
}

/// One CSV line of a report.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ReportRow {
    pub branch: String,
    pub metric: String,
    pub setting: String,
    pub value_setting: f64,
    pub seed: u64,
    pub value: f64,
}

impl ExperimentReport {
    pub fn mean(&self) -> BranchMetrics {
        BranchMetrics::mean(&self.runs.iter().map(|r| r.metrics).collect::<Vec<_>>())
    }

    pub fn rows(&self) -> Vec<ReportRow> {
        self.runs
            .iter()
            .flat_map(|r| {
                r.metrics.fields().map(|(branch, metric, value)| ReportRow {
                    branch: branch.into(),
                    metric: metric.into(),
                    setting: self.setting.clone(),
                    value_setting: self.value,
                    seed: r.seed,
                    value,
                })
            })
            .collect()
    }
}

fn run_setting(
    cfg: &ExperimentConfig,
    data: &(Dataset, Dataset),
    setting: &str,
    value: f64,
    tc: TrainConfig,
) -> Result<ExperimentReport> {
    let (train_set, test_set) = data;
    let model_cfg = super::ModelConfig { hidden: cfg.hidden, ..cfg.dataset.model_config() };
    let inputs = train_set.inputs();
    let targets = train_set.targets();
    let mut runs = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let init = ToyHeaderModel::new(model_cfg, seed);
        let out = train(&init, &inputs, &targets, &TrainConfig { seed, ..tc })?;
        let metrics = evaluate(&out.model, test_set, tc.use_mask)?;
        log::info!("{setting}={value} seed {seed}: {metrics:?}");
        runs.push(RunRecord { seed, metrics, trace: out.trace });
    }
    Ok(ExperimentReport { setting: setting.into(), value, runs })
}

/// Trains every seed at each sub-loss ratio on the same data.
pub fn run_lambda_ablation(cfg: &ExperimentConfig, ratios: [f64; 2]) -> Result<(ExperimentReport, ExperimentReport)> {
    let data = cfg.datasets()?;
    let a = run_setting(cfg, &data, "ratio", ratios[0], TrainConfig { sub_ratio: ratios[0], ..cfg.train })?;
    let b = run_setting(cfg, &data, "ratio", ratios[1], TrainConfig { sub_ratio: ratios[1], ..cfg.train })?;
    Ok((a, b))
}

/// Mask on, then mask off, matched seeds and data.
pub fn run_mask_ablation(cfg: &ExperimentConfig) -> Result<(ExperimentReport, ExperimentReport)> {
    let data = cfg.datasets()?;
    let on = run_setting(cfg, &data, "mask", 1.0, TrainConfig { use_mask: true, ..cfg.train })?;
    let off = run_setting(cfg, &data, "mask", 0.0, TrainConfig { use_mask: false, ..cfg.train })?;
    Ok((on, off))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::LidarSpec;

    fn tiny() -> ExperimentConfig {
        let mut cfg = ExperimentConfig { train_scenes: 3, test_scenes: 2, seeds: vec![0, 1], ..Default::default() };
        cfg.dataset.scene.lidar = LidarSpec { azimuth_steps: 360, ..Default::default() };
        cfg.dataset.rois_per_scene = 16;
        cfg.train.steps = 20;
        cfg
    }

    #[test]
    fn identical_settings_give_identical_reports() {
        let cfg = tiny();
        let (a, b) = run_lambda_ablation(&cfg, [1.0, 1.0]).unwrap();
        assert_eq!(a, b);
        let (on, _) = run_mask_ablation(&cfg).unwrap();
        let (on2, _) = run_mask_ablation(&cfg).unwrap();
        assert_eq!(on, on2);
    }

    #[test]
    fn report_arity_and_ranges() {
        let cfg = tiny();
        let (a, b) = run_lambda_ablation(&cfg, [0.001, 1.0]).unwrap();
        for r in [&a, &b] {
            assert_eq!(r.runs.len(), 2);
            assert!(r.runs.iter().all(|run| run.trace.len() == 20));
            let rows = r.rows();
            assert_eq!(rows.iter().filter(|row| row.branch == "image" && row.metric == "accuracy").count(), 2);
            assert!(rows.iter().filter(|row| row.metric.starts_with("accuracy")).all(|row| (0.0..=1.0).contains(&row.value)));
        }
        assert_eq!((a.value, b.value), (0.001, 1.0));
    }

    #[test]
    fn argmax_prefers_first_of_ties() {
        assert_eq!(argmax(&[0.1, 0.3, 0.3]), 1);
        assert_eq!(argmax(&[0.0]), 0);
    }
}
