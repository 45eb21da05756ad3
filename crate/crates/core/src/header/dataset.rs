use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{HeaderInput, ModelConfig};
use crate::bev::{crop_resize_bev, rasterize, BevConfig};
use crate::codec::{encode_box, encode_orientation};
use crate::geometry::{project_box_to_image, OrientedBox3D};
use crate::kitti::{CalibrationSet, GroundPlane};
use crate::labeling::{
    assign_labels, discrepancy_stats, sample_minibatch, DiscrepancyStats, GtObject, LabelState, ObjectClass, Proposal,
    ThresholdTable, ViewLabel,
};
use crate::loss::SampleTargets;
use crate::mask::{build_sparse_depth_map, foreground_mask, ForegroundMask, MaskConfig};
use crate::resample::crop_resize_bilinear;
use crate::synth::{generate_proposals, generate_scene, perturb_box, ProposalConfig, ProposalMode, SceneSpec, SynthError};

/// Proposals drawn per scene: per ground truth for the first three, per
/// clutter box for `clutter`, per scene for `random`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProposalMix {
    pub perturb: usize,
    pub depth_aligned: usize,
    pub clutter: usize,
    pub random: usize,
}

impl Default for ProposalMix {
    fn default() -> Self {
        Self { perturb: 6, depth_aligned: 4, clutter: 3, random: 6 }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    pub scene: SceneSpec,
    pub proposals: ProposalConfig,
    pub mix: ProposalMix,
    /// Mini-batch size used to pick the regions of one scene.
    pub rois_per_scene: usize,
    pub classes: Vec<ObjectClass>,
    pub mask: MaskConfig,
    pub bev: BevConfig,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            scene: SceneSpec::default(),
            proposals: ProposalConfig::default(),
            mix: ProposalMix::default(),
            rois_per_scene: 64,
            classes: ObjectClass::ALL.to_vec(),
            mask: MaskConfig::default(),
            bev: BevConfig::default(),
        }
    }
}

impl DatasetConfig {
    pub fn model_config(&self) -> ModelConfig {
        ModelConfig { k: self.mask.k, num_scores: self.classes.len() + 1, ..Default::default() }
    }

    /// Score index of a label: 0 for background, `None` when ignored.
    fn class_index(&self, state: LabelState) -> Option<usize> {
        match state {
            LabelState::Negative => Some(0),
            LabelState::Ignore => None,
            LabelState::Positive(c) => self.classes.iter().position(|&k| k == c).map(|i| i + 1),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub image: Vec<f32>,
    pub bev: Vec<f32>,
    pub mask: ForegroundMask,
    pub targets: SampleTargets,
}

/// What evaluation needs to relabel a decoded box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleMeta {
    pub scene: usize,
    pub proposal: Proposal,
    pub bev: ViewLabel,
    pub img: ViewLabel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneRecord {
    pub calib: CalibrationSet,
    pub image_size: (usize, usize),
    pub plane: GroundPlane,
    pub gts: Vec<GtObject>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub meta: Vec<SampleMeta>,
    pub scenes: Vec<SceneRecord>,
    pub classes: Vec<ObjectClass>,
    /// Label agreement between the views over all selected regions.
    pub stats: DiscrepancyStats,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn inputs(&self) -> Vec<HeaderInput<'_>> {
        self.samples.iter().map(|s| HeaderInput { image: &s.image, bev: &s.bev, mask: &s.mask }).collect()
    }

    pub fn targets(&self) -> Vec<SampleTargets> {
        self.samples.iter().map(|s| s.targets).collect()
    }

    pub fn standardize(&mut self, scaler: &ChannelScaler) {
        for s in &mut self.samples {
            ChannelScaler::apply(&mut s.image, &scaler.image);
            ChannelScaler::apply(&mut s.bev, &scaler.bev);
        }
    }
}

/// Per-channel `(mean, 1/sd)` of the image and BEV crops.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ChannelScaler {
    pub image: Vec<(f32, f32)>,
    pub bev: Vec<(f32, f32)>,
}

impl ChannelScaler {
    pub fn fit(data: &Dataset) -> Self {
        let channels = |get: fn(&Sample) -> &[f32], c: usize| -> Vec<(f32, f32)> {
            let mut sum = vec![0.0f64; c];
            let mut sq = vec![0.0f64; c];
            let mut n = 0usize;
            for s in &data.samples {
                for px in get(s).chunks_exact(c) {
                    for (i, &v) in px.iter().enumerate() {
                        sum[i] += v as f64;
                        sq[i] += v as f64 * v as f64;
                    }
                    n += 1;
                }
            }
            (0..c)
                .map(|i| {
                    if n == 0 {
                        return (0.0, 1.0);
                    }
                    let mean = sum[i] / n as f64;
                    let sd = (sq[i] / n as f64 - mean * mean).max(0.0).sqrt();
                    (mean as f32, if sd > 1e-6 { (1.0 / sd) as f32 } else { 1.0 })
                })
                .collect()
        };
        Self { image: channels(|s| &s.image, super::IMAGE_CHANNELS), bev: channels(|s| &s.bev, super::BEV_CHANNELS) }
    }

    fn apply(values: &mut [f32], stats: &[(f32, f32)]) {
        for px in values.chunks_exact_mut(stats.len()) {
            for (v, &(m, inv)) in px.iter_mut().zip(stats) {
                *v = (*v - m) * inv;
            }
        }
    }
}

struct SceneSamples {
    samples: Vec<Sample>,
    meta: Vec<(Proposal, ViewLabel, ViewLabel)>,
    record: SceneRecord,
    stats: DiscrepancyStats,
}

/// Class whose mid-range dimensions are nearest to `b`'s in log scale.
fn closest_class(spec: &SceneSpec, classes: &[ObjectClass], b: &OrientedBox3D) -> ObjectClass {
    let dist = |c: ObjectClass| {
        let r = spec.dims_for(c);
        let mid = |(lo, hi): (f64, f64)| 0.5 * (lo + hi);
        [(b.dims.l, r.l), (b.dims.w, r.w), (b.dims.h, r.h)].iter().map(|&(v, rng)| (v / mid(rng)).ln().powi(2)).sum::<f64>()
    };
    classes.iter().copied().min_by(|&a, &c| dist(a).total_cmp(&dist(c))).unwrap_or(ObjectClass::Car)
}

fn scene_proposals(scene: &crate::synth::SyntheticScene, cfg: &DatasetConfig) -> Vec<Proposal> {
    let mut out = Vec::new();
    let modes = [
        (ProposalMode::Perturb, cfg.mix.perturb, 1),
        (ProposalMode::DepthAligned, cfg.mix.depth_aligned, 2),
        (ProposalMode::Random, cfg.mix.random, 3),
    ];
    for (mode, per_gt, salt) in modes {
        if per_gt == 0 {
            continue;
        }
        let pc = ProposalConfig { per_gt, seed: cfg.proposals.seed.wrapping_add(salt), ..cfg.proposals };
        out.extend(generate_proposals(scene, mode, &pc).into_iter().filter(|p| p.feasible).map(|p| p.proposal));
    }
    // Clutter proposals take the class whose typical size they resemble,
    // as a shape-driven proposal stage would.
    let mut rng = ChaCha8Rng::seed_from_u64(scene.spec.seed ^ 0x5eed_c1a7);
    for o in scene.objects.iter().filter(|o| o.class.is_none()) {
        let class = closest_class(&scene.spec, &cfg.classes, &o.box3d);
        for _ in 0..cfg.mix.clutter {
            let (b, score) = perturb_box(&o.box3d, &cfg.proposals, &mut rng);
            out.push(Proposal { box3d: b, class, score });
        }
    }
    out.retain(|p| cfg.classes.contains(&p.class));
    out
}

fn build_scene(cfg: &DatasetConfig, seed: u64, table: &ThresholdTable) -> Result<SceneSamples, SynthError> {
    let scene = generate_scene(&SceneSpec { seed, ..cfg.scene.clone() })?;
    let k = cfg.mask.k;
    let (w, h) = scene.image_size();
    let bev = rasterize(&scene.cloud, &scene.plane, &cfg.bev).map_err(|e| SynthError::InvalidSpec(e.to_string()))?;
    let sparse = build_sparse_depth_map(&scene.cloud, &scene.calib, (w, h));
    let image = scene.image.to_unit_f32();
    let gts: Vec<GtObject> = scene.gt_objects().into_iter().filter(|g| cfg.classes.contains(&g.class)).collect();
    let proposals = scene_proposals(&scene, cfg);
    let labels = assign_labels(&proposals, &gts, scene.view(), table).expect("default table covers every class");
    let scores: Vec<f64> = proposals.iter().map(|p| p.score).collect();
    let batch = sample_minibatch(&labels, &scores, cfg.rois_per_scene).expect("labels and scores align");
    let mut out = SceneSamples {
        samples: Vec::new(),
        meta: Vec::new(),
        record: SceneRecord { calib: scene.calib.clone(), image_size: (w, h), plane: scene.plane, gts: gts.clone() },
        stats: DiscrepancyStats::default(),
    };
    for &i in &batch.indices {
        let p = proposals[i];
        let Ok(proj) = project_box_to_image(&p.box3d, &scene.calib, (w, h)) else { continue };
        let Ok(bev_crop) = crop_resize_bev(&bev, &p.box3d, k) else { continue };
        let Ok(mask) = foreground_mask(&sparse, &proj, &cfg.mask) else { continue };
        let b = proj.bbox;
        let img_crop = crop_resize_bilinear(&image, h, w, 3, (b.top + 0.5, b.bottom + 0.5), (b.left + 0.5, b.right + 0.5), k, k);
        let (bl, il) = (labels.bev[i], labels.img[i]);
        let mut t = SampleTargets::background();
        t.bev_class = cfg.class_index(bl.state);
        t.img_class = cfg.class_index(il.state);
        if let (true, Some(g)) = (t.bev_positive(), bl.matched_gt) {
            t.bev_reg = encode_box(&gts[g].box3d, &p.box3d, &scene.plane).to_array();
            t.angle = encode_orientation(gts[g].box3d.yaw).to_array();
        }
        if let (true, Some(g)) = (t.img_positive(), il.matched_gt) {
            t.img_reg = encode_box(&gts[g].box3d, &p.box3d, &scene.plane).to_array();
        }
        out.samples.push(Sample { image: img_crop, bev: bev_crop, mask, targets: t });
        out.meta.push((p, bl, il));
    }
    let kept = crate::labeling::ProposalLabelSet {
        bev: out.meta.iter().map(|m| m.1).collect(),
        img: out.meta.iter().map(|m| m.2).collect(),
    };
    out.stats = discrepancy_stats(&kept);
    Ok(out)
}

/// Samples from the scenes with the given seeds. Scenes are built in
/// parallel and concatenated in seed order.
pub fn build_dataset(cfg: &DatasetConfig, seeds: impl IntoIterator<Item = u64>) -> Result<Dataset, SynthError> {
    let seeds: Vec<u64> = seeds.into_iter().collect();
    let table = ThresholdTable::default();
    let scenes: Vec<SceneSamples> =
        seeds.par_iter().map(|&s| build_scene(cfg, s, &table)).collect::<Result<_, _>>()?;
    let mut ds = Dataset { classes: cfg.classes.clone(), ..Default::default() };
    for (si, s) in scenes.into_iter().enumerate() {
        ds.samples.extend(s.samples);
        ds.meta.extend(s.meta.into_iter().map(|(proposal, bev, img)| SampleMeta { scene: si, proposal, bev, img }));
        ds.scenes.push(s.record);
        ds.stats.add(&s.stats);
    }
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::LidarSpec;

    fn small() -> DatasetConfig {
        let mut cfg = DatasetConfig::default();
        cfg.scene.lidar = LidarSpec { azimuth_steps: 360, ..Default::default() };
        cfg.rois_per_scene = 32;
        cfg
    }

    #[test]
    fn samples_have_model_shapes() {
        let cfg = small();
        let ds = build_dataset(&cfg, 0..3).unwrap();
        let m = cfg.model_config();
        assert!(!ds.is_empty());
        assert_eq!(ds.meta.len(), ds.len());
        for s in &ds.samples {
            assert_eq!(s.image.len(), m.image_inputs());
            assert_eq!(s.bev.len(), m.bev_inputs());
            assert_eq!(s.mask.cells.len(), m.k * m.k);
            assert!(s.image.iter().chain(&s.bev).all(|v| v.is_finite()));
        }
        assert_eq!(ds.scenes.len(), 3);
    }

    #[test]
    fn targets_follow_view_labels() {
        let cfg = small();
        let ds = build_dataset(&cfg, 10..13).unwrap();
        for (s, m) in ds.samples.iter().zip(&ds.meta) {
            assert_eq!(s.targets.bev_class, cfg.class_index(m.bev.state));
            assert_eq!(s.targets.img_class, cfg.class_index(m.img.state));
            if !s.targets.bev_positive() {
                assert_eq!(s.targets.bev_reg, [0.0; 10]);
            }
        }
        assert!(ds.stats.bev_neg_img_pos > 0, "{:?}", ds.stats);
    }

    #[test]
    fn build_is_deterministic() {
        let cfg = small();
        assert_eq!(build_dataset(&cfg, 0..2).unwrap(), build_dataset(&cfg, 0..2).unwrap());
    }
}
