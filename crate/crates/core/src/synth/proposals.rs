use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{SceneSpec, SyntheticScene};
use crate::geometry::{bev_iou, image_iou, normalize_angle, BoxDims, OrientedBox3D};
use crate::kitti::CalibrationSet;
use crate::labeling::{GtObject, ImageView, ObjectClass, Proposal};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProposalMode {
    Perturb,
    DepthAligned,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProposalConfig {
    /// Proposals per ground truth (per scene in random mode).
    pub per_gt: usize,
    /// Standard deviation of the centre jitter along each box axis, as a
    /// fraction of the box's extent on that axis.
    pub center_sigma: f64,
    /// Standard deviation of the relative dimension jitter.
    pub dims_sigma: f64,
    pub yaw_sigma: f64,
    /// Target IoUs of a depth-aligned proposal: BEV below, image above.
    pub bev_below: f64,
    pub image_above: f64,
    pub seed: u64,
}

impl Default for ProposalConfig {
    fn default() -> Self {
        Self { per_gt: 8, center_sigma: 0.15, dims_sigma: 0.1, yaw_sigma: 0.25, bev_below: 0.3, image_above: 0.7, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratedProposal {
    pub proposal: Proposal,
    /// Ground truth the proposal was derived from.
    pub source_gt: Option<usize>,
    /// False when a depth-aligned target was out of reach and the closest
    /// offset was emitted instead.
    pub feasible: bool,
}

/// Copy of `gt` moved along the camera ray through its centre by
/// `factor` box lengths (positive = farther away).
pub fn depth_aligned_proposal(gt: &OrientedBox3D, calib: &CalibrationSet, factor: f64) -> OrientedBox3D {
    let cam = calib.rect_point_to_lidar(&Point3::origin());
    let ray = (gt.center - cam).normalize();
    OrientedBox3D { center: gt.center + ray * (factor * gt.dims.l), ..*gt }
}

fn view_ious(a: &OrientedBox3D, b: &OrientedBox3D, view: &ImageView<'_>) -> (f64, f64) {
    let img = match (view.project(a), view.project(b)) {
        (Some(p), Some(q)) => image_iou(&p, &q),
        _ => 0.0,
    };
    (bev_iou(a, b), img)
}

const OFFSET_GRID: usize = 200;
const MAX_FACTOR: f64 = 3.0;

/// Offsets along the ray, in box lengths, that split the views as targeted,
/// or the single offset closest to doing so.
fn depth_aligned_candidates(gt: &OrientedBox3D, view: &ImageView<'_>, cfg: &ProposalConfig) -> (Vec<f64>, bool) {
    let mut feasible = Vec::new();
    let mut closest = (f64::INFINITY, 0.0);
    for i in 0..=2 * OFFSET_GRID {
        let f = -MAX_FACTOR + MAX_FACTOR * i as f64 / OFFSET_GRID as f64;
        let (bev, img) = view_ious(&depth_aligned_proposal(gt, view.calib, f), gt, view);
        if bev < cfg.bev_below && img > cfg.image_above {
            feasible.push(f);
        }
        let shortfall = (bev - cfg.bev_below).max(0.0) + (cfg.image_above - img).max(0.0);
        if shortfall < closest.0 {
            closest = (shortfall, f);
        }
    }
    if feasible.is_empty() {
        (vec![closest.1], false)
    } else {
        (feasible, true)
    }
}

/// Gaussian perturbation of `gt` and its score, which falls with the size
/// of the perturbation.
pub fn perturb_box(gt: &OrientedBox3D, cfg: &ProposalConfig, rng: &mut ChaCha8Rng) -> (OrientedBox3D, f64) {
    let n = Normal::new(0.0, 1.0).unwrap();
    let local = Vector3::new(n.sample(rng), n.sample(rng), n.sample(rng));
    let (s, c) = gt.yaw.sin_cos();
    let along = local.component_mul(&Vector3::new(gt.dims.l, gt.dims.w, gt.dims.h)) * cfg.center_sigma;
    let dc = Vector3::new(c * along.x - s * along.y, s * along.x + c * along.y, along.z);
    let dd = [n.sample(rng), n.sample(rng), n.sample(rng)].map(|v: f64| v * cfg.dims_sigma);
    let dyaw = n.sample(rng) * cfg.yaw_sigma;
    let dims = BoxDims::new(
        gt.dims.l * (1.0 + dd[0]).max(0.2),
        gt.dims.w * (1.0 + dd[1]).max(0.2),
        gt.dims.h * (1.0 + dd[2]).max(0.2),
    );
    // Magnitude in units of the configured spreads.
    let mag = if cfg.center_sigma > 0.0 { local.norm_squared() } else { 0.0 }
        + dd.iter().map(|v| (v / cfg.dims_sigma.max(1e-9)).powi(2)).sum::<f64>()
        + (dyaw / cfg.yaw_sigma.max(1e-9)).powi(2);
    (OrientedBox3D::new(gt.center + dc, dims, normalize_angle(gt.yaw + dyaw)), (-mag.sqrt() / 3.0).exp())
}

fn random_box(spec: &SceneSpec, class: ObjectClass, rng: &mut ChaCha8Rng) -> OrientedBox3D {
    let r = spec.dims_for(class);
    let draw = |rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)| if hi > lo { rng.random_range(lo..hi) } else { lo };
    let dims = BoxDims::new(draw(rng, r.l), draw(rng, r.w), draw(rng, r.h));
    let x = rng.random_range(spec.x_range.0..spec.x_range.1);
    let half = spec.x_range.1 * (spec.image_size.0 as f64 / 2.0) / spec.focal;
    let y = rng.random_range(-half..half);
    let yaw = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
    OrientedBox3D::new(Point3::new(x, y, -spec.sensor_height + dims.h / 2.0), dims, yaw)
}

/// Proposals for `scene` with objectness scores.
///
/// Perturb and depth-aligned proposals carry the class of their source
/// ground truth; random ones draw a class from the scene's class mix.
pub fn generate_proposals(scene: &SyntheticScene, mode: ProposalMode, cfg: &ProposalConfig) -> Vec<GeneratedProposal> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ scene.spec.seed.rotate_left(32));
    let gts = scene.gt_objects();
    let view = scene.view();
    let mut out = Vec::new();
    match mode {
        ProposalMode::Perturb => {
            for (gi, g) in gts.iter().enumerate() {
                for _ in 0..cfg.per_gt {
                    let (b, score) = perturb_box(&g.box3d, cfg, &mut rng);
                    let proposal = Proposal { box3d: b, class: g.class, score };
                    out.push(GeneratedProposal { proposal, source_gt: Some(gi), feasible: true });
                }
            }
        }
        ProposalMode::DepthAligned => {
            for (gi, g) in gts.iter().enumerate() {
                let (offsets, feasible) = depth_aligned_candidates(&g.box3d, &view, cfg);
                for _ in 0..cfg.per_gt {
                    let f = offsets[rng.random_range(0..offsets.len())];
                    let b = depth_aligned_proposal(&g.box3d, view.calib, f);
                    let proposal = Proposal { box3d: b, class: g.class, score: (-f.abs()).exp() };
                    out.push(GeneratedProposal { proposal, source_gt: Some(gi), feasible });
                }
            }
        }
        ProposalMode::Random => {
            let total: f64 = scene.spec.class_mix.iter().sum();
            for _ in 0..cfg.per_gt {
                let mut r = rng.random_range(0.0..total.max(f64::MIN_POSITIVE));
                let class = ObjectClass::ALL
                    .into_iter()
                    .zip(scene.spec.class_mix)
                    .find(|&(_, w)| {
                        let hit = r < w;
                        r -= w;
                        hit
                    })
                    .map_or(ObjectClass::Cyclist, |(c, _)| c);
                let b = random_box(&scene.spec, class, &mut rng);
                let proposal = Proposal { box3d: b, class, score: rng.random() };
                out.push(GeneratedProposal { proposal, source_gt: None, feasible: true });
            }
        }
    }
    out
}

/// A single car seen at mid range with proposals that split the two views.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitViewFixture {
    pub calib: CalibrationSet,
    pub image_size: (usize, usize),
    pub gt: GtObject,
    /// A: a small perturbation of the gt. B and C: depth-aligned copies
    /// 1.2 box lengths behind and in front.
    pub proposals: Vec<Proposal>,
}

impl SplitViewFixture {
    pub fn view(&self) -> ImageView<'_> {
        ImageView { calib: &self.calib, image_size: self.image_size }
    }
}

pub fn split_view_fixture() -> SplitViewFixture {
    let spec = SceneSpec::default();
    let calib = spec.calibration();
    let dims = BoxDims::new(4.2, 1.75, 1.55);
    let gt = OrientedBox3D::new(Point3::new(35.0, 2.0, -spec.sensor_height + dims.h / 2.0), dims, 0.15);
    let a = OrientedBox3D::new(gt.center + Vector3::new(0.25, -0.1, 0.0), dims, 0.2);
    let b = depth_aligned_proposal(&gt, &calib, 1.2);
    let c = depth_aligned_proposal(&gt, &calib, -1.2);
    let class = ObjectClass::Car;
    SplitViewFixture {
        calib,
        image_size: spec.image_size,
        gt: GtObject { box3d: gt, class },
        proposals: vec![
            Proposal { box3d: a, class, score: 0.9 },
            Proposal { box3d: b, class, score: 0.8 },
            Proposal { box3d: c, class, score: 0.7 },
        ],
    }
}
