//! A small three-branch detection header.
//!
//! ```text
//! image crop (k·k·3, masked) ─ Dense(32) ─ ReLU ─┬─ y_img, s_img
//!                                                 ├──────────┐
//! BEV crop (k·k·6) ────────── Dense(32) ─ ReLU ─┬─ y_bev, s_bev│
//!                                                └─ concat(64) ─ y_fusion, s_fusion, a_fusion
//! ```
//!
//! Parameters live in one flat vector.

mod dataset;
mod experiment;
mod train;

pub use dataset::{build_dataset, ChannelScaler, Dataset, DatasetConfig, ProposalMix, Sample, SampleMeta, SceneRecord};
pub use experiment::{
    evaluate, run_lambda_ablation, run_mask_ablation, BranchMetrics, ExperimentConfig, ExperimentReport, ReportRow, RunRecord,
};
pub use train::{train, Adam, TrainConfig, TrainResult};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::loss::{total_loss, HeaderOutputs, LossBreakdown, LossError, LossWeights, SampleTargets};
use crate::mask::ForegroundMask;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HeaderError {
    #[error("{what}: expected {expected} values, found {found}")]
    ShapeMismatch { what: &'static str, expected: usize, found: usize },
    #[error("loss became non-finite at step {step}")]
    NonFiniteLoss { step: usize },
    #[error("training set is empty")]
    EmptyDataset,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Loss(#[from] LossError),
}

pub type Result<T> = std::result::Result<T, HeaderError>;

pub const IMAGE_CHANNELS: usize = 3;
pub const BEV_CHANNELS: usize = 6;
const REG: usize = 10;
const ANG: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Crop side.
    pub k: usize,
    pub hidden: usize,
    /// Class scores per branch, background included.
    pub num_scores: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { k: 7, hidden: 32, num_scores: 4 }
    }
}

impl ModelConfig {
    pub fn image_inputs(&self) -> usize {
        self.k * self.k * IMAGE_CHANNELS
    }

    pub fn bev_inputs(&self) -> usize {
        self.k * self.k * BEV_CHANNELS
    }
}

/// Fully connected layer: `y = W x + b`, `W` row-major `out × inp`, stored
/// in the model's parameter vector at `offset` (weights, then biases).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Dense {
    inp: usize,
    out: usize,
    offset: usize,
}

impl Dense {
    fn len(&self) -> usize {
        self.out * (self.inp + 1)
    }

    fn forward(&self, params: &[f64], x: &[f64], y: &mut [f64]) {
        let w = &params[self.offset..self.offset + self.out * self.inp];
        let b = &params[self.offset + self.out * self.inp..self.offset + self.len()];
        for o in 0..self.out {
            let row = &w[o * self.inp..(o + 1) * self.inp];
            y[o] = b[o] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    /// Accumulates parameter gradients into `grad` and input gradients into
    /// `dx` when given.
    fn backward(&self, params: &[f64], x: &[f64], dy: &[f64], grad: &mut [f64], mut dx: Option<&mut [f64]>) {
        let (w_off, b_off) = (self.offset, self.offset + self.out * self.inp);
        for o in 0..self.out {
            let g = dy[o];
            if g == 0.0 {
                continue;
            }
            grad[b_off + o] += g;
            let gw = &mut grad[w_off + o * self.inp..w_off + (o + 1) * self.inp];
            gw.iter_mut().zip(x).for_each(|(gi, xi)| *gi += g * xi);
            if let Some(dx) = dx.as_deref_mut() {
                let row = &params[w_off + o * self.inp..w_off + (o + 1) * self.inp];
                dx.iter_mut().zip(row).for_each(|(d, wi)| *d += g * wi);
            }
        }
    }

    fn init(&self, params: &mut [f64], rng: &mut ChaCha8Rng) {
        let limit = (6.0 / (self.inp + self.out) as f64).sqrt();
        for p in &mut params[self.offset..self.offset + self.out * self.inp] {
            *p = rng.random_range(-limit..limit);
        }
        params[self.offset + self.out * self.inp..self.offset + self.len()].fill(0.0);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Layout {
    img_hidden: Dense,
    img_cls: Dense,
    img_reg: Dense,
    bev_hidden: Dense,
    bev_cls: Dense,
    bev_reg: Dense,
    fusion: Dense,
    total: usize,
}

impl Layout {
    fn new(cfg: &ModelConfig) -> Self {
        let mut offset = 0;
        let mut next = |inp: usize, out: usize| {
            let d = Dense { inp, out, offset };
            offset += d.len();
            d
        };
        let h = cfg.hidden;
        let s = cfg.num_scores;
        let img_hidden = next(cfg.image_inputs(), h);
        let img_cls = next(h, s);
        let img_reg = next(h, REG);
        let bev_hidden = next(cfg.bev_inputs(), h);
        let bev_cls = next(h, s);
        let bev_reg = next(h, REG);
        let fusion = next(2 * h, s + REG + ANG);
        Self { img_hidden, img_cls, img_reg, bev_hidden, bev_cls, bev_reg, fusion, total: offset }
    }

    fn layers(&self) -> [Dense; 7] {
        [self.img_hidden, self.img_cls, self.img_reg, self.bev_hidden, self.bev_cls, self.bev_reg, self.fusion]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyHeaderModel {
    pub config: ModelConfig,
    pub params: Vec<f64>,
    layout: Layout,
}

/// Inputs of one proposal: channel-interleaved crops and the image mask.
#[derive(Debug, Clone, Copy)]
pub struct HeaderInput<'a> {
    pub image: &'a [f32],
    pub bev: &'a [f32],
    pub mask: &'a ForegroundMask,
}

/// Intermediate values kept for backpropagation.
#[derive(Debug, Clone, PartialEq)]
pub struct Activations {
    pub x_img: Vec<f64>,
    pub x_bev: Vec<f64>,
    pub z_img: Vec<f64>,
    pub z_bev: Vec<f64>,
    /// ReLU outputs, image then BEV.
    pub hidden: Vec<f64>,
}

fn relu(z: &[f64]) -> Vec<f64> {
    z.iter().map(|&v| v.max(0.0)).collect()
}

impl ToyHeaderModel {
    /// Xavier-uniform weights and zero biases, except that every box-offset
    /// output starts at zero so an untrained model returns its proposal.
    pub fn new(config: ModelConfig, seed: u64) -> Self {
        let layout = Layout::new(&config);
        let mut params = vec![0.0; layout.total];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in layout.layers() {
            layer.init(&mut params, &mut rng);
        }
        for layer in [layout.img_reg, layout.bev_reg] {
            params[layer.offset..layer.offset + layer.len()].fill(0.0);
        }
        let f = layout.fusion;
        let s = config.num_scores;
        params[f.offset + s * f.inp..f.offset + (s + REG) * f.inp].fill(0.0);
        Self { config, params, layout }
    }

    pub fn zeros(config: ModelConfig) -> Self {
        let layout = Layout::new(&config);
        Self { config, params: vec![0.0; layout.total], layout }
    }

    pub fn num_params(&self) -> usize {
        self.layout.total
    }

    fn check(&self, input: &HeaderInput<'_>) -> Result<()> {
        let c = &self.config;
        let checks = [
            ("image crop", c.image_inputs(), input.image.len()),
            ("bev crop", c.bev_inputs(), input.bev.len()),
            ("mask cells", c.k * c.k, input.mask.cells.len()),
        ];
        for (what, expected, found) in checks {
            if expected != found {
                return Err(HeaderError::ShapeMismatch { what, expected, found });
            }
        }
        Ok(())
    }

    pub fn forward(&self, input: &HeaderInput<'_>) -> Result<HeaderOutputs> {
        Ok(self.forward_cached(input)?.0)
    }

    pub fn forward_cached(&self, input: &HeaderInput<'_>) -> Result<(HeaderOutputs, Activations)> {
        self.check(input)?;
        let l = &self.layout;
        let p = &self.params;
        let h = self.config.hidden;
        let s = self.config.num_scores;
        let x_img: Vec<f64> = input
            .image
            .chunks_exact(IMAGE_CHANNELS)
            .zip(&input.mask.cells)
            .flat_map(|(px, &m)| px.iter().map(move |&v| if m == 1 { v as f64 } else { 0.0 }))
            .collect();
        let x_bev: Vec<f64> = input.bev.iter().map(|&v| v as f64).collect();
        let mut z_img = vec![0.0; h];
        let mut z_bev = vec![0.0; h];
        l.img_hidden.forward(p, &x_img, &mut z_img);
        l.bev_hidden.forward(p, &x_bev, &mut z_bev);
        let mut hidden = relu(&z_img);
        hidden.extend(relu(&z_bev));
        let (h_img, h_bev) = hidden.split_at(h);

        let mut out = HeaderOutputs::zeros(s);
        l.img_cls.forward(p, h_img, &mut out.y_img);
        l.img_reg.forward(p, h_img, &mut out.s_img);
        l.bev_cls.forward(p, h_bev, &mut out.y_bev);
        l.bev_reg.forward(p, h_bev, &mut out.s_bev);
        let mut fused = vec![0.0; s + REG + ANG];
        l.fusion.forward(p, &hidden, &mut fused);
        out.y_fusion.copy_from_slice(&fused[..s]);
        out.s_fusion.copy_from_slice(&fused[s..s + REG]);
        out.a_fusion.copy_from_slice(&fused[s + REG..]);
        Ok((out, Activations { x_img, x_bev, z_img, z_bev, hidden }))
    }

    /// Adds d loss / d params for one sample to `grad`, given d loss / d outputs.
    pub fn backward(&self, acts: &Activations, d_out: &HeaderOutputs, grad: &mut [f64]) {
        let l = &self.layout;
        let p = &self.params;
        let h = self.config.hidden;
        let (h_img, h_bev) = acts.hidden.split_at(h);
        let mut d_hidden = vec![0.0; 2 * h];
        let mut fused = d_out.y_fusion.clone();
        fused.extend(d_out.s_fusion);
        fused.extend(d_out.a_fusion);
        l.fusion.backward(p, &acts.hidden, &fused, grad, Some(&mut d_hidden));
        let (d_img, d_bev) = d_hidden.split_at_mut(h);
        l.img_cls.backward(p, h_img, &d_out.y_img, grad, Some(d_img));
        l.img_reg.backward(p, h_img, &d_out.s_img, grad, Some(d_img));
        l.bev_cls.backward(p, h_bev, &d_out.y_bev, grad, Some(d_bev));
        l.bev_reg.backward(p, h_bev, &d_out.s_bev, grad, Some(d_bev));
        for (d, z) in d_img.iter_mut().zip(&acts.z_img).chain(d_bev.iter_mut().zip(&acts.z_bev)) {
            if *z <= 0.0 {
                *d = 0.0;
            }
        }
        l.img_hidden.backward(p, &acts.x_img, d_img, grad, None);
        l.bev_hidden.backward(p, &acts.x_bev, d_bev, grad, None);
    }

    /// Parameter gradient of the image branch's class and box outputs.
    pub fn image_head_range(&self) -> std::ops::Range<usize> {
        self.layout.img_cls.offset..self.layout.img_reg.offset + self.layout.img_reg.len()
    }

    /// Total loss over a batch and its exact gradient with respect to the
    /// parameters.
    pub fn loss_and_gradient(
        &self,
        inputs: &[HeaderInput<'_>],
        targets: &[SampleTargets],
        weights: &LossWeights,
    ) -> Result<(LossBreakdown, Vec<f64>)> {
        if inputs.len() != targets.len() {
            return Err(HeaderError::ShapeMismatch { what: "targets", expected: inputs.len(), found: targets.len() });
        }
        let mut outputs = Vec::with_capacity(inputs.len());
        let mut acts = Vec::with_capacity(inputs.len());
        for input in inputs {
            let (o, a) = self.forward_cached(input)?;
            outputs.push(o);
            acts.push(a);
        }
        let breakdown = total_loss(&outputs, targets, weights)?;
        let mut grad = vec![0.0; self.num_params()];
        for (a, g) in acts.iter().zip(&breakdown.grads) {
            self.backward(a, g, &mut grad);
        }
        Ok((breakdown, grad))
    }
}
