//! Multi-task detection loss over the three header branches.
//!
//! ```text
//! total = λ_cls·cls + λ_reg·reg + λ_ang·ang + λ_sub_cls·sub_cls + λ_sub_reg·sub_reg
//! ```
//!
//! The fusion terms (`cls`, `reg`, `ang`) are supervised with BEV labels and
//! targets. The sub-losses supervise the image and BEV branch outputs with
//! the labels of their own view. Classification terms average over the
//! samples that are not ignored in the relevant view; regression terms
//! average over that view's positives. An empty average contributes 0.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error("{what}: expected {expected}, found {found}")]
    ShapeMismatch { what: &'static str, expected: usize, found: usize },
    #[error("class label {label} out of range for {classes} scores")]
    LabelOutOfRange { label: usize, classes: usize },
}

/// Raw outputs of the header for one proposal.
#[derive(Debug, Clone, PartialEq)]
pub struct HeaderOutputs {
    /// Class scores (pre-softmax), background first.
    pub y_fusion: Vec<f64>,
    pub y_img: Vec<f64>,
    pub y_bev: Vec<f64>,
    /// Corner encodings (8 corner offsets, 2 height offsets).
    pub s_fusion: [f64; 10],
    pub s_img: [f64; 10],
    pub s_bev: [f64; 10],
    /// (cos, sin) heading.
    pub a_fusion: [f64; 2],
}

impl HeaderOutputs {
    pub fn zeros(num_scores: usize) -> Self {
        Self {
            y_fusion: vec![0.0; num_scores],
            y_img: vec![0.0; num_scores],
            y_bev: vec![0.0; num_scores],
            s_fusion: [0.0; 10],
            s_img: [0.0; 10],
            s_bev: [0.0; 10],
            a_fusion: [0.0; 2],
        }
    }

    pub fn num_scores(&self) -> usize {
        self.y_fusion.len()
    }

    /// All entries in a fixed order: y_fusion, y_img, y_bev, s_fusion, s_img, s_bev, a_fusion.
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(3 * self.num_scores() + 32);
        v.extend(&self.y_fusion);
        v.extend(&self.y_img);
        v.extend(&self.y_bev);
        v.extend(&self.s_fusion);
        v.extend(&self.s_img);
        v.extend(&self.s_bev);
        v.extend(&self.a_fusion);
        v
    }

    /// Mutable view of entry `i` in [`Self::flatten`] order.
    pub fn entry_mut(&mut self, i: usize) -> &mut f64 {
        let c = self.num_scores();
        match i {
            _ if i < c => &mut self.y_fusion[i],
            _ if i < 2 * c => &mut self.y_img[i - c],
            _ if i < 3 * c => &mut self.y_bev[i - 2 * c],
            _ if i < 3 * c + 10 => &mut self.s_fusion[i - 3 * c],
            _ if i < 3 * c + 20 => &mut self.s_img[i - 3 * c - 10],
            _ if i < 3 * c + 30 => &mut self.s_bev[i - 3 * c - 20],
            _ => &mut self.a_fusion[i - 3 * c - 30],
        }
    }

    pub fn len(&self) -> usize {
        3 * self.num_scores() + 32
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Supervision of one proposal. A class of `None` marks the view as ignored;
/// `Some(0)` is background and `Some(c)` for `c ≥ 1` is a positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleTargets {
    pub bev_class: Option<usize>,
    pub img_class: Option<usize>,
    /// Corner encoding against the BEV-matched ground truth.
    pub bev_reg: [f64; 10],
    /// Corner encoding against the image-matched ground truth.
    pub img_reg: [f64; 10],
    /// (cos, sin) of the BEV-matched ground truth heading.
    pub angle: [f64; 2],
}

impl SampleTargets {
    pub fn background() -> Self {
        Self { bev_class: Some(0), img_class: Some(0), bev_reg: [0.0; 10], img_reg: [0.0; 10], angle: [1.0, 0.0] }
    }

    pub fn bev_positive(&self) -> bool {
        matches!(self.bev_class, Some(c) if c > 0)
    }

    pub fn img_positive(&self) -> bool {
        matches!(self.img_class, Some(c) if c > 0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub lambda_cls: f64,
    pub lambda_reg: f64,
    pub lambda_ang: f64,
    pub lambda_sub_cls: f64,
    pub lambda_sub_reg: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { lambda_cls: 1.0, lambda_reg: 1.0, lambda_ang: 1.0, lambda_sub_cls: 1.0, lambda_sub_reg: 1.0 }
    }
}

impl LossWeights {
    /// Default weights with both sub-loss weights at `ratio · λ_cls`.
    pub fn with_sub_ratio(ratio: f64) -> Self {
        let base = Self::default();
        Self { lambda_sub_cls: ratio * base.lambda_cls, lambda_sub_reg: ratio * base.lambda_cls, ..base }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown {
    pub cls: f64,
    pub reg: f64,
    pub ang: f64,
    pub sub_cls: f64,
    pub sub_reg: f64,
    pub total: f64,
    /// d total / d outputs, one entry per sample.
    pub grads: Vec<HeaderOutputs>,
}

/// `0.5 x²` inside the unit interval, `|x| - 0.5` outside; returns the
/// value and its derivative.
pub fn smooth_l1(x: f64) -> (f64, f64) {
    if x.abs() < 1.0 {
        (0.5 * x * x, x)
    } else {
        (x.abs() - 0.5, x.signum())
    }
}

/// Softmax cross-entropy of `scores` against class `label`, with gradient
/// `softmax - onehot`.
pub fn cross_entropy(scores: &[f64], label: usize) -> (f64, Vec<f64>) {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    let loss = z.ln() + max - scores[label];
    let mut grad: Vec<f64> = exps.iter().map(|e| e / z).collect();
    grad[label] -= 1.0;
    (loss, grad)
}

/// Summed smooth L1 of `pred - target` and its gradient w.r.t. `pred`.
fn smooth_l1_sum<const N: usize>(pred: &[f64; N], target: &[f64; N]) -> (f64, [f64; N]) {
    let mut grad = [0.0; N];
    let mut loss = 0.0;
    for i in 0..N {
        let (v, d) = smooth_l1(pred[i] - target[i]);
        loss += v;
        grad[i] = d;
    }
    (loss, grad)
}

fn check_shapes(outputs: &[HeaderOutputs], targets: &[SampleTargets]) -> Result<usize, LossError> {
    if outputs.len() != targets.len() {
        return Err(LossError::ShapeMismatch { what: "targets", expected: outputs.len(), found: targets.len() });
    }
    let c = outputs.first().map_or(0, HeaderOutputs::num_scores);
    for o in outputs {
        for v in [&o.y_fusion, &o.y_img, &o.y_bev] {
            if v.len() != c {
                return Err(LossError::ShapeMismatch { what: "class scores", expected: c, found: v.len() });
            }
        }
    }
    for t in targets {
        for label in [t.bev_class, t.img_class].into_iter().flatten() {
            if label >= c {
                return Err(LossError::LabelOutOfRange { label, classes: c });
            }
        }
    }
    Ok(c)
}

fn mean_scale(count: usize) -> f64 {
    if count == 0 {
        0.0
    } else {
        1.0 / count as f64
    }
}

/// Image and BEV branch losses, unweighted, with gradients of
/// `sub_cls + sub_reg` accumulated into `grads` scaled by `(w_cls, w_reg)`.
fn sub_terms(
    outputs: &[HeaderOutputs],
    targets: &[SampleTargets],
    (w_cls, w_reg): (f64, f64),
    grads: &mut [HeaderOutputs],
) -> (f64, f64) {
    let count = |f: &dyn Fn(&SampleTargets) -> bool| targets.iter().filter(|t| f(t)).count();
    let k_img = mean_scale(count(&|t| t.img_class.is_some()));
    let k_bev = mean_scale(count(&|t| t.bev_class.is_some()));
    let kp_img = mean_scale(count(&|t| t.img_positive()));
    let kp_bev = mean_scale(count(&|t| t.bev_positive()));
    let (mut cls, mut reg) = (0.0, 0.0);
    for ((o, t), g) in outputs.iter().zip(targets).zip(grads.iter_mut()) {
        if let Some(label) = t.img_class {
            let (l, d) = cross_entropy(&o.y_img, label);
            cls += k_img * l;
            g.y_img.iter_mut().zip(d).for_each(|(gi, di)| *gi += w_cls * k_img * di);
        }
        if let Some(label) = t.bev_class {
            let (l, d) = cross_entropy(&o.y_bev, label);
            cls += k_bev * l;
            g.y_bev.iter_mut().zip(d).for_each(|(gi, di)| *gi += w_cls * k_bev * di);
        }
        if t.img_positive() {
            let (l, d) = smooth_l1_sum(&o.s_img, &t.img_reg);
            reg += kp_img * l;
            g.s_img.iter_mut().zip(d).for_each(|(gi, di)| *gi += w_reg * kp_img * di);
        }
        if t.bev_positive() {
            let (l, d) = smooth_l1_sum(&o.s_bev, &t.bev_reg);
            reg += kp_bev * l;
            g.s_bev.iter_mut().zip(d).for_each(|(gi, di)| *gi += w_reg * kp_bev * di);
        }
    }
    (cls, reg)
}

/// The two sub-losses alone, with gradients of `sub_cls + sub_reg`.
pub fn sub_losses(outputs: &[HeaderOutputs], targets: &[SampleTargets]) -> Result<(f64, f64, Vec<HeaderOutputs>), LossError> {
    let c = check_shapes(outputs, targets)?;
    let mut grads = vec![HeaderOutputs::zeros(c); outputs.len()];
    let (cls, reg) = sub_terms(outputs, targets, (1.0, 1.0), &mut grads);
    Ok((cls, reg, grads))
}

pub fn total_loss(outputs: &[HeaderOutputs], targets: &[SampleTargets], w: &LossWeights) -> Result<LossBreakdown, LossError> {
    let c = check_shapes(outputs, targets)?;
    let mut grads = vec![HeaderOutputs::zeros(c); outputs.len()];
    let k_cls = mean_scale(targets.iter().filter(|t| t.bev_class.is_some()).count());
    let k_pos = mean_scale(targets.iter().filter(|t| t.bev_positive()).count());
    let (mut cls, mut reg, mut ang) = (0.0, 0.0, 0.0);
    for ((o, t), g) in outputs.iter().zip(targets).zip(grads.iter_mut()) {
        if let Some(label) = t.bev_class {
            let (l, d) = cross_entropy(&o.y_fusion, label);
            cls += k_cls * l;
            g.y_fusion.iter_mut().zip(d).for_each(|(gi, di)| *gi += w.lambda_cls * k_cls * di);
        }
        if t.bev_positive() {
            let (l, d) = smooth_l1_sum(&o.s_fusion, &t.bev_reg);
            reg += k_pos * l;
            g.s_fusion.iter_mut().zip(d).for_each(|(gi, di)| *gi += w.lambda_reg * k_pos * di);
            let (l, d) = smooth_l1_sum(&o.a_fusion, &t.angle);
            ang += k_pos * l;
            g.a_fusion.iter_mut().zip(d).for_each(|(gi, di)| *gi += w.lambda_ang * k_pos * di);
        }
    }
    let (sub_cls, sub_reg) = sub_terms(outputs, targets, (w.lambda_sub_cls, w.lambda_sub_reg), &mut grads);
    let total =
        w.lambda_cls * cls + w.lambda_reg * reg + w.lambda_ang * ang + w.lambda_sub_cls * sub_cls + w.lambda_sub_reg * sub_reg;
    Ok(LossBreakdown { cls, reg, ang, sub_cls, sub_reg, total, grads })
}
