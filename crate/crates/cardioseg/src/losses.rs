//! Loss terms: supervised segmentation loss, self-information maps, the
//! adversarial and discriminator losses, the point-cloud matching loss, and
//! the total objective that combines them.
//!
//! All probability inputs are clamped to `[eps, 1 - eps]` before any log so
//! every term stays finite. Natural logarithms throughout.

use candle_core::{DType, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::pointcloud::{emd, Frame, PointCloud};

/// Weights of the combined objective. Generator adversarial terms default to
/// 1.0, discriminator terms to 0.2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_adv: [f64; 3],
    pub lambda_d: [f64; 3],
    pub eps_clamp: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { lambda_adv: [1.0; 3], lambda_d: [0.2; 3], eps_clamp: 1e-7 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if self.lambda_adv.iter().chain(&self.lambda_d).any(|&l| l < 0.0 || !l.is_finite()) {
            return Err(CoreError::InvalidArg("loss weights must be >= 0".into()));
        }
        if !(self.eps_clamp > 0.0 && self.eps_clamp < 0.5) {
            return Err(CoreError::InvalidArg("eps_clamp must lie in (0, 0.5)".into()));
        }
        Ok(())
    }
}

fn clamp_prob(x: &Tensor, eps: f64) -> Result<Tensor> {
    Ok(x.clamp(eps, 1.0 - eps)?)
}

fn same_shape(a: &Tensor, b: &Tensor, what: &str) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(CoreError::Shape(format!(
            "{what}: {:?} vs {:?}",
            a.dims(),
            b.dims()
        )));
    }
    Ok(())
}

/// Supervised segmentation loss on softmax maps `prob` and one-hot `target`
/// (both [B, C, H, W]): per-element binary cross-entropy averaged over every
/// element, plus one minus the mean per-class soft Jaccard index. Jaccard
/// sums are pooled over batch and pixels per class; numerator and
/// denominator carry `eps` so an absent class predicted absent scores 1.
pub fn seg_loss(prob: &Tensor, target: &Tensor, eps: f64) -> Result<Tensor> {
    same_shape(prob, target, "seg_loss")?;
    let (_b, c, _h, _w) = prob.dims4().map_err(|_| {
        CoreError::Shape(format!("seg_loss expects [B,C,H,W], got {:?}", prob.dims()))
    })?;
    let s = clamp_prob(prob, eps)?;
    let one = Tensor::ones_like(&s)?;
    let bce_elems = ((target * s.log()?)? + ((&one - target)? * (&one - &s)?.log()?)?)?;
    let bce = bce_elems.mean_all()?.neg()?;

    let inter = (prob * target)?.sum((0, 2, 3))?;
    let union = ((prob.sum((0, 2, 3))? + target.sum((0, 2, 3))?)? - &inter)?;
    let jac = ((&inter + eps)? / (union + eps)?)?;
    let jac_term = (1.0 - (jac.sum(0)? / c as f64)?)?;
    Ok((bce + jac_term)?)
}

/// Pixel-wise self-information of a softmax map.
pub struct SelfInfoMap {
    /// [B, C, H, W]; each entry is `-s * ln(clamp(s))`, all >= 0.
    pub map: Tensor,
    /// Mean over batch and pixels of the per-pixel channel sums; lies in
    /// [0, ln C].
    pub scalar_entropy: f64,
}

/// Computes the self-information map fed to the entropy-space discriminator
/// and its scalar average.
pub fn self_information(prob: &Tensor, eps: f64) -> Result<SelfInfoMap> {
    let (_b, _c, _h, _w) = prob.dims4().map_err(|_| {
        CoreError::Shape(format!(
            "self_information expects [B,C,H,W], got {:?}",
            prob.dims()
        ))
    })?;
    let map = (prob * clamp_prob(prob, eps)?.log()?)?.neg()?;
    let scalar_entropy = map
        .sum(1)?
        .mean_all()?
        .to_dtype(DType::F64)?
        .to_scalar::<f64>()?;
    Ok(SelfInfoMap { map, scalar_entropy })
}

/// `scalar_entropy` rescaled to [0, 1] for reporting.
pub fn normalized_entropy(scalar_entropy: f64, n_classes: usize) -> f64 {
    scalar_entropy / (n_classes as f64).ln()
}

/// Which generator-side adversarial objective to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GanForm {
    /// `mean ln(1 - D(x_t))`: the literal minimax form; kept for fidelity
    /// tests. Vanishing gradient when D is confident.
    Saturating,
    /// `-mean ln D(x_t)`: same fixed points, healthier gradients; the
    /// training default.
    NonSaturating,
}

/// Generator adversarial loss over the discriminator's probabilities on
/// target-domain inputs. Minimizing either form pushes `D(x_t)` toward 1.
pub fn adv_loss(d_target: &Tensor, form: GanForm, eps: f64) -> Result<Tensor> {
    let d = clamp_prob(d_target, eps)?;
    let v = match form {
        GanForm::Saturating => (1.0 - d)?.log()?.mean_all()?,
        GanForm::NonSaturating => d.log()?.mean_all()?.neg()?,
    };
    Ok(v)
}

/// The literal discriminator quantity `mean ln D(x_t) + mean ln(1 - D(x_s))`
/// used for reporting; a discriminator update ascends it.
pub fn disc_loss_literal(d_target: &Tensor, d_source: &Tensor, eps: f64) -> Result<Tensor> {
    let t = clamp_prob(d_target, eps)?.log()?.mean_all()?;
    let s = (1.0 - clamp_prob(d_source, eps)?)?.log()?.mean_all()?;
    Ok((t + s)?)
}

/// Discriminator training loss: binary cross-entropy with source maps as the
/// real class and target maps as the fake class. Minimized by SGD.
pub fn disc_bce(d_source: &Tensor, d_target: &Tensor, eps: f64) -> Result<Tensor> {
    let real = clamp_prob(d_source, eps)?.log()?.mean_all()?;
    let fake = (1.0 - clamp_prob(d_target, eps)?)?.log()?.mean_all()?;
    Ok((real + fake)?.neg()?)
}

/// Point-cloud matching loss for a batch of predicted clouds against their
/// ground-truth clouds.
///
/// The optimal one-to-one correspondence is solved exactly in f64 on
/// detached coordinates; the returned tensor re-expresses the matched
/// distance sum through differentiable ops so gradients flow to the
/// predictions, and the returned f64 is the exact per-cloud cost averaged
/// over the batch (equal to [`emd`]'s cost for a single cloud).
pub fn emd_training_loss(pred: &Tensor, gts: &[PointCloud]) -> Result<(Tensor, f64)> {
    let (b, n, d) = pred.dims3().map_err(|_| {
        CoreError::Shape(format!("expected [B,N,3] cloud, got {:?}", pred.dims()))
    })?;
    if d != 3 {
        return Err(CoreError::Shape(format!("cloud coord dim {d} != 3")));
    }
    if gts.len() != b {
        return Err(CoreError::Shape(format!(
            "{} reference clouds for batch of {b}",
            gts.len()
        )));
    }
    let pred_f64: Vec<Vec<Vec<f64>>> = pred.detach().to_dtype(DType::F64)?.to_vec3()?;
    let mut exact_sum = 0.0;
    let mut matched = Vec::with_capacity(b * n * 3);
    for (i, gt) in gts.iter().enumerate() {
        let points: Vec<[f64; 3]> = pred_f64[i]
            .iter()
            .map(|p| [p[0], p[1], p[2]])
            .collect();
        let cloud = PointCloud { points, frame: Frame::CropNormalized };
        let m = emd(&cloud, gt)?;
        exact_sum += m.cost;
        for j in 0..n {
            matched.extend_from_slice(&gt.points[m.perm[j]]);
        }
    }
    let gt_t = Tensor::from_vec(matched, (b, n, 3), pred.device())?.to_dtype(pred.dtype())?;
    // sqrt carries a tiny floor so coincident pairs get a zero gradient
    // instead of NaN.
    let dist = ((pred - gt_t)?.sqr()?.sum(2)? + 1e-12)?.sqrt()?;
    let loss = dist.sum(1)?.mean_all()?;
    Ok((loss, exact_sum / b as f64))
}

/// Scalar values of every component loss for one step.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct LossParts {
    pub l_seg: f64,
    pub l_emd: f64,
    pub l_adv: [f64; 3],
    pub l_d: [f64; 3],
}

/// Combined objective `L_seg + L_emd + sum_i (lambda_adv_i * L_adv_i -
/// lambda_d_i * L_d_i)`. Any non-finite part is an error naming it.
pub fn total_objective(parts: &LossParts, w: &LossWeights) -> Result<f64> {
    let named = [
        ("L_seg", parts.l_seg),
        ("L_emd", parts.l_emd),
        ("L_adv1", parts.l_adv[0]),
        ("L_adv2", parts.l_adv[1]),
        ("L_adv3", parts.l_adv[2]),
        ("L_D1", parts.l_d[0]),
        ("L_D2", parts.l_d[1]),
        ("L_D3", parts.l_d[2]),
    ];
    for (name, v) in named {
        if !v.is_finite() {
            return Err(CoreError::NonFinite(format!("loss part {name}")));
        }
    }
    let mut total = parts.l_seg + parts.l_emd;
    for i in 0..3 {
        total += w.lambda_adv[i] * parts.l_adv[i] - w.lambda_d[i] * parts.l_d[i];
    }
    Ok(total)
}

/// One step's losses as written to the training log (one JSON object per
/// line).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: u64,
    #[serde(rename = "L_seg")]
    pub l_seg: f64,
    #[serde(rename = "L_emd")]
    pub l_emd: f64,
    #[serde(rename = "L_adv1")]
    pub l_adv1: f64,
    #[serde(rename = "L_adv2")]
    pub l_adv2: f64,
    #[serde(rename = "L_adv3")]
    pub l_adv3: f64,
    #[serde(rename = "L_D1")]
    pub l_d1: f64,
    #[serde(rename = "L_D2")]
    pub l_d2: f64,
    #[serde(rename = "L_D3")]
    pub l_d3: f64,
    pub total: f64,
}

impl LossRecord {
    pub fn new(step: u64, parts: &LossParts, total: f64) -> Self {
        Self {
            step,
            l_seg: parts.l_seg,
            l_emd: parts.l_emd,
            l_adv1: parts.l_adv[0],
            l_adv2: parts.l_adv[1],
            l_adv3: parts.l_adv[2],
            l_d1: parts.l_d[0],
            l_d2: parts.l_d[1],
            l_d3: parts.l_d[2],
            total,
        }
    }
}
