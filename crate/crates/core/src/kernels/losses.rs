use super::Tensor;
use crate::error::{Error, Result};

const PROB_CLAMP: f32 = 1e-7;
/// Smoothing term of the soft IoU.
pub const IOU_EPS: f32 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MaskGanLoss {
    /// Conditional-GAN value `mean ln D(real) + mean ln(1 - D(fake))`; ≤ 0.
    pub cgan: f32,
    /// Soft IoU loss `1 - (Σ min + ε) / (Σ max + ε)`.
    pub iou: f32,
    /// `cgan + λ·iou`.
    pub combined: f32,
}

fn mean_ln(values: &[f32], transform: impl Fn(f32) -> f32) -> f32 {
    let sum: f64 = values
        .iter()
        .map(|&p| f64::from(transform(p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)).ln()))
        .sum();
    (sum / values.len() as f64) as f32
}

/// Soft IoU loss between a predicted mask in `[0, 1]` and a target mask.
pub fn soft_iou_loss(mask_pred: &Tensor, mask_gt: &Tensor) -> Result<f32> {
    mask_pred.same_shape(mask_gt, "IoU masks")?;
    if mask_pred.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::OutOfRange("predicted mask outside [0, 1]".into()));
    }
    let (inter, union) = mask_pred
        .data()
        .iter()
        .zip(mask_gt.data())
        .fold((0.0f64, 0.0f64), |(i, u), (&p, &g)| {
            (i + f64::from(p.min(g)), u + f64::from(p.max(g)))
        });
    let eps = f64::from(IOU_EPS);
    Ok((1.0 - (inter + eps) / (union + eps)) as f32)
}

/// Mask-generator objective evaluated as a scalar: discriminator value plus
/// a weighted soft-IoU term.
pub fn cgan_iou_loss(
    d_real: &Tensor,
    d_fake: &Tensor,
    mask_pred: &Tensor,
    mask_gt: &Tensor,
    lambda: f32,
) -> Result<MaskGanLoss> {
    let cgan = mean_ln(d_real.data(), |p| p) + mean_ln(d_fake.data(), |p| 1.0 - p);
    let iou = soft_iou_loss(mask_pred, mask_gt)?;
    Ok(MaskGanLoss {
        cgan,
        iou,
        combined: cgan + lambda * iou,
    })
}

/// Noise-prediction objective: mean over elements of `(eps - eps_pred)²`.
pub fn denoising_loss(eps: &Tensor, eps_pred: &Tensor) -> Result<f32> {
    eps.same_shape(eps_pred, "denoising loss")?;
    let sse: f64 = eps
        .data()
        .iter()
        .zip(eps_pred.data())
        .map(|(&a, &b)| {
            let d = f64::from(a) - f64::from(b);
            d * d
        })
        .sum();
    Ok((sse / eps.len() as f64) as f32)
}

/// Gradient of [`denoising_loss`] with respect to `eps_pred`: `2(eps_pred - eps)/N`.
pub fn denoising_loss_grad(eps: &Tensor, eps_pred: &Tensor) -> Result<Tensor> {
    eps.same_shape(eps_pred, "denoising loss gradient")?;
    let scale = 2.0 / eps.len() as f32;
    Ok(Tensor::from_parts_unchecked(
        eps.shape().to_vec(),
        eps.data()
            .iter()
            .zip(eps_pred.data())
            .map(|(&e, &p)| scale * (p - e))
            .collect(),
    ))
}

/// Try-on condition generator objective `λ_L1·l1 + vgg + λ_TV·tv`.
pub fn condition_generator_loss(l1: f32, vgg: f32, tv: f32, lambda_l1: f32, lambda_tv: f32) -> f32 {
    lambda_l1 * l1 + vgg + lambda_tv * tv
}
