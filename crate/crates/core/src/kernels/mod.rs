//! Reference implementations of the mask-GAN, control-injection, diffusion
//! and try-on-warping objectives on small dense tensors.
//!
//! Sums stay sums (L1 and TV losses), the noise-prediction objective is an
//! element mean, and every weight is an explicit argument.

mod control;
mod diffusion;
mod flow;
mod losses;
pub mod naive;
mod selfcheck;
mod tensor;

pub use control::{concat_condition, control_forward, Block, ControlAssembly, Conv1x1};
pub use diffusion::{forward_noise, DiffusionSchedule};
pub use flow::{
    avg_pool, feature_distance, l1_warp_loss, perceptual_loss, tv_loss, warp, FeatureExtractor, FlowField,
    PoolingPyramid, Warped,
};
pub use losses::{
    cgan_iou_loss, condition_generator_loss, denoising_loss, denoising_loss_grad, soft_iou_loss, MaskGanLoss,
    IOU_EPS,
};
pub use selfcheck::{noise_variance_check, run_selfcheck, CheckResult};
pub use tensor::Tensor;
