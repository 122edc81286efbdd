//! Appearance-flow kernels: smoothness, masked bilinear warping and the
//! warp-based L1 / perceptual objectives.

use super::Tensor;
use crate::error::{Error, Result};

/// Per-pixel displacement `(dx, dy)`, stored as a `2 × h × w` tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowField(Tensor);

impl FlowField {
    pub fn new(tensor: Tensor) -> Result<Self> {
        match tensor.shape() {
            [2, _, _] => Ok(Self(tensor)),
            s => Err(Error::ShapeMismatch(format!("flow must be 2×h×w, got {s:?}"))),
        }
    }

    pub fn zeros(h: usize, w: usize) -> Result<Self> {
        Self::new(Tensor::zeros(&[2, h, w])?)
    }

    pub fn uniform(h: usize, w: usize, dx: f32, dy: f32) -> Result<Self> {
        let plane = h * w;
        Self::new(Tensor::from_fn(&[2, h, w], |i| if i < plane { dx } else { dy })?)
    }

    pub fn height(&self) -> usize {
        self.0.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.0.shape()[2]
    }

    pub fn dx(&self) -> &[f32] {
        &self.0.data()[..self.height() * self.width()]
    }

    pub fn dy(&self) -> &[f32] {
        &self.0.data()[self.height() * self.width()..]
    }

    pub fn as_tensor(&self) -> &Tensor {
        &self.0
    }
}

/// Anisotropic total variation `‖∇l‖₁`: absolute forward differences along
/// both axes, summed over both flow components.
pub fn tv_loss(flow: &FlowField) -> Result<f32> {
    let (h, w) = (flow.height(), flow.width());
    if h < 2 || w < 2 {
        return Err(Error::DegenerateGrid { h, w });
    }
    let mut total = 0.0f64;
    for channel in [flow.dx(), flow.dy()] {
        for row in channel.chunks_exact(w) {
            total += row.windows(2).map(|p| f64::from((p[1] - p[0]).abs())).sum::<f64>();
        }
        for (upper, lower) in channel.chunks_exact(w).zip(channel.chunks_exact(w).skip(1)) {
            total += upper.iter().zip(lower).map(|(a, b)| f64::from((b - a).abs())).sum::<f64>();
        }
    }
    Ok(total as f32)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Warped {
    pub warped: Tensor,
    /// `1 × h × w`; 0 where the sample fell outside the source grid.
    pub overlap_mask: Tensor,
}

/// Bilinear sampling of `src` at `(x + dx, y + dy)`. Samples outside the
/// source grid are zero and flagged in the overlap mask, which removes the
/// non-overlapping region from any downstream comparison.
pub fn warp(src: &Tensor, flow: &FlowField) -> Result<Warped> {
    let (c, h, w) = src.chw()?;
    if (flow.height(), flow.width()) != (h, w) {
        return Err(Error::ShapeMismatch(format!(
            "flow {}x{} vs source {h}x{w}",
            flow.height(),
            flow.width()
        )));
    }
    let plane = h * w;
    let mut out = vec![0.0f32; c * plane];
    let mut mask = vec![0.0f32; plane];
    let (max_x, max_y) = ((w - 1) as f32, (h - 1) as f32);
    for (p, (&dx, &dy)) in flow.dx().iter().zip(flow.dy()).enumerate() {
        let sx = (p % w) as f32 + dx;
        let sy = (p / w) as f32 + dy;
        if !(0.0..=max_x).contains(&sx) || !(0.0..=max_y).contains(&sy) {
            continue;
        }
        mask[p] = 1.0;
        let (x0, y0) = (sx.floor() as usize, sy.floor() as usize);
        let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
        let (fx, fy) = (sx - x0 as f32, sy - y0 as f32);
        let taps = [
            (y0 * w + x0, (1.0 - fx) * (1.0 - fy)),
            (y0 * w + x1, fx * (1.0 - fy)),
            (y1 * w + x0, (1.0 - fx) * fy),
            (y1 * w + x1, fx * fy),
        ];
        for (channel, dst) in src.data().chunks_exact(plane).zip(out.chunks_exact_mut(plane)) {
            dst[p] = taps.iter().map(|&(i, wt)| wt * channel[i]).sum();
        }
    }
    Ok(Warped {
        warped: Tensor::from_parts_unchecked(vec![c, h, w], out),
        overlap_mask: Tensor::from_parts_unchecked(vec![1, h, w], mask),
    })
}

/// `Σ_i w_i·‖D(cloth_mask, l_i) - target‖₁ + ‖fused - target‖₁`.
pub fn l1_warp_loss(
    cloth_mask: &Tensor,
    flows: &[FlowField; 4],
    target_mask: &Tensor,
    fused_mask: &Tensor,
    weights: [f32; 4],
) -> Result<f32> {
    cloth_mask.same_shape(target_mask, "cloth vs target mask")?;
    fused_mask.same_shape(target_mask, "fused vs target mask")?;
    let mut total = fused_mask.l1_distance(target_mask)?;
    for (flow, w) in flows.iter().zip(weights) {
        total += w * warp(cloth_mask, flow)?.warped.l1_distance(target_mask)?;
    }
    Ok(total)
}

/// Multi-scale feature provider standing in for a pretrained network.
pub trait FeatureExtractor {
    fn features(&self, image: &Tensor) -> Result<Vec<Tensor>>;
}

/// Average-pooling pyramid; factor 1 is the identity level.
#[derive(Clone, Debug, PartialEq)]
pub struct PoolingPyramid {
    pub factors: Vec<usize>,
}

impl Default for PoolingPyramid {
    fn default() -> Self {
        Self { factors: vec![1, 2, 4] }
    }
}

/// Non-overlapping `factor × factor` average pooling (remainder rows and
/// columns are dropped).
pub fn avg_pool(image: &Tensor, factor: usize) -> Result<Tensor> {
    let (c, h, w) = image.chw()?;
    if factor == 0 || factor > h || factor > w {
        return Err(Error::ShapeMismatch(format!("pool factor {factor} on {h}x{w}")));
    }
    if factor == 1 {
        return Ok(Tensor::from_parts_unchecked(vec![c, h, w], image.data().to_vec()));
    }
    let (oh, ow) = (h / factor, w / factor);
    let norm = (factor * factor) as f32;
    let mut out = Vec::with_capacity(c * oh * ow);
    for channel in image.data().chunks_exact(h * w) {
        for oy in 0..oh {
            for ox in 0..ow {
                let sum: f32 = (0..factor)
                    .flat_map(|dy| {
                        let row = (oy * factor + dy) * w + ox * factor;
                        &channel[row..row + factor]
                    })
                    .sum();
                out.push(sum / norm);
            }
        }
    }
    Ok(Tensor::from_parts_unchecked(vec![c, oh, ow], out))
}

impl FeatureExtractor for PoolingPyramid {
    fn features(&self, image: &Tensor) -> Result<Vec<Tensor>> {
        self.factors.iter().map(|&f| avg_pool(image, f)).collect()
    }
}

/// `φ(a, b) = Σ_levels mean|F(a) - F(b)|`.
pub fn feature_distance(extractor: &dyn FeatureExtractor, a: &Tensor, b: &Tensor) -> Result<f32> {
    a.same_shape(b, "feature distance")?;
    let fa = extractor.features(a)?;
    let fb = extractor.features(b)?;
    if fa.len() != fb.len() {
        return Err(Error::ShapeMismatch("extractor returned different level counts".into()));
    }
    fa.iter()
        .zip(&fb)
        .map(|(x, y)| Ok(x.l1_distance(y)? / x.len() as f32))
        .sum()
}

/// `Σ_i w_i·φ(D(cloth, l_i), target) + φ(fused, target)`.
pub fn perceptual_loss(
    cloth: &Tensor,
    flows: &[FlowField; 4],
    target: &Tensor,
    fused: &Tensor,
    weights: [f32; 4],
    extractor: &dyn FeatureExtractor,
) -> Result<f32> {
    let mut total = feature_distance(extractor, fused, target)?;
    for (flow, w) in flows.iter().zip(weights) {
        total += w * feature_distance(extractor, &warp(cloth, flow)?.warped, target)?;
    }
    Ok(total)
}
