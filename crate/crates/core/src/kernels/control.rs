//! Control-signal injection through zero-initialised 1×1 convolutions.

use super::Tensor;
use crate::error::{Error, Result};

/// A network block mapping a `c × h × w` tensor to another.
pub trait Block: Send + Sync {
    fn forward(&self, x: &Tensor) -> Result<Tensor>;
}

impl<F> Block for F
where
    F: Fn(&Tensor) -> Result<Tensor> + Send + Sync,
{
    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self(x)
    }
}

/// 1×1 convolution: `out[o, p] = Σ_i weight[o, i]·x[i, p] + bias[o]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv1x1 {
    in_channels: usize,
    out_channels: usize,
    /// Row-major `out × in`.
    weight: Vec<f32>,
    bias: Vec<f32>,
}

impl Conv1x1 {
    pub fn new(in_channels: usize, out_channels: usize, weight: Vec<f32>, bias: Vec<f32>) -> Result<Self> {
        if weight.len() != in_channels * out_channels || bias.len() != out_channels {
            return Err(Error::ShapeMismatch(format!(
                "1x1 conv {in_channels}->{out_channels} with {} weights and {} biases",
                weight.len(),
                bias.len()
            )));
        }
        if weight.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue("1x1 conv parameters".into()));
        }
        Ok(Self {
            in_channels,
            out_channels,
            weight,
            bias,
        })
    }

    /// The zero convolution: weights and bias all zero.
    pub fn zeros(in_channels: usize, out_channels: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            weight: vec![0.0; in_channels * out_channels],
            bias: vec![0.0; out_channels],
        }
    }

    pub fn weight(&self) -> &[f32] {
        &self.weight
    }

    pub fn bias(&self) -> &[f32] {
        &self.bias
    }
}

impl Block for Conv1x1 {
    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (c, h, w) = x.chw()?;
        if c != self.in_channels {
            return Err(Error::ShapeMismatch(format!(
                "1x1 conv expects {} channels, got {c}",
                self.in_channels
            )));
        }
        let plane = h * w;
        let mut out = Vec::with_capacity(self.out_channels * plane);
        for (row, &b) in self.weight.chunks_exact(self.in_channels).zip(&self.bias) {
            let mut acc = vec![b; plane];
            for (&wt, channel) in row.iter().zip(x.data().chunks_exact(plane)) {
                for (a, &v) in acc.iter_mut().zip(channel) {
                    *a += wt * v;
                }
            }
            out.extend(acc);
        }
        Ok(Tensor::from_parts_unchecked(vec![self.out_channels, h, w], out))
    }
}

/// Concatenates the encoded query and mask along the channel axis, query
/// channels first.
pub fn concat_condition(e_query: &Tensor, e_mask: &Tensor) -> Result<Tensor> {
    let (cq, hq, wq) = e_query.chw()?;
    let (cm, hm, wm) = e_mask.chw()?;
    if (hq, wq) != (hm, wm) {
        return Err(Error::ShapeMismatch(format!(
            "condition planes {hq}x{wq} vs {hm}x{wm}"
        )));
    }
    let mut data = Vec::with_capacity(e_query.len() + e_mask.len());
    data.extend_from_slice(e_query.data());
    data.extend_from_slice(e_mask.data());
    Ok(Tensor::from_parts_unchecked(vec![cq + cm, hq, wq], data))
}

/// Frozen base block, its trainable clone, and the two zero convolutions
/// wiring the control branch in and out.
pub struct ControlAssembly {
    pub base: Box<dyn Block>,
    pub clone: Box<dyn Block>,
    pub zero_in: Conv1x1,
    pub zero_out: Conv1x1,
}

/// `F(x; Θ) + Z(F(x + Z(e_c; Θ_z1); Θ_c); Θ_z2)`.
pub fn control_forward(x: &Tensor, e_c: &Tensor, asm: &ControlAssembly) -> Result<Tensor> {
    let base = asm.base.forward(x)?;
    let injected = x.add(&asm.zero_in.forward(e_c)?)?;
    let control = asm.zero_out.forward(&asm.clone.forward(&injected)?)?;
    base.add(&control)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn concat_layout() {
        let a = Tensor::new(vec![1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Tensor::new(vec![1, 2, 2], vec![5.0, 6.0, 7.0, 8.0]).unwrap();
        let c = concat_condition(&a, &b).unwrap();
        assert_eq!(c.shape(), &[2, 2, 2]);
        assert_eq!(c.data(), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
        assert_eq!(c.channels(0..1).unwrap(), a);
        assert_eq!(c.channels(1..2).unwrap(), b);
    }

    #[test]
    fn concat_at_latent_resolution() {
        let a = Tensor::full(&[128, 64, 64], 0.25).unwrap();
        let b = Tensor::full(&[128, 64, 64], -0.5).unwrap();
        let c = concat_condition(&a, &b).unwrap();
        assert_eq!(c.shape(), &[256, 64, 64]);
        assert_eq!(c.channels(0..128).unwrap(), a);
        assert_eq!(c.channels(128..256).unwrap(), b);
    }

    #[test]
    fn concat_rejects_plane_mismatch() {
        let a = Tensor::zeros(&[1, 2, 2]).unwrap();
        let b = Tensor::zeros(&[1, 2, 3]).unwrap();
        assert!(matches!(concat_condition(&a, &b), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn conv_mixes_channels() {
        let conv = Conv1x1::new(2, 1, vec![2.0, -1.0], vec![0.5]).unwrap();
        let x = Tensor::new(vec![2, 1, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(conv.forward(&x).unwrap().data(), &[2.0 - 3.0 + 0.5, 4.0 - 4.0 + 0.5]);
    }
}
