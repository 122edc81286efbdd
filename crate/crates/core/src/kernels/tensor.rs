use std::ops::Range;

use crate::error::{Error, Result};

/// Small dense row-major tensor (at most four axes).
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        if shape.is_empty() || shape.len() > 4 || shape.contains(&0) {
            return Err(Error::ShapeMismatch(format!("invalid shape {shape:?}")));
        }
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(Error::ShapeMismatch(format!(
                "shape {shape:?} needs {len} values, got {}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue("tensor data".into()));
        }
        Ok(Self { shape, data })
    }

    pub fn full(shape: &[usize], value: f32) -> Result<Self> {
        Self::new(shape.to_vec(), vec![value; shape.iter().product()])
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        Self::full(shape, 0.0)
    }

    pub fn from_fn(shape: &[usize], f: impl FnMut(usize) -> f32) -> Result<Self> {
        let len = shape.iter().product();
        Self::new(shape.to_vec(), (0..len).map(f).collect())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    /// Interprets the tensor as `c × h × w`; a 2-axis tensor is one channel.
    pub fn chw(&self) -> Result<(usize, usize, usize)> {
        match *self.shape.as_slice() {
            [h, w] => Ok((1, h, w)),
            [c, h, w] => Ok((c, h, w)),
            ref s => Err(Error::ShapeMismatch(format!("expected c×h×w, got {s:?}"))),
        }
    }

    /// Copy of channels `range` of a `c × h × w` tensor.
    pub fn channels(&self, range: Range<usize>) -> Result<Tensor> {
        let (c, h, w) = self.chw()?;
        if range.end > c || range.is_empty() {
            return Err(Error::ShapeMismatch(format!("channel range {range:?} of {c}")));
        }
        let plane = h * w;
        Ok(Tensor {
            shape: vec![range.len(), h, w],
            data: self.data[range.start * plane..range.end * plane].to_vec(),
        })
    }

    pub(crate) fn same_shape(&self, other: &Tensor, what: &str) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch(format!(
                "{what}: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(())
    }

    pub(crate) fn from_parts_unchecked(shape: Vec<usize>, data: Vec<f32>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }

    /// Elementwise sum.
    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.same_shape(other, "add")?;
        Ok(Self::from_parts_unchecked(
            self.shape.clone(),
            self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        ))
    }

    /// `Σ |a - b|`.
    pub fn l1_distance(&self, other: &Tensor) -> Result<f32> {
        self.same_shape(other, "l1 distance")?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).sum())
    }
}
