//! Full-reference image quality: PSNR and SSIM on grayscale images in [0, 1].

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct ImageGray {
    height: usize,
    width: usize,
    pixels: Vec<f32>,
}

impl ImageGray {
    pub fn new(height: usize, width: usize, pixels: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 || pixels.len() != height * width {
            return Err(Error::ShapeMismatch(format!(
                "{height}x{width} image with {} pixels",
                pixels.len()
            )));
        }
        if pixels.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::OutOfRange("pixel outside [0, 1]".into()));
        }
        Ok(Self { height, width, pixels })
    }

    pub fn constant(height: usize, width: usize, value: f32) -> Result<Self> {
        Self::new(height, width, vec![value; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    fn same_shape(&self, other: &ImageGray) -> Result<()> {
        if (self.height, self.width) != (other.height, other.width) {
            return Err(Error::ShapeMismatch(format!(
                "{}x{} vs {}x{}",
                self.height, self.width, other.height, other.width
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Psnr {
    Finite(f32),
    /// Identical images.
    Infinite,
}

impl Psnr {
    pub fn db(self) -> f32 {
        match self {
            Psnr::Finite(v) => v,
            Psnr::Infinite => f32::INFINITY,
        }
    }
}

impl fmt::Display for Psnr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Psnr::Finite(v) => write!(f, "{v:.4} dB"),
            Psnr::Infinite => f.write_str("inf"),
        }
    }
}

pub fn mse(a: &ImageGray, b: &ImageGray) -> Result<f64> {
    a.same_shape(b)?;
    let sum: f64 = a
        .pixels
        .iter()
        .zip(&b.pixels)
        .map(|(&x, &y)| (f64::from(x) - f64::from(y)).powi(2))
        .sum();
    Ok(sum / a.pixels.len() as f64)
}

pub fn psnr_from_mse(mse: f64, max_value: f32) -> Psnr {
    if mse == 0.0 {
        Psnr::Infinite
    } else {
        let max = f64::from(max_value);
        Psnr::Finite((10.0 * (max * max / mse).log10()) as f32)
    }
}

/// `10·log10(max² / MSE)`.
pub fn psnr(a: &ImageGray, b: &ImageGray, max_value: f32) -> Result<Psnr> {
    Ok(psnr_from_mse(mse(a, b)?, max_value))
}

const K1: f64 = 0.01;
const K2: f64 = 0.03;
const DYNAMIC_RANGE: f64 = 1.0;

fn ssim_from_stats(mu_a: f64, mu_b: f64, var_a: f64, var_b: f64, cov: f64) -> f64 {
    let c1 = (K1 * DYNAMIC_RANGE).powi(2);
    let c2 = (K2 * DYNAMIC_RANGE).powi(2);
    ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)) / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2))
}

/// SSIM from whole-image statistics (population variances).
pub fn ssim(a: &ImageGray, b: &ImageGray) -> Result<f32> {
    a.same_shape(b)?;
    let n = a.pixels.len();
    if n < 2 {
        return Err(Error::ShapeMismatch("SSIM needs at least two pixels".into()));
    }
    if a.pixels == b.pixels {
        return Ok(1.0);
    }
    let n = n as f64;
    let mu_a = a.pixels.iter().map(|&v| f64::from(v)).sum::<f64>() / n;
    let mu_b = b.pixels.iter().map(|&v| f64::from(v)).sum::<f64>() / n;
    let (mut var_a, mut var_b, mut cov) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.pixels.iter().zip(&b.pixels) {
        let (dx, dy) = (f64::from(x) - mu_a, f64::from(y) - mu_b);
        var_a += dx * dx;
        var_b += dy * dy;
        cov += dx * dy;
    }
    Ok(ssim_from_stats(mu_a, mu_b, var_a / n, var_b / n, cov / n) as f32)
}

/// Mean SSIM over sliding Gaussian windows (11×11, σ = 1.5, valid region).
pub fn ssim_windowed(a: &ImageGray, b: &ImageGray) -> Result<f32> {
    const SIZE: usize = 11;
    const SIGMA: f64 = 1.5;
    a.same_shape(b)?;
    if a.height < SIZE || a.width < SIZE {
        return Err(Error::ShapeMismatch(format!("windowed SSIM needs at least {SIZE}x{SIZE}")));
    }
    let half = (SIZE / 2) as f64;
    let g: Vec<f64> = (0..SIZE)
        .map(|i| (-((i as f64 - half).powi(2)) / (2.0 * SIGMA * SIGMA)).exp())
        .collect();
    let norm: f64 = g.iter().sum::<f64>().powi(2);
    let w = a.width;
    let (mut total, mut windows) = (0.0f64, 0usize);
    for y in 0..=a.height - SIZE {
        for x in 0..=w - SIZE {
            let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for (dy, gy) in g.iter().enumerate() {
                for (dx, gx) in g.iter().enumerate() {
                    let k = gy * gx / norm;
                    let p = (y + dy) * w + x + dx;
                    let (va, vb) = (f64::from(a.pixels[p]), f64::from(b.pixels[p]));
                    ma += k * va;
                    mb += k * vb;
                    saa += k * va * va;
                    sbb += k * vb * vb;
                    sab += k * va * vb;
                }
            }
            total += ssim_from_stats(ma, mb, saa - ma * ma, sbb - mb * mb, sab - ma * mb);
            windows += 1;
        }
    }
    Ok((total / windows as f64) as f32)
}
