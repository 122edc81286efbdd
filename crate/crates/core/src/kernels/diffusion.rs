use super::Tensor;
use crate::error::{Error, Result};

/// Discrete noise schedule with cumulative products `ᾱ_t = Π_{s≤t}(1 - β_s)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiffusionSchedule {
    betas: Vec<f32>,
    alpha_bars: Vec<f32>,
    /// `(√ᾱ_t, √(1-ᾱ_t))` rounded once from f64.
    coefficients: Vec<(f32, f32)>,
}

impl DiffusionSchedule {
    /// Betas linear from `beta_start` at t=1 to `beta_end` at t=T.
    pub fn linear(steps: usize, beta_start: f32, beta_end: f32) -> Result<Self> {
        if steps < 2 {
            return Err(Error::InvalidConfig("schedule needs at least two steps".into()));
        }
        if !(0.0 < beta_start && beta_start <= beta_end && beta_end < 1.0) {
            return Err(Error::InvalidConfig(format!("betas {beta_start}..{beta_end} not in (0, 1)")));
        }
        let span = f64::from(beta_end) - f64::from(beta_start);
        let betas: Vec<f64> = (0..steps)
            .map(|i| f64::from(beta_start) + span * i as f64 / (steps - 1) as f64)
            .collect();
        let mut acc = 1.0f64;
        let cumulative: Vec<f64> = betas
            .iter()
            .map(|b| {
                acc *= 1.0 - b;
                acc
            })
            .collect();
        Ok(Self {
            betas: betas.into_iter().map(|b| b as f32).collect(),
            alpha_bars: cumulative.iter().map(|&a| a as f32).collect(),
            coefficients: cumulative
                .iter()
                .map(|&a| (a.sqrt() as f32, (1.0 - a).sqrt() as f32))
                .collect(),
        })
    }

    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    fn index(&self, t: usize) -> Result<usize> {
        if t == 0 || t > self.steps() {
            return Err(Error::BadTimestep { t, max: self.steps() });
        }
        Ok(t - 1)
    }

    pub fn beta(&self, t: usize) -> Result<f32> {
        Ok(self.betas[self.index(t)?])
    }

    pub fn alpha_bar(&self, t: usize) -> Result<f32> {
        Ok(self.alpha_bars[self.index(t)?])
    }
}

impl Default for DiffusionSchedule {
    fn default() -> Self {
        Self::linear(1000, 1e-4, 0.02).expect("static schedule is valid")
    }
}

/// Closed-form forward noising: `√ᾱ_t·x0 + √(1-ᾱ_t)·eps`.
pub fn forward_noise(x0: &Tensor, t: usize, eps: &Tensor, schedule: &DiffusionSchedule) -> Result<Tensor> {
    x0.same_shape(eps, "forward noise")?;
    let (signal, noise) = schedule.coefficients[schedule.index(t)?];
    Ok(Tensor::from_parts_unchecked(
        x0.shape().to_vec(),
        x0.data()
            .iter()
            .zip(eps.data())
            .map(|(&x, &e)| signal * x + noise * e)
            .collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_shape() {
        let s = DiffusionSchedule::default();
        assert_eq!(s.steps(), 1000);
        assert!((s.beta(1).unwrap() - 1e-4).abs() < 1e-9);
        assert!((s.beta(1000).unwrap() - 0.02).abs() < 1e-7);
        for t in 2..=1000 {
            assert!(s.alpha_bar(t).unwrap() < s.alpha_bar(t - 1).unwrap());
            let b = s.beta(t).unwrap();
            assert!(b > 0.0 && b < 1.0);
        }
    }

    #[test]
    fn timestep_bounds() {
        let s = DiffusionSchedule::default();
        let x = Tensor::zeros(&[2]).unwrap();
        assert!(matches!(forward_noise(&x, 0, &x, &s), Err(Error::BadTimestep { .. })));
        assert!(matches!(forward_noise(&x, 1001, &x, &s), Err(Error::BadTimestep { .. })));
    }

    #[test]
    fn zero_noise_scales_signal() {
        let s = DiffusionSchedule::default();
        let x = Tensor::new(vec![3], vec![1.0, -2.0, 0.5]).unwrap();
        let eps = Tensor::zeros(&[3]).unwrap();
        let out = forward_noise(&x, 500, &eps, &s).unwrap();
        let scale = s.alpha_bar(500).unwrap().sqrt();
        for (o, v) in out.data().iter().zip(x.data()) {
            assert_eq!(*o, scale * v);
        }
    }

    #[test]
    fn first_step_is_nearly_clean() {
        let s = DiffusionSchedule::default();
        let x = Tensor::new(vec![3], vec![1.0, -2.0, 0.5]).unwrap();
        let eps = Tensor::new(vec![3], vec![0.3, -1.0, 2.0]).unwrap();
        let out = forward_noise(&x, 1, &eps, &s).unwrap();
        let max_diff = out.data().iter().zip(x.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f32::max);
        assert!(max_diff < 0.02 * 2.0 + 1e-4);
    }
}
