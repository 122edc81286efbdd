//! Randomised comparison of every kernel against its loop oracle.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::naive;
use super::{
    cgan_iou_loss, concat_condition, condition_generator_loss, control_forward, denoising_loss,
    denoising_loss_grad, forward_noise, l1_warp_loss, perceptual_loss, tv_loss, warp, Block, ControlAssembly,
    Conv1x1, DiffusionSchedule, FlowField, PoolingPyramid, Tensor,
};
use crate::error::Result;

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub instances: usize,
    /// Largest `|kernel - oracle| / max(1, |oracle|)` observed (or the
    /// check-specific statistic for the non-oracle checks).
    pub max_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<28} {:>5} {:>12.3e} {:>10.1e}  {}",
            self.name,
            self.instances,
            self.max_error,
            self.tolerance,
            if self.passed { "PASS" } else { "FAIL" }
        )
    }
}

fn rel_err(value: f64, oracle: f64) -> f64 {
    (value - oracle).abs() / oracle.abs().max(1.0)
}

fn max_rel_err(values: &[f32], oracle: &[f64]) -> f64 {
    if values.len() != oracle.len() {
        return f64::INFINITY;
    }
    values
        .iter()
        .zip(oracle)
        .map(|(&v, &o)| rel_err(f64::from(v), o))
        .fold(0.0, f64::max)
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f32, hi: f32) -> Vec<f32> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

fn normal(rng: &mut ChaCha8Rng, n: usize) -> Vec<f32> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

fn dims(rng: &mut ChaCha8Rng) -> (usize, usize, usize) {
    (rng.random_range(1..=3), rng.random_range(2..=8), rng.random_range(2..=8))
}

fn random_flow(rng: &mut ChaCha8Rng, h: usize, w: usize, reach: f32) -> Result<FlowField> {
    FlowField::new(Tensor::new(vec![2, h, w], uniform(rng, 2 * h * w, -reach, reach))?)
}

fn random_conv(rng: &mut ChaCha8Rng, cin: usize, cout: usize) -> Result<Conv1x1> {
    Conv1x1::new(cin, cout, uniform(rng, cin * cout, -1.0, 1.0), uniform(rng, cout, -0.5, 0.5))
}

struct Check {
    name: &'static str,
    tolerance: f64,
    max_error: f64,
    instances: usize,
}

impl Check {
    fn new(name: &'static str, tolerance: f64) -> Self {
        Self {
            name,
            tolerance,
            max_error: 0.0,
            instances: 0,
        }
    }

    fn record(&mut self, err: f64) {
        self.instances += 1;
        // NaN must fail the check.
        self.max_error = if err.is_nan() { f64::INFINITY } else { self.max_error.max(err) };
    }

    fn finish(self) -> CheckResult {
        CheckResult {
            name: self.name,
            instances: self.instances,
            max_error: self.max_error,
            tolerance: self.tolerance,
            passed: self.instances > 0 && self.max_error <= self.tolerance,
        }
    }
}

/// Runs every kernel check on `instances` seeded random inputs.
pub fn run_selfcheck(instances: usize, seed: u64) -> Result<Vec<CheckResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let schedule = DiffusionSchedule::default();

    let mut cgan = Check::new("cgan_iou_loss", 1e-6);
    let mut concat = Check::new("concat_condition", 0.0);
    let mut control = Check::new("control_forward", 1e-6);
    let mut zero_init = Check::new("control_zero_init_bitwise", 0.0);
    let mut noise = Check::new("forward_noise", 1e-6);
    let mut denoise = Check::new("denoising_loss", 1e-6);
    let mut denoise_grad = Check::new("denoising_loss_grad_fd", 1e-5);
    let mut tv = Check::new("tv_loss", 1e-6);
    let mut warp_check = Check::new("warp", 1e-5);
    let mut l1 = Check::new("l1_warp_loss", 1e-5);
    let mut vgg = Check::new("perceptual_loss", 1e-5);
    let mut combined = Check::new("condition_generator_loss", 1e-6);

    for _ in 0..instances {
        let (c, h, w) = dims(&mut rng);
        let n = c * h * w;

        // Mask GAN objective.
        let d_real = Tensor::new(vec![c, h, w], uniform(&mut rng, n, 0.01, 0.99))?;
        let d_fake = Tensor::new(vec![c, h, w], uniform(&mut rng, n, 0.01, 0.99))?;
        let pred = Tensor::new(vec![c, h, w], uniform(&mut rng, n, 0.0, 1.0))?;
        let gt = Tensor::from_fn(&[c, h, w], |_| if rng.random_bool(0.5) { 1.0 } else { 0.0 })?;
        let lambda = rng.random_range(0.0..2.0f32);
        let out = cgan_iou_loss(&d_real, &d_fake, &pred, &gt, lambda)?;
        let oracle_cgan = naive::cgan_value(d_real.data(), d_fake.data());
        let oracle_iou = naive::soft_iou_loss(pred.data(), gt.data());
        cgan.record(
            rel_err(f64::from(out.cgan), oracle_cgan)
                .max(rel_err(f64::from(out.iou), oracle_iou))
                .max(rel_err(f64::from(out.combined), oracle_cgan + f64::from(lambda) * oracle_iou)),
        );

        // Condition concatenation.
        let eq = Tensor::new(vec![c, h, w], normal(&mut rng, n))?;
        let em = Tensor::new(vec![c, h, w], normal(&mut rng, n))?;
        let cat = concat_condition(&eq, &em)?;
        let expected = naive::concat(eq.data(), em.data());
        let exact = cat.shape() == [2 * c, h, w] && cat.data() == expected.as_slice();
        concat.record(if exact { 0.0 } else { f64::INFINITY });

        // Control injection with linear blocks.
        let c_out = rng.random_range(1..=3);
        let base = random_conv(&mut rng, c, c_out)?;
        let clone = random_conv(&mut rng, c, c_out)?;
        let zero_in = random_conv(&mut rng, 2 * c, c)?;
        let zero_out = random_conv(&mut rng, c_out, c_out)?;
        let x = Tensor::new(vec![c, h, w], normal(&mut rng, n))?;
        let oracle = naive::control_forward(
            x.data(),
            cat.data(),
            h,
            w,
            (c, c_out, base.weight(), base.bias()),
            (c, c_out, clone.weight(), clone.bias()),
            (2 * c, c, zero_in.weight(), zero_in.bias()),
            (c_out, c_out, zero_out.weight(), zero_out.bias()),
        );
        let asm = ControlAssembly {
            base: Box::new(base.clone()),
            clone: Box::new(clone),
            zero_in,
            zero_out,
        };
        control.record(max_rel_err(control_forward(&x, &cat, &asm)?.data(), &oracle));

        let zeroed = ControlAssembly {
            zero_out: Conv1x1::zeros(c_out, c_out),
            ..asm
        };
        let with_zero = control_forward(&x, &cat, &zeroed)?;
        let plain = base.forward(&x)?;
        let bitwise = with_zero.shape() == plain.shape()
            && with_zero
                .data()
                .iter()
                .zip(plain.data())
                .all(|(a, b)| a.to_bits() == b.to_bits());
        zero_init.record(if bitwise { 0.0 } else { f64::INFINITY });

        // Forward noising.
        let t = rng.random_range(1..=schedule.steps());
        let x0 = Tensor::new(vec![c, h, w], normal(&mut rng, n))?;
        let eps = Tensor::new(vec![c, h, w], normal(&mut rng, n))?;
        let ab = naive::alpha_bar(1000, 1e-4, 0.02, t);
        noise.record(max_rel_err(forward_noise(&x0, t, &eps, &schedule)?.data(), &naive::forward_noise(x0.data(), eps.data(), ab)));

        // Denoising objective and its gradient.
        let eps_pred = Tensor::new(vec![c, h, w], normal(&mut rng, n))?;
        denoise.record(rel_err(
            f64::from(denoising_loss(&eps, &eps_pred)?),
            naive::mse(eps.data(), eps_pred.data()),
        ));
        let grad = denoising_loss_grad(&eps, &eps_pred)?;
        let e64: Vec<f64> = eps.data().iter().map(|&v| f64::from(v)).collect();
        let mut p64: Vec<f64> = eps_pred.data().iter().map(|&v| f64::from(v)).collect();
        let mse64 = |p: &[f64]| p.iter().zip(&e64).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / p.len() as f64;
        let step = 1e-4;
        let mut worst = 0.0f64;
        for i in 0..n {
            let orig = p64[i];
            p64[i] = orig + step;
            let up = mse64(&p64);
            p64[i] = orig - step;
            let down = mse64(&p64);
            p64[i] = orig;
            worst = worst.max(rel_err(f64::from(grad.data()[i]), (up - down) / (2.0 * step)));
        }
        denoise_grad.record(worst);

        // Flow smoothness.
        let flow = random_flow(&mut rng, h, w, 1.5)?;
        tv.record(rel_err(f64::from(tv_loss(&flow)?), naive::tv(flow.as_tensor().data(), h, w)));

        // Warping.
        let src = Tensor::new(vec![c, h, w], uniform(&mut rng, n, 0.0, 1.0))?;
        let warped = warp(&src, &flow)?;
        let (oracle_img, oracle_mask) = naive::warp(src.data(), c, h, w, flow.as_tensor().data());
        warp_check.record(
            max_rel_err(warped.warped.data(), &oracle_img).max(max_rel_err(warped.overlap_mask.data(), &oracle_mask)),
        );

        // Warp-based objectives.
        let flows: [FlowField; 4] = [
            random_flow(&mut rng, h, w, 1.5)?,
            random_flow(&mut rng, h, w, 1.5)?,
            random_flow(&mut rng, h, w, 1.5)?,
            random_flow(&mut rng, h, w, 1.5)?,
        ];
        let flow_data: Vec<Vec<f32>> = flows.iter().map(|f| f.as_tensor().data().to_vec()).collect();
        let weights: [f32; 4] = std::array::from_fn(|_| rng.random_range(0.0..1.0));
        let target = Tensor::new(vec![c, h, w], uniform(&mut rng, n, 0.0, 1.0))?;
        let fused = Tensor::new(vec![c, h, w], uniform(&mut rng, n, 0.0, 1.0))?;
        l1.record(rel_err(
            f64::from(l1_warp_loss(&src, &flows, &target, &fused, weights)?),
            naive::l1_warp_loss(src.data(), c, h, w, &flow_data, target.data(), fused.data(), &weights),
        ));
        let pyramid = PoolingPyramid {
            factors: vec![1, 2],
        };
        vgg.record(rel_err(
            f64::from(perceptual_loss(&src, &flows, &target, &fused, weights, &pyramid)?),
            naive::perceptual_loss(src.data(), c, h, w, &flow_data, target.data(), fused.data(), &weights, &pyramid.factors),
        ));

        let parts: [f32; 5] = std::array::from_fn(|_| rng.random_range(0.0..10.0));
        combined.record(rel_err(
            f64::from(condition_generator_loss(parts[0], parts[1], parts[2], parts[3], parts[4])),
            naive::condition_generator_loss(
                f64::from(parts[0]),
                f64::from(parts[1]),
                f64::from(parts[2]),
                f64::from(parts[3]),
                f64::from(parts[4]),
            ),
        ));
    }

    let mut results: Vec<CheckResult> = [
        cgan,
        concat,
        control,
        zero_init,
        noise,
        denoise,
        denoise_grad,
        tv,
        warp_check,
        l1,
        vgg,
        combined,
    ]
    .into_iter()
    .map(Check::finish)
    .collect();
    results.push(noise_variance_check(&schedule, 10_000, seed)?);
    Ok(results)
}

/// Sample variance of `forward_noise(0, t, eps)` over seeded draws against
/// `1 - ᾱ_t`; passes within 5% relative error at each probed timestep.
pub fn noise_variance_check(schedule: &DiffusionSchedule, draws: usize, seed: u64) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(17));
    let x0 = Tensor::zeros(&[draws])?;
    let mut worst = 0.0f64;
    let mut probes = 0;
    for t in [1usize, 10, 100, 500, 1000] {
        let eps = Tensor::new(vec![draws], normal(&mut rng, draws))?;
        let out = forward_noise(&x0, t, &eps, schedule)?;
        let mean = out.data().iter().map(|&v| f64::from(v)).sum::<f64>() / draws as f64;
        let var = out
            .data()
            .iter()
            .map(|&v| (f64::from(v) - mean).powi(2))
            .sum::<f64>()
            / (draws - 1) as f64;
        let expected = 1.0 - f64::from(schedule.alpha_bar(t)?);
        worst = worst.max((var - expected).abs() / expected);
        probes += 1;
    }
    Ok(CheckResult {
        name: "forward_noise_variance_mc",
        instances: probes,
        max_error: worst,
        tolerance: 0.05,
        passed: worst <= 0.05,
    })
}
