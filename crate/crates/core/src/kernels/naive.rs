#![allow(clippy::too_many_arguments, clippy::needless_range_loop)]

//! Plain index-loop reference versions of every kernel, written directly
//! from the formulas with f64 accumulation. They share no code with the
//! production kernels and serve as oracles for `selfcheck` and the tests.

/// `x[c][y][x]` of a `c × h × w` buffer.
fn at(buf: &[f32], h: usize, w: usize, c: usize, y: usize, x: usize) -> f64 {
    f64::from(buf[c * h * w + y * w + x])
}

pub fn cgan_value(d_real: &[f32], d_fake: &[f32]) -> f64 {
    let clamp = |p: f32| f64::from(p.clamp(1e-7, 1.0 - 1e-7));
    let mut real = 0.0;
    for &p in d_real {
        real += clamp(p).ln();
    }
    let mut fake = 0.0;
    for &p in d_fake {
        fake += (1.0 - clamp(p)).ln();
    }
    real / d_real.len() as f64 + fake / d_fake.len() as f64
}

pub fn soft_iou_loss(pred: &[f32], gt: &[f32]) -> f64 {
    let mut inter = 0.0;
    let mut union = 0.0;
    for i in 0..pred.len() {
        let (p, g) = (f64::from(pred[i]), f64::from(gt[i]));
        inter += if p < g { p } else { g };
        union += if p > g { p } else { g };
    }
    1.0 - (inter + 1e-6) / (union + 1e-6)
}

pub fn concat(a: &[f32], b: &[f32]) -> Vec<f32> {
    let mut out = Vec::new();
    for &v in a {
        out.push(v);
    }
    for &v in b {
        out.push(v);
    }
    out
}

/// 1×1 convolution with `weight[o][i]` row-major.
pub fn conv1x1(x: &[f32], cin: usize, cout: usize, h: usize, w: usize, weight: &[f32], bias: &[f32]) -> Vec<f64> {
    let mut out = vec![0.0; cout * h * w];
    for o in 0..cout {
        for y in 0..h {
            for xx in 0..w {
                let mut acc = f64::from(bias[o]);
                for i in 0..cin {
                    acc += f64::from(weight[o * cin + i]) * at(x, h, w, i, y, xx);
                }
                out[o * h * w + y * w + xx] = acc;
            }
        }
    }
    out
}

/// Dense linear map parameters: `(cin, cout, weight, bias)`.
pub type LinearParams<'a> = (usize, usize, &'a [f32], &'a [f32]);

fn to_f32(v: &[f64]) -> Vec<f32> {
    v.iter().map(|&x| x as f32).collect()
}

/// Control composition with every block a 1×1 linear map.
pub fn control_forward(
    x: &[f32],
    e_c: &[f32],
    h: usize,
    w: usize,
    base: LinearParams<'_>,
    clone: LinearParams<'_>,
    zero_in: LinearParams<'_>,
    zero_out: LinearParams<'_>,
) -> Vec<f64> {
    let base_out = conv1x1(x, base.0, base.1, h, w, base.2, base.3);
    let z1 = conv1x1(e_c, zero_in.0, zero_in.1, h, w, zero_in.2, zero_in.3);
    let mut injected = vec![0.0f64; x.len()];
    for i in 0..x.len() {
        injected[i] = f64::from(x[i]) + z1[i];
    }
    let clone_out = conv1x1(&to_f32(&injected), clone.0, clone.1, h, w, clone.2, clone.3);
    let z2 = conv1x1(&to_f32(&clone_out), zero_out.0, zero_out.1, h, w, zero_out.2, zero_out.3);
    let mut out = vec![0.0; base_out.len()];
    for i in 0..out.len() {
        out[i] = base_out[i] + z2[i];
    }
    out
}

/// `ᾱ_t` for the linear schedule, recomputed from scratch.
pub fn alpha_bar(steps: usize, beta_start: f64, beta_end: f64, t: usize) -> f64 {
    let mut prod = 1.0;
    for s in 1..=t {
        let beta = beta_start + (beta_end - beta_start) * (s - 1) as f64 / (steps - 1) as f64;
        prod *= 1.0 - beta;
    }
    prod
}

pub fn forward_noise(x0: &[f32], eps: &[f32], alpha_bar: f64) -> Vec<f64> {
    let mut out = Vec::new();
    for i in 0..x0.len() {
        out.push(alpha_bar.sqrt() * f64::from(x0[i]) + (1.0 - alpha_bar).sqrt() * f64::from(eps[i]));
    }
    out
}

pub fn mse(a: &[f32], b: &[f32]) -> f64 {
    let mut total = 0.0;
    for i in 0..a.len() {
        let d = f64::from(a[i]) - f64::from(b[i]);
        total += d * d;
    }
    total / a.len() as f64
}

/// Total variation of a `2 × h × w` flow buffer.
pub fn tv(flow: &[f32], h: usize, w: usize) -> f64 {
    let mut total = 0.0;
    for c in 0..2 {
        for y in 0..h {
            for x in 0..w {
                if x + 1 < w {
                    total += (at(flow, h, w, c, y, x + 1) - at(flow, h, w, c, y, x)).abs();
                }
                if y + 1 < h {
                    total += (at(flow, h, w, c, y + 1, x) - at(flow, h, w, c, y, x)).abs();
                }
            }
        }
    }
    total
}

/// Four-neighbour bilinear warp with zero fill; returns `(warped, mask)`.
pub fn warp(src: &[f32], c: usize, h: usize, w: usize, flow: &[f32]) -> (Vec<f64>, Vec<f64>) {
    let mut out = vec![0.0; c * h * w];
    let mut mask = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let sx = x as f64 + at(flow, h, w, 0, y, x);
            let sy = y as f64 + at(flow, h, w, 1, y, x);
            if sx < 0.0 || sy < 0.0 || sx > (w - 1) as f64 || sy > (h - 1) as f64 {
                continue;
            }
            mask[y * w + x] = 1.0;
            let x0 = sx.floor() as usize;
            let y0 = sy.floor() as usize;
            let x1 = if x0 + 1 < w { x0 + 1 } else { x0 };
            let y1 = if y0 + 1 < h { y0 + 1 } else { y0 };
            let fx = sx - x0 as f64;
            let fy = sy - y0 as f64;
            for ch in 0..c {
                let v = at(src, h, w, ch, y0, x0) * (1.0 - fx) * (1.0 - fy)
                    + at(src, h, w, ch, y0, x1) * fx * (1.0 - fy)
                    + at(src, h, w, ch, y1, x0) * (1.0 - fx) * fy
                    + at(src, h, w, ch, y1, x1) * fx * fy;
                out[ch * h * w + y * w + x] = v;
            }
        }
    }
    (out, mask)
}

fn l1(a: &[f64], b: &[f32]) -> f64 {
    let mut total = 0.0;
    for i in 0..a.len() {
        total += (a[i] - f64::from(b[i])).abs();
    }
    total
}

pub fn l1_warp_loss(
    cloth: &[f32],
    c: usize,
    h: usize,
    w: usize,
    flows: &[Vec<f32>],
    target: &[f32],
    fused: &[f32],
    weights: &[f32],
) -> f64 {
    let fused64: Vec<f64> = fused.iter().map(|&v| f64::from(v)).collect();
    let mut total = l1(&fused64, target);
    for i in 0..flows.len() {
        let (warped, _) = warp(cloth, c, h, w, &flows[i]);
        total += f64::from(weights[i]) * l1(&warped, target);
    }
    total
}

fn pool(img: &[f64], c: usize, h: usize, w: usize, f: usize) -> Vec<f64> {
    let (oh, ow) = (h / f, w / f);
    let mut out = vec![0.0; c * oh * ow];
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut s = 0.0;
                for dy in 0..f {
                    for dx in 0..f {
                        s += img[ch * h * w + (oy * f + dy) * w + ox * f + dx];
                    }
                }
                out[ch * oh * ow + oy * ow + ox] = s / (f * f) as f64;
            }
        }
    }
    out
}

/// `Σ_levels mean|pool_f(a) - pool_f(b)|` over the given pooling factors.
pub fn pyramid_distance(a: &[f64], b: &[f64], c: usize, h: usize, w: usize, factors: &[usize]) -> f64 {
    let mut total = 0.0;
    for &f in factors {
        let pa = pool(a, c, h, w, f);
        let pb = pool(b, c, h, w, f);
        let mut s = 0.0;
        for i in 0..pa.len() {
            s += (pa[i] - pb[i]).abs();
        }
        total += s / pa.len() as f64;
    }
    total
}

pub fn perceptual_loss(
    cloth: &[f32],
    c: usize,
    h: usize,
    w: usize,
    flows: &[Vec<f32>],
    target: &[f32],
    fused: &[f32],
    weights: &[f32],
    factors: &[usize],
) -> f64 {
    let t: Vec<f64> = target.iter().map(|&v| f64::from(v)).collect();
    let fu: Vec<f64> = fused.iter().map(|&v| f64::from(v)).collect();
    let mut total = pyramid_distance(&fu, &t, c, h, w, factors);
    for i in 0..flows.len() {
        let (warped, _) = warp(cloth, c, h, w, &flows[i]);
        total += f64::from(weights[i]) * pyramid_distance(&warped, &t, c, h, w, factors);
    }
    total
}

pub fn condition_generator_loss(l1: f64, vgg: f64, tv: f64, lambda_l1: f64, lambda_tv: f64) -> f64 {
    lambda_l1 * l1 + vgg + lambda_tv * tv
}
