#![allow(dead_code)]

use ebda_core::nn::Tensor;
use ebda_core::{BitDepthConfig, ChromaFormat, Frame, Plane};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn depth10() -> BitDepthConfig {
    BitDepthConfig::full(10).unwrap()
}

/// Smooth, well-textured intensity in [0, 1] defined on the continuous plane
/// so that translated copies are exact.
pub fn texture(x: f64, y: f64, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = 0.0;
    let mut norm = 0.0;
    for _ in 0..6 {
        let fx: f64 = rng.gen_range(0.05..0.35);
        let fy: f64 = rng.gen_range(0.05..0.35);
        let phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let amp: f64 = rng.gen_range(0.5..1.0);
        let sx: f64 = if rng.gen() { 1.0 } else { -1.0 };
        acc += amp * (fx * x + sx * fy * y + phase).sin();
        norm += amp;
    }
    0.5 + 0.5 * acc / norm
}

/// Luma plane sampled from [`texture`] at `(x + dx, y + dy)`.
pub fn textured_plane(w: usize, h: usize, dx: f64, dy: f64, seed: u64, max: u16) -> Plane {
    Plane::from_fn(w, h, |x, y| {
        (texture(x as f64 + dx, y as f64 + dy, seed) * max as f64).round() as u16
    })
}

/// A 4:2:0 frame whose planes all follow the texture, shifted by `(dx, dy)`
/// luma pixels.
pub fn textured_frame(w: usize, h: usize, dx: f64, dy: f64, seed: u64, depth: BitDepthConfig) -> Frame {
    let max = depth.max_effective();
    let y = textured_plane(w, h, dx, dy, seed, max);
    let cb = textured_plane(w / 2, h / 2, dx / 2.0, dy / 2.0, seed + 1, max);
    let cr = textured_plane(w / 2, h / 2, dx / 2.0, dy / 2.0, seed + 2, max);
    Frame::new(y, cb, cr, ChromaFormat::C420, depth).unwrap()
}

/// Slowly panning textured sequence.
pub fn panning_sequence(w: usize, h: usize, frames: usize, seed: u64, depth: BitDepthConfig) -> Vec<Frame> {
    (0..frames)
        .map(|i| textured_frame(w, h, 1.5 * i as f64, 0.5 * i as f64, seed, depth))
        .collect()
}

pub fn random_frame(w: usize, h: usize, chroma: ChromaFormat, depth: BitDepthConfig, seed: u64) -> Frame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let max = depth.max_effective();
    let (cw, ch) = chroma.chroma_dims(w, h);
    let mut plane = |pw: usize, ph: usize| {
        Plane::new(pw, ph, (0..pw * ph).map(|_| rng.gen_range(0..=max)).collect()).unwrap()
    };
    let y = plane(w, h);
    let cb = plane(cw, ch);
    let cr = plane(cw, ch);
    Frame::new(y, cb, cr, chroma, depth).unwrap()
}

/// Zero-padded same cross-correlation, accumulated in f64.
pub fn conv_oracle(input: &Tensor, kernel: &Tensor, bias: &Tensor) -> Tensor {
    let (c, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let (o, kh, kw) = (kernel.shape()[0], kernel.shape()[2], kernel.shape()[3]);
    let (ph, pw) = (kh as isize / 2, kw as isize / 2);
    let x = input.data();
    let k = kernel.data();
    let mut out = vec![0f32; o * h * w];
    for oc in 0..o {
        for y in 0..h as isize {
            for xx in 0..w as isize {
                let mut acc = bias.data()[oc] as f64;
                for ic in 0..c {
                    for ky in 0..kh as isize {
                        for kx in 0..kw as isize {
                            let sy = y + ky - ph;
                            let sx = xx + kx - pw;
                            if sy < 0 || sx < 0 || sy >= h as isize || sx >= w as isize {
                                continue;
                            }
                            let kv = k[((oc * c + ic) * kh + ky as usize) * kw + kx as usize];
                            let iv = x[(ic * h + sy as usize) * w + sx as usize];
                            acc += kv as f64 * iv as f64;
                        }
                    }
                }
                out[(oc * h + y as usize) * w + xx as usize] = acc as f32;
            }
        }
    }
    Tensor::new(vec![o, h, w], out).unwrap()
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: Vec<usize>) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(-1.0f32..1.0)).collect()).unwrap()
}
