//! Deterministic inputs shared by the benchmarks.

use ebda_core::metrics::RdPoint;
use ebda_core::nn::Tensor;
use ebda_core::{BitDepthConfig, ChromaFormat, Frame, Plane};

fn wave(x: f64, y: f64, k: f64) -> f64 {
    0.5 + 0.25 * (0.21 * x + 0.13 * y + k).sin() + 0.25 * (0.07 * x - 0.29 * y + 2.0 * k).cos()
}

/// Textured plane shifted by `(dx, dy)` pixels.
pub fn plane(w: usize, h: usize, dx: f64, dy: f64, max: u16) -> Plane {
    Plane::from_fn(w, h, |x, y| {
        (wave(x as f64 + dx, y as f64 + dy, 0.0) * max as f64).round() as u16
    })
}

/// Ten-bit 4:2:0 frame with textured planes.
pub fn frame(w: usize, h: usize, t: usize) -> Frame {
    let depth = BitDepthConfig::full(10).expect("valid depth");
    let shift = t as f64 * 1.5;
    let tex = |pw, ph, k: f64| {
        Plane::from_fn(pw, ph, |x, y| {
            (wave(x as f64 + shift, y as f64, k) * 1023.0).round() as u16
        })
    };
    Frame::new(tex(w, h, 0.0), tex(w / 2, h / 2, 1.0), tex(w / 2, h / 2, 2.0), ChromaFormat::C420, depth)
        .expect("consistent geometry")
}

/// Tensor filled with a bounded, non-constant pattern.
pub fn tensor(shape: &[usize]) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|i| ((i as f32) * 0.618).sin()).collect();
    Tensor::new(shape.to_vec(), data).expect("shape matches data")
}

/// A typical four-point RD curve and a slightly better one.
pub fn rd_pair() -> (Vec<RdPoint>, Vec<RdPoint>) {
    let a = [(100.0, 30.0), (200.0, 33.0), (400.0, 35.5), (800.0, 37.5)];
    let b = [(95.0, 30.1), (185.0, 33.2), (380.0, 35.6), (760.0, 37.7)];
    let pts = |v: &[(f64, f64)]| v.iter().map(|&(r, q)| RdPoint::new(r, q)).collect();
    (pts(&a), pts(&b))
}
