//! Full-frame enhancement: 4:4:4 conversion, naive up-shift, flow alignment
//! of the neighbors to the center frame, tiled network execution and
//! conversion back to the source chroma format.

use serde::{Deserialize, Serialize};

use super::model::Model;
use super::network::forward_residual;
use super::tensor::Tensor;
use crate::dataset::{yuv420_to_444, yuv444_to_420};
use crate::ebd::ebd_restore_naive;
use crate::error::{Error, Result};
use crate::flow::{estimate_flow, round_sample, warp_frame, FlowParams};
use crate::video::{ChromaFormat, Frame, Plane};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TileConfig {
    pub tile_size: usize,
    pub overlap: usize,
    /// Frames up to this many luma pixels run in one pass.
    pub max_full_frame_pixels: usize,
}

impl Default for TileConfig {
    fn default() -> Self {
        TileConfig {
            tile_size: 96,
            overlap: 16,
            max_full_frame_pixels: 256 * 256,
        }
    }
}

impl TileConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tile_size < super::network::MIN_INPUT_SIZE || self.overlap >= self.tile_size {
            return Err(Error::Parameter(format!(
                "tile_size must be >= {} and exceed overlap",
                super::network::MIN_INPUT_SIZE
            )));
        }
        Ok(())
    }
}

fn tile_origins(len: usize, tile: usize, overlap: usize) -> Vec<usize> {
    if len <= tile {
        return vec![0];
    }
    let last = len - tile;
    let mut v: Vec<usize> = (0..last).step_by(tile - overlap).collect();
    v.push(last);
    v
}

/// Linear cross-fade weight for position `i` of a tile starting at `origin`
/// with `size` samples on an axis of length `len`.
fn ramp_weight(i: usize, origin: usize, size: usize, len: usize, overlap: usize) -> f32 {
    if overlap == 0 {
        return 1.0;
    }
    let mut w = 1.0f32;
    if origin > 0 {
        w = w.min((i as f32 + 0.5) / overlap as f32);
    }
    if origin + size < len {
        w = w.min((size as f32 - i as f32 - 0.5) / overlap as f32);
    }
    w
}

/// Network residual over a whole frame, tiled with cross-faded overlaps when
/// the frame exceeds `tiles.max_full_frame_pixels`.
pub fn tiled_residual(model: &Model, input: &Tensor, tiles: &TileConfig) -> Result<Tensor> {
    let (_, h, w) = input.chw()?;
    if h * w <= tiles.max_full_frame_pixels || (h <= tiles.tile_size && w <= tiles.tile_size) {
        return forward_residual(model, input);
    }
    tiles.validate()?;
    let out_ch = model.config().channels_per_frame;
    let mut acc = vec![0.0f32; out_ch * h * w];
    let mut norm = vec![0.0f32; h * w];
    let ys = tile_origins(h, tiles.tile_size, tiles.overlap);
    let xs = tile_origins(w, tiles.tile_size, tiles.overlap);
    for &ty in &ys {
        let th = tiles.tile_size.min(h);
        for &tx in &xs {
            let tw = tiles.tile_size.min(w);
            let res = forward_residual(model, &input.crop(tx, ty, tw, th)?)?;
            for y in 0..th {
                let wy = ramp_weight(y, ty, th, h, tiles.overlap);
                for x in 0..tw {
                    let wgt = wy * ramp_weight(x, tx, tw, w, tiles.overlap);
                    let dst = (ty + y) * w + tx + x;
                    norm[dst] += wgt;
                    for c in 0..out_ch {
                        acc[c * h * w + dst] += wgt * res.channel(c)[y * tw + x];
                    }
                }
            }
        }
    }
    for c in 0..out_ch {
        for (a, n) in acc[c * h * w..(c + 1) * h * w].iter_mut().zip(&norm) {
            *a /= n;
        }
    }
    Tensor::new(vec![out_ch, h, w], acc)
}

/// Appends the three planes of a full-depth 4:4:4 frame, scaled to [0, 1].
fn push_normalized(frame: &Frame, scale: f32, out: &mut Vec<f32>) {
    for plane in frame.planes() {
        out.extend(plane.data().iter().map(|&v| v as f32 * scale));
    }
}

/// Naive up-shifted 4:4:4 version of a decoded frame.
fn prepare(frame: &Frame) -> Result<Frame> {
    let (full444, _) = yuv420_to_444(frame);
    ebd_restore_naive(&full444)
}

/// Restores full effective bit depth of `cur` using its temporal neighbors.
///
/// Missing neighbors (sequence boundaries) are replaced by the center frame.
/// The output is tagged at full effective depth in the input chroma format.
pub fn enhance_frame(
    model: &Model,
    prev: Option<&Frame>,
    cur: &Frame,
    next: Option<&Frame>,
    flow_params: &FlowParams,
    tiles: &TileConfig,
) -> Result<Frame> {
    let cfg = model.config();
    if cfg.input_frames != 3 || cfg.channels_per_frame != 3 {
        return Err(Error::Config(format!(
            "frame enhancement needs a 3-frame, 3-channel model, got {}x{}",
            cfg.input_frames, cfg.channels_per_frame
        )));
    }
    for (name, f) in [("previous", prev), ("next", next)] {
        if let Some(f) = f {
            if !f.same_layout(cur) {
                return Err(Error::Shape(format!(
                    "{name} frame format differs from the current frame"
                )));
            }
        }
    }

    let center = prepare(cur)?;
    let align = |neighbor: Option<&Frame>| -> Result<Frame> {
        match neighbor {
            None => Ok(center.clone()),
            Some(n) => {
                let n = prepare(n)?;
                let flow = estimate_flow(&n.y, &center.y, flow_params)?;
                warp_frame(&n, &flow)
            }
        }
    };
    let before = align(prev)?;
    let after = align(next)?;

    let depth = center.bit_depth();
    let max = depth.max_coded();
    let scale = 1.0 / max as f32;
    let (w, h) = (center.width(), center.height());
    let mut input = Vec::with_capacity(9 * w * h);
    for f in [&before, &center, &after] {
        push_normalized(f, scale, &mut input);
    }
    let input = Tensor::new(vec![9, h, w], input)?;
    let mut baseline = Vec::with_capacity(3 * w * h);
    push_normalized(&center, scale, &mut baseline);

    let residual = tiled_residual(model, &input, tiles)?;
    if !residual.is_finite() {
        return Err(Error::ModelIntegrity(
            "network produced non-finite output".into(),
        ));
    }
    let plane = |c: usize| -> Result<Plane> {
        let data = residual
            .channel(c)
            .iter()
            .zip(&baseline[c * w * h..(c + 1) * w * h])
            .map(|(r, b)| round_sample((b + r) * max as f32, max))
            .collect();
        Plane::new(w, h, data)
    };
    let out444 = Frame::new(plane(0)?, plane(1)?, plane(2)?, ChromaFormat::C444, depth)?;
    match cur.chroma() {
        ChromaFormat::C444 => Ok(out444),
        ChromaFormat::C420 => yuv444_to_420(&out444),
    }
}

/// Enhances every frame of a decoded sequence with its immediate neighbors.
pub fn enhance_sequence(
    model: &Model,
    frames: &[Frame],
    flow_params: &FlowParams,
    tiles: &TileConfig,
) -> Result<Vec<Frame>> {
    (0..frames.len())
        .map(|i| {
            let prev = i.checked_sub(1).map(|j| &frames[j]);
            let next = frames.get(i + 1);
            enhance_frame(model, prev, &frames[i], next, flow_params, tiles)
        })
        .collect()
}
