//! Low-complexity dense optical flow and bilinear frame warping.
//!
//! The estimator follows the dense inverse search recipe: a coarse-to-fine
//! image pyramid, per-patch inverse compositional Lucas-Kanade on a regular
//! grid of overlapping patches, and densification by photometric-error
//! weighted averaging of the patch displacements. There is no variational
//! refinement stage.
//!
//! Convention: `estimate_flow(reference, target)` returns the field `f` such
//! that `warp(reference, f)` approximates `target`, i.e.
//! `target(x, y) ~ reference(x + u, y + v)`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::video::{ChromaFormat, Frame, Plane};

#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    width: usize,
    height: usize,
    u: Vec<f32>,
    v: Vec<f32>,
}

impl FlowField {
    pub fn zeros(width: usize, height: usize) -> Self {
        FlowField {
            width,
            height,
            u: vec![0.0; width * height],
            v: vec![0.0; width * height],
        }
    }

    pub fn constant(width: usize, height: usize, u: f32, v: f32) -> Self {
        FlowField {
            width,
            height,
            u: vec![u; width * height],
            v: vec![v; width * height],
        }
    }

    pub fn new(width: usize, height: usize, u: Vec<f32>, v: Vec<f32>) -> Result<Self> {
        if u.len() != width * height || v.len() != width * height {
            return Err(Error::Shape(format!(
                "flow components must have {width}x{height} entries"
            )));
        }
        if u.iter().chain(&v).any(|x| !x.is_finite()) {
            return Err(Error::Parameter("flow contains non-finite values".into()));
        }
        Ok(FlowField {
            width,
            height,
            u,
            v,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn u(&self) -> &[f32] {
        &self.u
    }

    pub fn v(&self) -> &[f32] {
        &self.v
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> (f32, f32) {
        let i = y * self.width + x;
        (self.u[i], self.v[i])
    }

    /// Field for a 2x subsampled plane: 2x2 mean of each component, halved.
    pub fn subsample_half(&self) -> FlowField {
        let (w, h) = (self.width / 2, self.height / 2);
        let mut u = Vec::with_capacity(w * h);
        let mut v = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                let idx = [
                    2 * y * self.width + 2 * x,
                    2 * y * self.width + 2 * x + 1,
                    (2 * y + 1) * self.width + 2 * x,
                    (2 * y + 1) * self.width + 2 * x + 1,
                ];
                u.push(idx.iter().map(|&i| self.u[i]).sum::<f32>() * 0.125);
                v.push(idx.iter().map(|&i| self.v[i]).sum::<f32>() * 0.125);
            }
        }
        FlowField {
            width: w,
            height: h,
            u,
            v,
        }
    }

    /// Writes the debug dump: `u32` width and height, then little-endian
    /// `f32` (u, v) pairs in row-major order.
    pub fn write_to(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let mut buf = Vec::with_capacity(8 + 8 * self.u.len());
        buf.extend_from_slice(&(self.width as u32).to_le_bytes());
        buf.extend_from_slice(&(self.height as u32).to_le_bytes());
        for (u, v) in self.u.iter().zip(&self.v) {
            buf.extend_from_slice(&u.to_le_bytes());
            buf.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&buf).map_err(|e| Error::io(path, e))?;
        out.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_from(path: impl AsRef<Path>) -> Result<FlowField> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut bytes = Vec::new();
        BufReader::new(file)
            .read_to_end(&mut bytes)
            .map_err(|e| Error::io(path, e))?;
        if bytes.len() < 8 {
            return Err(Error::Format("flow file shorter than its header".into()));
        }
        let width = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
        let height = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let expected = 8 + 8 * width * height;
        if bytes.len() != expected {
            return Err(Error::MalformedFile {
                path: path.to_path_buf(),
                expected: expected as u64,
                actual: bytes.len() as u64,
            });
        }
        let mut u = Vec::with_capacity(width * height);
        let mut v = Vec::with_capacity(width * height);
        for pair in bytes[8..].chunks_exact(8) {
            u.push(f32::from_le_bytes(pair[0..4].try_into().unwrap()));
            v.push(f32::from_le_bytes(pair[4..8].try_into().unwrap()));
        }
        FlowField::new(width, height, u, v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlowParams {
    pub pyramid_levels: usize,
    pub patch_size: usize,
    pub patch_stride: usize,
    pub iterations_per_patch: usize,
    /// Scale between successive pyramid levels, in (0, 1).
    pub downscale_factor: f32,
}

impl Default for FlowParams {
    fn default() -> Self {
        FlowParams {
            pyramid_levels: 4,
            patch_size: 8,
            patch_stride: 4,
            iterations_per_patch: 12,
            downscale_factor: 0.5,
        }
    }
}

impl FlowParams {
    pub fn validate(&self) -> Result<()> {
        if self.pyramid_levels < 1 {
            return Err(Error::Parameter("pyramid_levels must be >= 1".into()));
        }
        if self.patch_size < 4 {
            return Err(Error::Parameter("patch_size must be >= 4".into()));
        }
        if self.patch_stride < 1 || self.patch_stride > self.patch_size {
            return Err(Error::Parameter(
                "patch_stride must lie in [1, patch_size]".into(),
            ));
        }
        if !(self.downscale_factor > 0.0 && self.downscale_factor < 1.0) {
            return Err(Error::Parameter(
                "downscale_factor must lie in (0, 1)".into(),
            ));
        }
        Ok(())
    }
}

// Tikhonov term added to the patch Hessian, per pixel, in normalized units.
const HESSIAN_REGULARIZER: f32 = 1e-4;
// Photometric error floor used by the densification weights.
const DENSIFY_ERROR_FLOOR: f32 = 1.0 / 256.0;
const CONVERGED_STEP: f32 = 1e-3;

/// Single-channel float image with clamp-to-edge sampling.
#[derive(Debug, Clone)]
struct Image {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl Image {
    fn from_plane(plane: &Plane, scale: f32) -> Image {
        Image {
            width: plane.width(),
            height: plane.height(),
            data: plane.data().iter().map(|&v| v as f32 * scale).collect(),
        }
    }

    #[inline]
    fn at(&self, x: isize, y: isize) -> f32 {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.data[y * self.width + x]
    }

    #[inline]
    fn bilinear(&self, x: f32, y: f32) -> f32 {
        let x = x.clamp(0.0, (self.width - 1) as f32);
        let y = y.clamp(0.0, (self.height - 1) as f32);
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = x - x0;
        let fy = y - y0;
        let (xi, yi) = (x0 as isize, y0 as isize);
        let a = self.at(xi, yi);
        let b = self.at(xi + 1, yi);
        let c = self.at(xi, yi + 1);
        let d = self.at(xi + 1, yi + 1);
        (a * (1.0 - fx) + b * fx) * (1.0 - fy) + (c * (1.0 - fx) + d * fx) * fy
    }

    /// [1 2 1]/4 separable blur.
    fn smooth(&self) -> Image {
        let (w, h) = (self.width as isize, self.height as isize);
        let mut tmp = vec![0.0f32; self.data.len()];
        for y in 0..h {
            for x in 0..w {
                tmp[(y * w + x) as usize] =
                    0.25 * self.at(x - 1, y) + 0.5 * self.at(x, y) + 0.25 * self.at(x + 1, y);
            }
        }
        let tmp = Image {
            width: self.width,
            height: self.height,
            data: tmp,
        };
        let mut out = vec![0.0f32; self.data.len()];
        for y in 0..h {
            for x in 0..w {
                out[(y * w + x) as usize] =
                    0.25 * tmp.at(x, y - 1) + 0.5 * tmp.at(x, y) + 0.25 * tmp.at(x, y + 1);
            }
        }
        Image {
            width: self.width,
            height: self.height,
            data: out,
        }
    }

    fn resize(&self, width: usize, height: usize) -> Image {
        let sx = self.width as f32 / width as f32;
        let sy = self.height as f32 / height as f32;
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            let src_y = (y as f32 + 0.5) * sy - 0.5;
            for x in 0..width {
                let src_x = (x as f32 + 0.5) * sx - 0.5;
                data.push(self.bilinear(src_x, src_y));
            }
        }
        Image {
            width,
            height,
            data,
        }
    }

    /// Central-difference gradients.
    fn gradients(&self) -> (Vec<f32>, Vec<f32>) {
        let (w, h) = (self.width as isize, self.height as isize);
        let mut gx = Vec::with_capacity(self.data.len());
        let mut gy = Vec::with_capacity(self.data.len());
        for y in 0..h {
            for x in 0..w {
                gx.push(0.5 * (self.at(x + 1, y) - self.at(x - 1, y)));
                gy.push(0.5 * (self.at(x, y + 1) - self.at(x, y - 1)));
            }
        }
        (gx, gy)
    }
}

fn build_pyramid(base: Image, params: &FlowParams) -> Vec<Image> {
    let mut levels = Vec::with_capacity(params.pyramid_levels);
    levels.push(base);
    for _ in 1..params.pyramid_levels {
        let prev = levels.last().unwrap();
        let w = ((prev.width as f32 * params.downscale_factor).round() as usize).max(1);
        let h = ((prev.height as f32 * params.downscale_factor).round() as usize).max(1);
        let next = prev.smooth().resize(w, h);
        levels.push(next);
    }
    levels
}

/// Patch origins along one axis: a regular grid that always ends flush with
/// the far edge so every pixel is covered.
fn patch_origins(len: usize, patch: usize, stride: usize) -> Vec<usize> {
    if len <= patch {
        return vec![0];
    }
    let last = len - patch;
    let mut origins: Vec<usize> = (0..=last).step_by(stride).collect();
    if *origins.last().unwrap() != last {
        origins.push(last);
    }
    origins
}

struct PatchResult {
    x0: usize,
    y0: usize,
    u: f32,
    v: f32,
}

struct LevelContext<'a> {
    reference: &'a Image,
    target: &'a Image,
    gx: &'a [f32],
    gy: &'a [f32],
    patch: usize,
    iterations: usize,
}

impl LevelContext<'_> {
    fn patch_error(&self, x0: usize, y0: usize, u: f32, v: f32) -> f32 {
        let w = self.target.width;
        let mut ssd = 0.0f32;
        for py in 0..self.patch {
            for px in 0..self.patch {
                let (x, y) = (x0 + px, y0 + py);
                let diff = self.reference.bilinear(x as f32 + u, y as f32 + v)
                    - self.target.data[y * w + x];
                ssd += diff * diff;
            }
        }
        ssd
    }

    /// Inverse compositional search for the translation of one target patch.
    fn search(&self, x0: usize, y0: usize, init: (f32, f32)) -> PatchResult {
        let w = self.target.width;
        let n = (self.patch * self.patch) as f32;
        let (mut hxx, mut hxy, mut hyy) = (0.0f32, 0.0f32, 0.0f32);
        for py in 0..self.patch {
            for px in 0..self.patch {
                let i = (y0 + py) * w + x0 + px;
                hxx += self.gx[i] * self.gx[i];
                hxy += self.gx[i] * self.gy[i];
                hyy += self.gy[i] * self.gy[i];
            }
        }
        let reg = HESSIAN_REGULARIZER * n;
        hxx += reg;
        hyy += reg;
        let det = hxx * hyy - hxy * hxy;

        let (mut u, mut v) = init;
        for _ in 0..self.iterations {
            let (mut bx, mut by) = (0.0f32, 0.0f32);
            for py in 0..self.patch {
                for px in 0..self.patch {
                    let (x, y) = (x0 + px, y0 + py);
                    let i = y * w + x;
                    let e = self.reference.bilinear(x as f32 + u, y as f32 + v)
                        - self.target.data[i];
                    bx += self.gx[i] * e;
                    by += self.gy[i] * e;
                }
            }
            let du = (hyy * bx - hxy * by) / det;
            let dv = (hxx * by - hxy * bx) / det;
            if !(du.is_finite() && dv.is_finite()) {
                break;
            }
            u -= du;
            v -= dv;
            if du * du + dv * dv < CONVERGED_STEP * CONVERGED_STEP {
                break;
            }
        }

        // Reject updates that wander off or make the fit worse.
        let limit = self.patch as f32;
        let moved = ((u - init.0).powi(2) + (v - init.1).powi(2)).sqrt();
        if !(u.is_finite() && v.is_finite())
            || moved > limit
            || self.patch_error(x0, y0, u, v) > self.patch_error(x0, y0, init.0, init.1)
        {
            (u, v) = init;
        }
        PatchResult { x0, y0, u, v }
    }

    fn densify(&self, patches: &[PatchResult]) -> FlowField {
        let (w, h) = (self.target.width, self.target.height);
        let mut acc_u = vec![0.0f32; w * h];
        let mut acc_v = vec![0.0f32; w * h];
        let mut acc_w = vec![0.0f32; w * h];
        for p in patches {
            for py in 0..self.patch {
                for px in 0..self.patch {
                    let (x, y) = (p.x0 + px, p.y0 + py);
                    let i = y * w + x;
                    let diff = (self.reference.bilinear(x as f32 + p.u, y as f32 + p.v)
                        - self.target.data[i])
                        .abs();
                    let weight = 1.0 / diff.max(DENSIFY_ERROR_FLOOR);
                    acc_u[i] += weight * p.u;
                    acc_v[i] += weight * p.v;
                    acc_w[i] += weight;
                }
            }
        }
        for i in 0..w * h {
            // Every pixel is covered by construction of the patch grid.
            acc_u[i] /= acc_w[i];
            acc_v[i] /= acc_w[i];
        }
        FlowField {
            width: w,
            height: h,
            u: acc_u,
            v: acc_v,
        }
    }
}

/// Bilinear resize of a flow field with displacements rescaled to the new
/// pixel grid.
fn upscale_flow(flow: &FlowField, width: usize, height: usize) -> FlowField {
    let su = width as f32 / flow.width as f32;
    let sv = height as f32 / flow.height as f32;
    let u = Image {
        width: flow.width,
        height: flow.height,
        data: flow.u.clone(),
    }
    .resize(width, height);
    let v = Image {
        width: flow.width,
        height: flow.height,
        data: flow.v.clone(),
    }
    .resize(width, height);
    FlowField {
        width,
        height,
        u: u.data.into_iter().map(|x| x * su).collect(),
        v: v.data.into_iter().map(|x| x * sv).collect(),
    }
}

/// Dense motion from `target` into `reference`: `warp(reference, flow)`
/// approximates `target`. Deterministic for fixed inputs and parameters.
pub fn estimate_flow(reference: &Plane, target: &Plane, params: &FlowParams) -> Result<FlowField> {
    params.validate()?;
    if reference.width() != target.width() || reference.height() != target.height() {
        return Err(Error::Shape(format!(
            "flow planes differ: {}x{} vs {}x{}",
            reference.width(),
            reference.height(),
            target.width(),
            target.height()
        )));
    }
    let (w, h) = (target.width(), target.height());
    let min_dim = 1usize << (params.pyramid_levels - 1);
    if w < min_dim || h < min_dim {
        return Err(Error::Parameter(format!(
            "{w}x{h} plane is too small for a {}-level pyramid (needs {min_dim} px)",
            params.pyramid_levels
        )));
    }

    // Normalize so the regularizer and error floor are content independent.
    let peak = reference.max_value().max(target.max_value()).max(1) as f32;
    let scale = 1.0 / peak;
    let ref_pyr = build_pyramid(Image::from_plane(reference, scale), params);
    let tgt_pyr = build_pyramid(Image::from_plane(target, scale), params);

    let mut flow: Option<FlowField> = None;
    for level in (0..params.pyramid_levels).rev() {
        let reference = &ref_pyr[level];
        let target = &tgt_pyr[level];
        let init = match &flow {
            Some(coarse) => upscale_flow(coarse, target.width, target.height),
            None => FlowField::zeros(target.width, target.height),
        };
        let patch = params.patch_size.min(target.width).min(target.height);
        let (gx, gy) = target.gradients();
        let ctx = LevelContext {
            reference,
            target,
            gx: &gx,
            gy: &gy,
            patch,
            iterations: params.iterations_per_patch,
        };
        let xs = patch_origins(target.width, patch, params.patch_stride);
        let ys = patch_origins(target.height, patch, params.patch_stride);
        let origins: Vec<(usize, usize)> = ys
            .iter()
            .flat_map(|&y| xs.iter().map(move |&x| (x, y)))
            .collect();
        let patches: Vec<PatchResult> = origins
            .par_iter()
            .map(|&(x0, y0)| ctx.search(x0, y0, init.at(x0 + patch / 2, y0 + patch / 2)))
            .collect();
        flow = Some(ctx.densify(&patches));
    }
    Ok(flow.expect("at least one pyramid level"))
}

/// Rounds half away from zero and clamps to `[0, max]`.
#[inline]
pub(crate) fn round_sample(value: f32, max: u16) -> u16 {
    value.round().clamp(0.0, max as f32) as u16
}

/// Bilinear warp of one plane: `out(x, y) = plane(x + u, y + v)` with
/// clamp-to-edge sampling.
pub fn warp_plane(plane: &Plane, flow: &FlowField, max: u16) -> Result<Plane> {
    if plane.width() != flow.width || plane.height() != flow.height {
        return Err(Error::Shape(format!(
            "flow {}x{} does not match plane {}x{}",
            flow.width,
            flow.height,
            plane.width(),
            plane.height()
        )));
    }
    let img = Image::from_plane(plane, 1.0);
    let (w, h) = (plane.width(), plane.height());
    let data: Vec<u16> = (0..w * h)
        .map(|i| {
            let (x, y) = (i % w, i / w);
            let sample = img.bilinear(x as f32 + flow.u[i], y as f32 + flow.v[i]);
            round_sample(sample, max)
        })
        .collect();
    Plane::new(w, h, data)
}

/// Warps all planes of a frame. For 4:2:0 the chroma planes use the luma flow
/// subsampled 2x and halved in magnitude.
pub fn warp_frame(frame: &Frame, flow: &FlowField) -> Result<Frame> {
    let max = frame.bit_depth().max_coded();
    let y = warp_plane(&frame.y, flow, max)?;
    let (cb, cr) = match frame.chroma() {
        ChromaFormat::C444 => (
            warp_plane(&frame.cb, flow, max)?,
            warp_plane(&frame.cr, flow, max)?,
        ),
        ChromaFormat::C420 => {
            let half = flow.subsample_half();
            (
                warp_plane(&frame.cb, &half, max)?,
                warp_plane(&frame.cr, &half, max)?,
            )
        }
    };
    Ok(Frame::from_parts_unchecked(
        y,
        cb,
        cr,
        frame.chroma(),
        frame.bit_depth(),
    ))
}
