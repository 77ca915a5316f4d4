//! Training triplet extraction and the EBDS dataset file.
//!
//! EBDS layout (little-endian):
//!
//! ```text
//! "EBDS" | u32 version = 1 | u32 qp_group | u64 seed | u64 count
//! count x { meta: 6 x u32 (sequence, frame, x, y, rotation, block_size)
//!           4 blocks (prev, cur, next inputs; then target), each 3 x S x S u16 in C,H,W order }
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::video::{ChromaFormat, Frame, Plane, PlaneSel};

pub const EBDS_MAGIC: &[u8; 4] = b"EBDS";
pub const EBDS_VERSION: u32 = 1;
pub const BLOCK_SIZE: usize = 96;
/// Base QPs the four model groups are trained for.
pub const QP_GROUPS: [u32; 4] = [22, 27, 32, 37];

/// Upsamples 4:2:0 chroma by 2x2 replication. Returns the frame and whether
/// the call was a no-op because the input was already 4:4:4.
pub fn yuv420_to_444(frame: &Frame) -> (Frame, bool) {
    if frame.chroma() == ChromaFormat::C444 {
        log::debug!("yuv420_to_444 called on a 4:4:4 frame; returning it unchanged");
        return (frame.clone(), true);
    }
    let (w, h) = (frame.width(), frame.height());
    let up = |p: &Plane| Plane::from_fn(w, h, |x, y| p.get(x / 2, y / 2));
    let out = Frame::from_parts_unchecked(
        frame.y.clone(),
        up(&frame.cb),
        up(&frame.cr),
        ChromaFormat::C444,
        frame.bit_depth(),
    );
    (out, false)
}

/// Downsamples 4:4:4 chroma by the rounded 2x2 mean.
pub fn yuv444_to_420(frame: &Frame) -> Result<Frame> {
    if frame.chroma() != ChromaFormat::C444 {
        return Err(Error::Parameter("yuv444_to_420 expects a 4:4:4 frame".into()));
    }
    let (w, h) = (frame.width(), frame.height());
    if w % 2 != 0 || h % 2 != 0 {
        return Err(Error::Shape(format!(
            "4:2:0 conversion needs even dimensions, got {w}x{h}"
        )));
    }
    let down = |p: &Plane| {
        Plane::from_fn(w / 2, h / 2, |x, y| {
            let s = p.get(2 * x, 2 * y) as u32
                + p.get(2 * x + 1, 2 * y) as u32
                + p.get(2 * x, 2 * y + 1) as u32
                + p.get(2 * x + 1, 2 * y + 1) as u32;
            ((s + 2) / 4) as u16
        })
    };
    Ok(Frame::from_parts_unchecked(
        frame.y.clone(),
        down(&frame.cb),
        down(&frame.cr),
        ChromaFormat::C420,
        frame.bit_depth(),
    ))
}

/// A square 3-channel block in C,H,W order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    size: usize,
    data: Vec<u16>,
}

impl Block {
    pub fn new(size: usize, data: Vec<u16>) -> Result<Self> {
        if data.len() != 3 * size * size {
            return Err(Error::Shape(format!(
                "block of size {size} needs {} samples, got {}",
                3 * size * size,
                data.len()
            )));
        }
        Ok(Block { size, data })
    }

    /// Co-located block from a 4:4:4 frame.
    pub fn from_frame(frame: &Frame, x: usize, y: usize, size: usize) -> Result<Self> {
        if frame.chroma() != ChromaFormat::C444 {
            return Err(Error::Parameter("blocks are cut from 4:4:4 frames".into()));
        }
        let mut data = Vec::with_capacity(3 * size * size);
        for sel in PlaneSel::ALL {
            data.extend(frame.plane(sel).crop(x, y, size, size)?.into_data());
        }
        Ok(Block { size, data })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn data(&self) -> &[u16] {
        &self.data
    }

    pub fn channel(&self, c: usize) -> &[u16] {
        let n = self.size * self.size;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn max_value(&self) -> u16 {
        self.data.iter().copied().max().unwrap_or(0)
    }

    /// Rotates every channel counter-clockwise by `k` quarter turns.
    pub fn rotated(&self, k: u32) -> Block {
        let s = self.size;
        let n = s * s;
        let mut data = vec![0u16; self.data.len()];
        for c in 0..3 {
            let src = &self.data[c * n..(c + 1) * n];
            let dst = &mut data[c * n..(c + 1) * n];
            for y in 0..s {
                for x in 0..s {
                    let (sx, sy) = match k % 4 {
                        0 => (x, y),
                        // out(x, y) = in(s-1-y, x)
                        1 => (s - 1 - y, x),
                        2 => (s - 1 - x, s - 1 - y),
                        _ => (y, s - 1 - x),
                    };
                    dst[y * s + x] = src[sy * s + sx];
                }
            }
        }
        Block { size: s, data }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SampleMeta {
    pub sequence: u32,
    /// Index of the center frame.
    pub frame: u32,
    pub x: u32,
    pub y: u32,
    /// Quarter turns applied, 0..=3.
    pub rotation: u32,
    pub block_size: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingSample {
    /// Reduced-EBD reconstructed blocks of frames t-1, t, t+1.
    pub inputs: [Block; 3],
    /// Full-EBD original block of frame t.
    pub target: Block,
    pub meta: SampleMeta,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    pub qp_group: u32,
    pub seed: u64,
    pub count: u64,
    /// Names of the source sequences, indexed by `SampleMeta::sequence`.
    /// Not stored in the EBDS file.
    pub sources: Vec<String>,
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<()> {
        if !QP_GROUPS.contains(&self.qp_group) {
            return Err(Error::Parameter(format!(
                "qp group {} is not one of {QP_GROUPS:?}",
                self.qp_group
            )));
        }
        Ok(())
    }
}

/// Samples `count` co-located triplets with blocks of `block_size`.
///
/// Center frames are drawn uniformly from `[1, N-2]` and block origins
/// uniformly over all valid positions. Deterministic for a given seed.
pub fn extract_triplets(
    original: &[Frame],
    recon: &[Frame],
    sequence: u32,
    count: usize,
    block_size: usize,
    seed: u64,
) -> Result<Vec<TrainingSample>> {
    if original.len() != recon.len() {
        return Err(Error::UnusableSource(format!(
            "original has {} frames, reconstruction {}",
            original.len(),
            recon.len()
        )));
    }
    if original.len() < 3 {
        return Err(Error::UnusableSource(format!(
            "need at least 3 frames, got {}",
            original.len()
        )));
    }
    let first = &original[0];
    let (w, h) = (first.width(), first.height());
    if w < block_size || h < block_size || block_size == 0 {
        return Err(Error::UnusableSource(format!(
            "{w}x{h} frames are smaller than {block_size}x{block_size} blocks"
        )));
    }
    for f in original.iter().chain(recon) {
        if f.width() != w || f.height() != h || f.chroma() != first.chroma() {
            return Err(Error::UnusableSource(
                "original and reconstruction frames differ in format".into(),
            ));
        }
    }

    let orig444: Vec<Frame> = original.iter().map(|f| yuv420_to_444(f).0).collect();
    let rec444: Vec<Frame> = recon.iter().map(|f| yuv420_to_444(f).0).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = original.len();
    let mut samples = Vec::with_capacity(count);
    for _ in 0..count {
        let t = rng.gen_range(1..=n - 2);
        let x = rng.gen_range(0..=w - block_size);
        let y = rng.gen_range(0..=h - block_size);
        let cut = |f: &Frame| Block::from_frame(f, x, y, block_size);
        samples.push(TrainingSample {
            inputs: [cut(&rec444[t - 1])?, cut(&rec444[t])?, cut(&rec444[t + 1])?],
            target: cut(&orig444[t])?,
            meta: SampleMeta {
                sequence,
                frame: t as u32,
                x: x as u32,
                y: y as u32,
                rotation: 0,
                block_size: block_size as u32,
            },
        });
    }
    Ok(samples)
}

/// Rotates all four blocks by `k` quarter turns; `meta.rotation` accumulates
/// modulo 4.
pub fn augment_rotate(sample: &TrainingSample, k: u32) -> TrainingSample {
    let k = k % 4;
    TrainingSample {
        inputs: [
            sample.inputs[0].rotated(k),
            sample.inputs[1].rotated(k),
            sample.inputs[2].rotated(k),
        ],
        target: sample.target.rotated(k),
        meta: SampleMeta {
            rotation: (sample.meta.rotation + k) % 4,
            ..sample.meta
        },
    }
}

/// Writes samples to an EBDS file. `manifest.count` must match.
pub fn write_dataset(
    samples: &[TrainingSample],
    manifest: &DatasetManifest,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    if manifest.count != samples.len() as u64 {
        return Err(Error::Parameter(format!(
            "manifest count {} does not match {} samples",
            manifest.count,
            samples.len()
        )));
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let mut buf = Vec::new();
    buf.extend_from_slice(EBDS_MAGIC);
    buf.extend_from_slice(&EBDS_VERSION.to_le_bytes());
    buf.extend_from_slice(&manifest.qp_group.to_le_bytes());
    buf.extend_from_slice(&manifest.seed.to_le_bytes());
    buf.extend_from_slice(&manifest.count.to_le_bytes());
    out.write_all(&buf).map_err(|e| Error::io(path, e))?;
    for s in samples {
        buf.clear();
        let m = &s.meta;
        for v in [m.sequence, m.frame, m.x, m.y, m.rotation, m.block_size] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        for block in s.inputs.iter().chain(std::iter::once(&s.target)) {
            if block.size != m.block_size as usize {
                return Err(Error::Shape(format!(
                    "block size {} disagrees with meta {}",
                    block.size, m.block_size
                )));
            }
            for v in &block.data {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        out.write_all(&buf).map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Reads an EBDS file. The returned manifest has no source names.
pub fn read_dataset(path: impl AsRef<Path>) -> Result<(DatasetManifest, Vec<TrainingSample>)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut read = |n: usize| -> Result<Vec<u8>> {
        let mut b = vec![0u8; n];
        r.read_exact(&mut b).map_err(|e| {
            if e.kind() == std::io::ErrorKind::UnexpectedEof {
                Error::Format("truncated dataset file".into())
            } else {
                Error::io(path, e)
            }
        })?;
        Ok(b)
    };
    let header = read(28)?;
    if &header[0..4] != EBDS_MAGIC {
        return Err(Error::Format("bad magic, not an EBDS dataset".into()));
    }
    let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
    if version != EBDS_VERSION {
        return Err(Error::Format(format!("unsupported EBDS version {version}")));
    }
    let manifest = DatasetManifest {
        qp_group: u32::from_le_bytes(header[8..12].try_into().unwrap()),
        seed: u64::from_le_bytes(header[12..20].try_into().unwrap()),
        count: u64::from_le_bytes(header[20..28].try_into().unwrap()),
        sources: Vec::new(),
    };
    let mut samples = Vec::new();
    for _ in 0..manifest.count {
        let raw = read(24)?;
        let m: Vec<u32> = raw
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let meta = SampleMeta {
            sequence: m[0],
            frame: m[1],
            x: m[2],
            y: m[3],
            rotation: m[4],
            block_size: m[5],
        };
        let s = meta.block_size as usize;
        if s == 0 || s > 4096 {
            return Err(Error::Format(format!("implausible block size {s}")));
        }
        let mut blocks = Vec::with_capacity(4);
        for _ in 0..4 {
            let raw = read(3 * s * s * 2)?;
            let data = raw
                .chunks_exact(2)
                .map(|c| u16::from_le_bytes([c[0], c[1]]))
                .collect();
            blocks.push(Block { size: s, data });
        }
        let target = blocks.pop().unwrap();
        let next = blocks.pop().unwrap();
        let cur = blocks.pop().unwrap();
        let prev = blocks.pop().unwrap();
        samples.push(TrainingSample {
            inputs: [prev, cur, next],
            target,
            meta,
        });
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing).map_err(|e| Error::io(path, e))? != 0 {
        return Err(Error::Format(
            "dataset body is longer than its header count".into(),
        ));
    }
    Ok((manifest, samples))
}
