//! Raw planar YCbCr frames and headerless `.yuv` sequence I/O.
//!
//! Samples are stored in one byte for coding bit depths up to 8 and in a
//! 16-bit little-endian word otherwise. Planes are written Y, Cb, Cr per frame
//! with no container header; the format always comes from the caller.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coding bit depth (container/codec depth) and the effective bit depth the
/// sample values actually use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawBitDepth", into = "RawBitDepth")]
pub struct BitDepthConfig {
    cbd: u32,
    ebd: u32,
}

#[derive(Serialize, Deserialize)]
struct RawBitDepth {
    cbd: u32,
    ebd: u32,
}

impl TryFrom<RawBitDepth> for BitDepthConfig {
    type Error = Error;

    fn try_from(raw: RawBitDepth) -> Result<Self> {
        BitDepthConfig::new(raw.cbd, raw.ebd)
    }
}

impl From<BitDepthConfig> for RawBitDepth {
    fn from(d: BitDepthConfig) -> Self {
        RawBitDepth {
            cbd: d.cbd,
            ebd: d.ebd,
        }
    }
}

impl BitDepthConfig {
    pub fn new(cbd: u32, ebd: u32) -> Result<Self> {
        if !(1..=16).contains(&cbd) || ebd < 1 || ebd > cbd {
            return Err(Error::Parameter(format!(
                "bit depths must satisfy 1 <= ebd <= cbd <= 16, got cbd={cbd} ebd={ebd}"
            )));
        }
        Ok(BitDepthConfig { cbd, ebd })
    }

    /// Full effective depth: `ebd == cbd`.
    pub fn full(cbd: u32) -> Result<Self> {
        Self::new(cbd, cbd)
    }

    pub fn cbd(&self) -> u32 {
        self.cbd
    }

    pub fn ebd(&self) -> u32 {
        self.ebd
    }

    pub fn shift(&self) -> u32 {
        self.cbd - self.ebd
    }

    pub fn is_reduced(&self) -> bool {
        self.ebd < self.cbd
    }

    /// Largest value representable in the coding bit depth.
    pub fn max_coded(&self) -> u16 {
        ((1u32 << self.cbd) - 1) as u16
    }

    /// Largest value the effective bit depth can produce.
    pub fn max_effective(&self) -> u16 {
        ((1u32 << self.ebd) - 1) as u16
    }

    /// Bytes per sample in the raw container.
    pub fn container_bytes(&self) -> usize {
        if self.cbd <= 8 {
            1
        } else {
            2
        }
    }

    pub(crate) fn with_ebd(&self, ebd: u32) -> Self {
        BitDepthConfig { cbd: self.cbd, ebd }
    }
}

impl Default for BitDepthConfig {
    fn default() -> Self {
        BitDepthConfig { cbd: 10, ebd: 10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ChromaFormat {
    #[serde(rename = "420")]
    C420,
    #[serde(rename = "444")]
    C444,
}

impl ChromaFormat {
    pub fn chroma_dims(&self, width: usize, height: usize) -> (usize, usize) {
        match self {
            ChromaFormat::C420 => (width / 2, height / 2),
            ChromaFormat::C444 => (width, height),
        }
    }
}

impl std::str::FromStr for ChromaFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "420" | "C420" | "yuv420" => Ok(ChromaFormat::C420),
            "444" | "C444" | "yuv444" => Ok(ChromaFormat::C444),
            other => Err(Error::Parameter(format!("unknown chroma format {other:?}"))),
        }
    }
}

/// Layout of a raw sequence file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VideoFormat {
    pub width: usize,
    pub height: usize,
    pub chroma: ChromaFormat,
    pub bit_depth: BitDepthConfig,
    pub frame_count: usize,
    /// Metadata only; used for bitrate computation.
    pub frame_rate: f64,
}

impl VideoFormat {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Parameter("frame dimensions must be non-zero".into()));
        }
        if self.chroma == ChromaFormat::C420 && (!self.width.is_multiple_of(2) || !self.height.is_multiple_of(2)) {
            return Err(Error::Parameter(format!(
                "4:2:0 requires even dimensions, got {}x{}",
                self.width, self.height
            )));
        }
        if self.frame_count == 0 {
            return Err(Error::Parameter("frame_count must be at least 1".into()));
        }
        if !(self.frame_rate.is_finite() && self.frame_rate > 0.0) {
            return Err(Error::Parameter(format!(
                "frame_rate must be positive, got {}",
                self.frame_rate
            )));
        }
        Ok(())
    }

    pub fn samples_per_frame(&self) -> usize {
        let (cw, ch) = self.chroma.chroma_dims(self.width, self.height);
        self.width * self.height + 2 * cw * ch
    }

    pub fn frame_bytes(&self) -> usize {
        self.samples_per_frame() * self.bit_depth.container_bytes()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Plane {
    width: usize,
    height: usize,
    data: Vec<u16>,
}

impl Plane {
    pub fn new(width: usize, height: usize, data: Vec<u16>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Shape(format!(
                "plane data length {} != {width}x{height}",
                data.len()
            )));
        }
        Ok(Plane {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: u16) -> Self {
        Plane {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u16) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Plane {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u16] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u16] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<u16> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u16 {
        self.data[y * self.width + x]
    }

    pub fn row(&self, y: usize) -> &[u16] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    pub fn max_value(&self) -> u16 {
        self.data.iter().copied().max().unwrap_or(0)
    }

    /// Copy of the `w`x`h` region at (`x`, `y`).
    pub fn crop(&self, x: usize, y: usize, w: usize, h: usize) -> Result<Plane> {
        let fits_x = x.checked_add(w).is_some_and(|end| end <= self.width);
        let fits_y = y.checked_add(h).is_some_and(|end| end <= self.height);
        if !fits_x || !fits_y {
            return Err(Error::Bounds {
                x,
                y,
                w,
                h,
                width: self.width,
                height: self.height,
            });
        }
        let mut data = Vec::with_capacity(w * h);
        for row in y..y + h {
            let start = row * self.width + x;
            data.extend_from_slice(&self.data[start..start + w]);
        }
        Ok(Plane {
            width: w,
            height: h,
            data,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PlaneSel {
    Y,
    Cb,
    Cr,
}

impl PlaneSel {
    pub const ALL: [PlaneSel; 3] = [PlaneSel::Y, PlaneSel::Cb, PlaneSel::Cr];

    pub fn name(&self) -> &'static str {
        match self {
            PlaneSel::Y => "Y",
            PlaneSel::Cb => "Cb",
            PlaneSel::Cr => "Cr",
        }
    }
}

/// One YCbCr picture. The bit depth tag records whether samples are at full or
/// reduced effective depth.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub y: Plane,
    pub cb: Plane,
    pub cr: Plane,
    chroma: ChromaFormat,
    bit_depth: BitDepthConfig,
}

impl Frame {
    /// Builds a frame, checking plane geometry and that every sample fits the
    /// coding bit depth.
    pub fn new(
        y: Plane,
        cb: Plane,
        cr: Plane,
        chroma: ChromaFormat,
        bit_depth: BitDepthConfig,
    ) -> Result<Self> {
        let frame = Frame {
            y,
            cb,
            cr,
            chroma,
            bit_depth,
        };
        frame.check_geometry()?;
        frame.check_range(0)?;
        Ok(frame)
    }

    pub(crate) fn from_parts_unchecked(
        y: Plane,
        cb: Plane,
        cr: Plane,
        chroma: ChromaFormat,
        bit_depth: BitDepthConfig,
    ) -> Self {
        Frame {
            y,
            cb,
            cr,
            chroma,
            bit_depth,
        }
    }

    /// A frame with every sample of each plane set to the given value.
    pub fn filled(
        width: usize,
        height: usize,
        chroma: ChromaFormat,
        bit_depth: BitDepthConfig,
        values: [u16; 3],
    ) -> Result<Self> {
        let (cw, ch) = chroma.chroma_dims(width, height);
        Frame::new(
            Plane::filled(width, height, values[0]),
            Plane::filled(cw, ch, values[1]),
            Plane::filled(cw, ch, values[2]),
            chroma,
            bit_depth,
        )
    }

    fn check_geometry(&self) -> Result<()> {
        let (w, h) = (self.y.width, self.y.height);
        if self.chroma == ChromaFormat::C420 && (w % 2 != 0 || h % 2 != 0) {
            return Err(Error::Shape(format!(
                "4:2:0 frame needs even dimensions, got {w}x{h}"
            )));
        }
        let (cw, ch) = self.chroma.chroma_dims(w, h);
        for p in [&self.cb, &self.cr] {
            if p.width != cw || p.height != ch {
                return Err(Error::Shape(format!(
                    "chroma plane {}x{} does not match expected {cw}x{ch}",
                    p.width, p.height
                )));
            }
        }
        Ok(())
    }

    fn check_range(&self, index: usize) -> Result<()> {
        let max = self.bit_depth.max_coded();
        for sel in PlaneSel::ALL {
            if let Some(&v) = self.plane(sel).data.iter().find(|&&v| v > max) {
                return Err(Error::SampleRange {
                    value: v as u32,
                    max: max as u32,
                    frame: index,
                    plane: sel.name(),
                });
            }
        }
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.y.width
    }

    pub fn height(&self) -> usize {
        self.y.height
    }

    pub fn chroma(&self) -> ChromaFormat {
        self.chroma
    }

    pub fn bit_depth(&self) -> BitDepthConfig {
        self.bit_depth
    }

    pub(crate) fn set_bit_depth(&mut self, depth: BitDepthConfig) {
        self.bit_depth = depth;
    }

    pub fn plane(&self, sel: PlaneSel) -> &Plane {
        match sel {
            PlaneSel::Y => &self.y,
            PlaneSel::Cb => &self.cb,
            PlaneSel::Cr => &self.cr,
        }
    }

    pub fn plane_mut(&mut self, sel: PlaneSel) -> &mut Plane {
        match sel {
            PlaneSel::Y => &mut self.y,
            PlaneSel::Cb => &mut self.cb,
            PlaneSel::Cr => &mut self.cr,
        }
    }

    pub fn planes(&self) -> [&Plane; 3] {
        [&self.y, &self.cb, &self.cr]
    }

    /// Applies `f` to every sample of every plane.
    pub fn map_samples(&self, f: impl Fn(u16) -> u16) -> Frame {
        let map = |p: &Plane| Plane {
            width: p.width,
            height: p.height,
            data: p.data.iter().map(|&v| f(v)).collect(),
        };
        Frame {
            y: map(&self.y),
            cb: map(&self.cb),
            cr: map(&self.cr),
            chroma: self.chroma,
            bit_depth: self.bit_depth,
        }
    }

    /// True when both frames share dimensions, chroma layout and bit depths.
    pub fn same_layout(&self, other: &Frame) -> bool {
        self.width() == other.width()
            && self.height() == other.height()
            && self.chroma == other.chroma
            && self.bit_depth == other.bit_depth
    }

    /// The file format describing a sequence of `frame_count` such frames.
    pub fn format(&self, frame_count: usize, frame_rate: f64) -> VideoFormat {
        VideoFormat {
            width: self.width(),
            height: self.height(),
            chroma: self.chroma,
            bit_depth: self.bit_depth,
            frame_count,
            frame_rate,
        }
    }
}

/// Copies a rectangle out of one plane of `frame`.
pub fn extract_block(
    frame: &Frame,
    plane: PlaneSel,
    x: usize,
    y: usize,
    w: usize,
    h: usize,
) -> Result<Plane> {
    frame.plane(plane).crop(x, y, w, h)
}

/// Sequential reader over a raw planar file.
pub struct YuvReader {
    path: PathBuf,
    reader: BufReader<File>,
    format: VideoFormat,
    next: usize,
    buf: Vec<u8>,
}

/// Opens a raw `.yuv` file. The file must hold an exact number of frames and
/// at least `format.frame_count` of them.
pub fn read_yuv(path: impl AsRef<Path>, format: &VideoFormat) -> Result<YuvReader> {
    format.validate()?;
    let path = path.as_ref().to_path_buf();
    let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
    let actual = file.metadata().map_err(|e| Error::io(&path, e))?.len();
    let frame_bytes = format.frame_bytes() as u64;
    let wanted = frame_bytes * format.frame_count as u64;
    if actual % frame_bytes != 0 || actual < wanted {
        let expected = if actual < wanted {
            wanted
        } else {
            actual - actual % frame_bytes
        };
        return Err(Error::MalformedFile {
            path,
            expected,
            actual,
        });
    }
    Ok(YuvReader {
        reader: BufReader::new(file),
        buf: vec![0; format.frame_bytes()],
        path,
        format: *format,
        next: 0,
    })
}

impl YuvReader {
    pub fn format(&self) -> &VideoFormat {
        &self.format
    }

    fn read_frame(&mut self) -> Result<Frame> {
        self.reader
            .read_exact(&mut self.buf)
            .map_err(|e| Error::io(&self.path, e))?;
        let fmt = &self.format;
        let bytes = fmt.bit_depth.container_bytes();
        let (cw, ch) = fmt.chroma.chroma_dims(fmt.width, fmt.height);
        let dims = [(fmt.width, fmt.height), (cw, ch), (cw, ch)];
        let mut offset = 0;
        let mut planes = Vec::with_capacity(3);
        for (w, h) in dims {
            let n = w * h;
            let raw = &self.buf[offset..offset + n * bytes];
            let data: Vec<u16> = if bytes == 1 {
                raw.iter().map(|&b| b as u16).collect()
            } else {
                raw.chunks_exact(2)
                    .map(|c| u16::from_le_bytes([c[0], c[1]]))
                    .collect()
            };
            offset += n * bytes;
            planes.push(Plane {
                width: w,
                height: h,
                data,
            });
        }
        let cr = planes.pop().unwrap();
        let cb = planes.pop().unwrap();
        let y = planes.pop().unwrap();
        let frame = Frame::from_parts_unchecked(y, cb, cr, fmt.chroma, fmt.bit_depth);
        frame.check_range(self.next)?;
        Ok(frame)
    }
}

impl Iterator for YuvReader {
    type Item = Result<Frame>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.next >= self.format.frame_count {
            return None;
        }
        let frame = self.read_frame();
        self.next += 1;
        if frame.is_err() {
            // Stop after the first failure.
            self.next = self.format.frame_count;
        }
        Some(frame)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = self.format.frame_count - self.next;
        (left, Some(left))
    }
}

/// Reads every frame of a raw file into memory.
pub fn read_yuv_all(path: impl AsRef<Path>, format: &VideoFormat) -> Result<Vec<Frame>> {
    read_yuv(path, format)?.collect()
}

/// Writes frames as raw planar YUV. Returns the number of bytes written.
pub fn write_yuv(path: impl AsRef<Path>, frames: &[Frame]) -> Result<u64> {
    let path = path.as_ref();
    let first = frames
        .first()
        .ok_or_else(|| Error::Parameter("no frames to write".into()))?;
    if let Some(i) = frames.iter().position(|f| !f.same_layout(first)) {
        return Err(Error::Shape(format!(
            "frame {i} does not share the format of frame 0"
        )));
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let wide = first.bit_depth.container_bytes() == 2;
    let mut written = 0u64;
    let mut buf = Vec::new();
    for frame in frames {
        buf.clear();
        for plane in frame.planes() {
            if wide {
                for &v in &plane.data {
                    buf.extend_from_slice(&v.to_le_bytes());
                }
            } else {
                buf.extend(plane.data.iter().map(|&v| v as u8));
            }
        }
        out.write_all(&buf).map_err(|e| Error::io(path, e))?;
        written += buf.len() as u64;
    }
    out.flush().map_err(|e| Error::io(path, e))?;
    Ok(written)
}
