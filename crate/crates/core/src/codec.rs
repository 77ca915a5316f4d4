//! Host codec bridge.
//!
//! External encoders/decoders are driven through command templates; nothing is
//! linked. The built-in mock codec is a uniform scalar quantizer with an
//! H.26x-like QP-to-step mapping and a zero-order entropy rate estimate, good
//! enough for desk-scale QP sweeps.
//!
//! Templates are split on whitespace first and placeholders substituted per
//! argument, so substituted paths may contain spaces. Known placeholders:
//! `{input} {output} {qp} {width} {height} {frames} {fps} {bitdepth} {chroma}`.

use std::collections::HashMap;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::Command;

use flate2::read::DeflateDecoder;
use flate2::write::DeflateEncoder;
use flate2::Compression;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::video::{
    read_yuv_all, write_yuv, BitDepthConfig, ChromaFormat, Frame, Plane, VideoFormat,
};

pub const DEFAULT_QP_OFFSET: i32 = -6;
pub const MAX_QP: i32 = 63;

const PLACEHOLDERS: [&str; 9] = [
    "input", "output", "qp", "width", "height", "frames", "fps", "bitdepth", "chroma",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CodecBackend {
    #[default]
    Mock,
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CodecConfig {
    pub backend: CodecBackend,
    /// Label used in reports, e.g. `VTM-16.2`.
    pub name: String,
    pub encode_template: String,
    pub decode_template: String,
    /// Added to the base QP on every encode through this config.
    pub qp_offset: i32,
    pub workdir: PathBuf,
}

impl Default for CodecConfig {
    fn default() -> Self {
        CodecConfig {
            backend: CodecBackend::Mock,
            name: "mock".into(),
            encode_template: String::new(),
            decode_template: String::new(),
            qp_offset: DEFAULT_QP_OFFSET,
            workdir: PathBuf::from("work"),
        }
    }
}

impl CodecConfig {
    /// The same codec without any QP offset, as used for anchor encodes.
    pub fn without_offset(&self) -> CodecConfig {
        CodecConfig {
            qp_offset: 0,
            ..self.clone()
        }
    }

    pub fn with_workdir(&self, workdir: impl Into<PathBuf>) -> CodecConfig {
        CodecConfig {
            workdir: workdir.into(),
            ..self.clone()
        }
    }

    /// `qp_base + qp_offset`, the only place the offset is applied.
    pub fn effective_qp(&self, qp_base: i32) -> Result<i32> {
        let qp = qp_base + self.qp_offset;
        if !(0..=MAX_QP).contains(&qp) {
            return Err(Error::Parameter(format!(
                "effective QP {qp} (base {qp_base}, offset {}) is outside [0, {MAX_QP}]",
                self.qp_offset
            )));
        }
        Ok(qp)
    }

    pub fn validate(&self) -> Result<()> {
        if self.backend == CodecBackend::External {
            check_template(&self.encode_template, &["input", "output", "qp"], "encode")?;
            check_template(&self.decode_template, &["input", "output"], "decode")?;
        }
        Ok(())
    }
}

fn check_template(template: &str, required: &[&str], what: &str) -> Result<()> {
    if template.split_whitespace().next().is_none() {
        return Err(Error::Config(format!("{what} template is empty")));
    }
    let mut rest = template;
    while let Some(start) = rest.find('{') {
        let end = rest[start..].find('}').ok_or_else(|| {
            Error::Config(format!("{what} template has an unterminated placeholder"))
        })?;
        let name = &rest[start + 1..start + end];
        if !PLACEHOLDERS.contains(&name) {
            return Err(Error::Config(format!(
                "{what} template uses unknown placeholder {{{name}}}"
            )));
        }
        rest = &rest[start + end + 1..];
    }
    for name in required {
        if !template.contains(&format!("{{{name}}}")) {
            return Err(Error::Config(format!(
                "{what} template is missing {{{name}}}"
            )));
        }
    }
    Ok(())
}

fn render(template: &str, values: &HashMap<&str, String>) -> Vec<String> {
    template
        .split_whitespace()
        .map(|arg| {
            let mut s = arg.to_string();
            for (k, v) in values {
                s = s.replace(&format!("{{{k}}}"), v);
            }
            s
        })
        .collect()
}

fn chroma_tag(chroma: ChromaFormat) -> &'static str {
    match chroma {
        ChromaFormat::C420 => "420",
        ChromaFormat::C444 => "444",
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodeResult {
    /// Absent for in-process mock encodes.
    pub bitstream_path: Option<PathBuf>,
    pub total_bits: u64,
    pub bitrate_kbps: f64,
    pub effective_qp: i32,
    /// Layout of the encoded sequence (decoder output uses the same).
    pub format: VideoFormat,
}

/// `total_bits * fps / frames / 1000`.
pub fn bitrate_kbps(total_bits: u64, frame_rate: f64, frame_count: usize) -> f64 {
    total_bits as f64 * frame_rate / frame_count as f64 / 1000.0
}

/// Reconstruction and rate of one encode/decode round trip.
#[derive(Debug, Clone)]
pub struct CodedSequence {
    pub recon: Vec<Frame>,
    pub result: EncodeResult,
}

fn run_command(args: &[String], log_path: &Path) -> Result<()> {
    let command = args.join(" ");
    let output = Command::new(&args[0])
        .args(&args[1..])
        .output()
        .map_err(|source| Error::Spawn {
            command: command.clone(),
            source,
        })?;
    let mut log = Vec::new();
    log.extend_from_slice(format!("$ {command}\n").as_bytes());
    log.extend_from_slice(&output.stdout);
    log.extend_from_slice(&output.stderr);
    fs::write(log_path, &log).map_err(|e| Error::io(log_path, e))?;
    if !output.status.success() {
        let text = String::from_utf8_lossy(&output.stderr);
        let tail: String = text
            .chars()
            .rev()
            .take(2000)
            .collect::<Vec<_>>()
            .into_iter()
            .rev()
            .collect();
        return Err(Error::CodecFailed {
            command,
            status: output.status.to_string(),
            output: tail,
        });
    }
    Ok(())
}

fn sequence_format(frames: &[Frame], frame_rate: f64) -> Result<VideoFormat> {
    let first = frames
        .first()
        .ok_or_else(|| Error::Parameter("cannot encode an empty sequence".into()))?;
    if frames.iter().any(|f| !f.same_layout(first)) {
        return Err(Error::Shape("frames in one encode must share a format".into()));
    }
    let format = first.format(frames.len(), frame_rate);
    format.validate()?;
    Ok(format)
}

/// Encodes through the configured external encoder at `qp_base + qp_offset`.
/// Rate comes from the bitstream size.
pub fn encode_external(
    cfg: &CodecConfig,
    frames: &[Frame],
    qp_base: i32,
    frame_rate: f64,
) -> Result<EncodeResult> {
    check_template(&cfg.encode_template, &["input", "output", "qp"], "encode")?;
    let qp = cfg.effective_qp(qp_base)?;
    let format = sequence_format(frames, frame_rate)?;
    fs::create_dir_all(&cfg.workdir).map_err(|e| Error::io(&cfg.workdir, e))?;
    let input = cfg.workdir.join("input.yuv");
    let bitstream = cfg.workdir.join("bitstream.bin");
    if bitstream.exists() {
        fs::remove_file(&bitstream).map_err(|e| Error::io(&bitstream, e))?;
    }
    write_yuv(&input, frames)?;

    let values = HashMap::from([
        ("input", input.display().to_string()),
        ("output", bitstream.display().to_string()),
        ("qp", qp.to_string()),
        ("width", format.width.to_string()),
        ("height", format.height.to_string()),
        ("frames", format.frame_count.to_string()),
        ("fps", format_fps(frame_rate)),
        ("bitdepth", format.bit_depth.cbd().to_string()),
        ("chroma", chroma_tag(format.chroma).to_string()),
    ]);
    let args = render(&cfg.encode_template, &values);
    run_command(&args, &cfg.workdir.join("encode.log"))?;

    let bytes = match fs::metadata(&bitstream) {
        Ok(m) => m.len(),
        Err(_) => {
            return Err(Error::MissingOutput {
                command: args.join(" "),
                path: bitstream,
            })
        }
    };
    let total_bits = bytes * 8;
    if total_bits == 0 {
        return Err(Error::MissingOutput {
            command: args.join(" "),
            path: bitstream,
        });
    }
    Ok(EncodeResult {
        bitstream_path: Some(bitstream),
        total_bits,
        bitrate_kbps: bitrate_kbps(total_bits, frame_rate, format.frame_count),
        effective_qp: qp,
        format,
    })
}

fn format_fps(fps: f64) -> String {
    if fps.fract() == 0.0 {
        format!("{}", fps as i64)
    } else {
        format!("{fps}")
    }
}

/// Decodes an external bitstream back to frames in the encoded format.
pub fn decode_external(cfg: &CodecConfig, encoded: &EncodeResult) -> Result<Vec<Frame>> {
    check_template(&cfg.decode_template, &["input", "output"], "decode")?;
    let bitstream = encoded
        .bitstream_path
        .as_ref()
        .ok_or_else(|| Error::Parameter("encode result has no bitstream file".into()))?;
    if !bitstream.is_file() {
        return Err(Error::io(
            bitstream,
            std::io::Error::new(std::io::ErrorKind::NotFound, "bitstream not found"),
        ));
    }
    fs::create_dir_all(&cfg.workdir).map_err(|e| Error::io(&cfg.workdir, e))?;
    let output = cfg.workdir.join("decoded.yuv");
    if output.exists() {
        fs::remove_file(&output).map_err(|e| Error::io(&output, e))?;
    }
    let fmt = &encoded.format;
    let values = HashMap::from([
        ("input", bitstream.display().to_string()),
        ("output", output.display().to_string()),
        ("qp", encoded.effective_qp.to_string()),
        ("width", fmt.width.to_string()),
        ("height", fmt.height.to_string()),
        ("frames", fmt.frame_count.to_string()),
        ("fps", format_fps(fmt.frame_rate)),
        ("bitdepth", fmt.bit_depth.cbd().to_string()),
        ("chroma", chroma_tag(fmt.chroma).to_string()),
    ]);
    let args = render(&cfg.decode_template, &values);
    run_command(&args, &cfg.workdir.join("decode.log"))?;
    if !output.is_file() {
        return Err(Error::MissingOutput {
            command: args.join(" "),
            path: output,
        });
    }
    read_yuv_all(&output, fmt)
}

/// Encode and decode through whichever backend `cfg` selects.
pub fn code_sequence(
    cfg: &CodecConfig,
    frames: &[Frame],
    qp_base: i32,
    frame_rate: f64,
) -> Result<CodedSequence> {
    match cfg.backend {
        CodecBackend::Mock => {
            let qp = cfg.effective_qp(qp_base)?;
            let format = sequence_format(frames, frame_rate)?;
            let (recon, bits) = mock_codec(frames, qp)?;
            // A constant input has zero entropy; keep the rate positive.
            let total_bits = bits.max(1);
            Ok(CodedSequence {
                recon,
                result: EncodeResult {
                    bitstream_path: None,
                    total_bits,
                    bitrate_kbps: bitrate_kbps(total_bits, frame_rate, frames.len()),
                    effective_qp: qp,
                    format,
                },
            })
        }
        CodecBackend::External => {
            let result = encode_external(cfg, frames, qp_base, frame_rate)?;
            let recon = decode_external(cfg, &result)?;
            if recon.len() != frames.len() {
                return Err(Error::Format(format!(
                    "decoder returned {} frames for {} encoded",
                    recon.len(),
                    frames.len()
                )));
            }
            Ok(CodedSequence { recon, result })
        }
    }
}

/// Quantizer step for a QP: `2^((qp - 4) / 6)`.
pub fn mock_step(qp: i32) -> f64 {
    2f64.powf((qp - 4) as f64 / 6.0)
}

fn check_mock_qp(qp: i32) -> Result<()> {
    if !(0..=MAX_QP).contains(&qp) {
        return Err(Error::Parameter(format!(
            "mock codec QP {qp} outside [0, {MAX_QP}]"
        )));
    }
    Ok(())
}

fn quantize(v: u16, step: f64) -> i32 {
    (v as f64 / step).round() as i32
}

fn dequantize(index: i32, step: f64, max: u16) -> u16 {
    // Reconstruction is rounded back to the integer grid for fractional steps.
    (index as f64 * step).round().clamp(0.0, max as f64) as u16
}

/// Zero-order entropy of `indices` times their count, in bits.
fn entropy_bits(indices: &[i32]) -> f64 {
    let mut counts: HashMap<i32, usize> = HashMap::new();
    for &i in indices {
        *counts.entry(i).or_default() += 1;
    }
    let n = indices.len() as f64;
    let mut keys: Vec<_> = counts.into_iter().collect();
    keys.sort_unstable();
    let h: f64 = keys
        .iter()
        .map(|&(_, c)| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum();
    h * n
}

/// Uniform quantization of every sample with step `2^((qp-4)/6)`.
///
/// Reconstructions are clipped to the frame's effective range. The rate is
/// the sum over every plane of every frame of its zero-order entropy times
/// its sample count, rounded up.
pub fn mock_codec(frames: &[Frame], qp: i32) -> Result<(Vec<Frame>, u64)> {
    check_mock_qp(qp)?;
    let step = mock_step(qp);
    let mut bits = 0.0f64;
    let mut recon = Vec::with_capacity(frames.len());
    for f in frames {
        let max = f.bit_depth().max_effective();
        let mut planes = Vec::with_capacity(3);
        for plane in f.planes() {
            let idx: Vec<i32> = plane.data().iter().map(|&v| quantize(v, step)).collect();
            bits += entropy_bits(&idx);
            let data = idx.iter().map(|&i| dequantize(i, step, max)).collect();
            planes.push(Plane::new(plane.width(), plane.height(), data)?);
        }
        let cr = planes.pop().unwrap();
        let cb = planes.pop().unwrap();
        let y = planes.pop().unwrap();
        recon.push(Frame::from_parts_unchecked(
            y,
            cb,
            cr,
            f.chroma(),
            f.bit_depth(),
        ));
    }
    Ok((recon, bits.ceil() as u64))
}

const MOCK_MAGIC: &[u8; 4] = b"EBMK";
const MOCK_VERSION: u32 = 1;

/// Writes a mock bitstream: a fixed header followed by deflate-compressed
/// zigzag varint quantization indices. Returns the bitstream size in bytes.
pub fn mock_encode_file(
    input: impl AsRef<Path>,
    format: &VideoFormat,
    qp: i32,
    output: impl AsRef<Path>,
) -> Result<u64> {
    check_mock_qp(qp)?;
    let frames = read_yuv_all(input, format)?;
    let step = mock_step(qp);
    let mut header = Vec::new();
    header.extend_from_slice(MOCK_MAGIC);
    for v in [
        MOCK_VERSION,
        format.width as u32,
        format.height as u32,
        match format.chroma {
            ChromaFormat::C420 => 420,
            ChromaFormat::C444 => 444,
        },
        format.bit_depth.cbd(),
        format.bit_depth.ebd(),
        format.frame_count as u32,
        qp as u32,
    ] {
        header.extend_from_slice(&v.to_le_bytes());
    }
    let mut payload = DeflateEncoder::new(Vec::new(), Compression::best());
    let mut varint = Vec::new();
    for f in &frames {
        for plane in f.planes() {
            varint.clear();
            for &v in plane.data() {
                let i = quantize(v, step);
                let mut z = ((i << 1) ^ (i >> 31)) as u32;
                while z >= 0x80 {
                    varint.push((z as u8) | 0x80);
                    z >>= 7;
                }
                varint.push(z as u8);
            }
            payload.write_all(&varint).expect("in-memory write");
        }
    }
    let body = payload.finish().expect("in-memory write");
    let output = output.as_ref();
    let mut bytes = header;
    bytes.extend_from_slice(&body);
    fs::write(output, &bytes).map_err(|e| Error::io(output, e))?;
    Ok(bytes.len() as u64)
}

/// Decodes a mock bitstream, writing raw YUV. Returns the decoded format.
pub fn mock_decode_file(input: impl AsRef<Path>, output: impl AsRef<Path>) -> Result<VideoFormat> {
    let input = input.as_ref();
    let bytes = fs::read(input).map_err(|e| Error::io(input, e))?;
    if bytes.len() < 36 || &bytes[0..4] != MOCK_MAGIC {
        return Err(Error::Format("not a mock bitstream".into()));
    }
    let h: Vec<u32> = bytes[4..36]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if h[0] != MOCK_VERSION {
        return Err(Error::Format(format!("unsupported mock version {}", h[0])));
    }
    let chroma = match h[3] {
        420 => ChromaFormat::C420,
        444 => ChromaFormat::C444,
        other => return Err(Error::Format(format!("bad chroma tag {other}"))),
    };
    let format = VideoFormat {
        width: h[1] as usize,
        height: h[2] as usize,
        chroma,
        bit_depth: BitDepthConfig::new(h[4], h[5])?,
        frame_count: h[6] as usize,
        frame_rate: 1.0,
    };
    format.validate()?;
    let qp = h[7] as i32;
    check_mock_qp(qp)?;
    let step = mock_step(qp);
    let max = format.bit_depth.max_effective();

    let mut raw = Vec::new();
    DeflateDecoder::new(&bytes[36..])
        .read_to_end(&mut raw)
        .map_err(|e| Error::Format(format!("corrupt mock payload: {e}")))?;
    let mut pos = 0usize;
    let mut next_index = || -> Result<i32> {
        let mut z = 0u32;
        let mut shift = 0;
        loop {
            let b = *raw
                .get(pos)
                .ok_or_else(|| Error::Format("mock payload ended early".into()))?;
            pos += 1;
            z |= ((b & 0x7f) as u32) << shift;
            if b & 0x80 == 0 {
                break;
            }
            shift += 7;
            if shift > 28 {
                return Err(Error::Format("bad varint in mock payload".into()));
            }
        }
        Ok(((z >> 1) as i32) ^ -((z & 1) as i32))
    };
    let (cw, ch) = chroma.chroma_dims(format.width, format.height);
    let mut frames = Vec::with_capacity(format.frame_count);
    for _ in 0..format.frame_count {
        let mut planes = Vec::with_capacity(3);
        for (w, hgt) in [(format.width, format.height), (cw, ch), (cw, ch)] {
            let mut data = Vec::with_capacity(w * hgt);
            for _ in 0..w * hgt {
                data.push(dequantize(next_index()?, step, max));
            }
            planes.push(Plane::new(w, hgt, data)?);
        }
        let cr = planes.pop().unwrap();
        let cb = planes.pop().unwrap();
        let y = planes.pop().unwrap();
        frames.push(Frame::from_parts_unchecked(y, cb, cr, chroma, format.bit_depth));
    }
    write_yuv(output, &frames)?;
    Ok(format)
}
