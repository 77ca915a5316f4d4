//! The on-disk config file. Every key is optional so the same file can serve
//! all subcommands; command-line flags take precedence over file values.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use ebda_core::codec::CodecConfig;
use ebda_core::flow::FlowParams;
use ebda_core::nn::{NetworkConfig, TileConfig};
use ebda_core::pipeline::ModelSelector;
use ebda_core::{BitDepthConfig, ChromaFormat, VideoFormat};
use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub format: FormatSection,
    pub ebd_shift: Option<u32>,
    pub codec: Option<CodecConfig>,
    pub flow: Option<FlowParams>,
    pub network: Option<NetworkConfig>,
    pub tiles: Option<TileConfig>,
    pub models: Option<ModelSelector>,
    pub qps: Option<Vec<i32>>,
    pub output_dir: Option<PathBuf>,
    pub workers: Option<usize>,
    pub dataset: DatasetSection,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FormatSection {
    pub width: Option<usize>,
    pub height: Option<usize>,
    pub chroma: Option<ChromaFormat>,
    /// Coding (container) bit depth.
    pub bitdepth: Option<u32>,
    pub frames: Option<usize>,
    pub fps: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub samples_per_sequence: Option<usize>,
    pub block_size: Option<usize>,
    pub seed: Option<u64>,
    pub rotate: Option<bool>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<FileConfig> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

impl FormatSection {
    /// Flag values win over file values.
    pub fn overlay(&self, flags: &FormatSection) -> FormatSection {
        FormatSection {
            width: flags.width.or(self.width),
            height: flags.height.or(self.height),
            chroma: flags.chroma.or(self.chroma),
            bitdepth: flags.bitdepth.or(self.bitdepth),
            frames: flags.frames.or(self.frames),
            fps: flags.fps.or(self.fps),
        }
    }

    /// Builds the format of `input`, whose samples use `ebd` bits of the
    /// coding depth (the coding depth itself when `None`). A missing frame
    /// count is inferred from the file size.
    pub fn resolve(&self, input: Option<&Path>, ebd: Option<u32>) -> Result<VideoFormat> {
        let (Some(width), Some(height)) = (self.width, self.height) else {
            bail!("frame size unknown: pass --width/--height or set [format] in the config");
        };
        let chroma = self.chroma.unwrap_or(ChromaFormat::C420);
        let cbd = self.bitdepth.unwrap_or(10);
        let bit_depth = BitDepthConfig::new(cbd, ebd.unwrap_or(cbd))?;
        let mut format = VideoFormat {
            width,
            height,
            chroma,
            bit_depth,
            frame_count: 1,
            frame_rate: self.fps.unwrap_or(30.0),
        };
        format.frame_count = match (self.frames, input) {
            (Some(n), _) => n,
            (None, Some(path)) => {
                let len = std::fs::metadata(path)
                    .with_context(|| format!("reading {}", path.display()))?
                    .len() as usize;
                let per_frame = format.frame_bytes();
                if len == 0 || !len.is_multiple_of(per_frame) {
                    bail!(
                        "{} is {len} bytes, not a whole number of {per_frame}-byte frames",
                        path.display()
                    );
                }
                len / per_frame
            }
            (None, None) => bail!("frame count unknown: pass --frames"),
        };
        format.validate()?;
        Ok(format)
    }
}
