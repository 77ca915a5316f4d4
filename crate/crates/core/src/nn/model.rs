//! Network hyperparameters, the named weight set and the MFMR weight file.
//!
//! MFMR layout (all little-endian):
//!
//! ```text
//! "MFMR" | u32 version = 1
//! u32 base_features | u32 num_blocks | u32 dense_layers_per_block | u32 growth
//! u32 input_frames  | u32 channels_per_frame | u32 reserved = 0 | f32 leaky_slope
//! u32 layer_count
//! layer_count x { u16 name_len | name (UTF-8) | u8 ndim | ndim x u32 dim | f32 data... }
//! ```

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const MFMR_MAGIC: &[u8; 4] = b"MFMR";
pub const MFMR_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkConfig {
    pub base_features: usize,
    pub num_blocks: usize,
    pub dense_layers_per_block: usize,
    pub growth: usize,
    pub leaky_slope: f32,
    pub input_frames: usize,
    pub channels_per_frame: usize,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            base_features: 64,
            num_blocks: 4,
            dense_layers_per_block: 4,
            growth: 32,
            leaky_slope: 0.2,
            input_frames: 3,
            channels_per_frame: 3,
        }
    }
}

impl NetworkConfig {
    /// A small configuration for tests and desk-scale training.
    pub fn tiny() -> Self {
        NetworkConfig {
            base_features: 16,
            num_blocks: 2,
            dense_layers_per_block: 2,
            growth: 8,
            ..NetworkConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ints = [
            ("base_features", self.base_features),
            ("num_blocks", self.num_blocks),
            ("dense_layers_per_block", self.dense_layers_per_block),
            ("growth", self.growth),
            ("input_frames", self.input_frames),
            ("channels_per_frame", self.channels_per_frame),
        ];
        if let Some((name, _)) = ints.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if self.input_frames.is_multiple_of(2) {
            return Err(Error::Config("input_frames must be odd".into()));
        }
        if !(self.leaky_slope.is_finite() && self.leaky_slope > 0.0) {
            return Err(Error::Config("leaky_slope must be positive".into()));
        }
        if ints.iter().any(|(_, v)| *v > u32::MAX as usize) {
            return Err(Error::Config("network sizes must fit in u32".into()));
        }
        Ok(())
    }

    pub fn input_channels(&self) -> usize {
        self.input_frames * self.channels_per_frame
    }

    /// Channels handed from one block to the next as review features.
    pub fn review_channels(&self) -> usize {
        self.dense_layers_per_block * self.growth
    }

    /// Spatial radius of the receptive field in pixels.
    pub fn receptive_radius(&self) -> usize {
        // shallow + dense 3x3s + global 3x3 + reconstruction
        1 + self.num_blocks * self.dense_layers_per_block + 1 + 1
    }

    /// Every layer the network needs, in canonical order, with kernel shapes.
    pub fn layer_specs(&self) -> Vec<LayerSpec> {
        let f = self.base_features;
        let g = self.growth;
        let mut specs = Vec::new();
        specs.push(LayerSpec::conv("shallow", f, self.input_channels(), 3));
        for b in 0..self.num_blocks {
            if b > 0 {
                specs.push(LayerSpec::conv(
                    &format!("mfrb.{b}.review"),
                    f,
                    self.review_channels(),
                    1,
                ));
            }
            for d in 0..self.dense_layers_per_block {
                specs.push(LayerSpec::conv(
                    &format!("mfrb.{b}.dense.{d}"),
                    g,
                    f + d * g,
                    3,
                ));
            }
            specs.push(LayerSpec::conv(
                &format!("mfrb.{b}.local"),
                f,
                f + self.review_channels(),
                1,
            ));
        }
        specs.push(LayerSpec::conv("gff.fuse", f, self.num_blocks * f, 1));
        specs.push(LayerSpec::conv("gff.conv", f, f, 3));
        specs.push(LayerSpec::conv("recon", self.channels_per_frame, f, 3));
        specs
    }

    /// Total number of scalar weights, including biases.
    pub fn parameter_count(&self) -> usize {
        self.layer_specs()
            .iter()
            .map(|s| s.out_ch * s.in_ch * s.kernel * s.kernel + s.out_ch)
            .sum()
    }
}

/// One convolution: stored as `<name>.weight` and `<name>.bias`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSpec {
    pub name: String,
    pub out_ch: usize,
    pub in_ch: usize,
    pub kernel: usize,
}

impl LayerSpec {
    fn conv(name: &str, out_ch: usize, in_ch: usize, kernel: usize) -> Self {
        LayerSpec {
            name: name.to_string(),
            out_ch,
            in_ch,
            kernel,
        }
    }

    pub fn weight_name(&self) -> String {
        format!("{}.weight", self.name)
    }

    pub fn bias_name(&self) -> String {
        format!("{}.bias", self.name)
    }

    pub fn weight_shape(&self) -> Vec<usize> {
        vec![self.out_ch, self.in_ch, self.kernel, self.kernel]
    }
}

/// A loaded network: configuration plus named tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    config: NetworkConfig,
    weights: IndexMap<String, Tensor>,
}

impl Model {
    /// Validates that `weights` holds exactly the layers `config` requires.
    pub fn new(config: NetworkConfig, weights: IndexMap<String, Tensor>) -> Result<Self> {
        config.validate()?;
        let model = Model { config, weights };
        model.check_integrity()?;
        Ok(model)
    }

    fn check_integrity(&self) -> Result<()> {
        let specs = self.config.layer_specs();
        for spec in &specs {
            for (name, shape) in [
                (spec.weight_name(), spec.weight_shape()),
                (spec.bias_name(), vec![spec.out_ch]),
            ] {
                match self.weights.get(&name) {
                    None => {
                        return Err(Error::ModelIntegrity(format!("missing layer {name}")));
                    }
                    Some(t) if t.shape() != shape.as_slice() => {
                        return Err(Error::ModelIntegrity(format!(
                            "layer {name} has shape {:?}, expected {shape:?}",
                            t.shape()
                        )));
                    }
                    Some(t) if !t.is_finite() => {
                        return Err(Error::ModelIntegrity(format!(
                            "layer {name} contains non-finite values"
                        )));
                    }
                    Some(_) => {}
                }
            }
        }
        if self.weights.len() != 2 * specs.len() {
            let known: std::collections::HashSet<String> = specs
                .iter()
                .flat_map(|s| [s.weight_name(), s.bias_name()])
                .collect();
            let extra: Vec<&String> = self.weights.keys().filter(|k| !known.contains(*k)).collect();
            return Err(Error::ModelIntegrity(format!("unexpected layers {extra:?}")));
        }
        Ok(())
    }

    /// All weights zero: the network output reduces to its global skip input.
    pub fn zeros(config: NetworkConfig) -> Result<Self> {
        Self::build(config, |shape, _| Tensor::zeros(shape))
    }

    /// Uniform fan-in scaled initialization, `gain / sqrt(fan_in)` bound,
    /// with biases scaled the same way. Deterministic for a seed.
    pub fn random(config: NetworkConfig, seed: u64, gain: f32) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::build(config, move |shape, fan_in| {
            let bound = gain / (fan_in as f32).sqrt();
            let n: usize = shape.iter().product();
            let data = (0..n).map(|_| rng.gen_range(-bound..=bound)).collect();
            Tensor::new(shape.to_vec(), data).expect("shape matches data")
        })
    }

    fn build(config: NetworkConfig, mut init: impl FnMut(&[usize], usize) -> Tensor) -> Result<Self> {
        config.validate()?;
        let mut weights = IndexMap::new();
        for spec in config.layer_specs() {
            let fan_in = spec.in_ch * spec.kernel * spec.kernel;
            weights.insert(spec.weight_name(), init(&spec.weight_shape(), fan_in));
            weights.insert(spec.bias_name(), init(&[spec.out_ch], fan_in));
        }
        Model::new(config, weights)
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn weights(&self) -> &IndexMap<String, Tensor> {
        &self.weights
    }

    pub(crate) fn get(&self, name: &str) -> Result<&Tensor> {
        self.weights
            .get(name)
            .ok_or_else(|| Error::ModelIntegrity(format!("missing layer {name}")))
    }

    /// `(weight, bias)` for a convolution layer.
    pub(crate) fn conv_params(&self, layer: &str) -> Result<(&Tensor, &Tensor)> {
        Ok((
            self.get(&format!("{layer}.weight"))?,
            self.get(&format!("{layer}.bias"))?,
        ))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let c = &self.config;
        let mut buf = Vec::with_capacity(64 + 4 * c.parameter_count());
        buf.extend_from_slice(MFMR_MAGIC);
        buf.extend_from_slice(&MFMR_VERSION.to_le_bytes());
        for v in [
            c.base_features,
            c.num_blocks,
            c.dense_layers_per_block,
            c.growth,
            c.input_frames,
            c.channels_per_frame,
            0,
        ] {
            buf.extend_from_slice(&(v as u32).to_le_bytes());
        }
        buf.extend_from_slice(&c.leaky_slope.to_le_bytes());
        buf.extend_from_slice(&(self.weights.len() as u32).to_le_bytes());
        for (name, tensor) in &self.weights {
            buf.extend_from_slice(&(name.len() as u16).to_le_bytes());
            buf.extend_from_slice(name.as_bytes());
            buf.push(tensor.shape().len() as u8);
            for &d in tensor.shape() {
                buf.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in tensor.data() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader { bytes, pos: 0 };
        if r.take(4)? != MFMR_MAGIC {
            return Err(Error::Format("bad magic, not an MFMR weight file".into()));
        }
        let version = r.u32()?;
        if version != MFMR_VERSION {
            return Err(Error::Format(format!("unsupported MFMR version {version}")));
        }
        let mut ints = [0usize; 7];
        for v in &mut ints {
            *v = r.u32()? as usize;
        }
        if ints[6] != 0 {
            return Err(Error::Format("reserved config field must be zero".into()));
        }
        let config = NetworkConfig {
            base_features: ints[0],
            num_blocks: ints[1],
            dense_layers_per_block: ints[2],
            growth: ints[3],
            input_frames: ints[4],
            channels_per_frame: ints[5],
            leaky_slope: r.f32()?,
        };
        config
            .validate()
            .map_err(|e| Error::Format(format!("invalid embedded config: {e}")))?;
        let count = r.u32()? as usize;
        let mut weights = IndexMap::with_capacity(count);
        for _ in 0..count {
            let len = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| Error::Format("layer name is not UTF-8".into()))?
                .to_string();
            let ndim = r.take(1)?[0] as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(r.u32()? as usize);
            }
            let n = shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| Error::Format(format!("layer {name} is too large")))?;
            let raw = r.take(n.checked_mul(4).ok_or_else(|| {
                Error::Format(format!("layer {name} is too large"))
            })?)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            if weights
                .insert(name.clone(), Tensor::new(shape, data)?)
                .is_some()
            {
                return Err(Error::Format(format!("duplicate layer {name}")));
            }
        }
        if r.pos != bytes.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes after last layer",
                bytes.len() - r.pos
            )));
        }
        Model::new(config, weights)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        out.write_all(&self.to_bytes())
            .and_then(|_| out.flush())
            .map_err(|e| Error::io(path, e))
    }
}

/// Reads and validates an MFMR weight file.
pub fn load_weights(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    Model::from_bytes(&bytes)
}

pub fn save_weights(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    model.save(path)
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format("truncated weight file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameter_count_is_function_of_config() {
        let tiny = NetworkConfig::tiny();
        let m = Model::zeros(tiny).unwrap();
        let stored: usize = m.weights().values().map(Tensor::len).sum();
        assert_eq!(stored, tiny.parameter_count());
        // shallow: 16*9*9+16, block0: dense 8*16*9+8, 8*24*9+8, local 16*32+16,
        // block1: review 16*16+16 + same dense/local, gff 16*32+16, 16*16*9+16, recon 3*16*9+3
        let expected = (16 * 9 * 9 + 16)
            + 2 * ((8 * 16 * 9 + 8) + (8 * 24 * 9 + 8) + (16 * 32 + 16))
            + (16 * 16 + 16)
            + (16 * 32 + 16)
            + (16 * 16 * 9 + 16)
            + (3 * 16 * 9 + 3);
        assert_eq!(tiny.parameter_count(), expected);
    }

    #[test]
    fn bytes_round_trip() {
        let m = Model::random(NetworkConfig::tiny(), 7, 0.5).unwrap();
        let bytes = m.to_bytes();
        let back = Model::from_bytes(&bytes).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn truncated_and_bad_magic() {
        let bytes = Model::zeros(NetworkConfig::tiny()).unwrap().to_bytes();
        assert!(matches!(
            Model::from_bytes(&bytes[..bytes.len() - 1]),
            Err(Error::Format(_))
        ));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Model::from_bytes(&bad), Err(Error::Format(_))));
        let mut v2 = bytes;
        v2[4] = 2;
        assert!(matches!(Model::from_bytes(&v2), Err(Error::Format(_))));
    }

    #[test]
    fn shape_mismatch_lists_layer() {
        let m = Model::zeros(NetworkConfig::tiny()).unwrap();
        let mut w = m.weights().clone();
        w.insert("recon.bias".into(), Tensor::zeros(&[4]));
        let err = Model::new(*m.config(), w).unwrap_err();
        assert!(matches!(err, Error::ModelIntegrity(ref s) if s.contains("recon.bias")));
        let mut w = m.weights().clone();
        w.shift_remove("gff.conv.weight");
        assert!(matches!(Model::new(*m.config(), w), Err(Error::ModelIntegrity(_))));
    }

    #[test]
    fn config_validation() {
        let even = NetworkConfig {
            input_frames: 2,
            ..NetworkConfig::default()
        };
        assert!(even.validate().is_err());
        assert_eq!(NetworkConfig::default().receptive_radius(), 19);
    }
}
