//! Multi-frame MFRNet forward pass.
//!
//! ```text
//! input (frames*3) -> shallow 3x3 -> LReLU
//!   -> MFRB_0 -> MFRB_1 -> ... -> MFRB_{B-1}     (review features chained)
//!   -> concat(block outputs) -> 1x1 -> 3x3       (global feature fusion)
//!   -> 3x3 reconstruction -> + center baseline   (global skip)
//! ```
//!
//! Inside block `b`, review features from block `b-1` are projected by a 1x1
//! convolution and added to the block input. Each of the `D` dense layers is a
//! 3x3 convolution + LReLU over the concatenation of that fused input and all
//! previous dense outputs. A 1x1 convolution fuses everything back to `F`
//! channels and the block input is added as a local residual. The
//! concatenated dense outputs (`D*G` channels) become the next block's review
//! input.

use super::model::Model;
use super::ops::{conv2d, leaky_relu_in_place};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Smallest spatial size the network accepts.
pub const MIN_INPUT_SIZE: usize = 16;

fn conv(model: &Model, layer: &str, input: &Tensor) -> Result<Tensor> {
    let (w, b) = model.conv_params(layer)?;
    conv2d(input, w, b, layer)
}

/// One multi-level feature review residual dense block.
///
/// Returns `(block_output, review_out)`.
pub fn mfrb_forward(
    model: &Model,
    block: usize,
    block_input: &Tensor,
    review_in: Option<&Tensor>,
) -> Result<(Tensor, Tensor)> {
    let cfg = model.config();
    if block >= cfg.num_blocks {
        return Err(Error::ModelIntegrity(format!(
            "block {block} does not exist (model has {})",
            cfg.num_blocks
        )));
    }
    let (c, _, _) = block_input.chw()?;
    if c != cfg.base_features {
        return Err(Error::Shape(format!(
            "mfrb.{block}: input has {c} channels, expected {}",
            cfg.base_features
        )));
    }
    let fused = match (block, review_in) {
        (0, None) => block_input.clone(),
        (0, Some(_)) => {
            return Err(Error::ModelIntegrity(
                "mfrb.0 has no review fusion layer".into(),
            ))
        }
        (_, Some(review)) => {
            let projected = conv(model, &format!("mfrb.{block}.review"), review)?;
            block_input.add(&projected)?
        }
        (_, None) => {
            return Err(Error::Shape(format!(
                "mfrb.{block} needs review features from the previous block"
            )))
        }
    };

    let mut features = vec![fused];
    for d in 0..cfg.dense_layers_per_block {
        let refs: Vec<&Tensor> = features.iter().collect();
        let stacked = Tensor::concat_channels(&refs)?;
        let mut out = conv(model, &format!("mfrb.{block}.dense.{d}"), &stacked)?;
        leaky_relu_in_place(&mut out, cfg.leaky_slope);
        features.push(out);
    }
    let refs: Vec<&Tensor> = features.iter().collect();
    let all = Tensor::concat_channels(&refs)?;
    let mut output = conv(model, &format!("mfrb.{block}.local"), &all)?;
    output.add_assign(block_input)?;
    let review_out = Tensor::concat_channels(&refs[1..])?;
    Ok((output, review_out))
}

/// Network output before the global skip is added.
pub fn forward_residual(model: &Model, aligned_input: &Tensor) -> Result<Tensor> {
    let cfg = model.config();
    let (c, h, w) = aligned_input.chw()?;
    if c != cfg.input_channels() {
        return Err(Error::Shape(format!(
            "network input has {c} channels, expected {}",
            cfg.input_channels()
        )));
    }
    if h < MIN_INPUT_SIZE || w < MIN_INPUT_SIZE {
        return Err(Error::InputTooSmall(format!(
            "{w}x{h} input, network needs at least {MIN_INPUT_SIZE}x{MIN_INPUT_SIZE}"
        )));
    }

    let mut x = conv(model, "shallow", aligned_input)?;
    leaky_relu_in_place(&mut x, cfg.leaky_slope);

    let mut review: Option<Tensor> = None;
    let mut block_outputs = Vec::with_capacity(cfg.num_blocks);
    for b in 0..cfg.num_blocks {
        let input = block_outputs.last().unwrap_or(&x);
        let (out, rev) = mfrb_forward(model, b, input, review.as_ref())?;
        block_outputs.push(out);
        review = Some(rev);
    }
    let refs: Vec<&Tensor> = block_outputs.iter().collect();
    let fused = conv(model, "gff.fuse", &Tensor::concat_channels(&refs)?)?;
    let fused = conv(model, "gff.conv", &fused)?;
    conv(model, "recon", &fused)
}

/// Full forward pass: reconstruction plus the normalized center baseline.
pub fn forward(model: &Model, aligned_input: &Tensor, center_baseline: &Tensor) -> Result<Tensor> {
    let (bc, bh, bw) = center_baseline.chw()?;
    let (_, h, w) = aligned_input.chw()?;
    if bc != model.config().channels_per_frame || (bh, bw) != (h, w) {
        return Err(Error::Shape(format!(
            "baseline {:?} does not match input {h}x{w}",
            center_baseline.shape()
        )));
    }
    let mut out = forward_residual(model, aligned_input)?;
    out.add_assign(center_baseline)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::model::NetworkConfig;

    fn ramp(c: usize, h: usize, w: usize) -> Tensor {
        let n = c * h * w;
        Tensor::new(
            vec![c, h, w],
            (0..n).map(|i| ((i * 7919) % 101) as f32 / 101.0).collect(),
        )
        .unwrap()
    }

    #[test]
    fn zero_weight_block_is_residual() {
        let model = Model::zeros(NetworkConfig::tiny()).unwrap();
        let x = ramp(16, 8, 8);
        let (out, review) = mfrb_forward(&model, 0, &x, None).unwrap();
        assert_eq!(out, x);
        assert_eq!(review.shape(), &[16, 8, 8]);
        assert!(review.data().iter().all(|&v| v == 0.0));
        let (out, _) = mfrb_forward(&model, 1, &x, Some(&review)).unwrap();
        assert_eq!(out, x);
    }

    #[test]
    fn block_review_contract() {
        let model = Model::zeros(NetworkConfig::tiny()).unwrap();
        let x = ramp(16, 8, 8);
        assert!(mfrb_forward(&model, 1, &x, None).is_err());
        assert!(mfrb_forward(&model, 0, &x, Some(&x)).is_err());
        assert!(mfrb_forward(&model, 2, &x, None).is_err());
    }

    #[test]
    fn zero_weights_return_baseline() {
        let model = Model::zeros(NetworkConfig::tiny()).unwrap();
        let input = ramp(9, 20, 24);
        let base = ramp(3, 20, 24);
        assert_eq!(forward(&model, &input, &base).unwrap(), base);
    }

    #[test]
    fn fully_convolutional() {
        let model = Model::random(NetworkConfig::tiny(), 3, 0.5).unwrap();
        for (h, w) in [(96, 96), (48, 64)] {
            let out = forward(&model, &ramp(9, h, w), &ramp(3, h, w)).unwrap();
            assert_eq!(out.shape(), &[3, h, w]);
            assert!(out.is_finite());
        }
    }

    #[test]
    fn rejects_small_input() {
        let model = Model::zeros(NetworkConfig::tiny()).unwrap();
        let r = forward(&model, &ramp(9, 15, 32), &ramp(3, 15, 32));
        assert!(matches!(r, Err(Error::InputTooSmall(_))));
    }
}
