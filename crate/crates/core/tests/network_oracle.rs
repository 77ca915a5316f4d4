//! The inference engine checked against straightforward nested-loop
//! reimplementations.

mod common;

use ebda_core::nn::{
    conv2d, enhance_frame, forward_residual, leaky_relu, mfrb_forward, Model, NetworkConfig,
    Tensor, TileConfig,
};
use ebda_core::{ebd_down, ebd_restore_naive, ChromaFormat, FlowParams};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn conv2d_matches_nested_loop_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..50 {
        let c = rng.gen_range(1..=6);
        let o = rng.gen_range(1..=6);
        let k = [1, 3, 5][rng.gen_range(0..3)];
        let h = rng.gen_range(1..=20);
        let w = rng.gen_range(1..=20);
        let input = common::random_tensor(&mut rng, vec![c, h, w]);
        let kernel = common::random_tensor(&mut rng, vec![o, c, k, k]);
        let bias = common::random_tensor(&mut rng, vec![o]);
        let got = conv2d(&input, &kernel, &bias, "case").unwrap();
        let want = common::conv_oracle(&input, &kernel, &bias);
        let err = got.max_abs_diff(&want);
        assert!(err <= 1e-5, "case {case}: {c}->{o} k{k} {h}x{w}, max error {err}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn conv2d_is_linear_in_the_input(seed in any::<u64>(), a in -2.0f32..2.0, b in -2.0f32..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = common::random_tensor(&mut rng, vec![3, 9, 11]);
        let y = common::random_tensor(&mut rng, vec![3, 9, 11]);
        let k = common::random_tensor(&mut rng, vec![4, 3, 3, 3]);
        let zero = Tensor::zeros(&[4]);
        let combo = Tensor::new(
            vec![3, 9, 11],
            x.data().iter().zip(y.data()).map(|(p, q)| a * p + b * q).collect(),
        )
        .unwrap();
        let lhs = conv2d(&combo, &k, &zero, "lin").unwrap();
        let cx = conv2d(&x, &k, &zero, "lin").unwrap();
        let cy = conv2d(&y, &k, &zero, "lin").unwrap();
        let rhs = Tensor::new(
            vec![4, 9, 11],
            cx.data().iter().zip(cy.data()).map(|(p, q)| a * p + b * q).collect(),
        )
        .unwrap();
        prop_assert!(lhs.max_abs_diff(&rhs) < 1e-4);
    }

    #[test]
    fn leaky_relu_is_identity_on_non_negative(v in proptest::collection::vec(0.0f32..10.0, 1..64)) {
        let t = Tensor::new(vec![1, 1, v.len()], v.clone()).unwrap();
        let out = leaky_relu(&t, 0.2);
        prop_assert_eq!(out.data(), &v[..]);
    }
}

fn concat(parts: &[&Tensor]) -> Tensor {
    let (h, w) = (parts[0].shape()[1], parts[0].shape()[2]);
    let c: usize = parts.iter().map(|p| p.shape()[0]).sum();
    let data = parts.iter().flat_map(|p| p.data().iter().copied()).collect();
    Tensor::new(vec![c, h, w], data).unwrap()
}

fn lrelu(t: Tensor, slope: f32) -> Tensor {
    let shape = t.shape().to_vec();
    let data = t
        .into_data()
        .into_iter()
        .map(|v| if v >= 0.0 { v } else { v * slope })
        .collect();
    Tensor::new(shape, data).unwrap()
}

fn add(a: &Tensor, b: &Tensor) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect();
    Tensor::new(a.shape().to_vec(), data).unwrap()
}

fn layer(model: &Model, name: &str, x: &Tensor) -> Tensor {
    let w = &model.weights()[&format!("{name}.weight")];
    let b = &model.weights()[&format!("{name}.bias")];
    common::conv_oracle(x, w, b)
}

/// Reference block: optional review fusion, dense stack, local fusion and
/// the block residual.
fn mfrb_oracle(model: &Model, block: usize, x: &Tensor, review: Option<&Tensor>) -> (Tensor, Tensor) {
    let slope = model.config().leaky_slope;
    let fused = match review {
        Some(r) => add(x, &layer(model, &format!("mfrb.{block}.review"), r)),
        None => x.clone(),
    };
    let mut feats = vec![fused];
    for d in 0..model.config().dense_layers_per_block {
        let refs: Vec<&Tensor> = feats.iter().collect();
        let out = layer(model, &format!("mfrb.{block}.dense.{d}"), &concat(&refs));
        feats.push(lrelu(out, slope));
    }
    let refs: Vec<&Tensor> = feats.iter().collect();
    let out = add(&layer(model, &format!("mfrb.{block}.local"), &concat(&refs)), x);
    (out, concat(&refs[1..]))
}

fn network_oracle(model: &Model, input: &Tensor) -> Tensor {
    let cfg = model.config();
    let mut x = lrelu(layer(model, "shallow", input), cfg.leaky_slope);
    let mut review = None;
    let mut outs = Vec::new();
    for b in 0..cfg.num_blocks {
        let (o, r) = mfrb_oracle(model, b, &x, review.as_ref());
        x = o.clone();
        outs.push(o);
        review = Some(r);
    }
    let refs: Vec<&Tensor> = outs.iter().collect();
    let g = layer(model, "gff.fuse", &concat(&refs));
    let g = layer(model, "gff.conv", &g);
    layer(model, "recon", &g)
}

#[test]
fn mfrb_matches_reference_block() {
    let model = Model::random(NetworkConfig::tiny(), 5, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x = common::random_tensor(&mut rng, vec![16, 18, 20]);
    let (out0, rev0) = mfrb_forward(&model, 0, &x, None).unwrap();
    let (want0, want_rev0) = mfrb_oracle(&model, 0, &x, None);
    assert!(out0.max_abs_diff(&want0) < 1e-5);
    assert!(rev0.max_abs_diff(&want_rev0) < 1e-5);
    assert_eq!(rev0.shape(), &[16, 18, 20]);

    let (out1, _) = mfrb_forward(&model, 1, &out0, Some(&rev0)).unwrap();
    let (want1, _) = mfrb_oracle(&model, 1, &want0, Some(&want_rev0));
    assert!(out1.max_abs_diff(&want1) < 1e-5);
}

#[test]
fn full_network_matches_reference() {
    let model = Model::random(NetworkConfig::tiny(), 9, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let x = common::random_tensor(&mut rng, vec![9, 20, 17]);
    let got = forward_residual(&model, &x).unwrap();
    let want = network_oracle(&model, &x);
    assert!(got.max_abs_diff(&want) < 1e-5, "{}", got.max_abs_diff(&want));
}

#[test]
fn output_depends_only_on_the_receptive_field() {
    let cfg = NetworkConfig::tiny();
    let r = cfg.receptive_radius();
    let model = Model::random(cfg, 21, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let big = common::random_tensor(&mut rng, vec![9, 160, 160]);
    let (x0, y0) = (40, 32);
    let crop = big.crop(x0, y0, 96, 96).unwrap();
    let full = forward_residual(&model, &big).unwrap();
    let part = forward_residual(&model, &crop).unwrap();
    let mut worst = 0f32;
    for c in 0..3 {
        for y in r..96 - r {
            for x in r..96 - r {
                let a = full.channel(c)[(y + y0) * 160 + x + x0];
                let b = part.channel(c)[y * 96 + x];
                worst = worst.max((a - b).abs());
            }
        }
    }
    assert!(worst < 1e-5, "interior differs by {worst}");
}

#[test]
fn zero_weight_enhancement_is_naive_upshift() {
    let depth = common::depth10();
    let frames: Vec<_> = (0..3)
        .map(|i| {
            ebd_down(&common::random_frame(96, 96, ChromaFormat::C420, depth, 40 + i), 1).unwrap()
        })
        .collect();
    let model = Model::zeros(NetworkConfig::tiny()).unwrap();
    let out = enhance_frame(
        &model,
        Some(&frames[0]),
        &frames[1],
        Some(&frames[2]),
        &FlowParams::default(),
        &TileConfig::default(),
    )
    .unwrap();
    let naive = ebd_restore_naive(&frames[1]).unwrap();
    assert_eq!(out.y, naive.y);
    assert_eq!(out.cb, naive.cb);
    assert_eq!(out.cr, naive.cr);
    assert_eq!(out.bit_depth(), naive.bit_depth());
}

#[test]
fn zero_weight_enhancement_of_first_and_static_frames() {
    let depth = common::depth10();
    let still = ebd_down(&common::textured_frame(64, 48, 0.0, 0.0, 3, depth), 1).unwrap();
    let model = Model::zeros(NetworkConfig::tiny()).unwrap();
    let flow = FlowParams::default();
    let tiles = TileConfig::default();
    let naive = ebd_restore_naive(&still).unwrap();
    let first = enhance_frame(&model, None, &still, Some(&still), &flow, &tiles).unwrap();
    assert_eq!(first, naive);
    let stat = enhance_frame(&model, Some(&still), &still, Some(&still), &flow, &tiles).unwrap();
    assert_eq!(stat, naive);
}
