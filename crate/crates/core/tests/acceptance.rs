//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use ebda_core::codec::mock_codec;
use ebda_core::metrics::{bd_psnr, bd_rate, psnr_luma, psnr_luma_sequence, RdCurve, RdPoint};
use ebda_core::nn::{conv2d, enhance_frame, save_weights, Model, NetworkConfig, TileConfig};
use ebda_core::pipeline::{rd_csv, run_pipeline, select_model, ModelId, ModelSelector, PipelineConfig};
use ebda_core::{
    ebd_down, ebd_restore_naive, ebd_up_naive, estimate_flow, warp_plane, ChromaFormat,
    FlowField, FlowParams, Frame, Plane, VideoFormat,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    check(elapsed < limit, || {
        format!("took {:.2}s, limit {:.0}s", elapsed.as_secs_f64(), limit.as_secs_f64())
    })
}

fn ebd_round_trip() -> Outcome {
    let start = Instant::now();
    let depth = common::depth10();
    let y = Plane::from_fn(32, 32, |x, y| (y * 32 + x) as u16);
    let frame = Frame::new(y, Plane::filled(16, 16, 0), Plane::filled(16, 16, 1023), ChromaFormat::C420, depth)
        .map_err(|e| e.to_string())?;
    let back = ebd_up_naive(&ebd_down(&frame, 1).map_err(|e| e.to_string())?, 1).map_err(|e| e.to_string())?;
    let worst = frame
        .y
        .data()
        .iter()
        .zip(back.y.data())
        .map(|(&a, &b)| (a as i32 - b as i32).abs())
        .max()
        .unwrap();
    check(worst <= 1, || format!("max round-trip error {worst}"))?;
    within(start.elapsed(), Duration::from_secs(1))?;
    Ok(format!("1024 values, max |error| {worst}"))
}

fn bd_closed_forms() -> Outcome {
    let start = Instant::now();
    let pts = |v: &[(f64, f64)]| RdCurve::new(v.iter().map(|&(r, q)| RdPoint::new(r, q)).collect());
    let base = [(100.0, 30.0), (200.0, 33.0), (400.0, 35.5), (800.0, 37.5)];
    let other = [(120.0, 30.4), (230.0, 33.1), (390.0, 35.2), (900.0, 38.0)];
    let c = pts(&base).map_err(|e| e.to_string())?;
    let doubled = pts(&base.map(|(r, q)| (2.0 * r, q))).map_err(|e| e.to_string())?;
    let lifted = pts(&base.map(|(r, q)| (r, q + 0.5))).map_err(|e| e.to_string())?;
    let o = pts(&other).map_err(|e| e.to_string())?;
    let e = |r: ebda_core::Result<f64>| r.map_err(|e| e.to_string());
    let same = e(bd_rate(&c, &c))?;
    let dbl = e(bd_rate(&c, &doubled))?;
    let lift = e(bd_psnr(&c, &lifted))?;
    let ab = e(bd_rate(&c, &o))?;
    let ba = e(bd_rate(&o, &c))?;
    let anti = ((1.0 + ab / 100.0).log10() + (1.0 + ba / 100.0).log10()).abs();
    check(same.abs() < 1e-9, || format!("bd_rate(c, c) = {same}"))?;
    check((dbl - 100.0).abs() < 1e-6, || format!("doubled rates give {dbl}%"))?;
    check((lift - 0.5).abs() < 1e-9, || format!("+0.5 dB gives {lift}"))?;
    check(anti < 1e-9, || format!("antisymmetry residual {anti}"))?;
    within(start.elapsed(), Duration::from_secs(1))?;
    Ok(format!("identity {same:.1e}, doubled {dbl:.9}%, lifted {lift:.12} dB, antisymmetry {anti:.1e}"))
}

fn psnr_closed_form() -> Outcome {
    let depth = common::depth10();
    let a = Frame::filled(64, 64, ChromaFormat::C420, depth, [500, 512, 512]).map_err(|e| e.to_string())?;
    let b = Frame::filled(64, 64, ChromaFormat::C420, depth, [501, 512, 512]).map_err(|e| e.to_string())?;
    let p = psnr_luma(&a, &b).map_err(|e| e.to_string())?;
    check((p - 60.20).abs() <= 0.01, || format!("got {p} dB"))?;
    Ok(format!("{p:.4} dB"))
}

fn conv_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0_4E);
    let mut worst = 0f32;
    for case in 0..50 {
        let c = rng.gen_range(1..=8);
        let o = rng.gen_range(1..=8);
        let k = [1, 3, 5][rng.gen_range(0..3)];
        let (h, w) = (rng.gen_range(1..=24), rng.gen_range(1..=24));
        let input = common::random_tensor(&mut rng, vec![c, h, w]);
        let kernel = common::random_tensor(&mut rng, vec![o, c, k, k]);
        let bias = common::random_tensor(&mut rng, vec![o]);
        let got = conv2d(&input, &kernel, &bias, "acceptance").map_err(|e| e.to_string())?;
        let err = got.max_abs_diff(&common::conv_oracle(&input, &kernel, &bias));
        check(err <= 1e-5, || format!("case {case} max error {err}"))?;
        worst = worst.max(err);
    }
    within(start.elapsed(), Duration::from_secs(10))?;
    Ok(format!("50 cases, max |error| {worst:.2e}"))
}

fn zero_weight_identity() -> Outcome {
    let depth = common::depth10();
    let frames: Vec<Frame> = (0..3)
        .map(|i| ebd_down(&common::random_frame(96, 96, ChromaFormat::C420, depth, 500 + i), 1))
        .collect::<ebda_core::Result<_>>()
        .map_err(|e| e.to_string())?;
    let model = Model::zeros(NetworkConfig::default()).map_err(|e| e.to_string())?;
    let out = enhance_frame(
        &model,
        Some(&frames[0]),
        &frames[1],
        Some(&frames[2]),
        &FlowParams::default(),
        &TileConfig::default(),
    )
    .map_err(|e| e.to_string())?;
    let naive = ebd_restore_naive(&frames[1]).map_err(|e| e.to_string())?;
    let diff = out.y.data().iter().zip(naive.y.data()).filter(|(a, b)| a != b).count();
    check(diff == 0, || format!("{diff} luma samples differ"))?;
    Ok("96x96 luma bit-identical to naive up-shift".into())
}

fn flow_recovery() -> Outcome {
    let start = Instant::now();
    let max = 1023;
    let reference = common::textured_plane(128, 128, 0.0, 0.0, 2718, max);
    let target = common::textured_plane(128, 128, 4.0, 2.0, 2718, max);
    let flow = estimate_flow(&reference, &target, &FlowParams::default()).map_err(|e| e.to_string())?;
    let margin = 16;
    let mut sum = 0.0;
    let mut n = 0;
    for y in margin..128 - margin {
        for x in margin..128 - margin {
            let (u, v) = flow.at(x, y);
            sum += (((u - 4.0).powi(2) + (v - 2.0).powi(2)) as f64).sqrt();
            n += 1;
        }
    }
    let epe = sum / n as f64;
    check(epe < 0.5, || format!("interior endpoint error {epe}"))?;
    let warped = warp_plane(&reference, &FlowField::constant(128, 128, 4.0, 2.0), max)
        .map_err(|e| e.to_string())?;
    let mut mismatches = 0;
    for y in 0..126 {
        for x in 0..124 {
            if warped.get(x, y) != target.get(x, y) {
                mismatches += 1;
            }
        }
    }
    check(mismatches == 0, || format!("{mismatches} warped samples differ"))?;
    within(start.elapsed(), Duration::from_secs(5))?;
    Ok(format!("interior EPE {epe:.4} px, integer warp exact"))
}

fn model_selection() -> Outcome {
    let qps = [22.0, 24.5, 27.0, 29.5, 32.0, 34.5, 37.0];
    let got: Vec<ModelId> = qps.iter().map(|&q| select_model(q)).collect();
    use ModelId::*;
    let want = vec![M1, M1, M2, M2, M3, M3, M4];
    check(got == want, || format!("got {got:?}"))?;
    Ok(format!("{got:?}"))
}

fn mock_monotonicity() -> Outcome {
    let frames = vec![common::random_frame(64, 64, ChromaFormat::C420, common::depth10(), 1234)];
    let mut rows = Vec::new();
    for qp in [10, 16, 22, 28, 34] {
        let (recon, bits) = mock_codec(&frames, qp).map_err(|e| e.to_string())?;
        let psnr = psnr_luma_sequence(&frames, &recon).map_err(|e| e.to_string())?;
        rows.push((qp, psnr, bits));
    }
    for w in rows.windows(2) {
        check(w[1].1 <= w[0].1 && w[1].2 <= w[0].2, || {
            format!("qp {} -> {}: psnr {} -> {}, bits {} -> {}", w[0].0, w[1].0, w[0].1, w[1].1, w[0].2, w[1].2)
        })?;
    }
    Ok(rows
        .iter()
        .map(|(q, p, b)| format!("qp{q}:{p:.2}dB/{b}b"))
        .collect::<Vec<_>>()
        .join(" "))
}

fn smoke_config(dir: &std::path::Path, workers: usize) -> Result<PipelineConfig, String> {
    let path = dir.join("zero.mfmr");
    if !path.exists() {
        save_weights(&Model::zeros(NetworkConfig::tiny()).map_err(|e| e.to_string())?, &path)
            .map_err(|e| e.to_string())?;
    }
    let mut cfg = PipelineConfig::new(VideoFormat {
        width: 96,
        height: 96,
        chroma: ChromaFormat::C420,
        bit_depth: common::depth10(),
        frame_count: 8,
        frame_rate: 30.0,
    });
    cfg.models = ModelSelector {
        model_paths: ModelId::ALL.iter().map(|&id| (id, path.clone())).collect(),
        ..ModelSelector::default()
    };
    cfg.output_dir = dir.join(format!("out{workers}"));
    cfg.workers = workers;
    Ok(cfg)
}

fn end_to_end_smoke() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = smoke_config(dir.path(), 1)?;
    let frames = common::panning_sequence(96, 96, 8, 99, common::depth10());
    let report = run_pipeline(&cfg, &frames, "smoke").map_err(|e| e.to_string())?;
    check(report.is_complete(), || "report incomplete".into())?;
    check(report.points.len() == 4, || format!("{} QP points", report.points.len()))?;
    check(report.ebda_curve() == report.naive_curve(), || "EBDA curve differs from naive".into())?;
    check(report.bd.is_ok(), || format!("BD failed: {:?}", report.bd))?;
    within(start.elapsed(), Duration::from_secs(120))?;
    Ok(format!("4 QP points in {:.2}s, EBDA == naive", start.elapsed().as_secs_f64()))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let frames = common::panning_sequence(96, 96, 8, 7, common::depth10());
    let mut csvs = Vec::new();
    for workers in [1, 1, 4] {
        let cfg = smoke_config(dir.path(), workers)?;
        let report = run_pipeline(&cfg, &frames, "det").map_err(|e| e.to_string())?;
        csvs.push(rd_csv(&[report]).map_err(|e| e.to_string())?);
    }
    check(csvs[0] == csvs[1], || "repeat run differs".into())?;
    check(csvs[0] == csvs[2], || "worker count changes output".into())?;
    Ok(format!("{} CSV bytes identical across 1/1/4 workers", csvs[0].len()))
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("ebd round trip", ebd_round_trip),
        ("bd closed forms", bd_closed_forms),
        ("psnr closed form", psnr_closed_form),
        ("conv2d oracle", conv_oracle),
        ("zero-weight identity", zero_weight_identity),
        ("flow recovery", flow_recovery),
        ("model selection", model_selection),
        ("mock codec monotonicity", mock_monotonicity),
        ("end-to-end smoke", end_to_end_smoke),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("PASS  {name:<26} {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name:<26} {why}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
