mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use ebda_core::codec::{mock_decode_file, mock_encode_file};
use ebda_core::metrics::{bd_psnr, bd_rate, psnr_luma, RdCurve, RdPoint};
use ebda_core::nn::{enhance_sequence, load_weights, Model, NetworkConfig};
use ebda_core::pipeline::{run_gen_dataset, run_pipeline, write_reports, GenDatasetOptions, PipelineConfig};
use ebda_core::{
    ebd_down, ebd_up_naive, estimate_flow, read_yuv_all, write_yuv, ChromaFormat, VideoFormat,
};

use config::{FileConfig, FormatSection};

/// Effective bit depth adaptation toolkit.
#[derive(Parser, Debug)]
#[command(name = "ebda", version, about)]
struct Cli {
    /// TOML config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default, Clone)]
struct FormatArgs {
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
    /// `420` or `444`.
    #[arg(long, value_parser = parse_chroma)]
    chroma: Option<ChromaFormat>,
    /// Coding bit depth of the container.
    #[arg(long)]
    bitdepth: Option<u32>,
    /// Number of frames; inferred from the file size when omitted.
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long)]
    fps: Option<f64>,
}

impl FormatArgs {
    fn section(&self) -> FormatSection {
        FormatSection {
            width: self.width,
            height: self.height,
            chroma: self.chroma,
            bitdepth: self.bitdepth,
            frames: self.frames,
            fps: self.fps,
        }
    }
}

fn parse_chroma(s: &str) -> std::result::Result<ChromaFormat, String> {
    s.parse().map_err(|e: ebda_core::Error| e.to_string())
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Drop the low bits of every sample (truncating right shift).
    Downsample {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        shift: Option<u32>,
        #[command(flatten)]
        format: FormatArgs,
    },
    /// Restore reduced-depth samples with a plain left shift.
    UpsampleNaive {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        shift: Option<u32>,
        #[command(flatten)]
        format: FormatArgs,
    },
    /// Restore reduced-depth decoded frames with the multi-frame CNN.
    Enhance {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        shift: Option<u32>,
        /// Weight file; alternatively pick one from the config with --qp.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Base QP used to choose among the configured models.
        #[arg(long)]
        qp: Option<f64>,
        #[command(flatten)]
        format: FormatArgs,
    },
    /// Estimate luma optical flow between two frames of a sequence.
    Flow {
        #[arg(long)]
        input: PathBuf,
        /// Reference frame index (the one that gets warped).
        #[arg(long)]
        from: usize,
        /// Target frame index.
        #[arg(long)]
        to: usize,
        /// Optional binary flow dump.
        #[arg(long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        format: FormatArgs,
    },
    /// Build a training dataset file from original sequences.
    GenDataset {
        /// `name=path` or just `path`; repeatable. All share one format.
        #[arg(long = "sequence", required = true)]
        sequences: Vec<String>,
        #[arg(long)]
        qp_group: u32,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        block_size: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Skip the four-rotation augmentation.
        #[arg(long)]
        no_rotate: bool,
        #[arg(long)]
        output: PathBuf,
        #[command(flatten)]
        format: FormatArgs,
    },
    /// Anchor and EBDA encodes for every QP, with BD metrics and reports.
    Pipeline {
        /// Input sequence; repeatable. All share one format.
        #[arg(long = "input", required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
        /// Comma-separated base QPs.
        #[arg(long, value_delimiter = ',')]
        qps: Option<Vec<i32>>,
        #[arg(long)]
        shift: Option<u32>,
        #[command(flatten)]
        format: FormatArgs,
    },
    /// BD-rate and BD-PSNR between two RD curves.
    Bdrate {
        /// `kbps:psnr,...` or a CSV file with bitrate and PSNR columns.
        #[arg(long)]
        anchor: String,
        #[arg(long)]
        test: String,
    },
    /// Luma PSNR between two sequences.
    Psnr {
        #[arg(long)]
        reference: PathBuf,
        #[arg(long)]
        distorted: PathBuf,
        #[command(flatten)]
        format: FormatArgs,
    },
    /// Encode raw video with the built-in mock codec.
    MockEncode {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        qp: i32,
        #[command(flatten)]
        format: FormatArgs,
    },
    /// Decode a mock bitstream to raw video.
    MockDecode {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Write a weight file with zero or random weights.
    InitModel {
        #[arg(long)]
        output: PathBuf,
        /// Use the small test configuration instead of the configured one.
        #[arg(long)]
        tiny: bool,
        /// Random uniform weights from this seed instead of zeros.
        #[arg(long)]
        random_seed: Option<u64>,
        #[arg(long, default_value_t = 0.1)]
        gain: f32,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn shift_for(file: &FileConfig, flag: Option<u32>) -> u32 {
    flag.or(file.ebd_shift).unwrap_or(1)
}

fn reduced_ebd(format: &FormatSection, shift: u32) -> Result<u32> {
    let cbd = format.bitdepth.unwrap_or(10);
    if shift == 0 || shift >= cbd {
        bail!("shift {shift} is outside [1, {cbd})");
    }
    Ok(cbd - shift)
}

fn run(cli: Cli) -> Result<ExitCode> {
    let file = FileConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Downsample {
            input,
            output,
            shift,
            format,
        } => {
            let fmt = file.format.overlay(&format.section()).resolve(Some(&input), None)?;
            let shift = shift_for(&file, shift);
            let frames = read_yuv_all(&input, &fmt)?;
            let out = frames
                .iter()
                .map(|f| ebd_down(f, shift))
                .collect::<ebda_core::Result<Vec<_>>>()?;
            write_yuv(&output, &out)?;
            log::info!("{} frames reduced by {shift} bit(s)", out.len());
        }
        Command::UpsampleNaive {
            input,
            output,
            shift,
            format,
        } => {
            let section = file.format.overlay(&format.section());
            let shift = shift_for(&file, shift);
            let fmt = section.resolve(Some(&input), Some(reduced_ebd(&section, shift)?))?;
            let frames = read_yuv_all(&input, &fmt)?;
            let out = frames
                .iter()
                .map(|f| ebd_up_naive(f, shift))
                .collect::<ebda_core::Result<Vec<_>>>()?;
            write_yuv(&output, &out)?;
            log::info!("{} frames restored by {shift} bit(s)", out.len());
        }
        Command::Enhance {
            input,
            output,
            shift,
            model,
            qp,
            format,
        } => {
            let section = file.format.overlay(&format.section());
            let shift = shift_for(&file, shift);
            let fmt = section.resolve(Some(&input), Some(reduced_ebd(&section, shift)?))?;
            let model_path = match (model, qp) {
                (Some(path), _) => path,
                (None, Some(qp)) => {
                    let selector = file.models.clone().unwrap_or_default();
                    let id = selector.select(qp);
                    selector
                        .model_paths
                        .get(&id)
                        .cloned()
                        .ok_or_else(|| anyhow!("no weight file configured for model {id}"))?
                }
                (None, None) => bail!("pass --model or --qp"),
            };
            let model = load_weights(&model_path)
                .with_context(|| format!("loading {}", model_path.display()))?;
            let frames = read_yuv_all(&input, &fmt)?;
            let out = enhance_sequence(
                &model,
                &frames,
                &file.flow.unwrap_or_default(),
                &file.tiles.unwrap_or_default(),
            )?;
            write_yuv(&output, &out)?;
            log::info!("{} frames enhanced with {}", out.len(), model_path.display());
        }
        Command::Flow {
            input,
            from,
            to,
            output,
            format,
        } => {
            let fmt = file.format.overlay(&format.section()).resolve(Some(&input), None)?;
            let frames = read_yuv_all(&input, &fmt)?;
            let get = |i: usize| {
                frames
                    .get(i)
                    .ok_or_else(|| anyhow!("frame {i} out of range ({} frames)", frames.len()))
            };
            let flow = estimate_flow(&get(from)?.y, &get(to)?.y, &file.flow.unwrap_or_default())?;
            let n = (flow.width() * flow.height()) as f64;
            let mean_u = flow.u().iter().map(|&v| v as f64).sum::<f64>() / n;
            let mean_v = flow.v().iter().map(|&v| v as f64).sum::<f64>() / n;
            let mean_mag = flow
                .u()
                .iter()
                .zip(flow.v())
                .map(|(&u, &v)| ((u * u + v * v) as f64).sqrt())
                .sum::<f64>()
                / n;
            println!("mean_u {mean_u:.4} mean_v {mean_v:.4} mean_magnitude {mean_mag:.4}");
            if let Some(path) = output {
                flow.write_to(&path)?;
            }
        }
        Command::GenDataset {
            sequences,
            qp_group,
            samples,
            block_size,
            seed,
            no_rotate,
            output,
            format,
        } => {
            let section = file.format.overlay(&format.section());
            let mut loaded = Vec::new();
            let mut first_format = None;
            for spec in &sequences {
                let (name, path) = split_named(spec);
                let fmt = section.resolve(Some(&path), None)?;
                first_format.get_or_insert(fmt);
                loaded.push((name, read_yuv_all(&path, &fmt)?));
            }
            let mut cfg = pipeline_config(&file, first_format.expect("at least one sequence"));
            cfg.ebd_shift = shift_for(&file, None);
            let d = &file.dataset;
            let opts = GenDatasetOptions {
                qp_group,
                samples_per_sequence: samples.or(d.samples_per_sequence).unwrap_or(100),
                block_size: block_size.or(d.block_size).unwrap_or(ebda_core::dataset::BLOCK_SIZE),
                seed: seed.or(d.seed).unwrap_or(0),
                rotate: !no_rotate && d.rotate.unwrap_or(true),
            };
            let manifest = run_gen_dataset(&cfg, &loaded, &opts, &output)?;
            println!("wrote {} samples to {}", manifest.count, output.display());
        }
        Command::Pipeline {
            inputs,
            output_dir,
            workers,
            qps,
            shift,
            format,
        } => {
            let section = file.format.overlay(&format.section());
            let mut reports = Vec::new();
            let mut all_complete = true;
            let mut cfg_out = None;
            for input in &inputs {
                let fmt = section.resolve(Some(input), None)?;
                let mut cfg = pipeline_config(&file, fmt);
                if let Some(dir) = &output_dir {
                    cfg.output_dir = dir.clone();
                }
                if let Some(w) = workers {
                    cfg.workers = w;
                }
                if let Some(q) = &qps {
                    cfg.qps = q.clone();
                }
                cfg.ebd_shift = shift_for(&file, shift);
                let frames = read_yuv_all(input, &fmt)?;
                let name = input
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "sequence".into());
                let report = run_pipeline(&cfg, &frames, &name)?;
                all_complete &= report.is_complete();
                reports.push(report);
                cfg_out = Some(cfg.output_dir.clone());
            }
            let dir = cfg_out.expect("at least one input");
            write_reports(&reports, &dir)?;
            print!("{}", ebda_core::pipeline::summary_text(&reports));
            if !all_complete {
                eprintln!("some QP points failed; see {}", dir.join("summary.txt").display());
                return Ok(ExitCode::from(2));
            }
        }
        Command::Bdrate { anchor, test } => {
            let a = RdCurve::new(parse_points(&anchor)?)?;
            let t = RdCurve::new(parse_points(&test)?)?;
            println!("BD-rate {:.4} %", bd_rate(&a, &t)?);
            println!("BD-PSNR {:.4} dB", bd_psnr(&a, &t)?);
        }
        Command::Psnr {
            reference,
            distorted,
            format,
        } => {
            let fmt = file.format.overlay(&format.section()).resolve(Some(&reference), None)?;
            let a = read_yuv_all(&reference, &fmt)?;
            let b = read_yuv_all(&distorted, &fmt)?;
            if a.len() != b.len() {
                bail!("frame counts differ: {} vs {}", a.len(), b.len());
            }
            let mut sum = 0.0;
            for (i, (x, y)) in a.iter().zip(&b).enumerate() {
                let p = psnr_luma(x, y)?;
                println!("frame {i} {p:.4}");
                sum += p;
            }
            println!("mean {:.4}", sum / a.len() as f64);
        }
        Command::MockEncode {
            input,
            output,
            qp,
            format,
        } => {
            let fmt = file.format.overlay(&format.section()).resolve(Some(&input), None)?;
            let bytes = mock_encode_file(&input, &fmt, qp, &output)?;
            log::info!("wrote {bytes} bytes to {}", output.display());
        }
        Command::MockDecode { input, output } => {
            let fmt = mock_decode_file(&input, &output)?;
            log::info!(
                "decoded {} frames of {}x{} to {}",
                fmt.frame_count,
                fmt.width,
                fmt.height,
                output.display()
            );
        }
        Command::InitModel {
            output,
            tiny,
            random_seed,
            gain,
        } => {
            let config = if tiny {
                NetworkConfig::tiny()
            } else {
                file.network.unwrap_or_default()
            };
            let model = match random_seed {
                Some(seed) => Model::random(config, seed, gain)?,
                None => Model::zeros(config)?,
            };
            model.save(&output)?;
            log::info!(
                "wrote {} parameters to {}",
                model.config().parameter_count(),
                output.display()
            );
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn pipeline_config(file: &FileConfig, format: VideoFormat) -> PipelineConfig {
    let mut cfg = PipelineConfig::new(format);
    if let Some(c) = &file.codec {
        cfg.codec = c.clone();
    }
    if let Some(f) = &file.flow {
        cfg.flow = *f;
    }
    cfg.network = file.network;
    if let Some(t) = &file.tiles {
        cfg.tiles = *t;
    }
    if let Some(m) = &file.models {
        cfg.models = m.clone();
    }
    if let Some(q) = &file.qps {
        cfg.qps = q.clone();
    }
    if let Some(d) = &file.output_dir {
        cfg.output_dir = d.clone();
    }
    if let Some(w) = file.workers {
        cfg.workers = w;
    }
    cfg.ebd_shift = shift_for(file, None);
    cfg
}

fn split_named(spec: &str) -> (String, PathBuf) {
    match spec.split_once('=') {
        Some((name, path)) if !name.is_empty() => (name.to_string(), PathBuf::from(path)),
        _ => {
            let path = PathBuf::from(spec);
            let name = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| spec.to_string());
            (name, path)
        }
    }
}

/// `kbps:psnr` pairs separated by commas, or a CSV file whose first two
/// columns are bitrate and PSNR (a header row is skipped).
fn parse_points(arg: &str) -> Result<Vec<RdPoint>> {
    let text;
    let body: Vec<(&str, &str)> = if arg.contains(':') && !Path::new(arg).is_file() {
        arg.split(',')
            .map(|p| p.split_once(':').ok_or_else(|| anyhow!("bad point {p:?}")))
            .collect::<Result<_>>()?
    } else {
        text = std::fs::read_to_string(arg).with_context(|| format!("reading {arg}"))?;
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                let mut it = l.split(',');
                match (it.next(), it.next()) {
                    (Some(a), Some(b)) => Ok((a, b)),
                    _ => Err(anyhow!("bad CSV line {l:?}")),
                }
            })
            .collect::<Result<_>>()?
    };
    let mut points = Vec::new();
    for (i, (r, q)) in body.iter().enumerate() {
        match (r.trim().parse::<f64>(), q.trim().parse::<f64>()) {
            (Ok(r), Ok(q)) => points.push(RdPoint::new(r, q)),
            // Tolerate a header on the first CSV line.
            _ if i == 0 && !arg.contains(':') => continue,
            _ => bail!("cannot parse point {r}:{q}"),
        }
    }
    Ok(points)
}
