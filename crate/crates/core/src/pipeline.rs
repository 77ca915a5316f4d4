//! End-to-end orchestration: QP-banded model selection, the EBDA and anchor
//! encode paths, dataset generation and report emission.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec::{code_sequence, CodecConfig};
use crate::dataset::{
    augment_rotate, extract_triplets, write_dataset, DatasetManifest, TrainingSample, BLOCK_SIZE,
    QP_GROUPS,
};
use crate::ebd::{ebd_down, ebd_restore_naive};
use crate::error::{Error, Result};
use crate::flow::FlowParams;
use crate::metrics::{bd_psnr, bd_rate, psnr_luma_sequence, RdCurve, RdPoint};
use crate::nn::{enhance_sequence, load_weights, Model, NetworkConfig, TileConfig};
use crate::video::{Frame, VideoFormat};

/// One of the four QP-band models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ModelId {
    M1,
    M2,
    M3,
    M4,
}

impl ModelId {
    pub const ALL: [ModelId; 4] = [ModelId::M1, ModelId::M2, ModelId::M3, ModelId::M4];

    pub fn name(&self) -> &'static str {
        match self {
            ModelId::M1 => "M1",
            ModelId::M2 => "M2",
            ModelId::M3 => "M3",
            ModelId::M4 => "M4",
        }
    }
}

impl std::fmt::Display for ModelId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

pub const DEFAULT_THRESHOLDS: [f64; 3] = [24.5, 29.5, 34.5];

/// Picks the model trained for the band containing the base QP (before the
/// encoding offset is applied). Upper bounds are inclusive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSelector {
    pub thresholds: [f64; 3],
    pub model_paths: BTreeMap<ModelId, PathBuf>,
}

impl Default for ModelSelector {
    fn default() -> Self {
        ModelSelector {
            thresholds: DEFAULT_THRESHOLDS,
            model_paths: BTreeMap::new(),
        }
    }
}

impl ModelSelector {
    pub fn validate(&self) -> Result<()> {
        let t = self.thresholds;
        if !(t[0] < t[1] && t[1] < t[2]) || t.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config(format!(
                "model thresholds must be strictly increasing, got {t:?}"
            )));
        }
        Ok(())
    }

    pub fn select(&self, qp_base: f64) -> ModelId {
        let t = self.thresholds;
        if qp_base <= t[0] {
            ModelId::M1
        } else if qp_base <= t[1] {
            ModelId::M2
        } else if qp_base <= t[2] {
            ModelId::M3
        } else {
            ModelId::M4
        }
    }
}

/// Model band for a base QP with the default thresholds.
pub fn select_model(qp_base: f64) -> ModelId {
    ModelSelector::default().select(qp_base)
}

fn default_qps() -> Vec<i32> {
    vec![22, 27, 32, 37]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub format: VideoFormat,
    /// Bits removed before encoding.
    #[serde(default = "default_shift")]
    pub ebd_shift: u32,
    #[serde(default)]
    pub codec: CodecConfig,
    #[serde(default)]
    pub flow: FlowParams,
    /// When set, every loaded model must use this configuration.
    #[serde(default)]
    pub network: Option<NetworkConfig>,
    #[serde(default)]
    pub tiles: TileConfig,
    #[serde(default)]
    pub models: ModelSelector,
    #[serde(default = "default_qps")]
    pub qps: Vec<i32>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_workers")]
    pub workers: usize,
}

fn default_shift() -> u32 {
    1
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("ebda-out")
}

fn default_workers() -> usize {
    1
}

impl PipelineConfig {
    pub fn new(format: VideoFormat) -> Self {
        PipelineConfig {
            format,
            ebd_shift: default_shift(),
            codec: CodecConfig::default(),
            flow: FlowParams::default(),
            network: None,
            tiles: TileConfig::default(),
            models: ModelSelector::default(),
            qps: default_qps(),
            output_dir: default_output_dir(),
            workers: default_workers(),
        }
    }

    /// Everything that can be checked without touching the codec.
    pub fn validate(&self) -> Result<()> {
        self.format.validate()?;
        let depth = self.format.bit_depth;
        if depth.is_reduced() {
            return Err(Error::Config(
                "pipeline input must be at full effective bit depth".into(),
            ));
        }
        if self.ebd_shift == 0 || self.ebd_shift >= depth.cbd() {
            return Err(Error::Config(format!(
                "ebd_shift must lie in [1, {}), got {}",
                depth.cbd(),
                self.ebd_shift
            )));
        }
        self.codec.validate()?;
        self.flow.validate()?;
        self.tiles.validate()?;
        self.models.validate()?;
        if let Some(n) = &self.network {
            n.validate()?;
        }
        if self.qps.is_empty() {
            return Err(Error::Config("qp list is empty".into()));
        }
        for &qp in &self.qps {
            self.codec.effective_qp(qp)?;
            self.codec.without_offset().effective_qp(qp)?;
        }
        if self.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        Ok(())
    }

    fn required_models(&self) -> Vec<ModelId> {
        let mut ids: Vec<ModelId> = self
            .qps
            .iter()
            .map(|&qp| self.models.select(qp as f64))
            .collect();
        ids.sort();
        ids.dedup();
        ids
    }

    /// Loads every model a run needs. Fails before any encode when a band's
    /// weight file is missing or invalid.
    pub fn load_models(&self) -> Result<BTreeMap<ModelId, Model>> {
        let mut models = BTreeMap::new();
        for id in self.required_models() {
            let path = self.models.model_paths.get(&id).ok_or_else(|| {
                Error::Config(format!("no weight file configured for model {id}"))
            })?;
            let model = load_weights(path)
                .map_err(|e| Error::Config(format!("model {id} ({}): {e}", path.display())))?;
            if let Some(expected) = &self.network {
                if model.config() != expected {
                    return Err(Error::Config(format!(
                        "model {id} config {:?} differs from configured network {expected:?}",
                        model.config()
                    )));
                }
            }
            models.insert(id, model);
        }
        Ok(models)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RdSample {
    pub effective_qp: i32,
    pub total_bits: u64,
    pub bitrate_kbps: f64,
    pub psnr_y: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EbdaSample {
    pub rd: RdSample,
    /// Same bitstream, decoded with the naive up-shift only.
    pub naive_psnr_y: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpResult {
    pub qp_base: i32,
    pub model: ModelId,
    pub anchor: std::result::Result<RdSample, String>,
    pub ebda: std::result::Result<EbdaSample, String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BdSummary {
    pub bd_rate: f64,
    pub bd_psnr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub sequence: String,
    pub codec: String,
    pub points: Vec<QpResult>,
    /// EBDA against the anchor.
    pub bd: std::result::Result<BdSummary, String>,
    /// Naive up-shift against the anchor.
    pub bd_naive: std::result::Result<BdSummary, String>,
}

impl Report {
    /// True when every QP point produced both anchor and EBDA results.
    pub fn is_complete(&self) -> bool {
        self.points
            .iter()
            .all(|p| p.anchor.is_ok() && p.ebda.is_ok())
    }

    pub fn anchor_curve(&self) -> Vec<RdPoint> {
        self.points
            .iter()
            .filter_map(|p| p.anchor.as_ref().ok())
            .map(|s| RdPoint::new(s.bitrate_kbps, s.psnr_y))
            .collect()
    }

    pub fn ebda_curve(&self) -> Vec<RdPoint> {
        self.points
            .iter()
            .filter_map(|p| p.ebda.as_ref().ok())
            .map(|s| RdPoint::new(s.rd.bitrate_kbps, s.rd.psnr_y))
            .collect()
    }

    pub fn naive_curve(&self) -> Vec<RdPoint> {
        self.points
            .iter()
            .filter_map(|p| p.ebda.as_ref().ok())
            .map(|s| RdPoint::new(s.rd.bitrate_kbps, s.naive_psnr_y))
            .collect()
    }

    /// Codec label used for EBDA rows.
    pub fn ebda_label(&self) -> String {
        format!("{}+EBDA", self.codec)
    }
}

fn bd_between(anchor: Vec<RdPoint>, test: Vec<RdPoint>, points: usize) -> std::result::Result<BdSummary, String> {
    if anchor.len() < points || test.len() < points {
        return Err("incomplete RD curves".into());
    }
    let run = || -> Result<BdSummary> {
        let a = RdCurve::new(anchor)?;
        let t = RdCurve::new(test)?;
        Ok(BdSummary {
            bd_rate: bd_rate(&a, &t)?,
            bd_psnr: bd_psnr(&a, &t)?,
        })
    };
    run().map_err(|e| e.to_string())
}

fn workdir_name(sequence: &str) -> String {
    sequence
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// Runs the anchor and EBDA paths for every base QP of `config` on one
/// sequence, computes BD metrics and returns the report. Per-QP failures are
/// recorded in the report rather than aborting the run.
pub fn run_pipeline(config: &PipelineConfig, frames: &[Frame], sequence: &str) -> Result<Report> {
    config.validate()?;
    let models = config.load_models()?;
    if frames.len() != config.format.frame_count {
        return Err(Error::Shape(format!(
            "expected {} frames, got {}",
            config.format.frame_count,
            frames.len()
        )));
    }
    let expected = &config.format;
    for (i, f) in frames.iter().enumerate() {
        if f.width() != expected.width
            || f.height() != expected.height
            || f.chroma() != expected.chroma
            || f.bit_depth() != expected.bit_depth
        {
            return Err(Error::Shape(format!(
                "frame {i} does not match the configured format"
            )));
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?;
    let work_root = config.output_dir.join("work").join(workdir_name(sequence));
    let fps = config.format.frame_rate;

    let points: Vec<QpResult> = pool.install(|| {
        config
            .qps
            .par_iter()
            .map(|&qp| {
                let model_id = config.models.select(qp as f64);
                let anchor = (|| -> Result<RdSample> {
                    let codec = config
                        .codec
                        .without_offset()
                        .with_workdir(work_root.join(format!("anchor_qp{qp}")));
                    let coded = code_sequence(&codec, frames, qp, fps)?;
                    Ok(RdSample {
                        effective_qp: coded.result.effective_qp,
                        total_bits: coded.result.total_bits,
                        bitrate_kbps: coded.result.bitrate_kbps,
                        psnr_y: psnr_luma_sequence(frames, &coded.recon)?,
                    })
                })();
                let ebda = (|| -> Result<EbdaSample> {
                    let reduced = frames
                        .iter()
                        .map(|f| ebd_down(f, config.ebd_shift))
                        .collect::<Result<Vec<_>>>()?;
                    let codec = config
                        .codec
                        .with_workdir(work_root.join(format!("ebda_qp{qp}")));
                    let coded = code_sequence(&codec, &reduced, qp, fps)?;
                    let naive = coded
                        .recon
                        .iter()
                        .map(ebd_restore_naive)
                        .collect::<Result<Vec<_>>>()?;
                    let model = &models[&model_id];
                    let enhanced =
                        enhance_sequence(model, &coded.recon, &config.flow, &config.tiles)?;
                    Ok(EbdaSample {
                        rd: RdSample {
                            effective_qp: coded.result.effective_qp,
                            total_bits: coded.result.total_bits,
                            bitrate_kbps: coded.result.bitrate_kbps,
                            psnr_y: psnr_luma_sequence(frames, &enhanced)?,
                        },
                        naive_psnr_y: psnr_luma_sequence(frames, &naive)?,
                    })
                })();
                if let Err(e) = &anchor {
                    log::error!("{sequence} qp {qp}: anchor failed: {e}");
                }
                if let Err(e) = &ebda {
                    log::error!("{sequence} qp {qp}: EBDA failed: {e}");
                }
                QpResult {
                    qp_base: qp,
                    model: model_id,
                    anchor: anchor.map_err(|e| e.to_string()),
                    ebda: ebda.map_err(|e| e.to_string()),
                }
            })
            .collect()
    });

    let mut points = points;
    points.sort_by_key(|p| p.qp_base);
    let mut report = Report {
        sequence: sequence.to_string(),
        codec: config.codec.name.clone(),
        points,
        bd: Err(String::new()),
        bd_naive: Err(String::new()),
    };
    let n = report.points.len();
    report.bd = bd_between(report.anchor_curve(), report.ebda_curve(), n);
    report.bd_naive = bd_between(report.anchor_curve(), report.naive_curve(), n);
    Ok(report)
}

fn fmt_f(v: f64) -> String {
    format!("{v:.4}")
}

/// RD rows: `sequence,codec,qp_base,effective_qp,bitrate_kbps,psnr_y`, two per
/// QP point (anchor then EBDA). Failed points leave the measurement fields
/// empty.
pub fn rd_csv(reports: &[Report]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Format(format!("csv: {e}"));
    w.write_record([
        "sequence",
        "codec",
        "qp_base",
        "effective_qp",
        "bitrate_kbps",
        "psnr_y",
    ])
    .map_err(csv_err)?;
    for r in reports {
        let ebda_label = r.ebda_label();
        for p in &r.points {
            let qp = p.qp_base.to_string();
            let row = |codec: &str, s: Option<&RdSample>| -> Vec<String> {
                match s {
                    Some(s) => vec![
                        r.sequence.clone(),
                        codec.to_string(),
                        qp.clone(),
                        s.effective_qp.to_string(),
                        fmt_f(s.bitrate_kbps),
                        fmt_f(s.psnr_y),
                    ],
                    None => vec![
                        r.sequence.clone(),
                        codec.to_string(),
                        qp.clone(),
                        String::new(),
                        String::new(),
                        String::new(),
                    ],
                }
            };
            w.write_record(row(&r.codec, p.anchor.as_ref().ok()))
                .map_err(csv_err)?;
            w.write_record(row(&ebda_label, p.ebda.as_ref().ok().map(|e| &e.rd)))
                .map_err(csv_err)?;
        }
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Format(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

/// BD summary rows: `sequence,anchor,test,bd_rate_percent,bd_psnr_db`.
pub fn bd_csv(reports: &[Report]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Format(format!("csv: {e}"));
    w.write_record(["sequence", "anchor", "test", "bd_rate_percent", "bd_psnr_db"])
        .map_err(csv_err)?;
    for r in reports {
        for (label, bd) in [
            (r.ebda_label(), &r.bd),
            (format!("{}+naive", r.codec), &r.bd_naive),
        ] {
            let (rate, psnr) = match bd {
                Ok(s) => (fmt_f(s.bd_rate), fmt_f(s.bd_psnr)),
                Err(_) => (String::new(), String::new()),
            };
            w.write_record([r.sequence.as_str(), r.codec.as_str(), &label, &rate, &psnr])
                .map_err(csv_err)?;
        }
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Format(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub fn summary_text(reports: &[Report]) -> String {
    let mut s = String::new();
    for r in reports {
        let _ = writeln!(s, "sequence {} (codec {})", r.sequence, r.codec);
        let _ = writeln!(
            s,
            "  {:>4} {:>5} {:>12} {:>9} {:>5} {:>12} {:>9} {:>9}",
            "qp", "model", "anchor kbps", "anchor dB", "eqp", "ebda kbps", "ebda dB", "naive dB"
        );
        for p in &r.points {
            let (ak, ad) = match &p.anchor {
                Ok(a) => (fmt_f(a.bitrate_kbps), fmt_f(a.psnr_y)),
                Err(_) => ("FAILED".into(), "-".into()),
            };
            let (eqp, ek, ed, nd) = match &p.ebda {
                Ok(e) => (
                    e.rd.effective_qp.to_string(),
                    fmt_f(e.rd.bitrate_kbps),
                    fmt_f(e.rd.psnr_y),
                    fmt_f(e.naive_psnr_y),
                ),
                Err(_) => ("-".into(), "FAILED".into(), "-".into(), "-".into()),
            };
            let _ = writeln!(
                s,
                "  {:>4} {:>5} {:>12} {:>9} {:>5} {:>12} {:>9} {:>9}",
                p.qp_base, p.model, ak, ad, eqp, ek, ed, nd
            );
            for (what, e) in [("anchor", p.anchor.as_ref().err()), ("ebda", p.ebda.as_ref().err())] {
                if let Some(e) = e {
                    let _ = writeln!(s, "    {what} error: {e}");
                }
            }
        }
        for (what, bd) in [("EBDA", &r.bd), ("naive", &r.bd_naive)] {
            match bd {
                Ok(b) => {
                    let _ = writeln!(
                        s,
                        "  {what} vs anchor: BD-rate {:+.2}%  BD-PSNR {:+.3} dB",
                        b.bd_rate, b.bd_psnr
                    );
                }
                Err(e) => {
                    let _ = writeln!(s, "  {what} vs anchor: BD unavailable ({e})");
                }
            }
        }
        if !r.is_complete() {
            let _ = writeln!(s, "  INCOMPLETE: some QP points failed");
        }
    }
    s
}

/// Minimal SVG plot of PSNR against log bitrate for the three curves.
pub fn rd_svg(report: &Report) -> String {
    let curves = [
        ("anchor", "#1f77b4", report.anchor_curve()),
        ("EBDA", "#d62728", report.ebda_curve()),
        ("naive", "#7f7f7f", report.naive_curve()),
    ];
    let all: Vec<&RdPoint> = curves.iter().flat_map(|c| c.2.iter()).collect();
    let (w, h, m) = (640.0, 420.0, 50.0);
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">{}</text>\n",
        w / 2.0,
        xml_escape(&report.sequence)
    );
    if all.is_empty() {
        svg.push_str("</svg>\n");
        return svg;
    }
    let lx = |p: &RdPoint| p.bitrate.log10();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for p in &all {
        x0 = x0.min(lx(p));
        x1 = x1.max(lx(p));
        y0 = y0.min(p.quality);
        y1 = y1.max(p.quality);
    }
    if x1 - x0 < 1e-9 {
        x1 = x0 + 1.0;
    }
    if y1 - y0 < 1e-9 {
        y1 = y0 + 1.0;
    }
    let px = |v: f64| m + (v - x0) / (x1 - x0) * (w - 2.0 * m);
    let py = |v: f64| h - m - (v - y0) / (y1 - y0) * (h - 2.0 * m);
    let _ = writeln!(
        svg,
        "<path d=\"M{m} {m} V{} H{}\" stroke=\"black\" fill=\"none\"/>",
        h - m,
        w - m
    );
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">bitrate (kbps, log) {:.1} .. {:.1}</text>",
        w / 2.0,
        h - 15.0,
        10f64.powf(x0),
        10f64.powf(x1)
    );
    let _ = writeln!(
        svg,
        "<text x=\"15\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" transform=\"rotate(-90 15 {})\">PSNR-Y (dB) {:.2} .. {:.2}</text>",
        h / 2.0,
        h / 2.0,
        y0,
        y1
    );
    for (i, (name, color, pts)) in curves.iter().enumerate() {
        if pts.is_empty() {
            continue;
        }
        let mut sorted = pts.clone();
        sorted.sort_by(|a, b| a.bitrate.total_cmp(&b.bitrate));
        let path: Vec<String> = sorted
            .iter()
            .map(|p| format!("{:.2},{:.2}", px(lx(p)), py(p.quality)))
            .collect();
        let _ = writeln!(
            svg,
            "<polyline points=\"{}\" stroke=\"{color}\" fill=\"none\" stroke-width=\"2\"/>",
            path.join(" ")
        );
        for p in &sorted {
            let _ = writeln!(
                svg,
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{color}\"/>",
                px(lx(p)),
                py(p.quality)
            );
        }
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" fill=\"{color}\" font-family=\"sans-serif\" font-size=\"12\">{name}</text>",
            w - m - 60.0,
            m + 16.0 * (i as f64 + 1.0)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Writes `rd.csv`, `bd.csv`, `summary.txt` and one `rd_<sequence>.svg` per
/// report into `dir`.
pub fn write_reports(reports: &[Report], dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, body: &str| -> Result<()> {
        let path = dir.join(name);
        fs::write(&path, body).map_err(|e| Error::io(&path, e))
    };
    write("rd.csv", &rd_csv(reports)?)?;
    write("bd.csv", &bd_csv(reports)?)?;
    write("summary.txt", &summary_text(reports))?;
    for r in reports {
        write(&format!("rd_{}.svg", workdir_name(&r.sequence)), &rd_svg(r))?;
    }
    Ok(())
}

/// Options for one dataset generation run.
#[derive(Debug, Clone, PartialEq)]
pub struct GenDatasetOptions {
    pub qp_group: u32,
    pub samples_per_sequence: usize,
    pub block_size: usize,
    pub seed: u64,
    /// Emit all four rotations of every sampled triplet.
    pub rotate: bool,
}

impl Default for GenDatasetOptions {
    fn default() -> Self {
        GenDatasetOptions {
            qp_group: 22,
            samples_per_sequence: 100,
            block_size: BLOCK_SIZE,
            seed: 0,
            rotate: true,
        }
    }
}

fn sequence_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Reduces, codes and samples every sequence at one QP group and returns the
/// samples in sequence order together with the manifest.
pub fn gen_dataset(
    config: &PipelineConfig,
    sequences: &[(String, Vec<Frame>)],
    opts: &GenDatasetOptions,
) -> Result<(DatasetManifest, Vec<TrainingSample>)> {
    if !QP_GROUPS.contains(&opts.qp_group) {
        return Err(Error::Parameter(format!(
            "qp group {} is not one of {QP_GROUPS:?}",
            opts.qp_group
        )));
    }
    config.codec.validate()?;
    let fps = config.format.frame_rate;
    let mut samples = Vec::new();
    for (index, (name, frames)) in sequences.iter().enumerate() {
        let reduced = frames
            .iter()
            .map(|f| ebd_down(f, config.ebd_shift))
            .collect::<Result<Vec<_>>>()?;
        let codec = config.codec.with_workdir(
            config
                .output_dir
                .join("work")
                .join(format!("gen_{}_qp{}", workdir_name(name), opts.qp_group)),
        );
        let coded = code_sequence(&codec, &reduced, opts.qp_group as i32, fps)?;
        let base = extract_triplets(
            frames,
            &coded.recon,
            index as u32,
            opts.samples_per_sequence,
            opts.block_size,
            sequence_seed(opts.seed, index),
        )?;
        for s in &base {
            if opts.rotate {
                samples.extend((0..4).map(|k| augment_rotate(s, k)));
            } else {
                samples.push(s.clone());
            }
        }
    }
    let manifest = DatasetManifest {
        qp_group: opts.qp_group,
        seed: opts.seed,
        count: samples.len() as u64,
        sources: sequences.iter().map(|(n, _)| n.clone()).collect(),
    };
    Ok((manifest, samples))
}

/// [`gen_dataset`] followed by writing the EBDS file.
pub fn run_gen_dataset(
    config: &PipelineConfig,
    sequences: &[(String, Vec<Frame>)],
    opts: &GenDatasetOptions,
    path: impl AsRef<Path>,
) -> Result<DatasetManifest> {
    let (manifest, samples) = gen_dataset(config, sequences, opts)?;
    write_dataset(&samples, &manifest, path)?;
    Ok(manifest)
}
