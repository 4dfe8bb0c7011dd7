//! Command-line front end. Every command writes one `manifest.json` into its
//! output directory.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand, ValueEnum};
use log::{error, info};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::checkpoint::hash_json;
use crate::data::synth::{write_synthetic_dataset, DepthFormat, SynthConfig};
use crate::data::{load_cornell, preprocess, read_frame, split_imagewise, GraspSample, MultiModalImage};
use crate::error::{Error, Result};
use crate::geometry::GraspRect;
use crate::pipeline::GraspModel;
use crate::render::{base_image, detection_meta, trace_metas, write_panel, OverlayStyle};
use crate::train::{
    evaluate, format_table, parse_phases, prepare_data, run_training, Baseline, Detector, EvalReport,
    GraspPredictor, TrainConfig, TrainLog,
};

pub const MANIFEST_FORMAT_VERSION: u32 = 1;
pub const GRASP_FORMAT_VERSION: u32 = 1;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const ABORTED_SUFFIX: &str = ".aborted";

#[derive(Debug, Parser)]
#[command(name = "stn-grasp", version, about = "Grasp detection with multi-stage spatial transformers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EvalMethod {
    Detect,
    Baseline,
    Both,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load a Cornell-format dataset and report counts.
    ValidateData {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Pretrain every block, then fine-tune back to front.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated fine-tuning phases; overrides the config, "" disables fine-tuning.
        #[arg(long)]
        phases: Option<String>,
    },
    /// Evaluate on the test side of a seeded image-wise split.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Split seed.
        #[arg(long)]
        split: u64,
        #[arg(long, default_value_t = 0.8)]
        ratio: f64,
        #[arg(long, value_enum, default_value_t = EvalMethod::Detect)]
        method: EvalMethod,
        /// Training config whose model section the checkpoint must match.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Detect the best grasp in one RGB-D frame.
    Detect {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        depth: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Detect and render every stage of every candidate.
    Trace {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        depth: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a checkpoint of a freshly initialized model.
    Init {
        /// Training config supplying the model section and seed; defaults if omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the default training config as TOML.
    DefaultConfig,
    /// Write a synthetic Cornell-format dataset.
    SynthData {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 8)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Store depth as ASCII point clouds instead of 16-bit PNGs.
        #[arg(long)]
        point_cloud: bool,
    },
}

/// Record of one command invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format_version: u32,
    pub command: String,
    pub config_hash: Option<String>,
    pub dataset_hash: Option<String>,
    pub seed: Option<u64>,
    pub artifact_version: String,
    pub outputs: Vec<String>,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
}

impl RunManifest {
    fn start(command: &str) -> Self {
        RunManifest {
            format_version: MANIFEST_FORMAT_VERSION,
            command: command.into(),
            config_hash: None,
            dataset_hash: None,
            seed: None,
            artifact_version: env!("CARGO_PKG_VERSION").into(),
            outputs: Vec::new(),
            started_unix_ms: now_ms(),
            finished_unix_ms: 0,
        }
    }

    fn output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    fn finish(mut self, dir: &Path) -> Result<Self> {
        self.finished_unix_ms = now_ms();
        let path = dir.join(MANIFEST_FILE);
        fs::write(&path, serde_json::to_string_pretty(&self)?).map_err(|e| Error::io(&path, e))?;
        Ok(self)
    }
}

fn now_ms() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis())
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// SHA-256 over sample ids, rectangles and image bytes, in load order.
pub fn dataset_hash(samples: &[GraspSample]) -> Result<String> {
    let mut h = Sha256::new();
    for s in samples {
        h.update(s.id.as_bytes());
        h.update(serde_json::to_vec(&(&s.positives, &s.negatives))?);
        for v in &s.image.channels {
            h.update(v.to_le_bytes());
        }
    }
    Ok(hex::encode(h.finalize()))
}

fn file_hash(paths: &[&Path]) -> Result<String> {
    let mut h = Sha256::new();
    for p in paths {
        h.update(fs::read(p).map_err(|e| Error::io(*p, e))?);
    }
    Ok(hex::encode(h.finalize()))
}

fn load_dataset(dir: &Path) -> Result<Vec<GraspSample>> {
    let (samples, _) = load_cornell(dir)?;
    if samples.is_empty() {
        return Err(Error::Input(format!("no valid samples under {}", dir.display())));
    }
    Ok(samples)
}

pub fn cmd_validate_data(data: &Path, out: &Path) -> Result<RunManifest> {
    let mut m = RunManifest::start("validate-data");
    let (samples, report) = load_cornell(data)?;
    println!(
        "images: {}\npositives: {}\nnegatives: {}\nskipped samples: {}\nskipped rectangles: {}",
        report.images, report.positives, report.negatives, report.skipped_samples, report.skipped_rectangles
    );
    if samples.is_empty() {
        return Err(Error::Input(format!("no valid samples under {}", data.display())));
    }
    ensure_dir(out)?;
    let path = out.join("data_report.json");
    write_text(&path, &serde_json::to_string_pretty(&report)?)?;
    m.dataset_hash = Some(dataset_hash(&samples)?);
    m.output(&path);
    m.finish(out)
}

pub fn cmd_train(data: &Path, config: &Path, out: &Path, phases: Option<&str>) -> Result<RunManifest> {
    let mut m = RunManifest::start("train");
    let cfg = TrainConfig::load(config)?;
    let phases = match phases {
        Some(list) => parse_phases(list)?,
        None => cfg.finetune_phases()?,
    };
    let samples = load_dataset(data)?;
    let train = if cfg.train_ratio < 1.0 {
        let split = split_imagewise(&samples, cfg.train_ratio, cfg.split_seed)?;
        samples.into_iter().filter(|s| split.train.contains(&s.id)).collect()
    } else {
        samples
    };
    m.config_hash = Some(hash_json(&cfg)?);
    m.dataset_hash = Some(dataset_hash(&train)?);
    m.seed = Some(cfg.seed);
    ensure_dir(out)?;
    let train_data = prepare_data(train, &cfg);
    let mut model = GraspModel::new(cfg.model.clone(), cfg.seed)?;
    let log_path = out.join("train_log.jsonl");
    let mut log = TrainLog::to_file(&log_path)?;
    let ckpt = out.join(CHECKPOINT_FILE);
    m.output(&log_path);
    m.output(&ckpt);
    let summary = match run_training(&mut model, &train_data, &cfg, &phases, &mut log) {
        Ok(s) => s,
        Err(e) => {
            log.flush()?;
            if matches!(e, Error::Numeric { .. }) {
                error!("training aborted: {e}");
                model.save(&ckpt)?;
                let marker = PathBuf::from(format!("{}{ABORTED_SUFFIX}", ckpt.display()));
                write_text(&marker, &format!("{e}\n"))?;
                m.output(&marker);
                m.finish(out)?;
            }
            return Err(e);
        }
    };
    model.save(&ckpt)?;
    let summary_path = out.join("train_summary.json");
    write_text(&summary_path, &serde_json::to_string_pretty(&summary)?)?;
    m.output(&summary_path);
    info!("checkpoint written to {}", ckpt.display());
    m.finish(out)
}

fn load_model(checkpoint: &Path, config: Option<&Path>) -> Result<GraspModel> {
    let expected = config.map(TrainConfig::load).transpose()?.map(|c| c.model);
    GraspModel::load(checkpoint, expected.as_ref())
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_eval(
    data: &Path,
    checkpoint: &Path,
    split_seed: u64,
    ratio: f64,
    method: EvalMethod,
    config: Option<&Path>,
    out: &Path,
) -> Result<(RunManifest, Vec<EvalReport>)> {
    let mut m = RunManifest::start("eval");
    let model = load_model(checkpoint, config)?;
    let samples = load_dataset(data)?;
    let split = split_imagewise(&samples, ratio, split_seed).map_err(|e| Error::Input(e.to_string()))?;
    let test: Vec<GraspSample> = samples.into_iter().filter(|s| split.test.contains(&s.id)).collect();
    m.config_hash = Some(model.config_hash()?);
    m.dataset_hash = Some(dataset_hash(&test)?);
    m.seed = Some(split_seed);
    let detector = Detector(&model);
    let baseline = Baseline(&model);
    let predictors: Vec<&dyn GraspPredictor> = match method {
        EvalMethod::Detect => vec![&detector],
        EvalMethod::Baseline => vec![&baseline],
        EvalMethod::Both => vec![&baseline, &detector],
    };
    if method != EvalMethod::Detect && !model.has_baseline() {
        return Err(Error::Mismatch("checkpoint has no baseline head".into()));
    }
    let reports = predictors
        .into_iter()
        .map(|p| evaluate(p, &test))
        .collect::<Result<Vec<_>>>()?;
    ensure_dir(out)?;
    let table = format_table(&reports);
    print!("{table}");
    let json_path = out.join("eval_report.json");
    let table_path = out.join("eval_table.txt");
    write_text(&json_path, &serde_json::to_string_pretty(&reports)?)?;
    write_text(&table_path, &table)?;
    m.output(&json_path);
    m.output(&table_path);
    Ok((m.finish(out)?, reports))
}

/// Loads and preprocesses one RGB-D frame.
pub fn load_frame(image: &Path, depth: &Path) -> Result<MultiModalImage> {
    let frame = read_frame(image, depth)?;
    let stem = image
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("image")
        .to_string();
    Ok(preprocess(&stem, &frame, &[], &[])?.image)
}

/// Output of `detect`: the winning rectangle and its score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraspOutput {
    pub format_version: u32,
    pub x: f64,
    pub y: f64,
    pub theta_deg: f64,
    pub w: f64,
    pub h: f64,
    pub score: f64,
}

impl GraspOutput {
    pub fn rect(&self) -> Result<GraspRect> {
        GraspRect::new(self.x, self.y, self.theta_deg, self.w, self.h)
    }
}

pub fn cmd_detect(image: &Path, depth: &Path, checkpoint: &Path, out: &Path) -> Result<(RunManifest, GraspOutput)> {
    let mut m = RunManifest::start("detect");
    let model = load_model(checkpoint, None)?;
    let img = load_frame(image, depth)?;
    m.config_hash = Some(model.config_hash()?);
    m.dataset_hash = Some(file_hash(&[image, depth])?);
    let (rect, trace) = model.detect(&img)?;
    let g = GraspOutput {
        format_version: GRASP_FORMAT_VERSION,
        x: rect.x,
        y: rect.y,
        theta_deg: rect.theta,
        w: rect.w,
        h: rect.h,
        score: trace.winner_record().score,
    };
    ensure_dir(out)?;
    let json_path = out.join("grasp.json");
    write_text(&json_path, &serde_json::to_string_pretty(&g)?)?;
    let (png, sidecar) = write_panel(out, &base_image(&img), &detection_meta(&rect, &OverlayStyle::default()))?;
    println!("{}", serde_json::to_string(&g)?);
    for p in [&json_path, &png, &sidecar] {
        m.output(p);
    }
    Ok((m.finish(out)?, g))
}

pub fn cmd_trace(image: &Path, depth: &Path, checkpoint: &Path, out: &Path) -> Result<RunManifest> {
    let mut m = RunManifest::start("trace");
    let model = load_model(checkpoint, None)?;
    let img = load_frame(image, depth)?;
    m.config_hash = Some(model.config_hash()?);
    m.dataset_hash = Some(file_hash(&[image, depth])?);
    let (_, trace) = model.detect(&img)?;
    ensure_dir(out)?;
    let trace_path = out.join("trace.json");
    write_text(&trace_path, &trace.to_json()?)?;
    m.output(&trace_path);
    let base = base_image(&img);
    for meta in trace_metas(&trace, &OverlayStyle::default()) {
        let (png, sidecar) = write_panel(out, &base, &meta)?;
        m.output(&png);
        m.output(&sidecar);
    }
    m.finish(out)
}

pub fn cmd_init(config: Option<&Path>, out: &Path) -> Result<RunManifest> {
    let mut m = RunManifest::start("init");
    let cfg = config.map(TrainConfig::load).transpose()?.unwrap_or_default();
    let model = GraspModel::new(cfg.model.clone(), cfg.seed)?;
    ensure_dir(out)?;
    let ckpt = out.join(CHECKPOINT_FILE);
    model.save(&ckpt)?;
    m.config_hash = Some(model.config_hash()?);
    m.seed = Some(cfg.seed);
    m.output(&ckpt);
    m.finish(out)
}

pub fn cmd_synth_data(out: &Path, count: usize, seed: u64, point_cloud: bool) -> Result<RunManifest> {
    let mut m = RunManifest::start("synth-data");
    let cfg = SynthConfig {
        count,
        seed,
        depth_format: if point_cloud { DepthFormat::PointCloud } else { DepthFormat::Png16 },
        ..SynthConfig::default()
    };
    let items = write_synthetic_dataset(out, &cfg)?;
    println!("wrote {} items to {}", items.len(), out.display());
    m.seed = Some(seed);
    m.output(out);
    m.finish(out)
}

/// Runs a parsed command line.
pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::ValidateData { data, out } => cmd_validate_data(&data, &out).map(drop),
        Command::Train {
            data,
            config,
            out,
            phases,
        } => cmd_train(&data, &config, &out, phases.as_deref()).map(drop),
        Command::Eval {
            data,
            checkpoint,
            split,
            ratio,
            method,
            config,
            out,
        } => cmd_eval(&data, &checkpoint, split, ratio, method, config.as_deref(), &out).map(drop),
        Command::Detect {
            image,
            depth,
            checkpoint,
            out,
        } => cmd_detect(&image, &depth, &checkpoint, &out).map(drop),
        Command::Trace {
            image,
            depth,
            checkpoint,
            out,
        } => cmd_trace(&image, &depth, &checkpoint, &out).map(drop),
        Command::Init { config, out } => cmd_init(config.as_deref(), &out).map(drop),
        Command::DefaultConfig => {
            print!("{}", TrainConfig::default().to_toml()?);
            Ok(())
        }
        Command::SynthData {
            out,
            count,
            seed,
            point_cloud,
        } => cmd_synth_data(&out, count, seed, point_cloud).map(drop),
    }
}
