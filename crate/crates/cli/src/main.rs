//! `rivetkey` command-line front end.

mod render;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgAction, Parser, Subcommand};
use rivetkey::dataio::{read_manifest, split_by_config, write_manifest, Domain};
use rivetkey::measure::{measure_all, SampleMeasurement};
use rivetkey::metrics::{evaluate, DEFAULT_OKS_K};
use rivetkey::nn::load_checkpoint;
use rivetkey::train::{phase, predict, run_phase, Init, Predictions, TrainConfig};

#[derive(Debug, Parser)]
#[command(name = "rivetkey", version, about = "Keypoint localization for self-piercing rivet cross-sections")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic phantom dataset.
    Gen {
        #[arg(long, default_value = "clean")]
        domain: Domain,
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory; receives manifest.json and images/.
        #[arg(long)]
        out: PathBuf,
        /// Side length of the square images in pixels.
        #[arg(long, default_value_t = 256)]
        size: usize,
    },
    /// Split a manifest into train.json and test.json by configuration.
    Split {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = 0.8)]
        ratio: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train from fresh weights (pretraining on clean data, or a scratch baseline).
    Train {
        #[arg(long, visible_alias = "manifest")]
        train_manifest: PathBuf,
        /// Training config JSON; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Checkpoint path; the sidecar and epoch log are written next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Continue training from a checkpoint on a new dataset.
    Finetune {
        #[arg(long)]
        init: PathBuf,
        #[arg(long, visible_alias = "manifest")]
        train_manifest: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Predict keypoints for every sample of a manifest.
    Predict {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Sub-pixel refinement of the heatmap peaks.
        #[arg(long, default_value_t = true, action = ArgAction::Set)]
        subpixel: bool,
    },
    /// Score predictions against a manifest.
    Eval {
        #[arg(long)]
        preds: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Comma-separated PCK thresholds in pixels.
        #[arg(long, default_value = "10,50", value_delimiter = ',')]
        pck_thresholds: Vec<f64>,
        #[arg(long, default_value_t = DEFAULT_OKS_K)]
        oks_k: f64,
        /// Optional report file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Joint measurements in millimetres from ground truth or predictions.
    Measure {
        #[arg(long)]
        manifest: PathBuf,
        /// Measure these predictions instead of the ground truth.
        #[arg(long)]
        preds: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Overlay images and heatmap panels.
    Render {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        preds: Option<PathBuf>,
        /// Checkpoint for heatmap panels (and predictions when --preds is absent).
        #[arg(long)]
        ckpt: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Render at most this many samples.
        #[arg(long)]
        count: Option<usize>,
        #[arg(long, default_value_t = true, action = ArgAction::Set)]
        subpixel: bool,
    },
}

enum Failure {
    Usage(String),
    Core(rivetkey::Error),
}

impl From<rivetkey::Error> for Failure {
    fn from(e: rivetkey::Error) -> Self {
        Failure::Core(e)
    }
}

type Outcome = Result<String, Failure>;

fn init_logging() {
    let level = std::env::var("RIVETKEY_LOG").unwrap_or_else(|_| "info".into());
    let level = match level.as_str() {
        "error" | "info" | "debug" => level,
        other => {
            eprintln!("RIVETKEY_LOG={other:?} not recognized, using info");
            "info".into()
        }
    };
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(tracing_subscriber::EnvFilter::new(format!("warn,rivetkey={level},rivetkey_cli={level}")))
        .with_target(false)
        .init();
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    init_logging();
    match run(cli.command) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Core(e)) => {
            tracing::error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(if e.is_data_error() { 2 } else { 3 })
        }
    }
}

fn run(command: Command) -> Outcome {
    match command {
        Command::Gen { domain, count, seed, out, size } => gen(domain, count, seed, &out, size),
        Command::Split { manifest, ratio, seed, out } => split(&manifest, ratio, seed, &out),
        Command::Train { train_manifest, config, seed, out } => train(&train_manifest, config.as_deref(), seed, &out),
        Command::Finetune { init, train_manifest, config, seed, out } => {
            finetune(&init, &train_manifest, config.as_deref(), seed, &out)
        }
        Command::Predict { ckpt, manifest, out, subpixel } => predict_cmd(&ckpt, &manifest, &out, subpixel),
        Command::Eval { preds, manifest, pck_thresholds, oks_k, out } => {
            eval(&preds, &manifest, &pck_thresholds, oks_k, out.as_deref())
        }
        Command::Measure { manifest, preds, out } => measure(&manifest, preds.as_deref(), &out),
        Command::Render { manifest, preds, ckpt, out, count, subpixel } => {
            render::run(&manifest, preds.as_deref(), ckpt.as_deref(), &out, count, subpixel)
        }
    }
}

fn gen(domain: Domain, count: usize, seed: u64, out: &Path, size: usize) -> Outcome {
    if count == 0 {
        return Err(Failure::Usage("--count must be at least 1".into()));
    }
    let m = rivetkey::phantom::generate_dataset(count, domain, seed, out, size)?;
    Ok(format!("gen: {} {} samples -> {}", m.len(), domain.as_str(), out.join("manifest.json").display()))
}

fn split(manifest: &Path, ratio: f64, seed: u64, out: &Path) -> Outcome {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Failure::Usage(format!("--ratio must lie strictly between 0 and 1, got {ratio}")));
    }
    let m = read_manifest(manifest)?;
    let (train, test) = split_by_config(&m, ratio, seed)?;
    let dir = rivetkey::io::absolute(out)?;
    write_manifest(&train.rebased(&dir)?, &out.join("train.json"))?;
    write_manifest(&test.rebased(&dir)?, &out.join("test.json"))?;
    Ok(format!("split: {} train / {} test samples -> {}", train.len(), test.len(), out.display()))
}

fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<TrainConfig, Failure> {
    let mut config = match path {
        Some(p) => TrainConfig::load(p)?,
        None => TrainConfig::default(),
    };
    if let Some(s) = seed {
        config.seed = s;
    }
    Ok(config)
}

fn finish_training(trained: rivetkey::train::Trained, out: &Path, command: &str) -> Outcome {
    trained.save(out)?;
    let log = log_path(out);
    rivetkey::io::write_atomic(&log, trained.log_lines().as_bytes())?;
    let last = trained.log.last().map(|l| l.train_loss).unwrap_or(f64::NAN);
    Ok(format!(
        "{command}: phase={} epochs={} final_loss={last:.6} -> {}",
        trained.sidecar.phase,
        trained.sidecar.epoch,
        out.display()
    ))
}

fn log_path(ckpt: &Path) -> PathBuf {
    let mut s = ckpt.as_os_str().to_owned();
    s.push(".log.jsonl");
    PathBuf::from(s)
}

fn train(manifest: &Path, config: Option<&Path>, seed: Option<u64>, out: &Path) -> Outcome {
    let config = load_config(config, seed)?;
    let m = read_manifest(manifest)?;
    let phase_name = if m.samples.iter().all(|s| s.domain == Domain::Clean) { phase::PRETRAIN } else { phase::SCRATCH };
    let trained = run_phase(Init::Fresh, &m, &config, phase_name)?;
    finish_training(trained, out, "train")
}

fn finetune(init: &Path, manifest: &Path, config: Option<&Path>, seed: Option<u64>, out: &Path) -> Outcome {
    let (net, sidecar) = load_checkpoint(init)?;
    let explicit = config.is_some();
    let mut config = load_config(config, seed)?;
    if !explicit {
        // without a config file the architecture follows the checkpoint
        config.model = sidecar.model_config.clone();
    }
    let m = read_manifest(manifest)?;
    let trained = run_phase(Init::Pretrained(net), &m, &config, phase::FINETUNE)?;
    finish_training(trained, out, "finetune")
}

fn predict_cmd(ckpt: &Path, manifest: &Path, out: &Path, subpixel: bool) -> Outcome {
    let (net, _) = load_checkpoint(ckpt)?;
    let m = read_manifest(manifest)?;
    let preds = predict(&net, &m, subpixel, &ckpt.display().to_string())?;
    preds.write(out)?;
    Ok(format!("predict: {} samples -> {}", preds.predictions.len(), out.display()))
}

fn eval(preds: &Path, manifest: &Path, taus: &[f64], k: f64, out: Option<&Path>) -> Outcome {
    if taus.is_empty() || taus.iter().any(|t| !(*t > 0.0)) {
        return Err(Failure::Usage("--pck-thresholds must be positive numbers".into()));
    }
    if !(k > 0.0) {
        return Err(Failure::Usage("--oks-k must be positive".into()));
    }
    let p = Predictions::read(preds)?;
    let m = read_manifest(manifest)?;
    let report = evaluate(&p, &m, taus, k)?;
    if let Some(out) = out {
        rivetkey::io::write_json(out, &report)?;
    }
    Ok(serde_json::to_string(&report).expect("plain report"))
}

fn measure(manifest: &Path, preds: Option<&Path>, out: &Path) -> Outcome {
    let m = read_manifest(manifest)?;
    let (rows, skipped) = match preds {
        Some(p) => {
            let p = Predictions::read(p)?;
            let mut rows = Vec::with_capacity(p.predictions.len());
            let mut skipped = 0;
            for pred in &p.predictions {
                let s = m.get(&pred.id).ok_or_else(|| rivetkey::Error::UnknownId(pred.id.clone()))?;
                match measure_all(&pred.keypoints, s.pixel_pitch_mm) {
                    Ok(r) => rows.push(SampleMeasurement::new(&pred.id, &r)),
                    Err(e @ rivetkey::Error::InvertedPair { .. }) => {
                        tracing::warn!(id = %pred.id, "skipped: {e}");
                        skipped += 1;
                    }
                    Err(e) => return Err(e.into()),
                }
            }
            (rows, skipped)
        }
        None => {
            let rows = m
                .samples
                .iter()
                .map(|s| Ok(SampleMeasurement::new(&s.id, &measure_all(&s.keypoints, s.pixel_pitch_mm)?)))
                .collect::<rivetkey::Result<Vec<_>>>()?;
            (rows, 0)
        }
    };
    rivetkey::io::write_json(out, &rows)?;
    let source = if preds.is_some() { "predictions" } else { "ground truth" };
    Ok(format!("measure: {} samples from {source}, {skipped} skipped -> {}", rows.len(), out.display()))
}
