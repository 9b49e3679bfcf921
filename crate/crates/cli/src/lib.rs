//! Command-line front end: scene synthesis, training, enhancement,
//! evaluation and gradient verification.

pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;
pub mod wav;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use mcwf_core::baselines::Method;
use mcwf_core::gradcheck::run_suite;
use mcwf_core::model::{Checkpoint, LayerKind};
use mcwf_core::objectives::ObjectiveKind;

use crate::commands::enhance::{enhance_scenes, enhance_to, EnhanceOptions, MaskSource};
use crate::commands::eval::{evaluate, items_from_lists, items_from_scenes};
use crate::config::RunConfig;
use crate::dataset::write_json;
use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "mcwf", version, about = "Mask-driven multi-channel Wiener filtering")]
pub struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed (overrides the config file and MCWF_SEED).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize seeded two-microphone scenes.
    Simulate(SimulateArgs),
    /// Train the mask/PSD network.
    Train(TrainArgs),
    /// Enhance K-channel WAV files.
    Enhance(EnhanceArgs),
    /// Score enhanced files against clean references.
    Eval(EvalArgs),
    /// Finite-difference check of every objective's gradient.
    Gradcheck(GradcheckArgs),
    /// Project a WAV's STFT or a JSON spectrogram onto the consistent set.
    Project(ProjectArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 8)]
    pub count: usize,
    /// Fixed SNR in dB (sets both bounds).
    #[arg(long, allow_negative_numbers = true)]
    pub snr: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub snr_min: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub snr_max: Option<f64>,
    /// Seconds per scene.
    #[arg(long)]
    pub duration: Option<f64>,
    /// Adds a synthetic reverberation tail.
    #[arg(long)]
    pub rt60_ms: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub train_dir: Option<PathBuf>,
    #[arg(long)]
    pub val_dir: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Total epochs (including those already in a resumed checkpoint).
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub objective: Option<ObjectiveKind>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    #[arg(long, value_parser = parse_layer)]
    pub layer: Option<LayerKind>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub segment_frames: Option<usize>,
    /// Continue from a `checkpoint_last.json`.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

fn parse_layer(s: &str) -> Result<LayerKind, String> {
    match s {
        "dense" => Ok(LayerKind::Dense),
        "gru" => Ok(LayerKind::Gru),
        _ => Err(format!("unknown layer kind '{s}' (dense, gru)")),
    }
}

#[derive(Debug, Args)]
pub struct EnhanceArgs {
    /// K-channel input WAV.
    #[arg(long, conflicts_with = "scenes", required_unless_present = "scenes")]
    pub input: Option<PathBuf>,
    /// Output WAV for `--input`.
    #[arg(long, requires = "input")]
    pub out: Option<PathBuf>,
    /// A `simulate` directory; every mixture is enhanced.
    #[arg(long)]
    pub scenes: Option<PathBuf>,
    /// Output directory for `--scenes`.
    #[arg(long, requires = "scenes")]
    pub out_dir: Option<PathBuf>,
    #[arg(long, default_value = "mwf")]
    pub method: Method,
    #[arg(long, conflicts_with = "oracle")]
    pub checkpoint: Option<PathBuf>,
    /// Ideal masks and PSDs from the scene manifest instead of a network.
    #[arg(long)]
    pub oracle: bool,
    /// Manifest for `--oracle` (default: `manifest.json` beside the input).
    #[arg(long, requires = "oracle")]
    pub manifest: Option<PathBuf>,
    /// Debug: force the Wiener filter to the identity.
    #[arg(long)]
    pub identity_filter: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, num_args = 1.., conflicts_with = "scenes")]
    pub clean: Vec<PathBuf>,
    #[arg(long, num_args = 1..)]
    pub enhanced: Vec<PathBuf>,
    #[arg(long, num_args = 1..)]
    pub observed: Vec<PathBuf>,
    /// A `simulate` directory, paired with `--enhanced-dir`.
    #[arg(long, requires = "enhanced_dir")]
    pub scenes: Option<PathBuf>,
    #[arg(long)]
    pub enhanced_dir: Option<PathBuf>,
    /// Method name for the enhanced rows.
    #[arg(long, default_value = "enhanced")]
    pub label: String,
    /// Channel scored in multi-channel files.
    #[arg(long, default_value_t = 0)]
    pub channel: usize,
    /// Writes the JSON report here.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Test hook: perturbs one analytic gradient entry.
    #[arg(long, hide = true)]
    pub corrupt_gradient: bool,
}

#[derive(Debug, Args)]
pub struct ProjectArgs {
    /// WAV or JSON spectrogram.
    #[arg(long)]
    pub input: PathBuf,
    /// Projected spectrogram as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Projected spectrogram resynthesized to WAV.
    #[arg(long)]
    pub wav_out: Option<PathBuf>,
}

fn base_config(cli: &Cli) -> CliResult<RunConfig> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

/// Runs one command; text for stdout goes to `out`.
pub fn run(cli: Cli, out: &mut dyn std::io::Write) -> CliResult<()> {
    let mut cfg = base_config(&cli)?;
    let stdout_err = |e: std::io::Error| CliError::Io {
        path: "<stdout>".into(),
        source: e,
    };
    match cli.command {
        Command::Simulate(a) => {
            if let Some(v) = a.snr {
                cfg.scene.snr_db_min = v;
                cfg.scene.snr_db_max = v;
            }
            if let Some(v) = a.snr_min {
                cfg.scene.snr_db_min = v;
            }
            if let Some(v) = a.snr_max {
                cfg.scene.snr_db_max = v;
            }
            if let Some(v) = a.duration {
                cfg.scene.duration_s = v;
            }
            if a.rt60_ms.is_some() {
                cfg.scene.rt60_ms = a.rt60_ms;
            }
            cfg.paths.output_dir = Some(a.out.clone());
            let names = commands::simulate::simulate(&cfg, &a.out, a.count)?;
            writeln!(out, "wrote {} scenes to {}", names.len(), a.out.display()).map_err(stdout_err)?;
        }
        Command::Train(a) => {
            let p = &mut cfg.paths;
            p.train_dir = a.train_dir.or(p.train_dir.take());
            p.val_dir = a.val_dir.or(p.val_dir.take());
            p.output_dir = a.out.or(p.output_dir.take());
            let o = &mut cfg.optimizer;
            o.epochs = a.epochs.unwrap_or(o.epochs);
            o.lr = a.lr.unwrap_or(o.lr);
            o.batch_size = a.batch_size.unwrap_or(o.batch_size);
            o.segment_frames = a.segment_frames.unwrap_or(o.segment_frames);
            cfg.objective.kind = a.objective.unwrap_or(cfg.objective.kind);
            cfg.objective.lambda = a.lambda.unwrap_or(cfg.objective.lambda);
            if let Some(h) = a.hidden {
                cfg.model.hidden = h;
            }
            cfg.model.layer_kind = a.layer.unwrap_or(cfg.model.layer_kind);
            let state = commands::train::train(&cfg, a.resume.as_deref())?;
            let best = state.best_val_loss().unwrap_or(f64::NAN);
            writeln!(out, "trained {} epochs, best validation loss {best:.6e}", state.epochs_done).map_err(stdout_err)?;
        }
        Command::Enhance(a) => {
            let source = if a.oracle {
                MaskSource::Oracle(a.manifest.clone())
            } else if let Some(path) = &a.checkpoint {
                MaskSource::Model(Box::new(Checkpoint::load(path).map_err(CliError::io(path))?))
            } else if a.identity_filter {
                MaskSource::None
            } else {
                return Err(CliError::Usage("need --checkpoint or --oracle".into()));
            };
            let opts = EnhanceOptions {
                method: a.method,
                source,
                identity_filter: a.identity_filter,
            };
            match (&a.input, &a.scenes) {
                (Some(input), _) => {
                    let target = a
                        .out
                        .clone()
                        .ok_or_else(|| CliError::Usage("--input needs --out".into()))?;
                    enhance_to(&cfg, input, &target, &opts)?;
                    writeln!(out, "wrote {}", target.display()).map_err(stdout_err)?;
                }
                (None, Some(scenes)) => {
                    let dir = a
                        .out_dir
                        .clone()
                        .ok_or_else(|| CliError::Usage("--scenes needs --out-dir".into()))?;
                    let written = enhance_scenes(&cfg, scenes, &dir, &opts)?;
                    writeln!(out, "wrote {} files to {}", written.len(), dir.display()).map_err(stdout_err)?;
                }
                (None, None) => return Err(CliError::Usage("need --input or --scenes".into())),
            }
        }
        Command::Eval(a) => {
            let items = match (&a.scenes, &a.enhanced_dir) {
                (Some(scenes), Some(dir)) => items_from_scenes(scenes, dir)?,
                _ => items_from_lists(&a.clean, &a.enhanced, &a.observed)?,
            };
            let report = evaluate(&items, &a.label, a.channel)?;
            if let Some(path) = &a.json {
                write_json(path, &report)?;
            }
            write!(out, "{}", report.to_table()).map_err(stdout_err)?;
        }
        Command::Gradcheck(a) => {
            let lines = run_suite(cfg.seed, a.corrupt_gradient)?;
            let mut failed = Vec::new();
            for l in &lines {
                writeln!(
                    out,
                    "{:<9} seed {:>3}  max rel err {:.3e}  max abs err {:.3e}  {}",
                    l.objective,
                    l.seed,
                    l.max_rel_err,
                    l.max_abs_err,
                    if l.passed { "PASS" } else { "FAIL" }
                )
                .map_err(stdout_err)?;
                if !l.passed {
                    failed.push(l.objective.clone());
                }
            }
            if !failed.is_empty() {
                return Err(CliError::GradcheckFailed(failed.join(", ")));
            }
        }
        Command::Project(a) => {
            cfg.validate()?;
            let report = commands::project::project(&cfg.stft, &a.input, a.out.as_deref(), a.wav_out.as_deref())?;
            writeln!(out, "{}", serde_json::to_string(&report).expect("report is serializable")).map_err(stdout_err)?;
        }
    }
    Ok(())
}
