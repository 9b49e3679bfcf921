use std::path::Path;

use mcwf_core::model::{prepare_example, run_epoch_segments, Checkpoint, Example, TrainConfig, TrainState, Utterance};
use serde_json::json;

use crate::config::RunConfig;
use crate::dataset::load_scenes;
use crate::error::{CliError, CliResult};

pub const LOG_FILE: &str = "train_log.jsonl";
pub const LAST_CHECKPOINT: &str = "checkpoint_last.json";
pub const BEST_CHECKPOINT: &str = "checkpoint_best.json";

fn load_utterances(dir: &Path, expected_rate: u32) -> CliResult<Vec<Utterance>> {
    load_scenes(dir)?
        .into_iter()
        .map(|s| {
            if s.mixture.sample_rate != expected_rate {
                return Err(CliError::RateMismatch {
                    path: dir.join(&s.name),
                    found: s.mixture.sample_rate,
                    expected: expected_rate,
                });
            }
            Ok(Utterance {
                noisy: s.mixture,
                clean: s.speech,
            })
        })
        .collect()
}

/// Two lines per epoch: the training loss and the validation loss.
fn log_text(state: &TrainState) -> String {
    let mut out = String::new();
    for e in &state.history {
        out.push_str(&json!({"epoch": e.epoch, "split": "train", "loss": e.train_loss, "lr": e.lr}).to_string());
        out.push('\n');
        out.push_str(
            &json!({"epoch": e.epoch, "split": "val", "loss": e.val_loss, "lr": e.lr, "lr_decayed": e.lr_decayed})
                .to_string(),
        );
        out.push('\n');
    }
    out
}

fn save(path: &Path, ck: &Checkpoint) -> CliResult<()> {
    std::fs::write(path, ck.to_json()? + "\n").map_err(CliError::io(path))
}

/// Trains until `optimizer.epochs` epochs are done, writing the log and both
/// checkpoints after every epoch. With `resume`, continues the state stored
/// in a last-epoch checkpoint; its config must match except for the epoch
/// count.
pub fn train(cfg: &RunConfig, resume: Option<&Path>) -> CliResult<TrainState> {
    cfg.validate()?;
    let train_dir = cfg
        .paths
        .train_dir
        .as_deref()
        .ok_or_else(|| CliError::Usage("no training set (--train-dir or paths.train_dir)".into()))?;
    let out = cfg
        .paths
        .output_dir
        .as_deref()
        .ok_or_else(|| CliError::Usage("no output directory (--out or paths.output_dir)".into()))?;
    let rate = cfg.stft.sample_rate;
    let train = load_utterances(train_dir, rate)?;
    let first = train
        .first()
        .ok_or_else(|| CliError::Usage(format!("{} holds no scenes", train_dir.display())))?;
    let channels = first.noisy.channels();
    let val = match &cfg.paths.val_dir {
        Some(dir) => load_utterances(dir, rate)?,
        None => Vec::new(),
    };
    if let Some(u) = train.iter().chain(&val).find(|u| u.noisy.channels() != channels) {
        return Err(CliError::Usage(format!(
            "scenes mix {} and {} channels",
            channels,
            u.noisy.channels()
        )));
    }
    let tcfg = cfg.train_config(channels)?;
    let mut state = match resume {
        Some(path) => {
            let ck = Checkpoint::load(path).map_err(CliError::io(path))?;
            let stored = TrainConfig {
                epochs: tcfg.epochs,
                ..ck.config.clone()
            };
            if stored != tcfg {
                return Err(CliError::Usage(format!(
                    "{} was trained with a different configuration",
                    path.display()
                )));
            }
            ck.state
        }
        None => TrainState::init(&tcfg)?,
    };
    let val_examples = val
        .iter()
        .map(|u| prepare_example(&u.noisy, &u.clean, &tcfg))
        .collect::<mcwf_core::Result<Vec<Example>>>()?;
    std::fs::create_dir_all(out).map_err(CliError::io(out))?;
    std::fs::write(out.join("config.json"), cfg.to_json()).map_err(CliError::io(out.join("config.json")))?;
    std::fs::write(out.join(LOG_FILE), log_text(&state)).map_err(CliError::io(out.join(LOG_FILE)))?;
    while state.epochs_done < tcfg.epochs {
        let log = run_epoch_segments(&mut state, &train, &val_examples, &tcfg)?;
        eprintln!(
            "epoch {:>3}  train {:.6e}  val {:.6e}  lr {:.3e}{}",
            log.epoch,
            log.train_loss,
            log.val_loss,
            log.lr,
            if log.lr_decayed { "  (decayed)" } else { "" }
        );
        std::fs::write(out.join(LOG_FILE), log_text(&state)).map_err(CliError::io(out.join(LOG_FILE)))?;
        save(&out.join(LAST_CHECKPOINT), &Checkpoint::new(tcfg.clone(), state.clone()))?;
        let mut best = state.clone();
        best.params = state.best_params.clone();
        save(&out.join(BEST_CHECKPOINT), &Checkpoint::new(tcfg.clone(), best))?;
    }
    Ok(state)
}
