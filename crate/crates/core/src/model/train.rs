//! Training loop: segment sampling, the full forward pipeline, Adam steps and
//! the per-epoch plateau schedule.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::network_input;
use super::network::{forward, init_params, ModelConfig, ModelParams};
use super::optim::{Adam, PlateauSchedule, DEFAULT_LR};
use crate::autodiff::{Tape, Var};
use crate::enhance::{MaskPsd, MaskPsdSet, MwfConfig};
use crate::error::{Error, Result};
use crate::objectives::{pipeline_loss, ObjectiveConfig, ObjectiveValue};
use crate::signal::TimeSignal;
use crate::stft::{stft, SpecVar, Spectrogram, StftConfig};
use crate::tensor::Tensor;

pub const DEFAULT_SEGMENT_FRAMES: usize = 128;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub stft: StftConfig,
    pub model: ModelConfig,
    pub objective: ObjectiveConfig,
    pub mwf: MwfConfig,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub segment_frames: usize,
    pub ref_channel: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(stft: StftConfig, channels: usize) -> Self {
        Self {
            model: ModelConfig::new(stft.num_bins(), channels),
            stft,
            objective: ObjectiveConfig::default(),
            mwf: MwfConfig::default(),
            lr: DEFAULT_LR,
            epochs: 30,
            batch_size: 4,
            segment_frames: DEFAULT_SEGMENT_FRAMES,
            ref_channel: 0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.stft.validate()?;
        self.model.validate()?;
        self.objective.validate()?;
        if self.model.bins != self.stft.num_bins() {
            return Err(Error::InvalidConfig(format!(
                "model bins {} vs STFT bins {}",
                self.model.bins,
                self.stft.num_bins()
            )));
        }
        if self.batch_size == 0 || self.segment_frames == 0 {
            return Err(Error::InvalidConfig("batch_size and segment_frames must be positive".into()));
        }
        if !(self.lr >= 0.0) {
            return Err(Error::InvalidConfig(format!("learning rate {} must be nonnegative", self.lr)));
        }
        if self.ref_channel >= self.model.channels {
            return Err(Error::InvalidConfig(format!("reference channel {} out of range", self.ref_channel)));
        }
        Ok(())
    }
}

/// Observed mixture and the clean speech image at every microphone.
#[derive(Clone, Debug, PartialEq)]
pub struct Utterance {
    pub noisy: TimeSignal,
    pub clean: TimeSignal,
}

/// Precomputed spectrograms and network input for one (segment of an)
/// utterance.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub noisy: Spectrogram,
    pub clean: Spectrogram,
    pub input: Tensor,
}

pub fn prepare_example(noisy: &TimeSignal, clean: &TimeSignal, cfg: &TrainConfig) -> Result<Example> {
    if noisy.len() != clean.len() || noisy.channels() != clean.channels() {
        return Err(Error::shape("prepare_example", noisy.samples.shape(), clean.samples.shape()));
    }
    let noisy_spec = stft(noisy, &cfg.stft)?;
    let clean_spec = stft(clean, &cfg.stft)?;
    let input = network_input(&noisy_spec, cfg.model.delta, cfg.model.norm, cfg.model.context)?;
    Ok(Example {
        noisy: noisy_spec,
        clean: clean_spec,
        input,
    })
}

/// Random contiguous crop of `segment_frames · hop` samples (whole utterance
/// when shorter).
pub fn sample_segment(u: &Utterance, cfg: &TrainConfig, rng: &mut impl Rng) -> Result<Example> {
    let len = cfg.segment_frames * cfg.stft.hop;
    if u.noisy.len() <= len {
        return prepare_example(&u.noisy, &u.clean, cfg);
    }
    let start = rng.random_range(0..=u.noisy.len() - len);
    prepare_example(&u.noisy.crop(start, len)?, &u.clean.crop(start, len)?, cfg)
}

/// Network outputs for inference.
pub fn predict(cfg: &ModelConfig, params: &ModelParams, input: &Tensor) -> Result<MaskPsd> {
    let tape = Tape::new();
    let vars: Vec<Var<'_>> = params.tensors.iter().map(|p| tape.constant(p.tensor.clone())).collect();
    let out = forward(cfg, &vars, tape.constant(input.clone()))?;
    Ok(out.value())
}

pub fn example_loss<'t>(
    tape: &'t Tape,
    cfg: &TrainConfig,
    params: &[Var<'t>],
    ex: &Example,
) -> Result<(ObjectiveValue<'t>, MaskPsdSet<'t>)> {
    let outputs = forward(&cfg.model, params, tape.constant(ex.input.clone()))?;
    let noisy = SpecVar::constant(tape, &ex.noisy);
    let clean = SpecVar::constant(tape, &ex.clean);
    let value = pipeline_loss(noisy, clean, &outputs, &cfg.mwf, &cfg.objective, cfg.ref_channel)?;
    Ok((value, outputs))
}

fn first_non_finite(value: &ObjectiveValue<'_>, outputs: &MaskPsdSet<'_>, index: usize) -> String {
    let heads = [
        ("mask_s", outputs.mask_s),
        ("mask_n", outputs.mask_n),
        ("psd_s", outputs.psd_s),
        ("psd_n", outputs.psd_n),
    ];
    for (name, v) in heads {
        if !v.value().is_finite() {
            return format!("network output {name} of example {index}");
        }
    }
    for (name, v) in &value.terms {
        if !v.value().is_finite() {
            return format!("loss term {name} of example {index}");
        }
    }
    format!("loss total of example {index}")
}

/// Mean loss over `batch` recorded on `tape`.
fn batch_objective<'t>(tape: &'t Tape, cfg: &TrainConfig, vars: &[Var<'t>], batch: &[Example]) -> Result<Var<'t>> {
    if batch.is_empty() {
        return Err(Error::InvalidConfig("empty batch".into()));
    }
    let mut total: Option<Var<'t>> = None;
    for (i, ex) in batch.iter().enumerate() {
        let (value, outputs) = example_loss(tape, cfg, vars, ex)?;
        if !value.value().is_finite() {
            return Err(Error::NonFiniteLoss(first_non_finite(&value, &outputs, i)));
        }
        total = Some(match total {
            None => value.total,
            Some(acc) => acc.add(value.total)?,
        });
    }
    Ok(total.expect("nonempty batch").scale(1.0 / batch.len() as f64))
}

/// Forward, backward and one Adam update; returns the pre-update batch loss.
pub fn train_step(params: &mut ModelParams, opt: &mut Adam, batch: &[Example], cfg: &TrainConfig) -> Result<f64> {
    let tape = Tape::new();
    let vars = params.on_tape(&tape);
    let loss = batch_objective(&tape, cfg, &vars, batch)?;
    let value = loss.item();
    let grads = tape.backward(loss)?;
    let grads: Vec<Tensor> = vars.iter().map(|v| grads.wrt(*v)).collect();
    for (g, p) in grads.iter().zip(&params.tensors) {
        if !g.is_finite() {
            return Err(Error::NonFiniteLoss(format!("gradient of {}", p.name)));
        }
    }
    opt.update(params, &grads)?;
    Ok(value)
}

/// Mean loss without updating anything.
pub fn eval_loss(params: &ModelParams, batch: &[Example], cfg: &TrainConfig) -> Result<f64> {
    let tape = Tape::new();
    let vars: Vec<Var<'_>> = params.tensors.iter().map(|p| tape.constant(p.tensor.clone())).collect();
    Ok(batch_objective(&tape, cfg, &vars, batch)?.item())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
    pub lr_decayed: bool,
}

/// Everything needed to continue training bit-identically.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub params: ModelParams,
    pub best_params: ModelParams,
    pub adam: Adam,
    pub schedule: PlateauSchedule,
    pub epochs_done: usize,
    pub history: Vec<EpochLog>,
}

impl TrainState {
    pub fn init(cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(INIT_STREAM);
        let params = init_params(&cfg.model, &mut rng)?;
        Ok(Self {
            adam: Adam::new(&params, cfg.lr),
            best_params: params.clone(),
            params,
            schedule: PlateauSchedule::default(),
            epochs_done: 0,
            history: Vec::new(),
        })
    }

    pub fn best_val_loss(&self) -> Option<f64> {
        self.schedule.best
    }
}

const INIT_STREAM: u64 = 1;
const BATCH_STREAM_BASE: u64 = 1 << 32;

/// Runs one epoch over `train` and scores `val` (whole utterances).
pub fn run_epoch(state: &mut TrainState, train: &[Example], val: &[Example], cfg: &TrainConfig) -> Result<EpochLog> {
    run_epoch_with(state, train.len(), |_, i, _| Ok(train[i].clone()), val, cfg)
}

/// Like [`run_epoch`] but draws a fresh random segment per utterance.
pub fn run_epoch_segments(state: &mut TrainState, train: &[Utterance], val: &[Example], cfg: &TrainConfig) -> Result<EpochLog> {
    run_epoch_with(state, train.len(), |cfg, i, rng| sample_segment(&train[i], cfg, rng), val, cfg)
}

fn run_epoch_with(
    state: &mut TrainState,
    count: usize,
    mut example: impl FnMut(&TrainConfig, usize, &mut ChaCha8Rng) -> Result<Example>,
    val: &[Example],
    cfg: &TrainConfig,
) -> Result<EpochLog> {
    if count == 0 {
        return Err(Error::InvalidConfig("no training utterances".into()));
    }
    let epoch = state.epochs_done;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(BATCH_STREAM_BASE + epoch as u64);
    let mut order: Vec<usize> = (0..count).collect();
    order.shuffle(&mut rng);
    let mut losses = Vec::new();
    for chunk in order.chunks(cfg.batch_size) {
        let batch = chunk
            .iter()
            .map(|&i| example(cfg, i, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        losses.push(train_step(&mut state.params, &mut state.adam, &batch, cfg)?);
    }
    let train_loss = losses.iter().sum::<f64>() / losses.len() as f64;
    let val_loss = if val.is_empty() {
        train_loss
    } else {
        val.iter()
            .map(|ex| eval_loss(&state.params, std::slice::from_ref(ex), cfg))
            .sum::<Result<f64>>()?
            / val.len() as f64
    };
    let improved = state.schedule.best.is_none_or(|b| val_loss < b);
    let lr_decayed = state.schedule.observe(val_loss, &mut state.adam.lr);
    if improved {
        state.best_params = state.params.clone();
    }
    state.epochs_done += 1;
    let log = EpochLog {
        epoch,
        train_loss,
        val_loss,
        lr: state.adam.lr,
        lr_decayed,
    };
    state.history.push(log.clone());
    Ok(log)
}
