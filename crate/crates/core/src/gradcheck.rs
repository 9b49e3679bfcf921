//! Central finite-difference checks of the full training pipeline.
//!
//! The instance is 4 frames × 8 bins × 2 channels (`win_len = 14`, `hop = 7`,
//! 28 samples). The leaves are the pre-activation network outputs, so masks
//! pass through a sigmoid and PSDs through a softplus exactly as in training.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::enhance::{MaskPsdSet, MwfConfig};
use crate::error::Result;
use crate::objectives::{pipeline_loss, ObjectiveConfig, ObjectiveKind};
use crate::signal::TimeSignal;
use crate::stft::{istft, stft, SpecVar, Spectrogram, StftConfig};
use crate::tensor::Tensor;

pub const GRAD_TOL: f64 = 1e-4;
pub const FD_STEP: f64 = 1e-5;
/// Residual magnitude below which an ℓ1 instance is resampled.
pub const L1_MARGIN: f64 = 1e-3;

/// Analytic versus numeric gradients.
#[derive(Clone, Debug)]
pub struct GradComparison {
    pub analytic: Vec<Tensor>,
    pub numeric: Vec<Tensor>,
    pub max_rel_err: f64,
    pub max_abs_err: f64,
}

/// `|a − n| / max(|a|, |n|, 1e-3·max|a|)` maximized over all entries, so that
/// entries many orders below the gradient scale are judged absolutely.
pub fn relative_error(analytic: &[Tensor], numeric: &[Tensor]) -> (f64, f64) {
    let scale = analytic.iter().map(|t| t.max_abs()).fold(0.0, f64::max);
    let floor = (1e-3 * scale).max(f64::MIN_POSITIVE);
    let mut rel = 0.0f64;
    let mut abs = 0.0f64;
    for (a, n) in analytic.iter().zip(numeric) {
        for (x, y) in a.data().iter().zip(n.data()) {
            let d = (x - y).abs();
            abs = abs.max(d);
            rel = rel.max(d / x.abs().max(y.abs()).max(floor));
        }
    }
    (rel, abs)
}

/// Compares reverse-mode gradients of `f` with central differences of step `h`.
/// `corrupt` perturbs the analytic gradient (negative control).
pub fn finite_difference_check(
    inputs: &[Tensor],
    h: f64,
    corrupt: bool,
    f: impl Fn(&Tape, &[Var<'_>]) -> Result<f64>,
    f_var: impl for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
) -> Result<GradComparison> {
    let tape = Tape::new();
    let leaves: Vec<Var<'_>> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let loss = f_var(&tape, &leaves)?;
    let grads = tape.backward(loss)?;
    let mut analytic: Vec<Tensor> = leaves.iter().map(|v| grads.wrt(*v)).collect();
    if corrupt {
        if let Some(v) = analytic.first_mut().and_then(|t| t.data_mut().first_mut()) {
            *v = *v * 1.01 + 1e-3;
        }
    }
    let mut numeric = Vec::with_capacity(inputs.len());
    for i in 0..inputs.len() {
        let mut g = Tensor::zeros(inputs[i].shape());
        for j in 0..inputs[i].numel() {
            let eval = |delta: f64| -> Result<f64> {
                let mut shifted = inputs.to_vec();
                shifted[i].data_mut()[j] += delta;
                let tape = Tape::new();
                let vars: Vec<Var<'_>> = shifted.iter().map(|t| tape.constant(t.clone())).collect();
                f(&tape, &vars)
            };
            g.data_mut()[j] = (eval(h)? - eval(-h)?) / (2.0 * h);
        }
        numeric.push(g);
    }
    let (max_rel_err, max_abs_err) = relative_error(&analytic, &numeric);
    Ok(GradComparison {
        analytic,
        numeric,
        max_rel_err,
        max_abs_err,
    })
}

pub fn instance_config() -> StftConfig {
    StftConfig::new(crate::signal::DEFAULT_SAMPLE_RATE, 14, 7).expect("gradcheck STFT config")
}

pub const INSTANCE_SAMPLES: usize = 28;

/// Noisy and clean spectrograms plus the pre-activation network outputs.
#[derive(Clone, Debug)]
pub struct GradInstance {
    pub noisy: Spectrogram,
    pub clean: Spectrogram,
    /// `mask_s, mask_n, psd_s, psd_n` logits, each `T × F`.
    pub logits: Vec<Tensor>,
}

impl GradInstance {
    pub fn random(seed: u64) -> Result<Self> {
        let cfg = instance_config();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let signal = |scale: f64, rng: &mut ChaCha8Rng| -> Result<TimeSignal> {
            let data = (0..INSTANCE_SAMPLES * 2).map(|_| scale * rng.random_range(-1.0..1.0)).collect();
            TimeSignal::new(Tensor::new(vec![INSTANCE_SAMPLES, 2], data)?, cfg.sample_rate)
        };
        let clean_t = signal(1.0, &mut rng)?;
        let noise_t = signal(0.5, &mut rng)?;
        let noisy_t = TimeSignal::new(clean_t.samples.add(&noise_t.samples)?, cfg.sample_rate)?;
        let t = cfg.num_frames(INSTANCE_SAMPLES)?;
        let f = cfg.num_bins();
        let logits = (0..4)
            .map(|_| Tensor::from_fn(&[t, f], |_| rng.random_range(-1.5..1.5)))
            .collect();
        Ok(Self {
            noisy: stft(&noisy_t, &cfg)?,
            clean: stft(&clean_t, &cfg)?,
            logits,
        })
    }

    /// Masks/PSDs recorded from logit nodes.
    pub fn outputs<'t>(logits: &[Var<'t>]) -> MaskPsdSet<'t> {
        MaskPsdSet {
            mask_s: logits[0].sigmoid(),
            mask_n: logits[1].sigmoid(),
            psd_s: logits[2].softplus(),
            psd_n: logits[3].softplus(),
        }
    }

    pub fn loss<'t>(&self, tape: &'t Tape, logits: &[Var<'t>], cfg: &ObjectiveConfig) -> Result<Var<'t>> {
        let noisy = SpecVar::constant(tape, &self.noisy);
        let clean = SpecVar::constant(tape, &self.clean);
        let v = pipeline_loss(noisy, clean, &Self::outputs(logits), &MwfConfig::default(), cfg, 0)?;
        Ok(v.total)
    }

    /// Smallest time-domain ℓ1 residual magnitude for ℓ1-based kinds.
    pub fn l1_margin(&self, kind: ObjectiveKind) -> Result<f64> {
        if !matches!(kind, ObjectiveKind::Mwa | ObjectiveKind::Wa) {
            return Ok(f64::INFINITY);
        }
        let tape = Tape::new();
        let logits: Vec<Var<'_>> = self.logits.iter().map(|t| tape.constant(t.clone())).collect();
        let outputs = Self::outputs(&logits);
        let noisy = SpecVar::constant(&tape, &self.noisy);
        let est = if kind == ObjectiveKind::Mwa {
            crate::enhance::run_mwf(noisy, &outputs, &MwfConfig::default())?.estimate.value()
        } else {
            let mask = outputs.mask_s.value();
            crate::baselines::tf_mask_enhance(&self.noisy, &mask, 0)?
        };
        let clean = if kind == ObjectiveKind::Mwa {
            self.clean.clone()
        } else {
            self.clean.channel(0)
        };
        let a = istft(&clean)?;
        let b = istft(&est)?;
        Ok(a.samples
            .data()
            .iter()
            .zip(b.samples.data())
            .map(|(x, y)| (x - y).abs())
            .fold(f64::INFINITY, f64::min))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradcheckLine {
    pub objective: String,
    pub seed: u64,
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    pub passed: bool,
}

/// First instance at or after `seed` whose ℓ1 residuals clear [`L1_MARGIN`].
pub fn instance_for(kind: ObjectiveKind, seed: u64) -> Result<(u64, GradInstance)> {
    let mut s = seed;
    loop {
        let inst = GradInstance::random(s)?;
        if inst.l1_margin(kind)? > L1_MARGIN {
            return Ok((s, inst));
        }
        s = s.wrapping_add(1);
    }
}

/// Gradient check of one objective through the full pipeline.
pub fn check_objective(kind: ObjectiveKind, seed: u64, corrupt: bool) -> Result<GradcheckLine> {
    let (used, inst) = instance_for(kind, seed)?;
    let cfg = ObjectiveConfig::with_kind(kind);
    let cmp = finite_difference_check(
        &inst.logits,
        FD_STEP,
        corrupt,
        |tape, v| Ok(inst.loss(tape, v, &cfg)?.item()),
        |tape, v| inst.loss(tape, v, &cfg),
    )?;
    Ok(GradcheckLine {
        objective: kind.name().to_string(),
        seed: used,
        max_rel_err: cmp.max_rel_err,
        max_abs_err: cmp.max_abs_err,
        passed: cmp.max_rel_err < GRAD_TOL,
    })
}

/// All six objectives.
pub fn run_suite(seed: u64, corrupt: bool) -> Result<Vec<GradcheckLine>> {
    ObjectiveKind::ALL.iter().map(|&k| check_objective(k, seed, corrupt)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn instance_has_expected_shape() {
        let inst = GradInstance::random(0).unwrap();
        assert_eq!(inst.noisy.data.shape(), &[4, 8, 2]);
        assert_eq!(inst.logits[0].shape(), &[4, 8]);
    }

    #[test]
    fn corrupted_gradient_fails() {
        let line = check_objective(ObjectiveKind::Psa, 0, true).unwrap();
        assert!(!line.passed);
    }
}
