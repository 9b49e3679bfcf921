//! Input features: normalized log amplitudes plus cos/sin inter-channel phase
//! differences against channel 0, stacked with a symmetric frame context.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stft::Spectrogram;
use crate::tensor::Tensor;

pub const DEFAULT_DELTA: f64 = 1e-4;
const ZERO_VARIANCE: f64 = 1e-12;

/// Which statistics the utterance-level normalization uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NormMode {
    /// Mean and variance per frequency bin over frames.
    #[default]
    PerBin,
    /// One mean and variance per channel over the whole spectrogram.
    Utterance,
}

/// All maps are `T × F`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureBlock {
    pub log_amp: Vec<Tensor>,
    pub cos_ipd: Vec<Tensor>,
    pub sin_ipd: Vec<Tensor>,
}

impl FeatureBlock {
    pub fn frames(&self) -> usize {
        self.log_amp[0].shape()[0]
    }

    pub fn dim(&self) -> usize {
        let f = self.log_amp[0].shape()[1];
        f * (self.log_amp.len() + self.cos_ipd.len() + self.sin_ipd.len())
    }

    /// `T × D` with per-frame layout `[amp_0, …, amp_{K−1}, cos_1, sin_1, …]`.
    pub fn to_matrix(&self) -> Tensor {
        let t = self.frames();
        let f = self.log_amp[0].shape()[1];
        let mut maps: Vec<&Tensor> = self.log_amp.iter().collect();
        for (c, s) in self.cos_ipd.iter().zip(&self.sin_ipd) {
            maps.push(c);
            maps.push(s);
        }
        let d = maps.len() * f;
        let mut out = Vec::with_capacity(t * d);
        for ti in 0..t {
            for m in &maps {
                out.extend_from_slice(&m.data()[ti * f..(ti + 1) * f]);
            }
        }
        Tensor::new(vec![t, d], out).expect("feature matrix")
    }
}

fn normalize(values: &mut [f64], t: usize, f: usize, mode: NormMode) {
    let mut apply = |idx: &dyn Fn(usize) -> usize, count: usize| {
        let n = count as f64;
        let mean = (0..count).map(|i| values[idx(i)]).sum::<f64>() / n;
        let var = (0..count).map(|i| (values[idx(i)] - mean).powi(2)).sum::<f64>() / n;
        for i in 0..count {
            let j = idx(i);
            values[j] = if var < ZERO_VARIANCE {
                0.0
            } else {
                (values[j] - mean) / var.sqrt()
            };
        }
    };
    match mode {
        NormMode::PerBin => {
            for fi in 0..f {
                apply(&|i| i * f + fi, t);
            }
        }
        NormMode::Utterance => apply(&|i| i, t * f),
    }
}

pub fn extract_features(x: &Spectrogram, delta: f64, mode: NormMode) -> Result<FeatureBlock> {
    if !(delta > 0.0) {
        return Err(Error::InvalidConfig(format!("feature delta {delta} must be positive")));
    }
    let (t, f, k) = (x.frames(), x.bins(), x.channels());
    let mut log_amp = Vec::with_capacity(k);
    for ch in 0..k {
        let mut v: Vec<f64> = (0..t * f)
            .map(|i| (x.at(i / f, i % f, ch).norm() + delta).log10())
            .collect();
        normalize(&mut v, t, f, mode);
        log_amp.push(Tensor::new(vec![t, f], v)?);
    }
    let mut cos_ipd = Vec::new();
    let mut sin_ipd = Vec::new();
    for ch in 1..k {
        let mut c = Vec::with_capacity(t * f);
        let mut s = Vec::with_capacity(t * f);
        for i in 0..t * f {
            let phase = x.at(i / f, i % f, ch).arg() - x.at(i / f, i % f, 0).arg();
            c.push(phase.cos());
            s.push(phase.sin());
        }
        cos_ipd.push(Tensor::new(vec![t, f], c)?);
        sin_ipd.push(Tensor::new(vec![t, f], s)?);
    }
    Ok(FeatureBlock {
        log_amp,
        cos_ipd,
        sin_ipd,
    })
}

/// Concatenates frames `t−c ..= t+c` (edges replicated): `T × D` → `T × (2c+1)D`.
pub fn stack_context(m: &Tensor, context: usize) -> Tensor {
    let (t, d) = (m.shape()[0], m.shape()[1]);
    let width = 2 * context + 1;
    let mut out = Vec::with_capacity(t * d * width);
    for ti in 0..t {
        for o in 0..width {
            let src = (ti + o).saturating_sub(context).min(t - 1);
            out.extend_from_slice(&m.data()[src * d..(src + 1) * d]);
        }
    }
    Tensor::new(vec![t, d * width], out).expect("context shape")
}

/// Network input for one utterance.
pub fn network_input(x: &Spectrogram, delta: f64, mode: NormMode, context: usize) -> Result<Tensor> {
    Ok(stack_context(&extract_features(x, delta, mode)?.to_matrix(), context))
}
