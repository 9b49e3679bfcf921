//! Compact mask/PSD estimator: stacked dense (tanh) or GRU layers followed by
//! four linear heads, sigmoid for the masks and softplus for the PSDs.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::features::{NormMode, DEFAULT_DELTA};
use crate::autodiff::{Tape, Var};
use crate::enhance::MaskPsdSet;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    #[default]
    Dense,
    Gru,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub bins: usize,
    pub channels: usize,
    pub hidden: Vec<usize>,
    pub context: usize,
    pub layer_kind: LayerKind,
    pub delta: f64,
    pub norm: NormMode,
}

impl ModelConfig {
    pub fn new(bins: usize, channels: usize) -> Self {
        Self {
            bins,
            channels,
            hidden: vec![64, 64],
            context: 2,
            layer_kind: LayerKind::Dense,
            delta: DEFAULT_DELTA,
            norm: NormMode::PerBin,
        }
    }

    pub fn input_dim(&self) -> usize {
        let per_frame = self.bins * (self.channels + 2 * self.channels.saturating_sub(1));
        per_frame * (2 * self.context + 1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.bins == 0 || self.channels == 0 || self.hidden.contains(&0) {
            return Err(Error::InvalidConfig(format!(
                "model needs positive sizes (bins {}, channels {}, hidden {:?})",
                self.bins, self.channels, self.hidden
            )));
        }
        if !(self.delta > 0.0) {
            return Err(Error::InvalidConfig(format!("feature delta {} must be positive", self.delta)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub tensor: Tensor,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub tensors: Vec<NamedTensor>,
}

impl ModelParams {
    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(|p| p.tensor.numel()).sum()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|p| p.name == name).map(|p| &p.tensor)
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(|p| p.tensor.is_finite())
    }

    pub fn on_tape<'t>(&self, tape: &'t Tape) -> Vec<Var<'t>> {
        self.tensors.iter().map(|p| tape.leaf(p.tensor.clone())).collect()
    }

    /// Same names and shapes, all zeros.
    pub fn zeros_like(&self) -> Self {
        Self {
            tensors: self
                .tensors
                .iter()
                .map(|p| NamedTensor {
                    name: p.name.clone(),
                    tensor: Tensor::zeros(p.tensor.shape()),
                })
                .collect(),
        }
    }
}

const HEADS: [&str; 4] = ["mask_s", "mask_n", "psd_s", "psd_n"];
const GRU_PARTS: [&str; 9] = ["w_z", "w_r", "w_h", "u_z", "u_r", "u_h", "b_z", "b_r", "b_h"];

/// Name and shape of every parameter, in storage order.
pub fn param_layout(cfg: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    let mut out = Vec::new();
    let mut fan_in = cfg.input_dim();
    for (i, &h) in cfg.hidden.iter().enumerate() {
        match cfg.layer_kind {
            LayerKind::Dense => {
                out.push((format!("layer{i}.weight"), vec![fan_in, h]));
                out.push((format!("layer{i}.bias"), vec![h]));
            }
            LayerKind::Gru => {
                for part in GRU_PARTS {
                    let shape = match &part[..1] {
                        "w" => vec![fan_in, h],
                        "u" => vec![h, h],
                        _ => vec![h],
                    };
                    out.push((format!("layer{i}.{part}"), shape));
                }
            }
        }
        fan_in = h;
    }
    for head in HEADS {
        out.push((format!("head.{head}.weight"), vec![fan_in, cfg.bins]));
        out.push((format!("head.{head}.bias"), vec![cfg.bins]));
    }
    out
}

/// Glorot-uniform matrices, zero vectors.
pub fn init_params(cfg: &ModelConfig, rng: &mut impl Rng) -> Result<ModelParams> {
    cfg.validate()?;
    let tensors = param_layout(cfg)
        .into_iter()
        .map(|(name, shape)| {
            let tensor = if shape.len() == 2 {
                let limit = (6.0 / (shape[0] + shape[1]) as f64).sqrt();
                Tensor::from_fn(&shape, |_| rng.random_range(-limit..limit))
            } else {
                Tensor::zeros(&shape)
            };
            NamedTensor { name, tensor }
        })
        .collect();
    Ok(ModelParams { tensors })
}

fn affine<'t>(x: Var<'t>, w: Var<'t>, b: Var<'t>) -> Result<Var<'t>> {
    x.matmul(w)?.add(b)
}

fn gru_layer<'t>(x: Var<'t>, p: &[Var<'t>], h_dim: usize) -> Result<Var<'t>> {
    let t = x.shape()[0];
    let [w_z, w_r, w_h, u_z, u_r, u_h, b_z, b_r, b_h] = [p[0], p[1], p[2], p[3], p[4], p[5], p[6], p[7], p[8]];
    let xz = affine(x, w_z, b_z)?;
    let xr = affine(x, w_r, b_r)?;
    let xh = affine(x, w_h, b_h)?;
    let mut h = x.tape().constant(Tensor::zeros(&[1, h_dim]));
    let mut rows = Vec::with_capacity(t);
    for ti in 0..t {
        let z = xz.slice(0, ti, 1)?.add(h.matmul(u_z)?)?.sigmoid();
        let r = xr.slice(0, ti, 1)?.add(h.matmul(u_r)?)?.sigmoid();
        let cand = xh.slice(0, ti, 1)?.add(r.mul(h)?.matmul(u_h)?)?.tanh();
        // h ← (1 − z) h + z ĥ
        h = h.add(z.mul(cand.sub(h)?)?)?;
        rows.push(h);
    }
    Var::concat(&rows, 0)
}

/// `input: T × D` → masks and PSDs, each `T × F`.
pub fn forward<'t>(cfg: &ModelConfig, params: &[Var<'t>], input: Var<'t>) -> Result<MaskPsdSet<'t>> {
    let layout = param_layout(cfg);
    if params.len() != layout.len() {
        return Err(Error::InvalidConfig(format!(
            "model expects {} parameter tensors, got {}",
            layout.len(),
            params.len()
        )));
    }
    for (p, (_, shape)) in params.iter().zip(&layout) {
        if &p.shape() != shape {
            return Err(Error::shape("model parameter", &p.shape(), shape));
        }
    }
    let ishape = input.shape();
    if ishape.len() != 2 || ishape[1] != cfg.input_dim() {
        return Err(Error::shape("model input", &ishape, &[0, cfg.input_dim()]));
    }
    let mut h = input;
    let mut cursor = 0;
    for &width in &cfg.hidden {
        match cfg.layer_kind {
            LayerKind::Dense => {
                h = affine(h, params[cursor], params[cursor + 1])?.tanh();
                cursor += 2;
            }
            LayerKind::Gru => {
                h = gru_layer(h, &params[cursor..cursor + GRU_PARTS.len()], width)?;
                cursor += GRU_PARTS.len();
            }
        }
    }
    let mut head = |softplus: bool| -> Result<Var<'t>> {
        let out = affine(h, params[cursor], params[cursor + 1])?;
        cursor += 2;
        Ok(if softplus { out.softplus() } else { out.sigmoid() })
    };
    let mask_s = head(false)?;
    let mask_n = head(false)?;
    let psd_s = head(true)?;
    let psd_n = head(true)?;
    Ok(MaskPsdSet {
        mask_s,
        mask_n,
        psd_s,
        psd_n,
    })
}
