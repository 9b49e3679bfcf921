//! Inference baselines: monaural T-F masking and mask-based MVDR
//! beamforming.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::autodiff::{hermitian_inverse, ComplexTensor, ComplexVar, Tape};
use crate::enhance::{estimate_time_invariant_scm, DEFAULT_MWF_EPS};
use crate::error::{Error, Result};
use crate::stft::{SpecVar, Spectrogram};
use crate::tensor::Tensor;

pub const POWER_ITERATIONS: usize = 100;
pub const POWER_TOL: f64 = 1e-10;
const WEIGHT_NORM_LIMIT: f64 = 1e6;

/// Time-invariant filter `w_f`, `F × K`.
#[derive(Clone, Debug, PartialEq)]
pub struct BeamformerWeights {
    pub w: ComplexTensor,
    pub reference_channel: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Mwf,
    Mask,
    Mvdr,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mwf" => Ok(Method::Mwf),
            "mask" => Ok(Method::Mask),
            "mvdr" => Ok(Method::Mvdr),
            _ => Err(Error::InvalidConfig(format!("unknown method '{s}'"))),
        }
    }
}

fn check_mask(mask: &Tensor, t: usize, f: usize) -> Result<()> {
    if mask.shape() != [t, f] {
        return Err(Error::shape("mask", mask.shape(), &[t, f]));
    }
    if let Some(v) = mask.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::DomainError {
            op: "mask",
            detail: format!("entry {v} outside [0, 1]"),
        });
    }
    Ok(())
}

/// `M ⊙ X` on the reference channel.
pub fn tf_mask_enhance(x: &Spectrogram, mask: &Tensor, ref_channel: usize) -> Result<Spectrogram> {
    let (t, f, k) = (x.frames(), x.bins(), x.channels());
    check_mask(mask, t, f)?;
    if ref_channel >= k {
        return Err(Error::InvalidConfig(format!("reference channel {ref_channel} of {k}")));
    }
    let r = x.channel(ref_channel);
    let re = r.data.re.zip_with(&mask.clone().reshape(&[t, f, 1])?, |a, m| a * m)?;
    let im = r.data.im.zip_with(&mask.clone().reshape(&[t, f, 1])?, |a, m| a * m)?;
    Spectrogram::new(ComplexTensor::new(re, im)?, x.config, x.num_samples)
}

fn mat_vec(m: &[Complex64], v: &[Complex64]) -> Vec<Complex64> {
    let k = v.len();
    (0..k).map(|i| (0..k).map(|j| m[i * k + j] * v[j]).sum()).collect()
}

fn vec_norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Principal eigenvector of a Hermitian PSD matrix by power iteration,
/// started from its strongest column. Phase is fixed so the largest entry is
/// real positive.
pub fn principal_eigenvector(r: &[Complex64], k: usize, freq: usize) -> Result<Vec<Complex64>> {
    let fail = |detail: &str| Error::EigenFailure {
        freq,
        detail: detail.to_string(),
    };
    if r.iter().any(|z| !z.is_finite()) {
        return Err(fail("non-finite SCM"));
    }
    let start = (0..k)
        .max_by(|&a, &b| r[a * k + a].re.total_cmp(&r[b * k + b].re))
        .unwrap_or(0);
    let mut v: Vec<Complex64> = (0..k).map(|i| r[i * k + start]).collect();
    let n0 = vec_norm(&v);
    if !(n0 > 0.0) {
        return Err(fail("SCM has no energy"));
    }
    v.iter_mut().for_each(|z| *z /= n0);
    for _ in 0..POWER_ITERATIONS {
        let mut next = mat_vec(r, &v);
        let n = vec_norm(&next);
        if !(n > 0.0) || !n.is_finite() {
            return Err(fail("power iteration collapsed"));
        }
        next.iter_mut().for_each(|z| *z /= n);
        let delta = vec_norm(&next.iter().zip(&v).map(|(a, b)| a - b).collect::<Vec<_>>());
        v = next;
        if delta < POWER_TOL {
            break;
        }
    }
    let peak = v
        .iter()
        .copied()
        .max_by(|a, b| a.norm().total_cmp(&b.norm()))
        .unwrap_or(Complex64::new(1.0, 0.0));
    let phase = peak.conj() / peak.norm();
    Ok(v.into_iter().map(|z| z * phase).collect())
}

/// MVDR weights `w_f = R̃ₙ⁻¹a / (aᴴR̃ₙ⁻¹a) · a_ref*`, steering `a` the principal
/// eigenvector of `R̃ₛ`, so that `w_fᴴ a = a_ref`.
pub fn mvdr_from_masks(x: &Spectrogram, mask_s: &Tensor, mask_n: &Tensor, ref_channel: usize) -> Result<BeamformerWeights> {
    let (t, f, k) = (x.frames(), x.bins(), x.channels());
    check_mask(mask_s, t, f)?;
    check_mask(mask_n, t, f)?;
    if ref_channel >= k {
        return Err(Error::InvalidConfig(format!("reference channel {ref_channel} of {k}")));
    }
    let tape = Tape::new();
    let xv = SpecVar::constant(&tape, x);
    let rs = estimate_time_invariant_scm(xv.data, tape.constant(mask_s.clone()))?;
    let rn = estimate_time_invariant_scm(xv.data, tape.constant(mask_n.clone()))?;
    let rn_inv: ComplexVar<'_> = hermitian_inverse(rn, DEFAULT_MWF_EPS).map_err(|e| match e {
        Error::SingularMatrix { batch, .. } => Error::SingularNoiseScm { freq: batch },
        other => other,
    })?;
    let rs = rs.value().to_complex();
    let rn_inv = rn_inv.value().to_complex();
    let kk = k * k;
    let mut w = Vec::with_capacity(f * k);
    for fi in 0..f {
        let a = principal_eigenvector(&rs[fi * kk..(fi + 1) * kk], k, fi)?;
        let num = mat_vec(&rn_inv[fi * kk..(fi + 1) * kk], &a);
        let denom: Complex64 = a.iter().zip(&num).map(|(ai, ni)| ai.conj() * ni).sum();
        if !(denom.norm() > 0.0) {
            return Err(Error::SingularNoiseScm { freq: fi });
        }
        let scale = a[ref_channel].conj() / denom.re;
        let wf: Vec<Complex64> = num.iter().map(|z| z * scale).collect();
        if !(vec_norm(&wf) <= WEIGHT_NORM_LIMIT) {
            return Err(Error::SingularNoiseScm { freq: fi });
        }
        w.extend(wf);
    }
    Ok(BeamformerWeights {
        w: ComplexTensor::from_complex(&[f, k], &w)?,
        reference_channel: ref_channel,
    })
}

/// `y_{t,f} = w_fᴴ x_{t,f}`.
pub fn apply_beamformer(w: &BeamformerWeights, x: &Spectrogram) -> Result<Spectrogram> {
    let (t, f, k) = (x.frames(), x.bins(), x.channels());
    if w.w.shape() != [f, k] {
        return Err(Error::shape("apply_beamformer", w.w.shape(), &[f, k]));
    }
    let wc = w.w.to_complex();
    let mut out = Vec::with_capacity(t * f);
    for ti in 0..t {
        for fi in 0..f {
            out.push((0..k).map(|c| wc[fi * k + c].conj() * x.at(ti, fi, c)).sum());
        }
    }
    Spectrogram::new(ComplexTensor::from_complex(&[t, f, 1], &out)?, x.config, x.num_samples)
}
