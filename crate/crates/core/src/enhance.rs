//! Mask-weighted spatial covariance estimation and the time-varying
//! multi-channel Wiener filter.
//!
//! Everything here runs on a [`Tape`] so that the training objectives can
//! differentiate through it; [`mwf_enhance`] wraps a throwaway tape for
//! inference.

use serde::{Deserialize, Serialize};

use crate::autodiff::{hermitian_inverse, ComplexTensor, ComplexVar, Tape, Var};
use crate::error::{Error, Result};
use crate::stft::{SpecVar, Spectrogram};
use crate::tensor::Tensor;

pub const DEFAULT_MWF_EPS: f64 = 1e-6;
const MASK_SUM_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NoiseScmMode {
    /// `R̂ₙ = Vₙ R̃ₙ`, same as speech.
    #[default]
    TimeVarying,
    /// `R̂ₙ = R̃ₙ` at every frame.
    TimeInvariant,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MwfConfig {
    pub eps: f64,
    pub noise_mode: NoiseScmMode,
}

impl Default for MwfConfig {
    fn default() -> Self {
        Self {
            eps: DEFAULT_MWF_EPS,
            noise_mode: NoiseScmMode::TimeVarying,
        }
    }
}

/// Masks and PSDs, all `T × F`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskPsd {
    pub mask_s: Tensor,
    pub mask_n: Tensor,
    pub psd_s: Tensor,
    pub psd_n: Tensor,
}

impl MaskPsd {
    pub fn validate(&self) -> Result<()> {
        let shape = self.mask_s.shape();
        for (name, t) in [
            ("mask_s", &self.mask_s),
            ("mask_n", &self.mask_n),
            ("psd_s", &self.psd_s),
            ("psd_n", &self.psd_n),
        ] {
            if t.shape() != shape || t.ndim() != 2 {
                return Err(Error::shape("MaskPsd", t.shape(), shape));
            }
            if !t.is_finite() {
                return Err(Error::NonFiniteInput(name.to_string()));
            }
        }
        for (name, t) in [("mask_s", &self.mask_s), ("mask_n", &self.mask_n)] {
            if let Some(v) = t.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::DomainError {
                    op: "MaskPsd",
                    detail: format!("{name} entry {v} outside [0, 1]"),
                });
            }
        }
        for t in [&self.psd_s, &self.psd_n] {
            check_psd(t)?;
        }
        Ok(())
    }

    pub fn on_tape<'t>(&self, tape: &'t Tape) -> MaskPsdSet<'t> {
        MaskPsdSet {
            mask_s: tape.constant(self.mask_s.clone()),
            mask_n: tape.constant(self.mask_n.clone()),
            psd_s: tape.constant(self.psd_s.clone()),
            psd_n: tape.constant(self.psd_n.clone()),
        }
    }
}

/// Masks and PSDs recorded on a tape.
#[derive(Clone, Copy, Debug)]
pub struct MaskPsdSet<'t> {
    pub mask_s: Var<'t>,
    pub mask_n: Var<'t>,
    pub psd_s: Var<'t>,
    pub psd_n: Var<'t>,
}

impl MaskPsdSet<'_> {
    pub fn value(&self) -> MaskPsd {
        MaskPsd {
            mask_s: (*self.mask_s.value()).clone(),
            mask_n: (*self.mask_n.value()).clone(),
            psd_s: (*self.psd_s.value()).clone(),
            psd_n: (*self.psd_n.value()).clone(),
        }
    }
}

/// Speech and noise SCMs: `F × K × K` time-invariant, `T × F × K × K`
/// time-varying.
#[derive(Clone, Copy, Debug)]
pub struct ScmField<'t> {
    pub speech_ti: ComplexVar<'t>,
    pub noise_ti: ComplexVar<'t>,
    pub speech_tv: ComplexVar<'t>,
    pub noise_tv: ComplexVar<'t>,
}

fn check_psd(t: &Tensor) -> Result<()> {
    match t.data().iter().position(|&v| v < 0.0) {
        Some(index) => Err(Error::NegativePsd {
            index,
            value: t.data()[index],
        }),
        None => Ok(()),
    }
}

/// `R̃_f = Σ_t M x xᴴ / Σ_t M` for `x: T × F × K`, `mask: T × F`.
pub fn estimate_time_invariant_scm<'t>(x: ComplexVar<'t>, mask: Var<'t>) -> Result<ComplexVar<'t>> {
    let xs = x.shape();
    let ms = mask.shape();
    if xs.len() != 3 || ms != xs[..2] {
        return Err(Error::shape("estimate_time_invariant_scm", &xs, &ms));
    }
    let (t, f, k) = (xs[0], xs[1], xs[2]);
    let mv = mask.value();
    if let Some(v) = mv.data().iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::DomainError {
            op: "estimate_time_invariant_scm",
            detail: format!("mask entry {v} is negative or NaN"),
        });
    }
    let mut sums = vec![0.0; f];
    for (i, v) in mv.data().iter().enumerate() {
        sums[i % f] += v;
    }
    if let Some(freq) = sums.iter().position(|&s| s < MASK_SUM_FLOOR) {
        return Err(Error::ZeroMaskColumn { freq, sum: sums[freq] });
    }
    let col = x.reshape(&[t, f, k, 1])?;
    let row = x.conj().reshape(&[t, f, 1, k])?;
    let outer = col.matmul(row)?;
    let weighted = outer.mul_real(mask.reshape(&[t, f, 1, 1])?)?.sum_axis(0)?;
    let denom = mask.sum_axis(0)?.reshape(&[f, 1, 1])?;
    Ok(ComplexVar {
        re: weighted.re.div(denom, 0.0)?,
        im: weighted.im.div(denom, 0.0)?,
    })
}

/// `R̂_{t,f} = V_{t,f} R̃_f`.
pub fn scale_time_varying<'t>(scm: ComplexVar<'t>, psd: Var<'t>) -> Result<ComplexVar<'t>> {
    let ss = scm.shape();
    let ps = psd.shape();
    if ss.len() != 3 || ps.len() != 2 || ps[1] != ss[0] {
        return Err(Error::shape("scale_time_varying", &ss, &ps));
    }
    check_psd(&psd.value())?;
    scm.mul_real(psd.reshape(&[ps[0], ps[1], 1, 1])?)
}

/// `W = R_s (R_s + R_n)⁻¹` per bin.
pub fn wiener_filter<'t>(r_s: ComplexVar<'t>, r_n: ComplexVar<'t>, eps: f64) -> Result<ComplexVar<'t>> {
    if r_s.shape() != r_n.shape() {
        return Err(Error::shape("wiener_filter", &r_s.shape(), &r_n.shape()));
    }
    r_s.matmul(hermitian_inverse(r_s.add(r_n)?, eps)?)
}

/// `ŝ_{t,f} = W_{t,f} x_{t,f}`.
pub fn apply_mwf<'t>(w: ComplexVar<'t>, x: SpecVar<'t>) -> Result<SpecVar<'t>> {
    let xs = x.data.shape();
    let ws = w.shape();
    if ws.len() != 4 || ws[..3] != xs[..] || ws[3] != xs[2] {
        return Err(Error::shape("apply_mwf", &ws, &xs));
    }
    let (t, f, k) = (xs[0], xs[1], xs[2]);
    let out = w.matmul(x.data.reshape(&[t, f, k, 1])?)?.reshape(&[t, f, k])?;
    SpecVar::from_parts(out, x.config, x.num_samples)
}

fn complex_identity(tape: &Tape, k: usize) -> ComplexVar<'_> {
    ComplexVar::constant(
        tape,
        &ComplexTensor {
            re: Tensor::eye(k),
            im: Tensor::zeros(&[k, k]),
        },
    )
}

/// `Ψ = herm((I − W) R_s)`.
pub fn posterior_covariance<'t>(w: ComplexVar<'t>, r_s: ComplexVar<'t>) -> Result<ComplexVar<'t>> {
    let ws = w.shape();
    if ws != r_s.shape() || ws.len() < 2 {
        return Err(Error::shape("posterior_covariance", &ws, &r_s.shape()));
    }
    let k = ws[ws.len() - 1];
    let eye = complex_identity(w.tape(), k);
    eye.sub(w)?.matmul(r_s)?.hermitian_part()
}

/// Time-invariant and time-varying SCMs for both sources.
pub fn estimate_scm_field<'t>(x: ComplexVar<'t>, m: &MaskPsdSet<'t>, mode: NoiseScmMode) -> Result<ScmField<'t>> {
    let speech_ti = estimate_time_invariant_scm(x, m.mask_s)?;
    let noise_ti = estimate_time_invariant_scm(x, m.mask_n)?;
    let speech_tv = scale_time_varying(speech_ti, m.psd_s)?;
    let noise_tv = match mode {
        NoiseScmMode::TimeVarying => scale_time_varying(noise_ti, m.psd_n)?,
        NoiseScmMode::TimeInvariant => {
            let ones = x.tape().constant(Tensor::ones(&m.psd_n.shape()));
            scale_time_varying(noise_ti, ones)?
        }
    };
    Ok(ScmField {
        speech_ti,
        noise_ti,
        speech_tv,
        noise_tv,
    })
}

/// Everything the MWF stage produces for one utterance.
#[derive(Clone, Copy, Debug)]
pub struct MwfOutput<'t> {
    pub scm: ScmField<'t>,
    pub w: ComplexVar<'t>,
    pub estimate: SpecVar<'t>,
    pub psi: ComplexVar<'t>,
}

/// Masks/PSDs → SCMs → W → (ŝ, Ψ).
pub fn run_mwf<'t>(x: SpecVar<'t>, m: &MaskPsdSet<'t>, cfg: &MwfConfig) -> Result<MwfOutput<'t>> {
    let scm = estimate_scm_field(x.data, m, cfg.noise_mode)?;
    let w = wiener_filter(scm.speech_tv, scm.noise_tv, cfg.eps)?;
    let estimate = apply_mwf(w, x)?;
    let psi = posterior_covariance(w, scm.speech_tv)?;
    Ok(MwfOutput { scm, w, estimate, psi })
}

/// Inference-only MWF enhancement.
pub fn mwf_enhance(x: &Spectrogram, m: &MaskPsd, cfg: &MwfConfig) -> Result<Spectrogram> {
    m.validate()?;
    let tape = Tape::new();
    let xv = SpecVar::constant(&tape, x);
    let out = run_mwf(xv, &m.on_tape(&tape), cfg)?;
    Ok(out.estimate.value())
}

/// Lower bound applied to oracle masks so every frequency keeps a usable
/// SCM estimate.
pub const ORACLE_MASK_FLOOR: f64 = 1e-6;

/// Ideal masks and PSDs from the true speech and noise images.
///
/// Masks are `|S|² / (|S|² + |N|²)` on `ref_channel` and its complement, both
/// floored at [`ORACLE_MASK_FLOOR`]. PSDs are `|S_ref|²` and `|N_ref|²`
/// divided by the per-channel trace of the matching mask-weighted SCM, so
/// that `V R̃` reproduces the true reference-channel power.
pub fn oracle_mask_psd(noisy: &Spectrogram, speech: &Spectrogram, noise: &Spectrogram, ref_channel: usize) -> Result<MaskPsd> {
    if !noisy.same_layout(speech) || !noisy.same_layout(noise) {
        return Err(Error::ConfigMismatch);
    }
    let (t, f, k) = (noisy.frames(), noisy.bins(), noisy.channels());
    if ref_channel >= k {
        return Err(Error::InvalidConfig(format!("reference channel {ref_channel} of {k}")));
    }
    let mut mask_s = Vec::with_capacity(t * f);
    let mut pow_s = Vec::with_capacity(t * f);
    let mut pow_n = Vec::with_capacity(t * f);
    for ti in 0..t {
        for fi in 0..f {
            let ps = speech.at(ti, fi, ref_channel).norm_sqr();
            let pn = noise.at(ti, fi, ref_channel).norm_sqr();
            mask_s.push(if ps + pn > 0.0 { ps / (ps + pn) } else { 0.5 });
            pow_s.push(ps);
            pow_n.push(pn);
        }
    }
    let mask_n: Vec<f64> = mask_s.iter().map(|m| (1.0 - m).max(ORACLE_MASK_FLOOR)).collect();
    let mask_s: Vec<f64> = mask_s.iter().map(|m| m.max(ORACLE_MASK_FLOOR)).collect();
    let mask_s = Tensor::new(vec![t, f], mask_s)?;
    let mask_n = Tensor::new(vec![t, f], mask_n)?;

    let tape = Tape::new();
    let x = SpecVar::constant(&tape, noisy);
    let per_channel_trace = |mask: &Tensor| -> Result<Vec<f64>> {
        let r = estimate_time_invariant_scm(x.data, tape.constant(mask.clone()))?.value();
        Ok((0..f)
            .map(|fi| (0..k).map(|c| r.re.data()[(fi * k + c) * k + c]).sum::<f64>() / k as f64)
            .collect())
    };
    let normalize = |pow: Vec<f64>, trace: Vec<f64>| -> Result<Tensor> {
        let data = pow
            .iter()
            .enumerate()
            .map(|(i, p)| if trace[i % f] > 0.0 { p / trace[i % f] } else { 0.0 })
            .collect();
        Tensor::new(vec![t, f], data)
    };
    let psd_s = normalize(pow_s, per_channel_trace(&mask_s)?)?;
    let psd_n = normalize(pow_n, per_channel_trace(&mask_n)?)?;
    Ok(MaskPsd {
        mask_s,
        mask_n,
        psd_s,
        psd_n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cvar<'a>(tape: &'a Tape, shape: &[usize], re: Vec<f64>, im: Vec<f64>) -> ComplexVar<'a> {
        ComplexVar::constant(
            tape,
            &ComplexTensor {
                re: Tensor::new(shape.to_vec(), re).unwrap(),
                im: Tensor::new(shape.to_vec(), im).unwrap(),
            },
        )
    }

    #[test]
    fn single_frame_scm_is_outer_product() {
        let tape = Tape::new();
        let x = cvar(&tape, &[1, 1, 2], vec![1.0, 2.0], vec![0.5, -1.0]);
        let mask = tape.constant(Tensor::new(vec![1, 1], vec![1.0]).unwrap());
        let r = estimate_time_invariant_scm(x, mask).unwrap().value();
        // x xᴴ with x = [1+0.5i, 2−i]
        assert_eq!(r.re.data(), &[1.25, 1.5, 1.5, 5.0]);
        assert_eq!(r.im.data(), &[0.0, 2.0, -2.0, 0.0]);
    }

    #[test]
    fn zero_mask_column_is_reported() {
        let tape = Tape::new();
        let x = cvar(&tape, &[2, 2, 1], vec![1.0; 4], vec![0.0; 4]);
        let mask = tape.constant(Tensor::new(vec![2, 2], vec![1.0, 0.0, 1.0, 0.0]).unwrap());
        assert!(matches!(
            estimate_time_invariant_scm(x, mask),
            Err(Error::ZeroMaskColumn { freq: 1, .. })
        ));
    }

    #[test]
    fn negative_psd_is_rejected() {
        let tape = Tape::new();
        let scm = cvar(&tape, &[1, 1, 1], vec![1.0], vec![0.0]);
        let psd = tape.constant(Tensor::new(vec![1, 1], vec![-0.5]).unwrap());
        assert!(matches!(scale_time_varying(scm, psd), Err(Error::NegativePsd { .. })));
    }

    #[test]
    fn scalar_wiener_gain() {
        let tape = Tape::new();
        let rs = cvar(&tape, &[1, 1, 1, 1], vec![3.0], vec![0.0]);
        let rn = cvar(&tape, &[1, 1, 1, 1], vec![1.0], vec![0.0]);
        let w = wiener_filter(rs, rn, 0.0).unwrap();
        assert_eq!(w.value().re.data(), &[0.75]);
        let psi = posterior_covariance(w, rs).unwrap();
        assert!((psi.value().re.data()[0] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn noiseless_limit() {
        let tape = Tape::new();
        let rs = cvar(&tape, &[1, 1, 2, 2], vec![1.0, 0.0, 0.0, 1.0], vec![0.0; 4]);
        let rn = cvar(&tape, &[1, 1, 2, 2], vec![0.0; 4], vec![0.0; 4]);
        let w = wiener_filter(rs, rn, 0.0).unwrap();
        assert_eq!(w.value().re.data(), &[1.0, 0.0, 0.0, 1.0]);
        let psi = posterior_covariance(w, rs).unwrap().value();
        assert_eq!(psi.norm_sq(), 0.0);
    }
}
