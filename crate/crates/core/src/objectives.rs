//! Training objectives.
//!
//! Multi-channel: the posterior negative log-likelihood (`base`), the
//! multi-channel wave approximation (`mwa`) and the consistency-aware
//! combination (`multi`). Monaural baselines on the reference channel: `psa`,
//! `psa_proj` and `wa`. Per-utterance values are sums over bins / samples.

use serde::{Deserialize, Serialize};

use crate::autodiff::{hermitian_inverse, hermitian_logdet, ComplexTensor, ComplexVar, Var};
use crate::enhance::{run_mwf, MaskPsdSet, MwfConfig};
use crate::error::{Error, Result};
use crate::stft::{istft_var, project_var, SpecVar};
use crate::tensor::Tensor;

pub const DEFAULT_LAMBDA: f64 = 1.0;
pub const DEFAULT_PSI_EPS: f64 = 1e-5;
const QUAD_IMAG_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    Base,
    Mwa,
    Multi,
    Psa,
    PsaProj,
    Wa,
}

impl ObjectiveKind {
    pub const ALL: [ObjectiveKind; 6] = [
        ObjectiveKind::Base,
        ObjectiveKind::Mwa,
        ObjectiveKind::Multi,
        ObjectiveKind::Psa,
        ObjectiveKind::PsaProj,
        ObjectiveKind::Wa,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ObjectiveKind::Base => "base",
            ObjectiveKind::Mwa => "mwa",
            ObjectiveKind::Multi => "multi",
            ObjectiveKind::Psa => "psa",
            ObjectiveKind::PsaProj => "psa_proj",
            ObjectiveKind::Wa => "wa",
        }
    }

    /// Whether the objective trains through the multi-channel Wiener filter.
    pub fn is_multichannel(&self) -> bool {
        matches!(self, ObjectiveKind::Base | ObjectiveKind::Mwa | ObjectiveKind::Multi)
    }
}

impl std::str::FromStr for ObjectiveKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ObjectiveKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown objective '{s}'")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ObjectiveConfig {
    pub kind: ObjectiveKind,
    pub lambda: f64,
    pub psi_eps: f64,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        Self {
            kind: ObjectiveKind::Multi,
            lambda: DEFAULT_LAMBDA,
            psi_eps: DEFAULT_PSI_EPS,
        }
    }
}

impl ObjectiveConfig {
    pub fn with_kind(kind: ObjectiveKind) -> Self {
        Self {
            kind,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !(self.psi_eps >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "lambda {} and psi_eps {} must be nonnegative",
                self.lambda, self.psi_eps
            )));
        }
        Ok(())
    }
}

/// Scalar loss plus its named breakdown.
#[derive(Clone, Debug)]
pub struct ObjectiveValue<'t> {
    pub total: Var<'t>,
    pub terms: Vec<(String, Var<'t>)>,
}

impl<'t> ObjectiveValue<'t> {
    pub fn value(&self) -> f64 {
        self.total.item()
    }

    pub fn term(&self, name: &str) -> Option<Var<'t>> {
        self.terms.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }
}

fn check_layout(a: &SpecVar<'_>, b: &SpecVar<'_>) -> Result<()> {
    if a.same_layout(b) {
        Ok(())
    } else {
        Err(Error::ConfigMismatch)
    }
}

/// `Σ_{t,f} dᴴ Ψ⁻¹ d + log det Ψ` with `d = s − ŝ` and trace-relative
/// regularization `psi_eps` on Ψ.
pub fn loss_base<'t>(
    clean: SpecVar<'t>,
    est: SpecVar<'t>,
    psi: ComplexVar<'t>,
    cfg: &ObjectiveConfig,
) -> Result<ObjectiveValue<'t>> {
    check_layout(&clean, &est)?;
    let s = clean.data.shape();
    let (t, f, k) = (s[0], s[1], s[2]);
    if psi.shape() != [t, f, k, k] {
        return Err(Error::shape("loss_base", &psi.shape(), &[t, f, k, k]));
    }
    let d = clean.data.sub(est.data)?;
    let dh = d.conj().reshape(&[t, f, 1, k])?;
    let dcol = d.reshape(&[t, f, k, 1])?;
    let inv = hermitian_inverse(psi, cfg.psi_eps)?;
    let quad = dh.matmul(inv)?.matmul(dcol)?;
    let (qr, qi) = (quad.re.value(), quad.im.value());
    for (batch, (r, i)) in qr.data().iter().zip(qi.data()).enumerate() {
        if i.abs() > QUAD_IMAG_TOL * r.abs().max(f64::MIN_POSITIVE) {
            return Err(Error::NonHermitian {
                batch,
                asymmetry: i.abs(),
            });
        }
    }
    let quad_sum = quad.re.sum();
    let logdet_sum = hermitian_logdet(psi, cfg.psi_eps)?.sum();
    let total = quad_sum.add(logdet_sum)?;
    Ok(ObjectiveValue {
        total,
        terms: vec![
            ("nll".into(), total),
            ("quadratic".into(), quad_sum),
            ("logdet".into(), logdet_sum),
        ],
    })
}

/// `Σ_k ‖istft(S_k) − istft(Ŝ_k)‖₁`.
pub fn loss_mwa<'t>(clean: SpecVar<'t>, est: SpecVar<'t>) -> Result<ObjectiveValue<'t>> {
    check_layout(&clean, &est)?;
    let resid = istft_var(clean)?.sub(istft_var(est)?)?;
    let k = clean.channels();
    let mut terms = Vec::with_capacity(k);
    let mut total: Option<Var<'t>> = None;
    for ch in 0..k {
        let term = resid.slice(1, ch, 1)?.abs().sum();
        total = Some(match total {
            None => term,
            Some(acc) => acc.add(term)?,
        });
        terms.push((format!("wa_ch{ch}"), term));
    }
    let total = total.ok_or_else(|| Error::InvalidConfig("spectrogram has no channels".into()))?;
    Ok(ObjectiveValue { total, terms })
}

/// `L_base + λ Σ_k ‖S_k − P(Ŝ_k)‖²`.
pub fn loss_multi<'t>(
    clean: SpecVar<'t>,
    est: SpecVar<'t>,
    psi: ComplexVar<'t>,
    cfg: &ObjectiveConfig,
) -> Result<ObjectiveValue<'t>> {
    let base = loss_base(clean, est, psi, cfg)?;
    let nll = base.total;
    if cfg.lambda == 0.0 {
        return Ok(ObjectiveValue {
            total: nll,
            terms: vec![("nll".into(), nll)],
        });
    }
    let projected = project_var(est)?;
    let consistency = clean.data.sub(projected.data)?.abs_sq()?.sum().scale(cfg.lambda);
    let total = nll.add(consistency)?;
    Ok(ObjectiveValue {
        total,
        terms: vec![("nll".into(), nll), ("consistency".into(), consistency)],
    })
}

/// Phase-sensitive target `clamp(|S| cos(∠S − ∠X), 0, |X|)` placed on the
/// phase of `X`; zero where `X` vanishes.
pub fn psa_target(clean: &ComplexTensor, noisy: &ComplexTensor) -> Result<ComplexTensor> {
    if clean.shape() != noisy.shape() {
        return Err(Error::shape("psa_target", clean.shape(), noisy.shape()));
    }
    let n = clean.numel();
    let mut re = Vec::with_capacity(n);
    let mut im = Vec::with_capacity(n);
    for i in 0..n {
        let s = clean.get(i);
        let x = noisy.get(i);
        let ax = x.norm();
        if ax == 0.0 {
            re.push(0.0);
            im.push(0.0);
            continue;
        }
        // |S| cos(∠S − ∠X) = Re(S X*) / |X|
        let target = ((s * x.conj()).re / ax).clamp(0.0, ax);
        re.push(target * x.re / ax);
        im.push(target * x.im / ax);
    }
    let shape = clean.shape().to_vec();
    ComplexTensor::new(Tensor::new(shape.clone(), re)?, Tensor::new(shape, im)?)
}

fn masked<'t>(noisy_ref: SpecVar<'t>, mask: Var<'t>) -> Result<SpecVar<'t>> {
    let s = noisy_ref.data.shape();
    if s.len() != 3 || s[2] != 1 || mask.shape() != s[..2] {
        return Err(Error::shape("masked estimate", &mask.shape(), &s));
    }
    let data = noisy_ref.data.mul_real(mask.reshape(&[s[0], s[1], 1])?)?;
    SpecVar::from_parts(data, noisy_ref.config, noisy_ref.num_samples)
}

/// `Σ |Y − T e^{i∠X}|²` with `Y = M ⊙ X`, or `Y = P(M ⊙ X)` when `projected`.
pub fn loss_psa<'t>(
    clean_ref: SpecVar<'t>,
    noisy_ref: SpecVar<'t>,
    mask: Var<'t>,
    projected: bool,
) -> Result<ObjectiveValue<'t>> {
    check_layout(&clean_ref, &noisy_ref)?;
    let mut est = masked(noisy_ref, mask)?;
    if projected {
        est = project_var(est)?;
    }
    let target = psa_target(&clean_ref.data.value(), &noisy_ref.data.value())?;
    let target = ComplexVar::constant(mask.tape(), &target);
    let total = est.data.sub(target)?.abs_sq()?.sum();
    let name = if projected { "psa_proj" } else { "psa" };
    Ok(ObjectiveValue {
        total,
        terms: vec![(name.into(), total)],
    })
}

/// `‖istft(S) − istft(M ⊙ X)‖₁` on the reference channel.
pub fn loss_wa_monaural<'t>(clean_ref: SpecVar<'t>, noisy_ref: SpecVar<'t>, mask: Var<'t>) -> Result<ObjectiveValue<'t>> {
    check_layout(&clean_ref, &noisy_ref)?;
    let est = masked(noisy_ref, mask)?;
    let wa = loss_mwa(clean_ref, est)?;
    Ok(ObjectiveValue {
        total: wa.total,
        terms: vec![("wa".into(), wa.total)],
    })
}

/// Evaluates `cfg.kind` for one utterance starting from the network outputs.
/// Monaural kinds use `mask_s` on channel `ref_channel`.
pub fn pipeline_loss<'t>(
    noisy: SpecVar<'t>,
    clean: SpecVar<'t>,
    outputs: &MaskPsdSet<'t>,
    mwf: &MwfConfig,
    cfg: &ObjectiveConfig,
    ref_channel: usize,
) -> Result<ObjectiveValue<'t>> {
    cfg.validate()?;
    check_layout(&noisy, &clean)?;
    if cfg.kind.is_multichannel() {
        let out = run_mwf(noisy, outputs, mwf)?;
        return match cfg.kind {
            ObjectiveKind::Base => loss_base(clean, out.estimate, out.psi, cfg),
            ObjectiveKind::Mwa => loss_mwa(clean, out.estimate),
            _ => loss_multi(clean, out.estimate, out.psi, cfg),
        };
    }
    let c = clean.channel(ref_channel)?;
    let x = noisy.channel(ref_channel)?;
    match cfg.kind {
        ObjectiveKind::Psa => loss_psa(c, x, outputs.mask_s, false),
        ObjectiveKind::PsaProj => loss_psa(c, x, outputs.mask_s, true),
        _ => loss_wa_monaural(c, x, outputs.mask_s),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tape;
    use crate::stft::{Spectrogram, StftConfig};

    fn cfg() -> StftConfig {
        StftConfig::new(16_000, 14, 7).unwrap()
    }

    fn spec(k: usize, seed: f64) -> Spectrogram {
        let c = cfg();
        let t = c.num_frames(28).unwrap();
        let f = c.num_bins();
        let n = t * f * k;
        let re = Tensor::new(vec![t, f, k], (0..n).map(|i| (i as f64 * seed).sin()).collect()).unwrap();
        let im = Tensor::new(vec![t, f, k], (0..n).map(|i| (i as f64 * seed * 1.7).cos()).collect()).unwrap();
        Spectrogram::new(ComplexTensor::new(re, im).unwrap(), c, 28).unwrap()
    }

    fn identity_psi(t: usize, f: usize, k: usize) -> ComplexTensor {
        let mut re = vec![0.0; t * f * k * k];
        for b in 0..t * f {
            for i in 0..k {
                re[b * k * k + i * k + i] = 1.0;
            }
        }
        ComplexTensor::new(
            Tensor::new(vec![t, f, k, k], re).unwrap(),
            Tensor::zeros(&[t, f, k, k]),
        )
        .unwrap()
    }

    #[test]
    fn base_is_zero_for_perfect_estimate_and_identity_psi() {
        let tape = Tape::new();
        let s = spec(2, 0.3);
        let sv = SpecVar::constant(&tape, &s);
        let psi = ComplexVar::constant(&tape, &identity_psi(4, 8, 2));
        let c = ObjectiveConfig {
            psi_eps: 0.0,
            ..ObjectiveConfig::default()
        };
        assert_eq!(loss_base(sv, sv, psi, &c).unwrap().value(), 0.0);
    }

    #[test]
    fn mwa_of_identical_is_zero() {
        let tape = Tape::new();
        let s = SpecVar::constant(&tape, &spec(2, 0.3));
        assert_eq!(loss_mwa(s, s).unwrap().value(), 0.0);
    }

    #[test]
    fn multi_with_zero_lambda_is_base() {
        let tape = Tape::new();
        let s = SpecVar::constant(&tape, &spec(2, 0.3));
        let e = SpecVar::constant(&tape, &spec(2, 0.7));
        let psi = ComplexVar::constant(&tape, &identity_psi(4, 8, 2));
        let mut c = ObjectiveConfig::default();
        let base = loss_base(s, e, psi, &c).unwrap().value();
        c.lambda = 0.0;
        assert_eq!(loss_multi(s, e, psi, &c).unwrap().value().to_bits(), base.to_bits());
    }

    #[test]
    fn psa_perfect_mask_is_zero() {
        let tape = Tape::new();
        let s = SpecVar::constant(&tape, &spec(1, 0.3));
        let mask = tape.constant(Tensor::ones(&[4, 8]));
        assert!(loss_psa(s, s, mask, false).unwrap().value() < 1e-24);
    }

    #[test]
    fn psa_target_is_clamped() {
        let clean = ComplexTensor::from_complex(&[2], &[(-1.0).into(), (3.0).into()]).unwrap();
        let noisy = ComplexTensor::from_complex(&[2], &[(1.0).into(), (2.0).into()]).unwrap();
        let t = psa_target(&clean, &noisy).unwrap();
        assert_eq!(t.re.data(), &[0.0, 2.0]);
    }

    #[test]
    fn kind_names_round_trip() {
        for k in ObjectiveKind::ALL {
            assert_eq!(k.name().parse::<ObjectiveKind>().unwrap(), k);
        }
        assert!("nope".parse::<ObjectiveKind>().is_err());
    }
}
