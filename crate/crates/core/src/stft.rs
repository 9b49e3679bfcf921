//! Multi-channel STFT analysis / synthesis and the consistency projection.
//!
//! Analysis: optional half-window reflection padding, periodic Hann window,
//! one-sided real FFT. Synthesis: per-frame inverse real FFT, overlap-add with
//! the same window, fold-back of the padded region and division by the folded
//! `Σ w²`. Synthesis is the least-squares inverse of analysis, so
//! `istft(stft(x)) = x` and `stft ∘ istft` is idempotent.
//!
//! Both directions are linear maps; the tape versions record their exact
//! adjoints. Layouts: time signals `N × K`, spectrograms `T × F × K`.

use std::f64::consts::PI;
use std::rc::Rc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::autodiff::{BackwardFn, ComplexTensor, ComplexVar, Var};
use crate::error::{Error, Result};
use crate::fft::FftPlan;
use crate::signal::{TimeSignal, DEFAULT_SAMPLE_RATE};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowKind {
    Hann,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct StftConfig {
    pub sample_rate: u32,
    pub win_len: usize,
    pub hop: usize,
    pub window: WindowKind,
    pub fft_size: usize,
    pub center_padding: bool,
}

impl Default for StftConfig {
    /// 16 kHz, 32 ms Hann window, 8 ms hop.
    fn default() -> Self {
        Self {
            sample_rate: DEFAULT_SAMPLE_RATE,
            win_len: 512,
            hop: 128,
            window: WindowKind::Hann,
            fft_size: 512,
            center_padding: true,
        }
    }
}

impl StftConfig {
    pub fn new(sample_rate: u32, win_len: usize, hop: usize) -> Result<Self> {
        let cfg = Self {
            sample_rate,
            win_len,
            hop,
            window: WindowKind::Hann,
            fft_size: win_len,
            center_padding: true,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.win_len < 2 || self.hop == 0 {
            return bad(format!("win_len {} / hop {}", self.win_len, self.hop));
        }
        if !self.win_len.is_multiple_of(self.hop) {
            return bad(format!("hop {} does not divide win_len {}", self.hop, self.win_len));
        }
        if self.fft_size != self.win_len {
            return bad(format!("fft_size {} must equal win_len {}", self.fft_size, self.win_len));
        }
        if !self.fft_size.is_multiple_of(2) {
            return bad(format!("fft_size {} must be even", self.fft_size));
        }
        if self.sample_rate == 0 {
            return bad("sample_rate must be positive".into());
        }
        Ok(())
    }

    /// One-sided bin count `fft_size / 2 + 1`.
    pub fn num_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    fn pad(&self) -> usize {
        if self.center_padding {
            self.win_len / 2
        } else {
            0
        }
    }

    pub fn num_frames(&self, num_samples: usize) -> Result<usize> {
        if self.center_padding {
            if num_samples <= self.pad() {
                return Err(Error::TooShort {
                    samples: num_samples,
                    required: self.pad() + 1,
                });
            }
            Ok(num_samples.div_ceil(self.hop))
        } else {
            if num_samples < self.win_len {
                return Err(Error::TooShort {
                    samples: num_samples,
                    required: self.win_len,
                });
            }
            Ok(1 + (num_samples - self.win_len) / self.hop)
        }
    }

    pub fn window(&self) -> Vec<f64> {
        match self.window {
            WindowKind::Hann => (0..self.win_len)
                .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / self.win_len as f64).cos())
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Spectrogram {
    /// `T × F × K`.
    pub data: ComplexTensor,
    pub config: StftConfig,
    pub num_samples: usize,
}

impl Spectrogram {
    pub fn new(data: ComplexTensor, config: StftConfig, num_samples: usize) -> Result<Self> {
        config.validate()?;
        let s = data.shape();
        let frames = config.num_frames(num_samples)?;
        if s.len() != 3 || s[0] != frames || s[1] != config.num_bins() {
            return Err(Error::shape("Spectrogram::new", s, &[frames, config.num_bins()]));
        }
        Ok(Self {
            data,
            config,
            num_samples,
        })
    }

    pub fn zeros(config: StftConfig, num_samples: usize, channels: usize) -> Result<Self> {
        let t = config.num_frames(num_samples)?;
        Self::new(
            ComplexTensor::zeros(&[t, config.num_bins(), channels]),
            config,
            num_samples,
        )
    }

    pub fn frames(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn bins(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn channels(&self) -> usize {
        self.data.shape()[2]
    }

    pub fn at(&self, t: usize, f: usize, k: usize) -> Complex64 {
        self.data.get((t * self.bins() + f) * self.channels() + k)
    }

    /// One-channel spectrogram of channel `k`.
    pub fn channel(&self, k: usize) -> Spectrogram {
        let (t, f, kc) = (self.frames(), self.bins(), self.channels());
        let pick = |src: &Tensor| {
            let data = src.data().iter().skip(k).step_by(kc).copied().collect();
            Tensor::new(vec![t, f, 1], data).expect("channel shape")
        };
        Spectrogram {
            data: ComplexTensor {
                re: pick(&self.data.re),
                im: pick(&self.data.im),
            },
            config: self.config,
            num_samples: self.num_samples,
        }
    }

    pub fn same_layout(&self, other: &Spectrogram) -> bool {
        self.config == other.config && self.num_samples == other.num_samples && self.data.shape() == other.data.shape()
    }
}

/// Frame geometry plus the FFT plan for one signal length.
struct Framer {
    cfg: StftConfig,
    n: usize,
    frames: usize,
    padded: usize,
    window: Vec<f64>,
    plan: FftPlan,
    /// `1 / Σw²` after fold-back, zero where no frame contributes.
    inv_norm: Vec<f64>,
}

impl Framer {
    fn new(cfg: StftConfig, n: usize) -> Result<Self> {
        cfg.validate()?;
        let frames = cfg.num_frames(n)?;
        let padded = n + 2 * cfg.pad();
        let window = cfg.window();
        let mut framer = Self {
            cfg,
            n,
            frames,
            padded,
            plan: FftPlan::new(cfg.fft_size),
            window,
            inv_norm: Vec::new(),
        };
        let mut wsum = vec![0.0; padded];
        for t in 0..frames {
            for (i, w) in framer.window.iter().enumerate() {
                wsum[t * cfg.hop + i] += w * w;
            }
        }
        let norm = framer.pad_adjoint(&wsum);
        let covered: Vec<bool> = norm.iter().map(|&v| v > 1e-12).collect();
        let first = covered.iter().position(|&c| c);
        let last = covered.iter().rposition(|&c| c);
        if let (Some(a), Some(b)) = (first, last) {
            if covered[a..=b].iter().any(|&c| !c) {
                return Err(Error::InvalidConfig("window-square sum vanishes inside the signal".into()));
            }
        }
        framer.inv_norm = norm
            .iter()
            .zip(&covered)
            .map(|(&v, &c)| if c { 1.0 / v } else { 0.0 })
            .collect();
        Ok(framer)
    }

    fn bins(&self) -> usize {
        self.cfg.num_bins()
    }

    fn source_index(&self, i: usize) -> usize {
        let pad = self.cfg.pad() as isize;
        let n = self.n as isize;
        let j = i as isize - pad;
        let j = if j < 0 {
            -j
        } else if j >= n {
            2 * (n - 1) - j
        } else {
            j
        };
        j as usize
    }

    fn pad(&self, x: &[f64]) -> Vec<f64> {
        (0..self.padded).map(|i| x[self.source_index(i)]).collect()
    }

    fn pad_adjoint(&self, xp: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (i, v) in xp.iter().enumerate() {
            out[self.source_index(i)] += v;
        }
        out
    }

    fn channel_of(data: &[f64], k: usize, kc: usize) -> Vec<f64> {
        data.iter().skip(k).step_by(kc).copied().collect()
    }

    /// `x`: `N × K` → (re, im) `T × F × K`.
    fn analyze(&self, x: &[f64], kc: usize) -> (Vec<f64>, Vec<f64>) {
        let (t_len, f_len) = (self.frames, self.bins());
        let mut re = vec![0.0; t_len * f_len * kc];
        let mut im = vec![0.0; t_len * f_len * kc];
        let mut scratch = Vec::with_capacity(self.cfg.fft_size);
        let mut frame = vec![0.0; self.cfg.fft_size];
        for k in 0..kc {
            let xp = self.pad(&Self::channel_of(x, k, kc));
            for t in 0..t_len {
                let start = t * self.cfg.hop;
                for (i, w) in self.window.iter().enumerate() {
                    frame[i] = w * xp[start + i];
                }
                let spec = self.plan.rfft(&frame, &mut scratch);
                for (f, z) in spec.iter().enumerate() {
                    let idx = (t * f_len + f) * kc + k;
                    re[idx] = z.re;
                    im[idx] = z.im;
                }
            }
        }
        (re, im)
    }

    fn analyze_adjoint(&self, gre: &[f64], gim: &[f64], kc: usize) -> Vec<f64> {
        let (t_len, f_len, nfft) = (self.frames, self.bins(), self.cfg.fft_size);
        let mut out = vec![0.0; self.n * kc];
        let mut buf = vec![Complex64::new(0.0, 0.0); nfft];
        for k in 0..kc {
            let mut gp = vec![0.0; self.padded];
            for t in 0..t_len {
                buf.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
                for (f, z) in buf.iter_mut().take(f_len).enumerate() {
                    let idx = (t * f_len + f) * kc + k;
                    *z = Complex64::new(gre[idx], gim[idx]);
                }
                self.plan.inverse(&mut buf);
                let start = t * self.cfg.hop;
                for (i, w) in self.window.iter().enumerate() {
                    gp[start + i] += w * buf[i].re;
                }
            }
            for (i, v) in self.pad_adjoint(&gp).into_iter().enumerate() {
                out[i * kc + k] = v;
            }
        }
        out
    }

    /// (re, im) `T × F × K` → `N × K`.
    fn synthesize(&self, re: &[f64], im: &[f64], kc: usize) -> Vec<f64> {
        let (t_len, f_len) = (self.frames, self.bins());
        let mut out = vec![0.0; self.n * kc];
        let mut scratch = Vec::with_capacity(self.cfg.fft_size);
        let mut spec = vec![Complex64::new(0.0, 0.0); f_len];
        for k in 0..kc {
            let mut acc = vec![0.0; self.padded];
            for t in 0..t_len {
                for (f, z) in spec.iter_mut().enumerate() {
                    let idx = (t * f_len + f) * kc + k;
                    *z = Complex64::new(re[idx], im[idx]);
                }
                let y = self.plan.irfft(&spec, &mut scratch);
                let start = t * self.cfg.hop;
                for (i, w) in self.window.iter().enumerate() {
                    acc[start + i] += w * y[i];
                }
            }
            for (i, v) in self.pad_adjoint(&acc).into_iter().enumerate() {
                out[i * kc + k] = v * self.inv_norm[i];
            }
        }
        out
    }

    fn synthesize_adjoint(&self, g: &[f64], kc: usize) -> (Vec<f64>, Vec<f64>) {
        let (t_len, f_len, nfft) = (self.frames, self.bins(), self.cfg.fft_size);
        let mut re = vec![0.0; t_len * f_len * kc];
        let mut im = vec![0.0; t_len * f_len * kc];
        let mut scratch = Vec::with_capacity(nfft);
        let mut frame = vec![0.0; nfft];
        let nyquist = nfft / 2;
        for k in 0..kc {
            let scaled: Vec<f64> = Self::channel_of(g, k, kc)
                .iter()
                .zip(&self.inv_norm)
                .map(|(a, b)| a * b)
                .collect();
            let gp = self.pad(&scaled);
            for t in 0..t_len {
                let start = t * self.cfg.hop;
                for (i, w) in self.window.iter().enumerate() {
                    frame[i] = w * gp[start + i];
                }
                let spec = self.plan.rfft(&frame, &mut scratch);
                for (f, z) in spec.iter().enumerate() {
                    let idx = (t * f_len + f) * kc + k;
                    if f == 0 || f == nyquist {
                        re[idx] = z.re / nfft as f64;
                        im[idx] = 0.0;
                    } else {
                        re[idx] = 2.0 * z.re / nfft as f64;
                        im[idx] = 2.0 * z.im / nfft as f64;
                    }
                }
            }
        }
        (re, im)
    }
}

fn check_finite(t: &Tensor, what: &str) -> Result<()> {
    if t.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFiniteInput(what.to_string()))
    }
}

pub fn stft(x: &TimeSignal, cfg: &StftConfig) -> Result<Spectrogram> {
    if x.sample_rate != cfg.sample_rate {
        return Err(Error::InvalidConfig(format!(
            "signal rate {} Hz vs STFT rate {} Hz",
            x.sample_rate, cfg.sample_rate
        )));
    }
    check_finite(&x.samples, "stft input")?;
    let (n, kc) = (x.len(), x.channels());
    let framer = Framer::new(*cfg, n)?;
    let (re, im) = framer.analyze(x.samples.data(), kc);
    let shape = vec![framer.frames, framer.bins(), kc];
    Ok(Spectrogram {
        data: ComplexTensor::new(Tensor::new(shape.clone(), re)?, Tensor::new(shape, im)?)?,
        config: *cfg,
        num_samples: n,
    })
}

pub fn istft(s: &Spectrogram) -> Result<TimeSignal> {
    let framer = Framer::new(s.config, s.num_samples)?;
    let kc = s.channels();
    let out = framer.synthesize(s.data.re.data(), s.data.im.data(), kc);
    TimeSignal::new(Tensor::new(vec![s.num_samples, kc], out)?, s.config.sample_rate)
}

/// `stft(istft(s))` with the same configuration.
pub fn project_consistent(s: &Spectrogram) -> Result<Spectrogram> {
    stft(&istft(s)?, &s.config)
}

/// `Σ_k ‖S_k − P(S_k)‖_F`; zero exactly for consistent spectrograms.
pub fn inconsistency(s: &Spectrogram) -> Result<f64> {
    let p = project_consistent(s)?;
    let diff = s.data.sub(&p.data)?;
    let kc = s.channels();
    let mut per_channel = vec![0.0; kc];
    for (i, (r, m)) in diff.re.data().iter().zip(diff.im.data()).enumerate() {
        per_channel[i % kc] += r * r + m * m;
    }
    Ok(per_channel.iter().map(|v| v.sqrt()).sum())
}

/// Spectrogram recorded on a tape.
#[derive(Clone, Copy, Debug)]
pub struct SpecVar<'t> {
    pub data: ComplexVar<'t>,
    pub config: StftConfig,
    pub num_samples: usize,
}

impl<'t> SpecVar<'t> {
    pub fn constant(tape: &'t crate::autodiff::Tape, s: &Spectrogram) -> Self {
        Self {
            data: ComplexVar::constant(tape, &s.data),
            config: s.config,
            num_samples: s.num_samples,
        }
    }

    pub fn leaf(tape: &'t crate::autodiff::Tape, s: &Spectrogram) -> Self {
        Self {
            data: ComplexVar::leaf(tape, &s.data),
            config: s.config,
            num_samples: s.num_samples,
        }
    }

    /// Wrap a `T × F × K` complex node.
    pub fn from_parts(data: ComplexVar<'t>, config: StftConfig, num_samples: usize) -> Result<Self> {
        let frames = config.num_frames(num_samples)?;
        let s = data.shape();
        if s.len() != 3 || s[0] != frames || s[1] != config.num_bins() {
            return Err(Error::shape("SpecVar::from_parts", &s, &[frames, config.num_bins()]));
        }
        Ok(Self {
            data,
            config,
            num_samples,
        })
    }

    pub fn value(&self) -> Spectrogram {
        Spectrogram {
            data: self.data.value(),
            config: self.config,
            num_samples: self.num_samples,
        }
    }

    pub fn channels(&self) -> usize {
        self.data.shape()[2]
    }

    pub fn channel(&self, k: usize) -> Result<SpecVar<'t>> {
        Ok(Self {
            data: self.data.slice(2, k, 1)?,
            ..*self
        })
    }

    pub fn same_layout(&self, other: &SpecVar<'_>) -> bool {
        self.config == other.config && self.num_samples == other.num_samples && self.data.shape() == other.data.shape()
    }
}

/// Differentiable STFT of an `N × K` node.
pub fn stft_var<'t>(x: Var<'t>, cfg: &StftConfig) -> Result<SpecVar<'t>> {
    let xv = x.value();
    if xv.ndim() != 2 {
        return Err(Error::shape("stft_var", xv.shape(), &[0, 0]));
    }
    check_finite(&xv, "stft input")?;
    let (n, kc) = (xv.shape()[0], xv.shape()[1]);
    let framer = Rc::new(Framer::new(*cfg, n)?);
    let (mut re, im) = framer.analyze(xv.data(), kc);
    let block = re.len();
    re.extend(im);
    let out = Tensor::new(vec![2, framer.frames, framer.bins(), kc], re)?;
    let fr = Rc::clone(&framer);
    let backward: BackwardFn = Box::new(move |g, _| {
        let gd = g.data();
        let grad = fr.analyze_adjoint(&gd[..block], &gd[block..], kc);
        vec![Some(Tensor::new(vec![fr.n, kc], grad).expect("stft grad"))]
    });
    let packed = x.tape().push_op(out, &[x], backward);
    let data = ComplexVar::new(packed.select(0)?, packed.select(1)?)?;
    Ok(SpecVar {
        data,
        config: *cfg,
        num_samples: n,
    })
}

/// Differentiable iSTFT, returning an `N × K` node.
pub fn istft_var<'t>(s: SpecVar<'t>) -> Result<Var<'t>> {
    let framer = Rc::new(Framer::new(s.config, s.num_samples)?);
    let (re, im) = (s.data.re.value(), s.data.im.value());
    let kc = re.shape()[2];
    let out = Tensor::new(vec![s.num_samples, kc], framer.synthesize(re.data(), im.data(), kc))?;
    let shape = re.shape().to_vec();
    let backward: BackwardFn = Box::new(move |g, wants| {
        let (gre, gim) = framer.synthesize_adjoint(g.data(), kc);
        vec![
            wants[0].then(|| Tensor::new(shape.clone(), gre).expect("istft grad")),
            wants[1].then(|| Tensor::new(shape.clone(), gim).expect("istft grad")),
        ]
    });
    Ok(s.data.tape().push_op(out, &[s.data.re, s.data.im], backward))
}

/// Differentiable consistency projection `stft(istft(s))`.
pub fn project_var<'t>(s: SpecVar<'t>) -> Result<SpecVar<'t>> {
    stft_var(istft_var(s)?, &s.config)
}
