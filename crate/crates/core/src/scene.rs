//! Synthetic two-microphone scenes.
//!
//! A far-field point source is imaged onto the array by per-microphone
//! fractional delays (32-tap Kaiser-windowed sinc). Diffuse noise is the sum of
//! 13 distinct noise segments imaged from the 13 azimuths −90°…90° in 15°
//! steps with equal gains. Everything is driven by a [`SceneManifest`] and
//! regenerates bit-identically from it.

use std::f64::consts::PI;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{TimeSignal, DEFAULT_SAMPLE_RATE};
use crate::tensor::Tensor;

pub const SPEED_OF_SOUND: f64 = 343.0;
pub const NUM_AZIMUTHS: usize = 13;
pub const SINC_TAPS: usize = 32;
const KAISER_BETA: f64 = 8.0;
pub const MANIFEST_SCHEMA: u32 = 1;

/// The 13 source directions in degrees.
pub fn azimuths() -> [f64; NUM_AZIMUTHS] {
    std::array::from_fn(|i| -90.0 + 15.0 * i as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    /// Microphone positions in meters.
    pub mic_positions: Vec<[f64; 3]>,
    pub speed_of_sound: f64,
}

impl Default for ArrayGeometry {
    /// Two microphones 3 cm apart on the x-axis.
    fn default() -> Self {
        Self {
            mic_positions: vec![[-0.015, 0.0, 0.0], [0.015, 0.0, 0.0]],
            speed_of_sound: SPEED_OF_SOUND,
        }
    }
}

impl ArrayGeometry {
    pub fn channels(&self) -> usize {
        self.mic_positions.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.mic_positions.is_empty() || !(self.speed_of_sound > 0.0) {
            return Err(Error::InvalidConfig("array needs microphones and a positive speed of sound".into()));
        }
        for (i, a) in self.mic_positions.iter().enumerate() {
            for b in &self.mic_positions[i + 1..] {
                let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
                if d <= 0.0 {
                    return Err(Error::InvalidConfig("coincident microphones".into()));
                }
            }
        }
        Ok(())
    }

    /// Arrival delay of microphone `k` in samples, relative to the origin.
    pub fn delay_samples(&self, k: usize, azimuth_deg: f64, sample_rate: u32) -> f64 {
        let az = azimuth_deg.to_radians();
        let u = [az.sin(), az.cos(), 0.0];
        let proj: f64 = self.mic_positions[k].iter().zip(&u).map(|(d, v)| d * v).sum();
        -proj / self.speed_of_sound * sample_rate as f64
    }
}

fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let q = x * x / 4.0;
    for k in 1..64 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < 1e-17 * sum {
            break;
        }
    }
    sum
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else if x.fract() == 0.0 {
        0.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// `y[n] = x(n − delay)` by Kaiser-windowed sinc interpolation over
/// [`SINC_TAPS`] samples; integer delays are exact shifts.
pub fn fractional_delay(x: &[f64], delay: f64) -> Vec<f64> {
    let n = x.len() as isize;
    let half = (SINC_TAPS / 2) as f64;
    let norm = bessel_i0(KAISER_BETA);
    // x(i − delay) = Σ_j h[j] x[i + shift + j]
    let shift = (-delay).floor();
    let frac = -delay - shift;
    let lo = 1 - (SINC_TAPS / 2) as isize;
    let taps: Vec<f64> = (0..SINC_TAPS as isize)
        .map(|j| {
            let d = frac - (lo + j) as f64;
            let r = d / half;
            if r.abs() > 1.0 {
                0.0
            } else {
                sinc(d) * bessel_i0(KAISER_BETA * (1.0 - r * r).sqrt()) / norm
            }
        })
        .collect();
    let shift = shift as isize + lo;
    (0..n)
        .map(|i| {
            taps.iter()
                .enumerate()
                .filter_map(|(j, h)| {
                    let m = i + shift + j as isize;
                    (m >= 0 && m < n && *h != 0.0).then(|| h * x[m as usize])
                })
                .sum()
        })
        .collect()
}

/// Far-field image of a mono source at `azimuth_deg` (unit direct-path gain).
pub fn point_source_image(dry: &TimeSignal, azimuth_deg: f64, geom: &ArrayGeometry) -> Result<TimeSignal> {
    geom.validate()?;
    if dry.channels() != 1 {
        return Err(Error::shape("point_source_image", dry.samples.shape(), &[dry.len(), 1]));
    }
    if azimuth_deg.abs() > 90.0 {
        return Err(Error::InvalidConfig(format!("azimuth {azimuth_deg} outside [-90, 90]")));
    }
    let x = dry.channel(0);
    let chans: Vec<Vec<f64>> = (0..geom.channels())
        .map(|k| fractional_delay(&x, geom.delay_samples(k, azimuth_deg, dry.sample_rate)))
        .collect();
    TimeSignal::from_channels(&chans, dry.sample_rate)
}

/// Sum of the 13 sources imaged from the 13 azimuths with equal gains.
pub fn diffuse_noise(sources: &[TimeSignal], geom: &ArrayGeometry) -> Result<TimeSignal> {
    if sources.len() != NUM_AZIMUTHS {
        return Err(Error::CountMismatch {
            expected: NUM_AZIMUTHS,
            got: sources.len(),
        });
    }
    let mut acc: Option<TimeSignal> = None;
    for (src, az) in sources.iter().zip(azimuths()) {
        let img = point_source_image(src, az, geom)?;
        acc = Some(match acc {
            None => img,
            Some(mut a) => {
                if a.len() != img.len() {
                    return Err(Error::shape("diffuse_noise", a.samples.shape(), img.samples.shape()));
                }
                a.samples.add_assign(&img.samples);
                a
            }
        });
    }
    Ok(acc.expect("13 sources"))
}

/// Observed mixture with the speech and rescaled noise images.
#[derive(Clone, Debug, PartialEq)]
pub struct Mixture {
    pub mixture: TimeSignal,
    pub speech: TimeSignal,
    pub noise: TimeSignal,
}

/// Scales `noise` so that the reference-channel SNR equals `snr_db`.
pub fn mix_at_snr(speech: &TimeSignal, noise: &TimeSignal, snr_db: f64, ref_channel: usize) -> Result<Mixture> {
    if speech.samples.shape() != noise.samples.shape() || speech.sample_rate != noise.sample_rate {
        return Err(Error::shape("mix_at_snr", speech.samples.shape(), noise.samples.shape()));
    }
    if ref_channel >= speech.channels() {
        return Err(Error::InvalidConfig(format!("reference channel {ref_channel}")));
    }
    let es = speech.energy(ref_channel);
    let en = noise.energy(ref_channel);
    if !(es > 0.0) {
        return Err(Error::ZeroEnergy("speech"));
    }
    if !(en > 0.0) {
        return Err(Error::ZeroEnergy("noise"));
    }
    let gain = (es / (en * 10f64.powf(snr_db / 10.0))).sqrt();
    let noise = TimeSignal::new(noise.samples.scale(gain), noise.sample_rate)?;
    let mixture = TimeSignal::new(speech.samples.add(&noise.samples)?, speech.sample_rate)?;
    Ok(Mixture {
        mixture,
        speech: speech.clone(),
        noise,
    })
}

/// `α n0 + (1 − α) n1`.
pub fn augment_noise(n0: &TimeSignal, n1: &TimeSignal, alpha: f64) -> Result<TimeSignal> {
    if n0.samples.shape() != n1.samples.shape() {
        return Err(Error::shape("augment_noise", n0.samples.shape(), n1.samples.shape()));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidConfig(format!("alpha {alpha} outside [0, 1]")));
    }
    let data = n0.samples.zip_with(&n1.samples, |a, b| alpha * a + (1.0 - alpha) * b)?;
    TimeSignal::new(data, n0.sample_rate)
}

/// Tail energy relative to the unit direct path.
pub const REVERB_TAIL_ENERGY: f64 = 0.25;

/// Impulse response `δ[n] + g·e(n)·w[n]`: seeded white noise `w` under an
/// envelope that loses 60 dB of energy at `rt60_ms`.
pub fn reverb_tail_filter(rt60_ms: f64, sample_rate: u32, seed: u64, channel: usize) -> Result<Vec<f64>> {
    if !(rt60_ms >= 0.0) {
        return Err(Error::InvalidConfig(format!("rt60 {rt60_ms} ms must be nonnegative")));
    }
    let len = (rt60_ms * 1e-3 * sample_rate as f64).ceil() as usize;
    if len == 0 {
        return Ok(vec![1.0]);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(channel as u64);
    let decay = 3.0 / len as f64;
    let mut h = vec![0.0; len + 1];
    h[0] = 1.0;
    for (n, v) in h.iter_mut().enumerate().skip(1) {
        let noise: f64 = StandardNormal.sample(&mut rng);
        *v = noise * 10f64.powf(-decay * n as f64);
    }
    let tail: f64 = h[1..].iter().map(|v| v * v).sum();
    if tail > 0.0 {
        let g = (REVERB_TAIL_ENERGY / tail).sqrt();
        h[1..].iter_mut().for_each(|v| *v *= g);
    }
    Ok(h)
}

/// Convolves every channel with its own seeded tail, keeping the length.
pub fn synth_reverb_tail(image: &TimeSignal, rt60_ms: f64, seed: u64) -> Result<TimeSignal> {
    let mut chans = image.to_channels();
    for (k, ch) in chans.iter_mut().enumerate() {
        let h = reverb_tail_filter(rt60_ms, image.sample_rate, seed, k)?;
        if h.len() == 1 {
            continue;
        }
        let x = ch.clone();
        for (n, out) in ch.iter_mut().enumerate() {
            *out = h.iter().take(n + 1).enumerate().map(|(j, hj)| hj * x[n - j]).sum();
        }
    }
    TimeSignal::from_channels(&chans, image.sample_rate)
}

/// Seeded dry-signal generators.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SourceSpec {
    /// Voiced bursts: pulse train through a random AR(2) resonance, gated by
    /// an on/off envelope.
    SpeechLike { seed: u64 },
    White { seed: u64 },
    Pink { seed: u64 },
    /// Mono or first channel of a WAV file.
    Wav { path: PathBuf },
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn white_noise(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng_for(seed, 0);
    (0..len).map(|_| StandardNormal.sample(&mut rng)).collect()
}

/// White noise through a fixed 1/f shaping filter.
pub fn pink_noise(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng_for(seed, 0);
    let mut b = [0.0; 7];
    (0..len)
        .map(|_| {
            let w: f64 = StandardNormal.sample(&mut rng);
            b[0] = 0.99886 * b[0] + w * 0.0555179;
            b[1] = 0.99332 * b[1] + w * 0.0750759;
            b[2] = 0.96900 * b[2] + w * 0.1538520;
            b[3] = 0.86650 * b[3] + w * 0.3104856;
            b[4] = 0.55000 * b[4] + w * 0.5329522;
            b[5] = -0.7616 * b[5] - w * 0.0168980;
            let out = b.iter().sum::<f64>() + w * 0.5362;
            b[6] = w * 0.115926;
            out
        })
        .collect()
}

pub fn speech_like(len: usize, sample_rate: u32, seed: u64) -> Vec<f64> {
    let mut rng = rng_for(seed, 0);
    let fs = sample_rate as f64;
    let mut out = vec![0.0; len];
    let mut pos = 0usize;
    while pos < len {
        let on = (rng.random_range(0.15..0.4) * fs) as usize;
        let off = (rng.random_range(0.05..0.2) * fs) as usize;
        let f0 = rng.random_range(90.0..240.0);
        let formant = rng.random_range(300.0..2500.0);
        let r: f64 = 0.97;
        let a1 = 2.0 * r * (2.0 * PI * formant / fs).cos();
        let a2 = -r * r;
        let period = fs / f0;
        let ramp = (0.02 * fs) as usize;
        let (mut y1, mut y2) = (0.0, 0.0);
        let mut phase = 0.0;
        for i in 0..on.min(len - pos) {
            phase += 1.0;
            let pulse = if phase >= period {
                phase -= period;
                1.0
            } else {
                0.0
            };
            let noise: f64 = StandardNormal.sample(&mut rng);
            let y = pulse + 0.05 * noise + a1 * y1 + a2 * y2;
            y2 = y1;
            y1 = y;
            let env = if i < ramp {
                0.5 - 0.5 * (PI * i as f64 / ramp as f64).cos()
            } else if on - i < ramp {
                0.5 - 0.5 * (PI * (on - i) as f64 / ramp as f64).cos()
            } else {
                1.0
            };
            out[pos + i] = y * env;
        }
        pos += on + off;
    }
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        out.iter_mut().for_each(|v| *v *= 0.5 / peak);
    }
    out
}

/// Loads WAV-backed sources; the core crate does no file I/O itself.
pub type WavLoader<'a> = &'a dyn Fn(&std::path::Path) -> Result<TimeSignal>;

fn render_source(spec: &SourceSpec, len: usize, sample_rate: u32, loader: Option<WavLoader<'_>>) -> Result<Vec<f64>> {
    match spec {
        SourceSpec::SpeechLike { seed } => Ok(speech_like(len, sample_rate, *seed)),
        SourceSpec::White { seed } => Ok(white_noise(len, *seed)),
        SourceSpec::Pink { seed } => Ok(pink_noise(len, *seed)),
        SourceSpec::Wav { path } => {
            let load = loader.ok_or_else(|| Error::InvalidConfig(format!("no loader for {}", path.display())))?;
            let sig = load(path)?;
            if sig.sample_rate != sample_rate {
                return Err(Error::InvalidConfig(format!(
                    "{} is {} Hz, scene is {} Hz",
                    path.display(),
                    sig.sample_rate,
                    sample_rate
                )));
            }
            if sig.len() < len {
                return Err(Error::TooShort {
                    samples: sig.len(),
                    required: len,
                });
            }
            Ok(sig.channel(0)[..len].to_vec())
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseComponent {
    pub source: SourceSpec,
    pub gain: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReverbSpec {
    pub rt60_ms: f64,
    pub seed: u64,
}

/// Everything needed to regenerate one mixture bit-identically.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneManifest {
    pub schema_version: u32,
    pub sample_rate: u32,
    pub num_samples: usize,
    pub geometry: ArrayGeometry,
    pub speech_source: SourceSpec,
    pub azimuth: f64,
    pub snr_db: f64,
    /// Each component is split into 13 consecutive segments that are played
    /// from the 13 azimuths with equal gain.
    pub noise_components: Vec<NoiseComponent>,
    /// When present and there are two components: `α n0 + (1 − α) n1`,
    /// otherwise the gain-weighted sum.
    pub augment_alpha: Option<f64>,
    pub reverb_tail: Option<ReverbSpec>,
    pub ref_channel: usize,
    pub seed: u64,
}

impl SceneManifest {
    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        if self.schema_version != MANIFEST_SCHEMA {
            return Err(Error::InvalidConfig(format!("manifest schema {}", self.schema_version)));
        }
        if self.num_samples == 0 || self.sample_rate == 0 {
            return Err(Error::InvalidConfig("empty scene".into()));
        }
        if !azimuths().contains(&self.azimuth) {
            return Err(Error::InvalidConfig(format!("azimuth {} is not one of the 13 points", self.azimuth)));
        }
        if !self.snr_db.is_finite() {
            return Err(Error::InvalidConfig("snr_db must be finite".into()));
        }
        if self.noise_components.is_empty() {
            return Err(Error::InvalidConfig("no noise components".into()));
        }
        if let Some(a) = self.augment_alpha {
            if !(0.0..=1.0).contains(&a) || self.noise_components.len() != 2 {
                return Err(Error::InvalidConfig("augment_alpha needs α in [0, 1] and two components".into()));
            }
        }
        if self.ref_channel >= self.geometry.channels() {
            return Err(Error::InvalidConfig(format!("reference channel {}", self.ref_channel)));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest is serializable")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: SceneManifest =
            serde_json::from_str(text).map_err(|e| Error::InvalidConfig(format!("manifest: {e}")))?;
        m.validate()?;
        Ok(m)
    }
}

/// Diffuse field of one component: 13 consecutive segments of one long dry
/// signal.
fn diffuse_component(c: &NoiseComponent, m: &SceneManifest, loader: Option<WavLoader<'_>>) -> Result<TimeSignal> {
    let n = m.num_samples;
    let long = render_source(&c.source, n * NUM_AZIMUTHS, m.sample_rate, loader)?;
    let sources: Vec<TimeSignal> = long
        .chunks(n)
        .map(|seg| TimeSignal::mono(seg.to_vec(), m.sample_rate))
        .collect();
    let d = diffuse_noise(&sources, &m.geometry)?;
    TimeSignal::new(d.samples.scale(c.gain), m.sample_rate)
}

pub fn generate_scene_with(m: &SceneManifest, loader: Option<WavLoader<'_>>) -> Result<Mixture> {
    m.validate()?;
    let dry = TimeSignal::mono(
        render_source(&m.speech_source, m.num_samples, m.sample_rate, loader)?,
        m.sample_rate,
    );
    let mut speech = point_source_image(&dry, m.azimuth, &m.geometry)?;
    if let Some(r) = m.reverb_tail {
        speech = synth_reverb_tail(&speech, r.rt60_ms, r.seed)?;
    }
    let parts = m
        .noise_components
        .iter()
        .map(|c| diffuse_component(c, m, loader))
        .collect::<Result<Vec<_>>>()?;
    let noise = match m.augment_alpha {
        Some(alpha) => augment_noise(&parts[0], &parts[1], alpha)?,
        None => {
            let mut acc = Tensor::zeros(parts[0].samples.shape());
            for p in &parts {
                acc.add_assign(&p.samples);
            }
            TimeSignal::new(acc, m.sample_rate)?
        }
    };
    mix_at_snr(&speech, &noise, m.snr_db, m.ref_channel)
}

pub fn generate_scene(m: &SceneManifest) -> Result<Mixture> {
    generate_scene_with(m, None)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    White,
    Pink,
}

/// Ranges for random manifests.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneDefaults {
    pub sample_rate: u32,
    pub duration_s: f64,
    pub snr_db_min: f64,
    pub snr_db_max: f64,
    pub noise_kinds: Vec<NoiseKind>,
    /// Beta(a, a) shape for the augmentation weight; `None` disables mixing.
    pub augment_beta: Option<f64>,
    pub rt60_ms: Option<f64>,
    pub geometry: ArrayGeometry,
}

impl Default for SceneDefaults {
    fn default() -> Self {
        Self {
            sample_rate: DEFAULT_SAMPLE_RATE,
            duration_s: 2.0,
            snr_db_min: -6.0,
            snr_db_max: 12.0,
            noise_kinds: vec![NoiseKind::White, NoiseKind::Pink],
            augment_beta: Some(2.0),
            rt60_ms: None,
            geometry: ArrayGeometry::default(),
        }
    }
}

/// Manifest number `index` drawn from the master seed.
pub fn random_manifest(master_seed: u64, index: u64, d: &SceneDefaults) -> Result<SceneManifest> {
    if d.noise_kinds.is_empty() || !(d.snr_db_min <= d.snr_db_max) || !(d.duration_s > 0.0) {
        return Err(Error::InvalidConfig("scene defaults need noise kinds, ordered SNR bounds and a positive duration".into()));
    }
    let mut rng = rng_for(master_seed, index);
    let seed: u64 = rng.random();
    let azimuth = azimuths()[rng.random_range(0..NUM_AZIMUTHS)];
    let snr_db = if d.snr_db_min == d.snr_db_max {
        d.snr_db_min
    } else {
        rng.random_range(d.snr_db_min..d.snr_db_max)
    };
    let component = |rng: &mut ChaCha8Rng| {
        let kind = d.noise_kinds[rng.random_range(0..d.noise_kinds.len())];
        let seed: u64 = rng.random();
        NoiseComponent {
            source: match kind {
                NoiseKind::White => SourceSpec::White { seed },
                NoiseKind::Pink => SourceSpec::Pink { seed },
            },
            gain: 1.0,
        }
    };
    let (noise_components, augment_alpha) = match d.augment_beta {
        Some(shape) => {
            let beta = Beta::new(shape, shape).map_err(|e| Error::InvalidConfig(format!("beta: {e}")))?;
            let comps = vec![component(&mut rng), component(&mut rng)];
            (comps, Some(beta.sample(&mut rng)))
        }
        None => (vec![component(&mut rng)], None),
    };
    let reverb_tail = d.rt60_ms.map(|rt60_ms| ReverbSpec {
        rt60_ms,
        seed: rng.random(),
    });
    let m = SceneManifest {
        schema_version: MANIFEST_SCHEMA,
        sample_rate: d.sample_rate,
        num_samples: (d.duration_s * d.sample_rate as f64).round() as usize,
        geometry: d.geometry.clone(),
        speech_source: SourceSpec::SpeechLike { seed: rng.random() },
        azimuth,
        snr_db,
        noise_components,
        augment_alpha,
        reverb_tail,
        ref_channel: 0,
        seed,
    };
    m.validate()?;
    Ok(m)
}
