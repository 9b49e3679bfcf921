//! Scale-invariant SDR and cepstral distortion, plus the tabular report.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::FftPlan;

pub const SDR_CAP_DB: f64 = 100.0;
pub const CD_ORDER: usize = 24;
const LOG_FLOOR: f64 = 1e-10;
const SILENCE_RATIO: f64 = 1e-8;

/// `10 log10(‖αs‖² / ‖αs − ŝ‖²)` with `α = ⟨s, ŝ⟩ / ‖s‖²`, clamped to ±100 dB.
pub fn sdr(clean: &[f64], est: &[f64]) -> Result<f64> {
    if clean.len() != est.len() {
        return Err(Error::shape("sdr", &[clean.len()], &[est.len()]));
    }
    let energy: f64 = clean.iter().map(|v| v * v).sum();
    if !(energy > 0.0) {
        return Err(Error::ZeroReference);
    }
    let alpha = clean.iter().zip(est).map(|(s, e)| s * e).sum::<f64>() / energy;
    let target = alpha * alpha * energy;
    let resid: f64 = clean.iter().zip(est).map(|(s, e)| (alpha * s - e).powi(2)).sum();
    if resid == 0.0 {
        return Ok(SDR_CAP_DB);
    }
    if target == 0.0 {
        return Ok(-SDR_CAP_DB);
    }
    Ok((10.0 * (target / resid).log10()).clamp(-SDR_CAP_DB, SDR_CAP_DB))
}

/// Frame geometry for cepstral analysis: 32 ms Hann window, 8 ms hop, no
/// padding.
fn cd_frames(sample_rate: u32) -> (usize, usize) {
    let win = ((0.032 * sample_rate as f64).round() as usize).max(4) & !1;
    (win, (win / 4).max(1))
}

/// Real cepstrum `c_0..=order` of every full frame.
pub fn frame_cepstra(x: &[f64], sample_rate: u32, order: usize) -> Result<Vec<Vec<f64>>> {
    let (win, hop) = cd_frames(sample_rate);
    if x.len() < win {
        return Err(Error::TooShort {
            samples: x.len(),
            required: win,
        });
    }
    let window: Vec<f64> = (0..win)
        .map(|n| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / win as f64).cos())
        .collect();
    let plan = FftPlan::new(win);
    let mut scratch = Vec::new();
    let frames = 1 + (x.len() - win) / hop;
    let mut out = Vec::with_capacity(frames);
    let mut frame = vec![0.0; win];
    for t in 0..frames {
        for (i, w) in window.iter().enumerate() {
            frame[i] = w * x[t * hop + i];
        }
        let spec = plan.rfft(&frame, &mut scratch);
        let logmag: Vec<num_complex::Complex64> = spec
            .iter()
            .map(|z| num_complex::Complex64::new(z.norm().max(LOG_FLOOR).ln(), 0.0))
            .collect();
        let c = plan.irfft(&logmag, &mut scratch);
        out.push(c[..=order.min(win - 1)].to_vec());
    }
    Ok(out)
}

/// Mean over non-silent frames of `(10/ln10)·sqrt(2 Σ_{i=1..order} (c_i − ĉ_i)²)`.
pub fn cepstrum_distortion(clean: &[f64], est: &[f64], sample_rate: u32, order: usize) -> Result<f64> {
    if clean.len() != est.len() {
        return Err(Error::shape("cepstrum_distortion", &[clean.len()], &[est.len()]));
    }
    let (win, hop) = cd_frames(sample_rate);
    let cc = frame_cepstra(clean, sample_rate, order)?;
    let ce = frame_cepstra(est, sample_rate, order)?;
    let energies: Vec<f64> = (0..cc.len())
        .map(|t| clean[t * hop..t * hop + win].iter().map(|v| v * v).sum())
        .collect();
    let mean_energy = energies.iter().sum::<f64>() / energies.len() as f64;
    let k = 10.0 / std::f64::consts::LN_10;
    let mut total = 0.0;
    let mut count = 0usize;
    for t in 0..cc.len() {
        if !(energies[t] >= SILENCE_RATIO * mean_energy) || mean_energy == 0.0 {
            continue;
        }
        let d2: f64 = (1..cc[t].len()).map(|i| (cc[t][i] - ce[t][i]).powi(2)).sum();
        total += k * (2.0 * d2).sqrt();
        count += 1;
    }
    if count == 0 {
        return Err(Error::NoVoicedFrames);
    }
    Ok(total / count as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub utterance: String,
    pub method: String,
    pub snr_db: Option<f64>,
    pub sdr_db: f64,
    pub cd_db: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodMean {
    pub method: String,
    pub snr_db: Option<f64>,
    pub sdr_db: f64,
    pub cd_db: f64,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub rows: Vec<MetricRow>,
    pub means: Vec<MethodMean>,
}

impl MetricReport {
    /// Groups rows by method (first-seen order) and averages.
    pub fn from_rows(rows: Vec<MetricRow>) -> Self {
        let mut methods: Vec<String> = Vec::new();
        for r in &rows {
            if !methods.contains(&r.method) {
                methods.push(r.method.clone());
            }
        }
        let means = methods
            .into_iter()
            .map(|m| {
                let sel: Vec<&MetricRow> = rows.iter().filter(|r| r.method == m).collect();
                let n = sel.len() as f64;
                let snrs: Vec<f64> = sel.iter().filter_map(|r| r.snr_db).collect();
                MethodMean {
                    snr_db: (snrs.len() == sel.len()).then(|| snrs.iter().sum::<f64>() / n),
                    sdr_db: sel.iter().map(|r| r.sdr_db).sum::<f64>() / n,
                    cd_db: sel.iter().map(|r| r.cd_db).sum::<f64>() / n,
                    count: sel.len(),
                    method: m,
                }
            })
            .collect();
        Self { rows, means }
    }

    pub fn mean(&self, method: &str) -> Option<&MethodMean> {
        self.means.iter().find(|m| m.method == method)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is serializable")
    }

    /// Aligned table of the per-method means.
    pub fn to_table(&self) -> String {
        let width = self.means.iter().map(|m| m.method.len()).max().unwrap_or(6).max(6);
        let mut out = format!("{:<width$}  {:>8}  {:>8}  {:>8}\n", "method", "SNR", "SDR", "CD");
        for m in &self.means {
            let snr = m.snr_db.map_or("-".to_string(), |v| format!("{v:.2}"));
            out.push_str(&format!(
                "{:<width$}  {:>8}  {:>8.2}  {:>8.2}\n",
                m.method, snr, m.sdr_db, m.cd_db
            ));
        }
        out
    }
}
