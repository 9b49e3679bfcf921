use std::path::{Path, PathBuf};

use mcwf_core::metrics::{cepstrum_distortion, sdr, MetricReport, MetricRow, CD_ORDER};
use mcwf_core::signal::TimeSignal;

use crate::dataset::{list_scenes, load_manifest, MANIFEST_FILE, MIXTURE_FILE, SPEECH_FILE};
use crate::error::{CliError, CliResult};
use crate::wav::read_wav;

/// One utterance to score: clean reference, enhanced and observed files.
#[derive(Clone, Debug)]
pub struct EvalItem {
    pub name: String,
    pub clean: PathBuf,
    pub enhanced: PathBuf,
    pub observed: PathBuf,
    pub snr_db: Option<f64>,
}

pub fn items_from_lists(clean: &[PathBuf], enhanced: &[PathBuf], observed: &[PathBuf]) -> CliResult<Vec<EvalItem>> {
    if clean.len() != enhanced.len() || clean.len() != observed.len() {
        return Err(CliError::LengthMismatch(format!(
            "{} clean, {} enhanced and {} observed files",
            clean.len(),
            enhanced.len(),
            observed.len()
        )));
    }
    Ok(clean
        .iter()
        .zip(enhanced)
        .zip(observed)
        .map(|((c, e), o)| EvalItem {
            name: c.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
            clean: c.clone(),
            enhanced: e.clone(),
            observed: o.clone(),
            snr_db: None,
        })
        .collect())
}

/// Pairs each scene of `scenes` with `<enhanced_dir>/<scene>.wav`.
pub fn items_from_scenes(scenes: &Path, enhanced_dir: &Path) -> CliResult<Vec<EvalItem>> {
    list_scenes(scenes)?
        .into_iter()
        .map(|name| {
            let sub = scenes.join(&name);
            let manifest = load_manifest(&sub.join(MANIFEST_FILE))?;
            Ok(EvalItem {
                clean: sub.join(SPEECH_FILE),
                observed: sub.join(MIXTURE_FILE),
                enhanced: enhanced_dir.join(format!("{name}.wav")),
                snr_db: Some(manifest.snr_db),
                name,
            })
        })
        .collect()
}

/// `channel` of a multi-channel file, or the only channel of a mono one.
fn pick(sig: &TimeSignal, channel: usize, path: &Path) -> CliResult<Vec<f64>> {
    match sig.channels() {
        1 => Ok(sig.channel(0)),
        k if channel < k => Ok(sig.channel(channel)),
        k => Err(CliError::Usage(format!("{} has {k} channels, asked for {channel}", path.display()))),
    }
}

fn score(clean: &[f64], est: &[f64], rate: u32, path: &Path) -> CliResult<(f64, f64)> {
    if clean.len() != est.len() {
        return Err(CliError::LengthMismatch(format!(
            "{} has {} samples, the reference {}",
            path.display(),
            est.len(),
            clean.len()
        )));
    }
    Ok((sdr(clean, est)?, cepstrum_distortion(clean, est, rate, CD_ORDER)?))
}

/// SDR and CD of the observed and the enhanced signal per utterance.
pub fn evaluate(items: &[EvalItem], label: &str, channel: usize) -> CliResult<MetricReport> {
    let mut rows = Vec::with_capacity(2 * items.len());
    for item in items {
        let clean_sig = read_wav(&item.clean)?;
        let clean = pick(&clean_sig, channel, &item.clean)?;
        for (method, path) in [("observed", &item.observed), (label, &item.enhanced)] {
            let sig = read_wav(path)?;
            if sig.sample_rate != clean_sig.sample_rate {
                return Err(CliError::RateMismatch {
                    path: path.clone(),
                    found: sig.sample_rate,
                    expected: clean_sig.sample_rate,
                });
            }
            let (sdr_db, cd_db) = score(&clean, &pick(&sig, channel, path)?, clean_sig.sample_rate, path)?;
            rows.push(MetricRow {
                utterance: item.name.clone(),
                method: method.to_string(),
                snr_db: item.snr_db,
                sdr_db,
                cd_db,
            });
        }
    }
    Ok(MetricReport::from_rows(rows))
}
