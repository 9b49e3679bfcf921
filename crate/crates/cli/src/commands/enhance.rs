use std::path::{Path, PathBuf};

use mcwf_core::baselines::{apply_beamformer, mvdr_from_masks, tf_mask_enhance, Method};
use mcwf_core::enhance::{mwf_enhance, oracle_mask_psd, MaskPsd, MwfConfig};
use mcwf_core::model::{network_input, predict, Checkpoint};
use mcwf_core::signal::TimeSignal;
use mcwf_core::stft::{istft, stft, Spectrogram, StftConfig};

use crate::config::RunConfig;
use crate::dataset::{list_scenes, load_manifest, regenerate, MANIFEST_FILE, MIXTURE_FILE};
use crate::error::{CliError, CliResult};
use crate::wav::{read_wav, write_wav};

/// Where the masks and PSDs come from.
pub enum MaskSource {
    /// Ideal masks from the scene manifest; `None` looks for `manifest.json`
    /// next to each input.
    Oracle(Option<PathBuf>),
    Model(Box<Checkpoint>),
    /// Only valid with `identity_filter`.
    None,
}

pub struct EnhanceOptions {
    pub method: Method,
    pub source: MaskSource,
    /// Debug: replace the Wiener filter by the identity.
    pub identity_filter: bool,
}

struct Settings {
    stft: StftConfig,
    mwf: MwfConfig,
    ref_channel: usize,
}

fn settings(cfg: &RunConfig, source: &MaskSource) -> Settings {
    match source {
        MaskSource::Model(ck) => Settings {
            stft: ck.config.stft,
            mwf: ck.config.mwf,
            ref_channel: ck.config.ref_channel,
        },
        _ => Settings {
            stft: cfg.stft,
            mwf: cfg.mwf,
            ref_channel: cfg.ref_channel,
        },
    }
}

fn masks(x: &Spectrogram, input: &Path, source: &MaskSource, s: &mut Settings) -> CliResult<MaskPsd> {
    match source {
        MaskSource::Oracle(explicit) => {
            let path = explicit
                .clone()
                .unwrap_or_else(|| input.parent().unwrap_or(Path::new(".")).join(MANIFEST_FILE));
            let manifest = load_manifest(&path)?;
            let scene = regenerate(&manifest, &path)?;
            if scene.mixture.samples.shape() != [x.num_samples, x.channels()] {
                return Err(CliError::LengthMismatch(format!(
                    "{} is {}×{}, its manifest describes {}×{}",
                    input.display(),
                    x.num_samples,
                    x.channels(),
                    scene.mixture.len(),
                    scene.mixture.channels()
                )));
            }
            s.ref_channel = manifest.ref_channel;
            let speech = stft(&scene.speech, &s.stft)?;
            let noise = stft(&scene.noise, &s.stft)?;
            Ok(oracle_mask_psd(x, &speech, &noise, manifest.ref_channel)?)
        }
        MaskSource::Model(ck) => {
            let m = &ck.config.model;
            if x.channels() != m.channels {
                return Err(CliError::Usage(format!(
                    "{} has {} channels, the model expects {}",
                    input.display(),
                    x.channels(),
                    m.channels
                )));
            }
            let features = network_input(x, m.delta, m.norm, m.context)?;
            Ok(predict(m, &ck.state.params, &features)?)
        }
        MaskSource::None => Err(CliError::Usage("need --checkpoint or --oracle".into())),
    }
}

/// Enhances one K-channel file. MWF returns all K channels; masking and
/// MVDR return the reference channel only.
pub fn enhance_file(cfg: &RunConfig, input: &Path, opts: &EnhanceOptions) -> CliResult<TimeSignal> {
    let mut s = settings(cfg, &opts.source);
    let x_time = read_wav(input)?;
    if x_time.sample_rate != s.stft.sample_rate {
        return Err(CliError::RateMismatch {
            path: input.to_path_buf(),
            found: x_time.sample_rate,
            expected: s.stft.sample_rate,
        });
    }
    let x = stft(&x_time, &s.stft)?;
    if opts.identity_filter {
        if opts.method != Method::Mwf {
            return Err(CliError::Usage("--identity-filter applies to the mwf method only".into()));
        }
        return Ok(istft(&x)?);
    }
    let m = masks(&x, input, &opts.source, &mut s)?;
    let est = match opts.method {
        Method::Mwf => mwf_enhance(&x, &m, &s.mwf)?,
        Method::Mask => tf_mask_enhance(&x, &m.mask_s, s.ref_channel)?,
        Method::Mvdr => apply_beamformer(&mvdr_from_masks(&x, &m.mask_s, &m.mask_n, s.ref_channel)?, &x)?,
    };
    Ok(istft(&est)?)
}

pub fn enhance_to(cfg: &RunConfig, input: &Path, output: &Path, opts: &EnhanceOptions) -> CliResult<()> {
    let y = enhance_file(cfg, input, opts)?;
    if let Some(dir) = output.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    }
    write_wav(output, &y)
}

/// Enhances every scene of a `simulate` directory into `<out>/<scene>.wav`.
pub fn enhance_scenes(cfg: &RunConfig, scenes: &Path, out: &Path, opts: &EnhanceOptions) -> CliResult<Vec<PathBuf>> {
    std::fs::create_dir_all(out).map_err(CliError::io(out))?;
    list_scenes(scenes)?
        .iter()
        .map(|name| {
            let target = out.join(format!("{name}.wav"));
            enhance_to(cfg, &scenes.join(name).join(MIXTURE_FILE), &target, opts)?;
            Ok(target)
        })
        .collect()
}
