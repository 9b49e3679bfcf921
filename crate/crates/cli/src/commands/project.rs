use std::path::Path;

use mcwf_core::autodiff::ComplexTensor;
use mcwf_core::stft::{inconsistency, istft, project_consistent, stft, Spectrogram, StftConfig};
use serde::{Deserialize, Serialize};

use crate::dataset::{read_json, write_json};
use crate::error::{CliError, CliResult};
use crate::wav::{read_wav, write_wav};

/// JSON spectrogram container; `data` is `T × F × K`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpectrogramFile {
    pub config: StftConfig,
    pub num_samples: usize,
    pub data: ComplexTensor,
}

impl SpectrogramFile {
    pub fn from_spec(s: &Spectrogram) -> Self {
        Self {
            config: s.config,
            num_samples: s.num_samples,
            data: s.data.clone(),
        }
    }

    pub fn into_spec(self) -> CliResult<Spectrogram> {
        Ok(Spectrogram::new(self.data, self.config, self.num_samples)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectReport {
    pub inconsistency_before: f64,
    pub inconsistency_after: f64,
}

/// Projects a WAV (through its STFT) or a JSON spectrogram onto the
/// consistent set.
pub fn project(
    stft_cfg: &StftConfig,
    input: &Path,
    out_json: Option<&Path>,
    out_wav: Option<&Path>,
) -> CliResult<ProjectReport> {
    let is_json = input.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let x = if is_json {
        read_json::<SpectrogramFile>(input)?.into_spec()?
    } else {
        let sig = read_wav(input)?;
        if sig.sample_rate != stft_cfg.sample_rate {
            return Err(CliError::RateMismatch {
                path: input.to_path_buf(),
                found: sig.sample_rate,
                expected: stft_cfg.sample_rate,
            });
        }
        stft(&sig, stft_cfg)?
    };
    let p = project_consistent(&x)?;
    let report = ProjectReport {
        inconsistency_before: inconsistency(&x)?,
        inconsistency_after: inconsistency(&p)?,
    };
    if let Some(path) = out_json {
        write_json(path, &SpectrogramFile::from_spec(&p))?;
    }
    if let Some(path) = out_wav {
        write_wav(path, &istft(&p)?)?;
    }
    Ok(report)
}
