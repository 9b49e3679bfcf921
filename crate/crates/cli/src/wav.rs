//! WAV I/O: writes 32-bit float, reads 32-bit float and 16-bit PCM.

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};
use mcwf_core::signal::TimeSignal;

use crate::error::{CliError, CliResult};

fn wav_err(path: &Path) -> impl Fn(hound::Error) -> CliError + '_ {
    move |e| CliError::Wav {
        path: path.to_path_buf(),
        detail: e.to_string(),
    }
}

pub fn read_wav(path: &Path) -> CliResult<TimeSignal> {
    let mut reader = WavReader::open(path).map_err(wav_err(path))?;
    let spec = reader.spec();
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<Result<_, _>>()
            .map_err(wav_err(path))?,
        (SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| f64::from(v) / 32768.0))
            .collect::<Result<_, _>>()
            .map_err(wav_err(path))?,
        (fmt, bits) => {
            return Err(CliError::Wav {
                path: path.to_path_buf(),
                detail: format!("unsupported sample format {fmt:?} with {bits} bits"),
            })
        }
    };
    let k = spec.channels as usize;
    if k == 0 || !interleaved.len().is_multiple_of(k) {
        return Err(CliError::Wav {
            path: path.to_path_buf(),
            detail: "truncated frame".into(),
        });
    }
    let samples = mcwf_core::Tensor::new(vec![interleaved.len() / k, k], interleaved)?;
    Ok(TimeSignal::new(samples, spec.sample_rate)?)
}

pub fn write_wav(path: &Path, signal: &TimeSignal) -> CliResult<()> {
    if !signal.is_finite() {
        return Err(mcwf_core::Error::NonFiniteInput(path.display().to_string()).into());
    }
    let spec = WavSpec {
        channels: signal.channels() as u16,
        sample_rate: signal.sample_rate,
        bits_per_sample: 32,
        sample_format: SampleFormat::Float,
    };
    let mut writer = WavWriter::create(path, spec).map_err(wav_err(path))?;
    for &v in signal.samples.data() {
        writer.write_sample(v as f32).map_err(wav_err(path))?;
    }
    writer.finalize().map_err(wav_err(path))
}
