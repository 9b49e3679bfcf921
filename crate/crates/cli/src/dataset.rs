//! On-disk scene sets written by `simulate`:
//!
//! ```text
//! <dir>/manifests.json          list of scene names
//! <dir>/<name>/manifest.json
//! <dir>/<name>/mixture.wav      observed K-channel mixture
//! <dir>/<name>/speech.wav       speech image (clean reference)
//! <dir>/<name>/noise.wav        noise image
//! ```

use std::path::{Path, PathBuf};

use mcwf_core::scene::{generate_scene_with, Mixture, SceneManifest};
use mcwf_core::signal::TimeSignal;
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::wav::{read_wav, write_wav};

pub const SCENE_LIST: &str = "manifests.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const MIXTURE_FILE: &str = "mixture.wav";
pub const SPEECH_FILE: &str = "speech.wav";
pub const NOISE_FILE: &str = "noise.wav";

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).expect("value is serializable") + "\n";
    std::fs::write(path, text).map_err(CliError::io(path))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
    serde_json::from_str(&text).map_err(|e| CliError::Json {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })
}

pub fn scene_name(index: usize) -> String {
    format!("scene_{index:04}")
}

pub fn write_scene(dir: &Path, name: &str, manifest: &SceneManifest, mix: &Mixture) -> CliResult<()> {
    let sub = dir.join(name);
    std::fs::create_dir_all(&sub).map_err(CliError::io(&sub))?;
    std::fs::write(sub.join(MANIFEST_FILE), manifest.to_json() + "\n").map_err(CliError::io(sub.join(MANIFEST_FILE)))?;
    write_wav(&sub.join(MIXTURE_FILE), &mix.mixture)?;
    write_wav(&sub.join(SPEECH_FILE), &mix.speech)?;
    write_wav(&sub.join(NOISE_FILE), &mix.noise)
}

pub fn list_scenes(dir: &Path) -> CliResult<Vec<String>> {
    read_json(&dir.join(SCENE_LIST))
}

pub fn load_manifest(path: &Path) -> CliResult<SceneManifest> {
    if !path.is_file() {
        return Err(CliError::MissingManifest(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
    Ok(SceneManifest::from_json(&text)?)
}

/// Regenerates a manifest's scene; relative WAV source paths resolve against
/// the manifest's directory.
pub fn regenerate(manifest: &SceneManifest, manifest_path: &Path) -> CliResult<Mixture> {
    let base: PathBuf = manifest_path.parent().map(Path::to_path_buf).unwrap_or_default();
    let loader = |p: &Path| -> mcwf_core::Result<TimeSignal> {
        read_wav(&base.join(p)).map_err(|e| mcwf_core::Error::InvalidConfig(e.to_string()))
    };
    Ok(generate_scene_with(manifest, Some(&loader))?)
}

/// One scene as stored on disk.
#[derive(Clone, Debug)]
pub struct SceneFiles {
    pub name: String,
    pub manifest: SceneManifest,
    pub mixture: TimeSignal,
    pub speech: TimeSignal,
}

pub fn load_scene(dir: &Path, name: &str) -> CliResult<SceneFiles> {
    let sub = dir.join(name);
    Ok(SceneFiles {
        name: name.to_string(),
        manifest: load_manifest(&sub.join(MANIFEST_FILE))?,
        mixture: read_wav(&sub.join(MIXTURE_FILE))?,
        speech: read_wav(&sub.join(SPEECH_FILE))?,
    })
}

pub fn load_scenes(dir: &Path) -> CliResult<Vec<SceneFiles>> {
    list_scenes(dir)?.iter().map(|n| load_scene(dir, n)).collect()
}
