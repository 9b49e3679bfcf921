use std::path::Path;

use mcwf_core::scene::{generate_scene, random_manifest};

use crate::config::RunConfig;
use crate::dataset::{scene_name, write_json, write_scene, SCENE_LIST};
use crate::error::{CliError, CliResult};

/// Writes `count` random scenes plus the scene list and the config echo.
pub fn simulate(cfg: &RunConfig, out: &Path, count: usize) -> CliResult<Vec<String>> {
    cfg.validate()?;
    std::fs::create_dir_all(out).map_err(CliError::io(out))?;
    let seed = cfg.scene_seed();
    let mut names = Vec::with_capacity(count);
    for i in 0..count {
        let mut manifest = random_manifest(seed, i as u64, &cfg.scene)?;
        manifest.ref_channel = cfg.ref_channel;
        let mix = generate_scene(&manifest)?;
        let name = scene_name(i);
        write_scene(out, &name, &manifest, &mix)?;
        names.push(name);
    }
    write_json(&out.join(SCENE_LIST), &names)?;
    std::fs::write(out.join("config.json"), cfg.to_json()).map_err(CliError::io(out.join("config.json")))?;
    Ok(names)
}
