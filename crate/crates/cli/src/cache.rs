//! On-disk cache for rendered scenes, keyed by the scenario's config
//! hash.
//!
//! Grid sweeps revisit the same acoustic condition many times (the same
//! room and RT60 under several beamformers, repeated runs while
//! iterating on analysis). Rendering is by far the most expensive step,
//! so a rendered scene is stored once under
//! `$BEAMFORM_CACHE_DIR/scene-<hash>.bin` and replayed on the next
//! request. The cache is an optimization only: entries are written
//! atomically, any read problem falls back to re-rendering, and a cached
//! scene is bit-identical to a fresh render because rendering itself is
//! deterministic in the scenario.

use std::env;
use std::path::PathBuf;

use beamform::roomsim::{render_scenario, SceneAudio, Scenario};
use beamform::stft::Waveform;
use beamform::{Error, Result};
use serde::{Deserialize, Serialize};

/// Environment variable naming the cache directory. Unset or empty
/// disables caching.
pub const CACHE_DIR_ENV: &str = "BEAMFORM_CACHE_DIR";

const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CachedScene {
    version: u32,
    sample_rate: u32,
    seed: u64,
    reference_channel: usize,
    realized_input_sinr_db: Option<f64>,
    mixture: Vec<Vec<f64>>,
    desired: Vec<Vec<f64>>,
    interference_plus_noise: Vec<Vec<f64>>,
    rirs: Vec<Vec<Vec<f64>>>,
}

/// The configured cache directory, if caching is enabled.
pub fn cache_dir() -> Option<PathBuf> {
    match env::var(CACHE_DIR_ENV) {
        Ok(dir) if !dir.is_empty() => Some(PathBuf::from(dir)),
        _ => None,
    }
}

fn entry_path(dir: &PathBuf, hash: &str) -> PathBuf {
    dir.join(format!("scene-{hash}.bin"))
}

fn to_cached(scene: &SceneAudio) -> CachedScene {
    CachedScene {
        version: FORMAT_VERSION,
        sample_rate: scene.sample_rate,
        seed: scene.seed,
        reference_channel: scene.reference_channel,
        realized_input_sinr_db: scene.realized_input_sinr_db,
        mixture: scene.mixture.channels().to_vec(),
        desired: scene.desired_image.channels().to_vec(),
        interference_plus_noise: scene.interference_plus_noise_image.channels().to_vec(),
        rirs: scene.rirs.clone(),
    }
}

fn from_cached(cached: CachedScene) -> Result<SceneAudio> {
    let fs = cached.sample_rate;
    Ok(SceneAudio {
        mixture: Waveform::new(cached.mixture, fs)?,
        desired_image: Waveform::new(cached.desired, fs)?,
        interference_plus_noise_image: Waveform::new(cached.interference_plus_noise, fs)?,
        rirs: cached.rirs,
        sample_rate: fs,
        seed: cached.seed,
        realized_input_sinr_db: cached.realized_input_sinr_db,
        reference_channel: cached.reference_channel,
    })
}

fn try_load(hash: &str) -> Option<SceneAudio> {
    let dir = cache_dir()?;
    let path = entry_path(&dir, hash);
    let bytes = std::fs::read(&path).ok()?;
    match bincode::deserialize::<CachedScene>(&bytes) {
        Ok(cached) if cached.version == FORMAT_VERSION => match from_cached(cached) {
            Ok(scene) => {
                log::debug!("scene cache hit: {}", path.display());
                Some(scene)
            }
            Err(e) => {
                log::warn!("discarding corrupt cache entry {}: {e}", path.display());
                None
            }
        },
        _ => {
            log::warn!("discarding unreadable cache entry {}", path.display());
            None
        }
    }
}

fn try_store(hash: &str, scene: &SceneAudio) -> Result<()> {
    let Some(dir) = cache_dir() else {
        return Ok(());
    };
    std::fs::create_dir_all(&dir).map_err(|source| Error::Io {
        path: dir.clone(),
        source,
    })?;
    let bytes = bincode::serialize(&to_cached(scene)).map_err(|e| {
        Error::InconsistentMetadata(format!("cannot encode scene for caching: {e}"))
    })?;
    // Write-then-rename so concurrent runs never observe a torn entry.
    let tmp = dir.join(format!("scene-{hash}.tmp.{}", std::process::id()));
    std::fs::write(&tmp, &bytes).map_err(|source| Error::Io {
        path: tmp.clone(),
        source,
    })?;
    let path = entry_path(&dir, hash);
    std::fs::rename(&tmp, &path).map_err(|source| Error::Io {
        path,
        source,
    })?;
    Ok(())
}

/// Render a scenario, going through the cache when it is enabled.
pub fn render_cached(scenario: &Scenario, hash: &str) -> Result<SceneAudio> {
    if let Some(scene) = try_load(hash) {
        return Ok(scene);
    }
    let scene = render_scenario(scenario)?;
    if let Err(e) = try_store(hash, &scene) {
        log::warn!("scene cache write failed (continuing uncached): {e}");
    }
    Ok(scene)
}
