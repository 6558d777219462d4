//! The single-scenario commands: validate, simulate, enhance, evaluate.
//!
//! Each is an ordinary function returning a summary value, so the test
//! suite can run full experiments without spawning the binary. The
//! binary in `main.rs` is a thin argument-parsing shell over these.

use std::path::{Path, PathBuf};

use beamform::metrics::{EvalReport, Provenance};
use beamform::roomsim::{Scenario, SteeringMode};
use beamform::stft::write_wav_float32;
use beamform::{Error, Result};
use serde::Serialize;

use crate::{
    config_hash, evaluate_output, prepare_scene, run_beamformer, BeamformerKind, MethodConfig,
    DEFAULT_STEERING,
};

/// Load a scenario and apply the command-line seed override.
pub fn load_scenario(config: &Path, seed: Option<u64>) -> Result<Scenario> {
    let mut scenario = Scenario::load(config)?;
    if let Some(seed) = seed {
        scenario.seed = seed;
    }
    Ok(scenario)
}

/// Check a scenario file without rendering anything. Returns the list
/// of problems; empty means the scenario is valid. File-level failures
/// (unreadable, malformed TOML, unresolvable geometry) surface as a
/// single diagnostic.
pub fn validate(config: &Path) -> Vec<String> {
    match Scenario::load(config) {
        Ok(scenario) => scenario
            .validate()
            .into_iter()
            .map(|issue| format!("{}: {issue}", config.display()))
            .collect(),
        Err(e) => vec![e.to_string()],
    }
}

#[derive(Debug, Serialize)]
pub struct SimulateSummary {
    pub config_hash: String,
    pub seed: u64,
    pub sample_rate_hz: u32,
    pub reference_channel: usize,
    pub realized_input_sinr_db: Option<f64>,
    pub mixture: PathBuf,
    pub desired_image: PathBuf,
    pub interference_plus_noise_image: PathBuf,
    pub rir_files: Vec<PathBuf>,
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::InconsistentMetadata(format!("cannot serialize summary: {e}")))?;
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Render a scenario and write the mixture, the two ground-truth
/// images, the per-(source, microphone) impulse responses, and a
/// `scene.json` summary into `out`.
pub fn simulate(config: &Path, out: &Path, seed: Option<u64>) -> Result<SimulateSummary> {
    let scenario = load_scenario(config, seed)?;
    scenario.ensure_valid()?;
    let hash = config_hash(&scenario);
    let scene = crate::cache::render_cached(&scenario, &hash)?;

    ensure_dir(out)?;
    let rir_dir = out.join("rirs");
    ensure_dir(&rir_dir)?;

    let mixture = out.join("mixture.wav");
    let desired = out.join("desired_image.wav");
    let ipn = out.join("interference_plus_noise_image.wav");
    write_wav_float32(&mixture, &scene.mixture)?;
    write_wav_float32(&desired, &scene.desired_image)?;
    write_wav_float32(&ipn, &scene.interference_plus_noise_image)?;

    let mut rir_files = Vec::new();
    for (s, per_mic) in scene.rirs.iter().enumerate() {
        for (m, rir) in per_mic.iter().enumerate() {
            let path = rir_dir.join(format!("source{s}_mic{m}.wav"));
            let wave = beamform::stft::Waveform::new(vec![rir.clone()], scene.sample_rate)?;
            write_wav_float32(&path, &wave)?;
            rir_files.push(path);
        }
    }

    let summary = SimulateSummary {
        config_hash: hash,
        seed: scenario.seed,
        sample_rate_hz: scene.sample_rate,
        reference_channel: scene.reference_channel,
        realized_input_sinr_db: scene.realized_input_sinr_db,
        mixture,
        desired_image: desired,
        interference_plus_noise_image: ipn,
        rir_files,
    };
    write_json(&out.join("scene.json"), &summary)?;
    Ok(summary)
}

/// Options shared by `enhance` and `evaluate`.
#[derive(Debug, Clone, Copy)]
pub struct EnhanceArgs {
    pub kind: BeamformerKind,
    pub iterations: usize,
    pub steering: Option<SteeringMode>,
    pub seed: Option<u64>,
}

impl EnhanceArgs {
    fn steering_mode(&self) -> SteeringMode {
        self.steering.unwrap_or(DEFAULT_STEERING)
    }
}

#[derive(Debug, Serialize)]
pub struct EnhanceSummary {
    pub config_hash: String,
    pub seed: u64,
    pub beamformer: String,
    pub shape_p: Option<f64>,
    pub steering: String,
    pub iterations_run: usize,
    pub per_iteration_weight_delta: Vec<f64>,
    pub max_constraint_deviation: f64,
    pub enhanced: PathBuf,
}

/// Run one beamformer over a scenario and write `enhanced.wav` plus an
/// `enhance.json` summary into `out`.
pub fn enhance(config: &Path, out: &Path, args: &EnhanceArgs) -> Result<EnhanceSummary> {
    let scenario = load_scenario(config, args.seed)?;
    let prepared = prepare_scene(&scenario, args.steering_mode())?;
    let method = MethodConfig::new(args.kind, args.iterations);
    let output = run_beamformer(&prepared, &method)?;

    ensure_dir(out)?;
    let enhanced_path = out.join("enhanced.wav");
    let enhanced = beamform::stft::synthesize(&output.estimates)?;
    write_wav_float32(&enhanced_path, &enhanced)?;

    let summary = EnhanceSummary {
        config_hash: prepared.config_hash.clone(),
        seed: scenario.seed,
        beamformer: args.kind.id().to_string(),
        shape_p: args.kind.shape_p(),
        steering: prepared.steering_mode.to_string(),
        iterations_run: output.iterations_run,
        per_iteration_weight_delta: output.per_iteration_weight_delta.clone(),
        max_constraint_deviation: output.weights.max_constraint_deviation(&prepared.steering),
        enhanced: enhanced_path,
    };
    write_json(&out.join("enhance.json"), &summary)?;
    Ok(summary)
}

/// Run one beamformer over a scenario and write a per-iteration metric
/// report (`report.csv` and `report.json`) into `out`.
pub fn evaluate(config: &Path, out: &Path, args: &EnhanceArgs) -> Result<EvalReport> {
    let scenario = load_scenario(config, args.seed)?;
    let prepared = prepare_scene(&scenario, args.steering_mode())?;
    let method = MethodConfig::new(args.kind, args.iterations);
    let output = run_beamformer(&prepared, &method)?;

    let label = config
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scenario".to_string());
    let rows = evaluate_output(&prepared, &method, &output, &label)?;

    let mut report = EvalReport::new(Provenance::new(
        scenario.seed,
        prepared.config_hash.clone(),
    ));
    for row in rows {
        report.push(row)?;
    }
    ensure_dir(out)?;
    report.write_csv(&out.join("report.csv"))?;
    report.write_json(&out.join("report.json"))?;
    Ok(report)
}
