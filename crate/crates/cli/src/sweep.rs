//! Grid sweep engine: one scenario swept over input SINR and RT60,
//! each condition run through a list of beamformers with per-iteration
//! scoring, all rows collected into a single report.

use std::path::{Path, PathBuf};

use beamform::metrics::{EvalReport, Provenance};
use beamform::roomsim::SteeringMode;
use beamform::stft::write_wav_float32;
use beamform::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::commands::load_scenario;
use crate::{
    digest_hex, evaluate_output, prepare_scene, run_beamformer, BeamformerKind, MethodConfig,
    DEFAULT_STEERING,
};

/// A sweep definition as stored in a TOML file.
///
/// `sinr_grid_db` and `rt60_grid_s` default to the scenario's own value
/// (a grid of one); `p_grid` is required exactly when `cggd` appears in
/// the beamformer list. Relative `scenario` paths are resolved against
/// the directory containing the sweep file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub scenario: PathBuf,
    pub beamformers: Vec<String>,
    #[serde(default)]
    pub p_grid: Vec<f64>,
    #[serde(default)]
    pub sinr_grid_db: Option<Vec<f64>>,
    #[serde(default)]
    pub rt60_grid_s: Option<Vec<f64>>,
    pub iterations: usize,
    #[serde(default)]
    pub steering: Option<String>,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Write the enhanced signal of every (condition, method) pair under
    /// `<out>/audio/`. On by default; reports are always written.
    #[serde(default = "default_true")]
    pub write_audio: bool,
}

fn default_true() -> bool {
    true
}

impl RunSpec {
    /// Load a sweep file and resolve the scenario path.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut spec: RunSpec = toml::from_str(&text).map_err(|e| Error::InvalidScenario {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })?;
        if spec.scenario.is_relative() {
            if let Some(dir) = path.parent() {
                spec.scenario = dir.join(&spec.scenario);
            }
        }
        Ok(spec)
    }

    /// Structural problems with the sweep definition itself.
    pub fn issues(&self) -> Vec<String> {
        let mut issues = Vec::new();
        if self.beamformers.is_empty() {
            issues.push("beamformer list is empty".to_string());
        }
        for name in &self.beamformers {
            if !matches!(name.as_str(), "mpdr" | "mldr" | "oracle_mvdr" | "cggd") {
                issues.push(format!(
                    "unknown beamformer '{name}' (expected mpdr, mldr, oracle_mvdr or cggd)"
                ));
            }
        }
        let wants_cggd = self.beamformers.iter().any(|b| b == "cggd");
        if wants_cggd && self.p_grid.is_empty() {
            issues.push("p_grid must be non-empty when 'cggd' is listed".to_string());
        }
        if !wants_cggd && !self.p_grid.is_empty() {
            issues.push("p_grid given but 'cggd' is not in the beamformer list".to_string());
        }
        for &p in &self.p_grid {
            if !(0.0..=2.0).contains(&p) {
                issues.push(format!("shape parameter {p} outside [0, 2]"));
            }
        }
        if let Some(grid) = &self.sinr_grid_db {
            if grid.is_empty() {
                issues.push("sinr_grid_db is empty".to_string());
            }
            if grid.iter().any(|v| !v.is_finite()) {
                issues.push("sinr_grid_db contains a non-finite value".to_string());
            }
        }
        if let Some(grid) = &self.rt60_grid_s {
            if grid.is_empty() {
                issues.push("rt60_grid_s is empty".to_string());
            }
            if grid.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                issues.push("rt60_grid_s values must be finite and non-negative".to_string());
            }
        }
        if let Some(mode) = &self.steering {
            if mode.parse::<SteeringMode>().is_err() {
                issues.push(format!("unknown steering mode '{mode}'"));
            }
        }
        issues
    }

    fn methods(&self) -> Result<Vec<BeamformerKind>> {
        let mut out = Vec::new();
        for name in &self.beamformers {
            if name == "cggd" {
                for &p in &self.p_grid {
                    out.push(BeamformerKind::from_name("cggd", Some(p))?);
                }
            } else {
                out.push(BeamformerKind::from_name(name, None)?);
            }
        }
        Ok(out)
    }

    fn steering_mode(&self) -> Result<SteeringMode> {
        match &self.steering {
            Some(mode) => mode.parse(),
            None => Ok(DEFAULT_STEERING),
        }
    }
}

/// Result of a sweep: the combined report plus everything that went
/// wrong. Failures do not abort the sweep; they are recorded and the
/// remaining conditions still run.
pub struct SweepOutcome {
    pub report: EvalReport,
    pub failures: Vec<String>,
    pub csv_path: PathBuf,
    pub json_path: PathBuf,
}

fn condition_label(rt60: f64, sinr: f64) -> String {
    format!("rt60_{rt60}s_sinr_{sinr}dB")
}

/// Run the full grid. Writes `report.csv`/`report.json` into `out`
/// after every condition (so partial results survive interruption) and,
/// when requested, the enhanced audio per condition and method.
pub fn run_sweep(spec: &RunSpec, out: &Path) -> Result<SweepOutcome> {
    let issues = spec.issues();
    if !issues.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "invalid sweep definition: {}",
            issues.join("; ")
        )));
    }
    let base = load_scenario(&spec.scenario, spec.seed)?;
    base.ensure_valid()?;
    let steering_mode = spec.steering_mode()?;
    let methods = spec.methods()?;
    let label = spec
        .scenario
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scenario".to_string());

    let sinr_grid = spec
        .sinr_grid_db
        .clone()
        .unwrap_or_else(|| vec![base.input_sinr_db]);
    let rt60_grid = spec.rt60_grid_s.clone().unwrap_or_else(|| vec![base.rt60_s]);

    // The report identity covers the sweep definition and the resolved
    // base scenario, so a rerun of the same inputs hashes identically.
    let spec_json = serde_json::to_string(spec)
        .map_err(|e| Error::InconsistentMetadata(format!("cannot serialize sweep spec: {e}")))?;
    let scenario_json = serde_json::to_string(&base)
        .map_err(|e| Error::InconsistentMetadata(format!("cannot serialize scenario: {e}")))?;
    let hash = digest_hex(&[spec_json.as_bytes(), scenario_json.as_bytes()]);

    std::fs::create_dir_all(out).map_err(|source| Error::Io {
        path: out.to_path_buf(),
        source,
    })?;
    let csv_path = out.join("report.csv");
    let json_path = out.join("report.json");

    let mut report = EvalReport::new(Provenance::new(base.seed, hash));
    let mut failures = Vec::new();

    for &rt60 in &rt60_grid {
        for &sinr in &sinr_grid {
            let mut scenario = base.clone();
            scenario.rt60_s = rt60;
            scenario.input_sinr_db = sinr;
            let condition = condition_label(rt60, sinr);
            log::info!("condition {condition}: rendering");

            let prepared = match prepare_scene(&scenario, steering_mode) {
                Ok(p) => p,
                Err(e) => {
                    failures.push(format!("{condition}: {e}"));
                    continue;
                }
            };

            for &kind in &methods {
                let method = MethodConfig::new(kind, spec.iterations);
                let run = run_beamformer(&prepared, &method)
                    .and_then(|output| {
                        let rows = evaluate_output(&prepared, &method, &output, &label)?;
                        Ok((output, rows))
                    });
                match run {
                    Ok((output, rows)) => {
                        for row in rows {
                            if let Err(e) = report.push(row) {
                                failures.push(format!("{condition}/{kind}: {e}"));
                            }
                        }
                        if spec.write_audio {
                            let dir = out.join("audio").join(&condition);
                            let write = std::fs::create_dir_all(&dir)
                                .map_err(|source| Error::Io {
                                    path: dir.clone(),
                                    source,
                                })
                                .and_then(|()| {
                                    let wave = beamform::stft::synthesize(&output.estimates)?;
                                    write_wav_float32(dir.join(format!("{kind}.wav")), &wave)
                                });
                            if let Err(e) = write {
                                failures.push(format!("{condition}/{kind}: {e}"));
                            }
                        }
                    }
                    Err(e) => failures.push(format!("{condition}/{kind}: {e}")),
                }
            }

            // Flush after every condition; rows are sorted on write, so
            // the final files do not depend on traversal order.
            report.write_csv(&csv_path)?;
            report.write_json(&json_path)?;
        }
    }

    report.write_csv(&csv_path)?;
    report.write_json(&json_path)?;
    Ok(SweepOutcome {
        report,
        failures,
        csv_path,
        json_path,
    })
}
