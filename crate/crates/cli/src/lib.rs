//! Library half of the `beamform` command-line harness.
//!
//! Everything the binary does lives here as plain functions so that
//! integration tests can drive full experiments in-process: scene
//! preparation (render + STFT + steering), beamformer dispatch,
//! per-iteration evaluation, and the grid sweep engine.

pub mod cache;
pub mod commands;
pub mod sweep;

use std::fmt;

use beamform::beamformers::{
    apply_weights, cggd_mldr, mldr, mpdr_weights, oracle_mvdr_weights, CggdConfig, DeltaFloor,
    EnhancedOutput, SteeringVector,
};
use beamform::cxlinalg::{sample_covariance, HermitianMatrix};
use beamform::metrics::{output_sinr_improvement, si_sdr, EvalRecord, DEFAULT_VAD_THRESHOLD_DB};
use beamform::roomsim::{steering_from_scenario, SceneAudio, Scenario, SteeringMode};
use beamform::stft::{analyze, synthesize, StftTensor, Window};
use beamform::{Error, Result};
use sha2::{Digest, Sha256};

/// Analysis framing shared by every command: 64 ms frames at 16 kHz
/// with 50% overlap and a square-root Hann window on both sides. The
/// long frame narrows the bins enough that speech dominates its own
/// bins, which is what makes the covariance weighting bite.
pub const FRAME_LEN: usize = 1024;
pub const HOP: usize = 512;
pub const ANALYSIS_WINDOW: Window = Window::SqrtHann;

/// Steer with the plane-wave model by default: it only assumes the
/// source bearing, which is what a deployed array would actually have,
/// and the residual mismatch against the true propagation is the
/// regime the reweighted beamformers are built for. Pass an explicit
/// mode to compare against geometry-exact steering.
pub const DEFAULT_STEERING: SteeringMode = SteeringMode::Freefield;

/// Pin the global thread pool to one worker. All parallel reductions in
/// the library are order-preserving, so results are bit-identical with
/// or without this; the flag exists to take scheduling out of the
/// picture entirely when auditing runs.
pub fn force_single_thread() {
    let _ = rayon::ThreadPoolBuilder::new().num_threads(1).build_global();
}

/// First 16 hex digits of the SHA-256 over the canonical (JSON) form of
/// the resolved scenario. This is the identity used for cache entries
/// and report provenance.
pub fn config_hash(scenario: &Scenario) -> String {
    let json = serde_json::to_string(scenario).expect("scenario serialization cannot fail");
    digest_hex(&[json.as_bytes()])
}

/// 16-hex-digit SHA-256 digest over the concatenated parts.
pub fn digest_hex(parts: &[&[u8]]) -> String {
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update(part);
    }
    let digest = hasher.finalize();
    let mut out = String::with_capacity(16);
    for byte in &digest[..8] {
        out.push_str(&format!("{byte:02x}"));
    }
    out
}

/// The four beamformer families the harness can run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BeamformerKind {
    /// Minimum power distortionless response on the mixture covariance.
    Mpdr,
    /// Inverse-power reweighted iteration (maximum-likelihood DR).
    Mldr,
    /// MVDR on the ground-truth interference-plus-noise covariance;
    /// only available in simulation.
    OracleMvdr,
    /// Generalized reweighted iteration with shape parameter `p`.
    Cggd { shape_p: f64 },
}

impl BeamformerKind {
    /// Resolve a CLI/config name plus optional shape parameter.
    pub fn from_name(name: &str, shape_p: Option<f64>) -> Result<Self> {
        match (name, shape_p) {
            ("mpdr", None) => Ok(Self::Mpdr),
            ("mldr", None) => Ok(Self::Mldr),
            ("oracle_mvdr", None) => Ok(Self::OracleMvdr),
            ("cggd", Some(p)) => Ok(Self::Cggd { shape_p: p }),
            ("cggd", None) => Err(Error::InvalidParameter(
                "beamformer 'cggd' needs a shape parameter (--p)".into(),
            )),
            (other, Some(_)) if matches!(other, "mpdr" | "mldr" | "oracle_mvdr") => {
                Err(Error::InvalidParameter(format!(
                    "beamformer '{other}' takes no shape parameter"
                )))
            }
            (other, _) => Err(Error::InvalidParameter(format!(
                "unknown beamformer '{other}' (expected mpdr, mldr, oracle_mvdr or cggd)"
            ))),
        }
    }

    /// Name used in reports and file names (without the shape parameter).
    pub fn id(&self) -> &'static str {
        match self {
            Self::Mpdr => "mpdr",
            Self::Mldr => "mldr",
            Self::OracleMvdr => "oracle_mvdr",
            Self::Cggd { .. } => "cggd",
        }
    }

    pub fn shape_p(&self) -> Option<f64> {
        match self {
            Self::Cggd { shape_p } => Some(*shape_p),
            _ => None,
        }
    }

    /// Whether the method refines its weights over iterations.
    pub fn is_iterative(&self) -> bool {
        matches!(self, Self::Mldr | Self::Cggd { .. })
    }
}

impl fmt::Display for BeamformerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Cggd { shape_p } => write!(f, "cggd_p{shape_p}"),
            other => write!(f, "{}", other.id()),
        }
    }
}

/// Everything derived from a scenario that beamforming and evaluation
/// need: the rendered scene, the three STFT tensors, and the steering
/// vectors.
pub struct PreparedScene {
    pub scenario: Scenario,
    pub scene: SceneAudio,
    pub config_hash: String,
    pub mixture: StftTensor,
    pub desired: StftTensor,
    pub interference_plus_noise: StftTensor,
    pub steering: SteeringVector,
    pub steering_mode: SteeringMode,
}

/// Render (or replay from cache) and transform a scenario.
pub fn prepare_scene(scenario: &Scenario, steering_mode: SteeringMode) -> Result<PreparedScene> {
    scenario.ensure_valid()?;
    let frame_len = FRAME_LEN;
    let hop = HOP;
    let hash = config_hash(scenario);
    let scene = cache::render_cached(scenario, &hash)?;
    let mixture = analyze(&scene.mixture, frame_len, hop, ANALYSIS_WINDOW)?;
    let desired = analyze(&scene.desired_image, frame_len, hop, ANALYSIS_WINDOW)?;
    let interference_plus_noise = analyze(
        &scene.interference_plus_noise_image,
        frame_len,
        hop,
        ANALYSIS_WINDOW,
    )?;
    let steering = steering_from_scenario(scenario, steering_mode, frame_len)?;
    Ok(PreparedScene {
        scenario: scenario.clone(),
        scene,
        config_hash: hash,
        mixture,
        desired,
        interference_plus_noise,
        steering,
        steering_mode,
    })
}

/// Knobs shared by all beamformer runs.
#[derive(Debug, Clone, Copy)]
pub struct MethodConfig {
    pub kind: BeamformerKind,
    /// Number of reweighting updates for iterative methods; ignored by
    /// MPDR and the oracle.
    pub iterations: usize,
    pub loading: f64,
    pub floor_delta: DeltaFloor,
    pub record_history: bool,
}

impl MethodConfig {
    pub fn new(kind: BeamformerKind, iterations: usize) -> Self {
        Self {
            kind,
            iterations,
            loading: 1e-6,
            // Small guard floor, three decades under the typical frame.
            // Raising it blunts the contrast between the reweighted
            // methods; the shape-0.5 weighting tolerates a tiny floor
            // where the plain inverse-power weighting turns erratic.
            floor_delta: DeltaFloor::RelativeToInitialOutputPower(1e-3),
            record_history: true,
        }
    }

    fn cggd_config(&self, shape_p: f64) -> CggdConfig {
        CggdConfig {
            shape_p,
            floor_delta: self.floor_delta,
            max_iterations: self.iterations,
            loading: self.loading,
            // Sweeps want one row per iteration, so never stop early.
            convergence_tol: None,
            record_history: self.record_history,
        }
    }
}

fn per_bin_covariances(tensor: &StftTensor) -> Result<Vec<HermitianMatrix>> {
    (0..tensor.num_bins())
        .map(|k| sample_covariance(&tensor.bin_snapshots(k)))
        .collect()
}

/// Wrap a one-shot (non-iterative) solution in the common output shape.
fn one_shot_output(
    weights: beamform::beamformers::BeamWeights,
    mixture: &StftTensor,
    record_history: bool,
) -> Result<EnhancedOutput> {
    let estimates = apply_weights(&weights, mixture)?;
    Ok(EnhancedOutput {
        estimates,
        weights: weights.clone(),
        iterations_run: 0,
        per_iteration_weight_delta: Vec::new(),
        weights_history: record_history.then(|| vec![weights]),
        floor_per_bin: Vec::new(),
    })
}

/// Run one beamformer on a prepared scene.
pub fn run_beamformer(prepared: &PreparedScene, method: &MethodConfig) -> Result<EnhancedOutput> {
    match method.kind {
        BeamformerKind::Mpdr => {
            let cov = per_bin_covariances(&prepared.mixture)?;
            let w = mpdr_weights(&cov, &prepared.steering, method.loading)?;
            one_shot_output(w, &prepared.mixture, method.record_history)
        }
        BeamformerKind::OracleMvdr => {
            let cov = per_bin_covariances(&prepared.interference_plus_noise)?;
            let w = oracle_mvdr_weights(&cov, &prepared.steering, method.loading)?;
            one_shot_output(w, &prepared.mixture, method.record_history)
        }
        BeamformerKind::Mldr => mldr(
            &prepared.mixture,
            &prepared.steering,
            &method.cggd_config(0.0),
        ),
        BeamformerKind::Cggd { shape_p } => cggd_mldr(
            &prepared.mixture,
            &prepared.steering,
            &method.cggd_config(shape_p),
        ),
    }
}

/// Score a beamformer run: one report row per recorded iteration
/// (iteration 0 is the initialization / the one-shot solution).
pub fn evaluate_output(
    prepared: &PreparedScene,
    method: &MethodConfig,
    output: &EnhancedOutput,
    scenario_label: &str,
) -> Result<Vec<EvalRecord>> {
    let history = output.weights_history.as_deref().ok_or_else(|| {
        Error::InvalidParameter(
            "evaluation needs record_history so every iteration can be scored".into(),
        )
    })?;
    let reference = prepared.scene.reference_channel;
    let desired_ref = prepared.scene.desired_image.channel(reference);
    let mixture_ref = prepared.scene.mixture.channel(reference);
    let input_si_sdr = si_sdr(mixture_ref, desired_ref)?;

    let mut rows = Vec::with_capacity(history.len());
    for (iteration, weights) in history.iter().enumerate() {
        let estimates = if iteration + 1 == history.len() {
            output.estimates.clone()
        } else {
            apply_weights(weights, &prepared.mixture)?
        };
        let enhanced = synthesize(&estimates)?;
        let si = si_sdr(enhanced.channel(0), desired_ref)?;
        let sinr = output_sinr_improvement(
            weights,
            &prepared.desired,
            &prepared.interference_plus_noise,
            reference,
            DEFAULT_VAD_THRESHOLD_DB,
        )?;
        rows.push(EvalRecord {
            scenario: scenario_label.to_string(),
            beamformer: method.kind.id().to_string(),
            shape_p: method.kind.shape_p(),
            rt60_s: prepared.scenario.rt60_s,
            input_sinr_db: prepared.scenario.input_sinr_db,
            iteration,
            si_sdr_db: si,
            si_sdr_improvement_db: si - input_si_sdr,
            output_sinr_improvement_db: sinr.improvement_db,
            max_constraint_deviation: weights.max_constraint_deviation(&prepared.steering),
            weight_delta: if iteration == 0 {
                None
            } else {
                Some(output.per_iteration_weight_delta[iteration - 1])
            },
        });
    }
    Ok(rows)
}
