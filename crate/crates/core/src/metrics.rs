//! Evaluation metrics and deterministic result reporting.
//!
//! Three families live here: the closed-form robustness ratio that
//! predicts how strongly noise-dominated frames outweigh speech frames
//! in a reweighted covariance, waveform/STFT quality metrics (SI-SDR and
//! output-SINR improvement), and a report container whose CSV/JSON
//! serializations are byte-identical across reruns (sorted rows, no
//! timestamps, explicit provenance).

use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::beamformers::BeamWeights;
use crate::stft::StftTensor;
use crate::{Error, Result};

// ---------------------------------------------------------------------
// Robustness ratio
// ---------------------------------------------------------------------

/// Two-state model behind the robustness ratio: every frame of one bin
/// carries either speech at power `speech_power` plus noise, or noise
/// alone at power `noise_power`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobustnessScenario {
    /// Speech power in speech-active frames (lambda_s).
    pub speech_power: f64,
    /// Noise power, present in every frame (lambda_v).
    pub noise_power: f64,
    /// Floor applied to the per-frame power estimate (delta).
    pub floor_delta: f64,
    /// Number of frames without speech (L1).
    pub frames_speech_absent: usize,
    /// Number of frames with speech (L2).
    pub frames_speech_present: usize,
}

impl RobustnessScenario {
    fn check(&self) -> Result<()> {
        for (name, v) in [
            ("speech_power", self.speech_power),
            ("noise_power", self.noise_power),
            ("floor_delta", self.floor_delta),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        if self.frames_speech_present == 0 {
            return Err(Error::UndefinedMetric(
                "robustness ratio needs at least one speech-active frame".into(),
            ));
        }
        Ok(())
    }
}

/// Ratio of the weight mass that noise-only frames contribute to the
/// reweighted covariance over the mass contributed by speech frames,
/// for shape parameter `shape_p`. Noise-only frames sit at the floor,
/// weighted `delta^(p/2 - 1)`; speech frames are weighted by their own
/// power, `lambda_s^(p/2 - 1)`. Larger values mean the beamformer's
/// noise statistics are less contaminated by the target, i.e. more
/// robustness against self-cancellation.
pub fn robustness_ratio(scenario: &RobustnessScenario, shape_p: f64) -> Result<f64> {
    scenario.check()?;
    if !(0.0..=2.0).contains(&shape_p) || shape_p.is_nan() {
        return Err(Error::InvalidParameter(format!(
            "shape parameter must lie in [0, 2], got {shape_p}"
        )));
    }
    let l1 = scenario.frames_speech_absent as f64;
    let l2 = scenario.frames_speech_present as f64;
    let rho = scenario.noise_power / scenario.floor_delta.powf(1.0 - shape_p / 2.0);
    let eps = scenario.speech_power / scenario.noise_power;
    let s_pow = scenario.speech_power.powf(shape_p / 2.0);
    Ok((l1 * rho + l2 * s_pow / eps) / (l2 * s_pow))
}

/// The `shape_p = 2` special case in its simplified closed form,
/// `L / (L2 epsilon)` with `epsilon = lambda_s / lambda_v`. Kept as an
/// independent expression so the general formula can be cross-checked
/// against it.
pub fn robustness_ratio_quadratic(scenario: &RobustnessScenario) -> Result<f64> {
    scenario.check()?;
    let l = (scenario.frames_speech_absent + scenario.frames_speech_present) as f64;
    let l2 = scenario.frames_speech_present as f64;
    let eps = scenario.speech_power / scenario.noise_power;
    Ok(l / (l2 * eps))
}

/// One grid point of [`ratio_dominance_table`]: both ratios at a given
/// speech power and shape parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DominanceCheck {
    pub speech_power: f64,
    pub shape_p: f64,
    pub ratio_p: f64,
    pub ratio_quadratic: f64,
}

impl DominanceCheck {
    /// Whether the general ratio at this shape dominates the quadratic
    /// one. Expected to hold exactly when `speech_power >= floor_delta`.
    pub fn p_at_least_quadratic(&self) -> bool {
        self.ratio_p >= self.ratio_quadratic
    }

    pub fn difference(&self) -> f64 {
        self.ratio_p - self.ratio_quadratic
    }
}

/// Evaluate `robustness_ratio` against its quadratic special case over a
/// grid of speech powers and shape parameters, holding the rest of
/// `template` (noise power, floor, frame counts) fixed. The claimed
/// dominance law is that `ratio_p >= ratio_quadratic` holds exactly when
/// the speech power is at or above the floor.
pub fn ratio_dominance_table(
    template: &RobustnessScenario,
    speech_powers: &[f64],
    shape_ps: &[f64],
) -> Result<Vec<DominanceCheck>> {
    if speech_powers.is_empty() || shape_ps.is_empty() {
        return Err(Error::EmptyInput("dominance grid"));
    }
    let mut out = Vec::with_capacity(speech_powers.len() * shape_ps.len());
    for &speech_power in speech_powers {
        let sc = RobustnessScenario {
            speech_power,
            ..*template
        };
        let ratio_quadratic = robustness_ratio_quadratic(&sc)?;
        for &shape_p in shape_ps {
            out.push(DominanceCheck {
                speech_power,
                shape_p,
                ratio_p: robustness_ratio(&sc, shape_p)?,
                ratio_quadratic,
            });
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------
// SI-SDR
// ---------------------------------------------------------------------

/// Cap applied to SI-SDR in both directions; beyond roughly 80 dB the
/// ratio is numerically meaningless for f64 audio.
pub const SI_SDR_CAP_DB: f64 = 80.0;

/// Scale-invariant signal-to-distortion ratio of `estimate` against
/// `reference`, in dB, clamped to +/-80 dB. The estimate is first
/// projected onto the reference, so any global gain on either input
/// cancels out.
pub fn si_sdr(estimate: &[f64], reference: &[f64]) -> Result<f64> {
    if estimate.is_empty() {
        return Err(Error::EmptyInput("si_sdr estimate"));
    }
    if estimate.len() != reference.len() {
        return Err(Error::DimensionMismatch(format!(
            "si_sdr inputs differ in length: {} vs {}",
            estimate.len(),
            reference.len()
        )));
    }
    let ref_energy: f64 = reference.iter().map(|x| x * x).sum();
    if ref_energy <= 0.0 {
        return Err(Error::UndefinedMetric(
            "si_sdr reference signal has zero energy".into(),
        ));
    }
    let dot: f64 = estimate.iter().zip(reference).map(|(e, r)| e * r).sum();
    let alpha = dot / ref_energy;
    let target_energy = alpha * alpha * ref_energy;
    let noise_energy: f64 = estimate
        .iter()
        .zip(reference)
        .map(|(e, r)| {
            let d = e - alpha * r;
            d * d
        })
        .sum();
    if noise_energy <= 0.0 {
        return Ok(SI_SDR_CAP_DB);
    }
    if target_energy <= 0.0 {
        return Ok(-SI_SDR_CAP_DB);
    }
    Ok((10.0 * (target_energy / noise_energy).log10()).clamp(-SI_SDR_CAP_DB, SI_SDR_CAP_DB))
}

// ---------------------------------------------------------------------
// Output-SINR improvement
// ---------------------------------------------------------------------

/// Frames whose desired-signal energy at the reference channel falls
/// this far below the loudest frame are excluded from SINR averaging.
pub const DEFAULT_VAD_THRESHOLD_DB: f64 = -40.0;

/// SINR accounting before and after beamforming, in dB over the
/// speech-active frames.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SinrImprovement {
    pub input_db: f64,
    pub output_db: f64,
    pub improvement_db: f64,
    pub active_frames: usize,
}

/// Output-SINR improvement of `weights` given the scene's separated
/// components in the STFT domain.
///
/// Input SINR is measured on the reference channel of the two images,
/// output SINR on their beamformed counterparts, both restricted to the
/// same speech-active frames (frames whose desired-image energy at the
/// reference channel is within `vad_threshold_db` of the loudest
/// frame). Measuring input and output in the same domain over the same
/// frames makes the metric exactly zero for a beamformer that just
/// picks the reference channel.
pub fn output_sinr_improvement(
    weights: &BeamWeights,
    desired: &StftTensor,
    interference_plus_noise: &StftTensor,
    reference_channel: usize,
    vad_threshold_db: f64,
) -> Result<SinrImprovement> {
    if desired.num_bins() != interference_plus_noise.num_bins()
        || desired.num_frames() != interference_plus_noise.num_frames()
        || desired.num_channels() != interference_plus_noise.num_channels()
    {
        return Err(Error::InconsistentMetadata(
            "desired and interference-plus-noise tensors have different shapes".into(),
        ));
    }
    if weights.num_bins() != desired.num_bins() || weights.num_channels() != desired.num_channels()
    {
        return Err(Error::DimensionMismatch(format!(
            "weights are {} bins x {} channels but the scene is {} bins x {} channels",
            weights.num_bins(),
            weights.num_channels(),
            desired.num_bins(),
            desired.num_channels()
        )));
    }
    if reference_channel >= desired.num_channels() {
        return Err(Error::InvalidParameter(format!(
            "reference channel {reference_channel} out of range for {} channels",
            desired.num_channels()
        )));
    }
    let num_bins = desired.num_bins();
    let num_frames = desired.num_frames();

    // Frame energies of the desired image at the reference channel.
    let mut frame_energy = vec![0.0f64; num_frames];
    for k in 0..num_bins {
        for (l, e) in frame_energy.iter_mut().enumerate() {
            *e += desired.get(reference_channel, k, l).norm_sqr();
        }
    }
    let max_energy = frame_energy.iter().fold(0.0f64, |m, &e| m.max(e));
    let threshold = max_energy * 10f64.powf(vad_threshold_db / 10.0);
    let active: Vec<usize> = (0..num_frames)
        .filter(|&l| frame_energy[l] >= threshold && frame_energy[l] > 0.0)
        .collect();
    if active.is_empty() {
        return Err(Error::UndefinedMetric(
            "desired image is silent in every frame; SINR is undefined".into(),
        ));
    }

    let beamformed = |tensor: &StftTensor, k: usize, l: usize| -> Complex64 {
        let w = weights.bin(k);
        let mut acc = Complex64::default();
        for (m, wm) in w.iter().enumerate() {
            acc += wm.conj() * tensor.get(m, k, l);
        }
        acc
    };

    let mut in_des = 0.0;
    let mut in_ipn = 0.0;
    let mut out_des = 0.0;
    let mut out_ipn = 0.0;
    for k in 0..num_bins {
        for &l in &active {
            in_des += desired.get(reference_channel, k, l).norm_sqr();
            in_ipn += interference_plus_noise
                .get(reference_channel, k, l)
                .norm_sqr();
            out_des += beamformed(desired, k, l).norm_sqr();
            out_ipn += beamformed(interference_plus_noise, k, l).norm_sqr();
        }
    }
    if in_ipn <= 0.0 || out_ipn <= 0.0 {
        return Err(Error::UndefinedMetric(
            "interference-plus-noise image is zero over the active frames; \
             SINR is undefined"
                .into(),
        ));
    }
    if out_des <= 0.0 {
        return Err(Error::UndefinedMetric(
            "beamformed desired image is zero over the active frames".into(),
        ));
    }
    let input_db = 10.0 * (in_des / in_ipn).log10();
    let output_db = 10.0 * (out_des / out_ipn).log10();
    Ok(SinrImprovement {
        input_db,
        output_db,
        improvement_db: output_db - input_db,
        active_frames: active.len(),
    })
}

// ---------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------

/// Run provenance embedded in every report. Deliberately excludes
/// timestamps and host details so identical runs serialize identically.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    /// Hash of the resolved run configuration (16 hex digits).
    pub config_hash: String,
    pub tool_version: String,
}

impl Provenance {
    pub fn new(seed: u64, config_hash: String) -> Self {
        Self {
            seed,
            config_hash,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

/// One evaluated condition: a beamformer configuration on a scenario at
/// one iteration count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub scenario: String,
    pub beamformer: String,
    pub shape_p: Option<f64>,
    pub rt60_s: f64,
    pub input_sinr_db: f64,
    /// 0 is the initialization; iterative beamformers add one record per
    /// weight update.
    pub iteration: usize,
    pub si_sdr_db: f64,
    pub si_sdr_improvement_db: f64,
    pub output_sinr_improvement_db: f64,
    pub max_constraint_deviation: f64,
    pub weight_delta: Option<f64>,
}

impl EvalRecord {
    /// Canonical row identity; also the sort key for serialization.
    pub fn key(&self) -> String {
        let p = match self.shape_p {
            Some(p) => format!("{p}"),
            None => "-".to_string(),
        };
        format!(
            "{}|{}|p={}|rt60={}|sinr={}|iter={:06}",
            self.scenario, self.beamformer, p, self.rt60_s, self.input_sinr_db, self.iteration
        )
    }
}

/// Collection of evaluation rows plus provenance. Serialization sorts
/// rows by their key, so the bytes written do not depend on evaluation
/// order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub provenance: Provenance,
    pub records: Vec<EvalRecord>,
}

const CSV_HEADER: &str = "scenario,beamformer,shape_p,rt60_s,input_sinr_db,iteration,\
si_sdr_db,si_sdr_improvement_db,output_sinr_improvement_db,max_constraint_deviation,\
weight_delta,seed,config_hash,tool_version";

fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl EvalReport {
    pub fn new(provenance: Provenance) -> Self {
        Self {
            provenance,
            records: Vec::new(),
        }
    }

    /// Add a record, rejecting duplicate row identities.
    pub fn push(&mut self, record: EvalRecord) -> Result<()> {
        let key = record.key();
        if self.records.iter().any(|r| r.key() == key) {
            return Err(Error::InconsistentMetadata(format!(
                "duplicate report row {key}"
            )));
        }
        self.records.push(record);
        Ok(())
    }

    fn sorted_records(&self) -> Vec<&EvalRecord> {
        let mut rows: Vec<&EvalRecord> = self.records.iter().collect();
        rows.sort_by_key(|r| r.key());
        rows
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in self.sorted_records() {
            let p = r.shape_p.map(|p| format!("{p}")).unwrap_or_default();
            let wd = r.weight_delta.map(|d| format!("{d}")).unwrap_or_default();
            let fields = [
                csv_field(&r.scenario),
                csv_field(&r.beamformer),
                p,
                format!("{}", r.rt60_s),
                format!("{}", r.input_sinr_db),
                format!("{}", r.iteration),
                format!("{}", r.si_sdr_db),
                format!("{}", r.si_sdr_improvement_db),
                format!("{}", r.output_sinr_improvement_db),
                format!("{}", r.max_constraint_deviation),
                wd,
                format!("{}", self.provenance.seed),
                self.provenance.config_hash.clone(),
                self.provenance.tool_version.clone(),
            ];
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string()).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn to_json_string(&self) -> String {
        let mut sorted = self.clone();
        sorted.records.sort_by_key(|r| r.key());
        serde_json::to_string_pretty(&sorted).expect("report serialization cannot fail")
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json_string()).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| Error::InconsistentMetadata(format!(
            "cannot parse report {}: {e}",
            path.display()
        )))
    }
}
