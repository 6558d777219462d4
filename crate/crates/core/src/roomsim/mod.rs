//! Scenario simulation: rooms, arrays, sources, and rendered scenes.
//!
//! A [`Scenario`] describes a rectangular room, a microphone array, and a
//! set of sources (exactly one desired, any number of interferers), plus
//! mixing targets. [`render_scenario`] turns it into multichannel audio
//! with the desired image and the interference-plus-noise image kept
//! separate, calibrated so the input SINR at the reference microphone
//! hits the requested target exactly. [`steering_from_scenario`] extracts
//! the matching steering vector in one of three flavors, from an
//! idealized far-field phase model up to the full relative transfer
//! function of the simulated room.
//!
//! Everything is deterministic: all randomness flows from the scenario
//! seed through fixed per-source and per-channel derived streams.

mod image;
mod signals;

pub use image::{
    decay_time_to, image_method_rir, sabine_absorption, schroeder_decay_db, SPEED_OF_SOUND,
};
pub use signals::{synth_test_signals, SignalKind};

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::beamformers::{Normalization, SteeringVector};
use crate::stft::{read_wav, Waveform};
use crate::{Error, Result};

/// Channel against which steering vectors are normalized and mixing
/// levels are calibrated. Fixed to the first microphone.
pub const REFERENCE_CHANNEL: usize = 0;

/// What a source contributes to the scene.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceRole {
    Desired,
    Interference,
}

/// Where a source's signal comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SignalSpec {
    Synthetic { kind: SignalKind, duration_s: f64 },
    File { file: PathBuf },
}

/// One source with an absolute position inside the room.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    pub position_m: [f64; 3],
    pub role: SourceRole,
    pub signal: SignalSpec,
    /// Per-microphone impulse responses (mono WAV files) that bypass the
    /// room simulation for this source, e.g. measured responses.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rir_files: Option<Vec<PathBuf>>,
}

/// Fully resolved scene description. Usually built from a TOML file via
/// [`Scenario::load`]; every field is plain data so the whole scenario
/// can be hashed or serialized for provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub room_dims_m: [f64; 3],
    pub rt60_s: f64,
    pub mic_positions_m: Vec<[f64; 3]>,
    pub sources: Vec<SourceSpec>,
    pub sample_rate_hz: u32,
    /// Target ratio of desired power to interference-plus-noise power at
    /// the reference microphone, in dB.
    pub input_sinr_db: f64,
    pub sensor_noise: bool,
    /// Nominal sensor-noise level, in dB below the desired image at the
    /// reference microphone.
    pub sensor_noise_snr_db: f64,
    pub seed: u64,
    /// Cap on image-source reflection order; `None` derives it from the
    /// built-in -80 dB amplitude cutoff.
    pub max_image_order: Option<usize>,
}

/// Rendered scene. The stored components satisfy
/// `mixture = desired_image + interference_plus_noise_image` sample by
/// sample, by construction.
#[derive(Debug, Clone)]
pub struct SceneAudio {
    pub mixture: Waveform,
    pub desired_image: Waveform,
    pub interference_plus_noise_image: Waveform,
    /// Impulse responses indexed `[source][microphone]`.
    pub rirs: Vec<Vec<Vec<f64>>>,
    pub sample_rate: u32,
    pub seed: u64,
    /// Achieved input SINR at the reference microphone; `None` when the
    /// interference-plus-noise image is exactly zero.
    pub realized_input_sinr_db: Option<f64>,
    pub reference_channel: usize,
}

/// How the steering vector is derived from the scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SteeringMode {
    /// Plane-wave phase model from the source direction; ignores the
    /// room entirely.
    Freefield,
    /// Relative transfer function of the first 8 ms of the simulated
    /// response: direct path plus at most the earliest reflections.
    DirectPathRtf,
    /// Relative transfer function of the complete simulated response,
    /// time-aliased into one analysis frame.
    FullRtf,
}

impl std::str::FromStr for SteeringMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "freefield" => Ok(Self::Freefield),
            "direct_path_rtf" => Ok(Self::DirectPathRtf),
            "full_rtf" => Ok(Self::FullRtf),
            other => Err(Error::InvalidParameter(format!(
                "unknown steering mode {other:?}; expected freefield, direct_path_rtf, or full_rtf"
            ))),
        }
    }
}

impl std::fmt::Display for SteeringMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Freefield => "freefield",
            Self::DirectPathRtf => "direct_path_rtf",
            Self::FullRtf => "full_rtf",
        })
    }
}

// ---------------------------------------------------------------------
// TOML authoring schema
// ---------------------------------------------------------------------

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    sample_rate_hz: u32,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    max_image_order: Option<usize>,
    room: RoomFile,
    array: ArrayFile,
    #[serde(default)]
    mixing: MixingFile,
    sources: Vec<SourceFile>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RoomFile {
    dimensions_m: [f64; 3],
    rt60_s: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ArrayFile {
    positions_m: Option<Vec<[f64; 3]>>,
    center_m: Option<[f64; 3]>,
    count: Option<usize>,
    spacing_m: Option<f64>,
    axis: Option<Axis>,
}

#[derive(Deserialize, Clone, Copy)]
#[serde(rename_all = "lowercase")]
enum Axis {
    X,
    Y,
    Z,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct MixingFile {
    input_sinr_db: Option<f64>,
    sensor_noise: Option<bool>,
    sensor_noise_snr_db: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SourceFile {
    role: SourceRole,
    position_m: Option<[f64; 3]>,
    azimuth_deg: Option<f64>,
    distance_m: Option<f64>,
    signal: SignalSpec,
    #[serde(default)]
    rir_files: Option<Vec<PathBuf>>,
}

fn resolve(file: ScenarioFile) -> std::result::Result<Scenario, String> {
    let mic_positions_m = match (&file.array.positions_m, file.array.center_m) {
        (Some(positions), None) => positions.clone(),
        (None, Some(center)) => {
            let count = file
                .array
                .count
                .ok_or("array.count is required when array.center_m is used")?;
            let spacing = file
                .array
                .spacing_m
                .ok_or("array.spacing_m is required when array.center_m is used")?;
            let axis = match file.array.axis.unwrap_or(Axis::X) {
                Axis::X => 0,
                Axis::Y => 1,
                Axis::Z => 2,
            };
            (0..count)
                .map(|i| {
                    let mut p = center;
                    p[axis] += (i as f64 - (count as f64 - 1.0) / 2.0) * spacing;
                    p
                })
                .collect()
        }
        (Some(_), Some(_)) => {
            return Err("array: give either positions_m or center_m/count/spacing_m, not both"
                .to_string())
        }
        (None, None) => {
            return Err("array: give either positions_m or center_m/count/spacing_m".to_string())
        }
    };

    let centroid = centroid_of(&mic_positions_m);
    let sources = file
        .sources
        .into_iter()
        .enumerate()
        .map(|(i, s)| {
            let position_m = match (s.position_m, s.azimuth_deg, s.distance_m) {
                (Some(p), None, None) => p,
                (None, Some(az), Some(dist)) => {
                    // Azimuth 0 points along +y (broadside of an x-axis
                    // array), positive toward +x, in the horizontal plane
                    // through the array centroid.
                    let rad = az.to_radians();
                    [
                        centroid[0] + dist * rad.sin(),
                        centroid[1] + dist * rad.cos(),
                        centroid[2],
                    ]
                }
                _ => {
                    return Err(format!(
                        "source {i}: give either position_m or both azimuth_deg and distance_m"
                    ))
                }
            };
            Ok(SourceSpec {
                position_m,
                role: s.role,
                signal: s.signal,
                rir_files: s.rir_files,
            })
        })
        .collect::<std::result::Result<Vec<_>, String>>()?;

    Ok(Scenario {
        room_dims_m: file.room.dimensions_m,
        rt60_s: file.room.rt60_s,
        mic_positions_m,
        sources,
        sample_rate_hz: file.sample_rate_hz,
        input_sinr_db: file.mixing.input_sinr_db.unwrap_or(0.0),
        sensor_noise: file.mixing.sensor_noise.unwrap_or(true),
        sensor_noise_snr_db: file.mixing.sensor_noise_snr_db.unwrap_or(40.0),
        seed: file.seed,
        max_image_order: file.max_image_order,
    })
}

fn centroid_of(points: &[[f64; 3]]) -> [f64; 3] {
    let mut c = [0.0; 3];
    for p in points {
        for (ci, pi) in c.iter_mut().zip(p) {
            *ci += pi;
        }
    }
    let n = points.len().max(1) as f64;
    c.map(|x| x / n)
}

impl Scenario {
    /// Parse the TOML authoring schema. Positions given as azimuth and
    /// distance are resolved against the array centroid; validation is
    /// separate, see [`Scenario::validate`].
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: ScenarioFile = toml::from_str(text).map_err(|e| Error::InvalidScenario {
            path: PathBuf::from("<string>"),
            detail: e.to_string(),
        })?;
        resolve(file).map_err(|detail| Error::InvalidScenario {
            path: PathBuf::from("<string>"),
            detail,
        })
    }

    /// Load and resolve a scenario TOML file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::InvalidScenario { detail, .. } => Error::InvalidScenario {
                path: path.to_path_buf(),
                detail,
            },
            other => other,
        })
    }

    /// All problems with this scenario, as human-readable diagnostics.
    /// An empty list means the scenario is renderable.
    pub fn validate(&self) -> Vec<String> {
        let mut issues = Vec::new();
        let room = self.room_dims_m;
        if room.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            issues.push(format!(
                "room dimensions must be positive and finite, got {room:?}"
            ));
            return issues;
        }
        if !(self.rt60_s >= 0.0 && self.rt60_s.is_finite()) {
            issues.push(format!("rt60 must be finite and non-negative, got {}", self.rt60_s));
        } else if self.rt60_s > 0.0 {
            let alpha = sabine_absorption(room, self.rt60_s);
            if alpha > 1.0 {
                issues.push(format!(
                    "rt60 = {} s is infeasible for this room: it would need average \
                     absorption {alpha:.3} > 1",
                    self.rt60_s
                ));
            }
        }
        if self.sample_rate_hz == 0 {
            issues.push("sample rate must be positive".to_string());
        }
        if !self.input_sinr_db.is_finite() {
            issues.push(format!("input_sinr_db must be finite, got {}", self.input_sinr_db));
        }
        if !self.sensor_noise_snr_db.is_finite() {
            issues.push(format!(
                "sensor_noise_snr_db must be finite, got {}",
                self.sensor_noise_snr_db
            ));
        }
        if self.mic_positions_m.len() < 2 {
            issues.push(format!(
                "need at least 2 microphones, got {}",
                self.mic_positions_m.len()
            ));
        }
        let inside = |p: [f64; 3]| p.iter().zip(&room).all(|(&x, &l)| x > 0.0 && x < l);
        for (i, &p) in self.mic_positions_m.iter().enumerate() {
            if !inside(p) {
                issues.push(format!("microphone {i} at {p:?} is not strictly inside the room"));
            }
        }
        let desired = self
            .sources
            .iter()
            .filter(|s| s.role == SourceRole::Desired)
            .count();
        if desired != 1 {
            issues.push(format!("need exactly one desired source, got {desired}"));
        }
        for (i, s) in self.sources.iter().enumerate() {
            if !inside(s.position_m) {
                issues.push(format!(
                    "source {i} at {:?} is not strictly inside the room",
                    s.position_m
                ));
            }
            for (m, &mic) in self.mic_positions_m.iter().enumerate() {
                let d = dist(s.position_m, mic);
                if d < 1e-3 {
                    issues.push(format!(
                        "source {i} sits on top of microphone {m} (distance {d:.1e} m)"
                    ));
                }
            }
            if let SignalSpec::Synthetic { duration_s, .. } = s.signal {
                if !(duration_s > 0.0 && duration_s.is_finite()) {
                    issues.push(format!(
                        "source {i}: signal duration must be positive, got {duration_s}"
                    ));
                }
            }
            if let Some(files) = &s.rir_files {
                if files.len() != self.mic_positions_m.len() {
                    issues.push(format!(
                        "source {i}: {} rir_files given for {} microphones",
                        files.len(),
                        self.mic_positions_m.len()
                    ));
                }
            }
        }
        issues
    }

    /// Error with all validation diagnostics when the scenario is not
    /// renderable.
    pub fn ensure_valid(&self) -> Result<()> {
        let issues = self.validate();
        if issues.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "invalid scenario: {}",
                issues.join("; ")
            )))
        }
    }

    pub fn array_centroid(&self) -> [f64; 3] {
        centroid_of(&self.mic_positions_m)
    }

    /// Index of the unique desired source.
    pub fn desired_source_index(&self) -> Result<usize> {
        let mut it = self
            .sources
            .iter()
            .enumerate()
            .filter(|(_, s)| s.role == SourceRole::Desired);
        match (it.next(), it.next()) {
            (Some((i, _)), None) => Ok(i),
            _ => Err(Error::InvalidParameter(
                "scenario must have exactly one desired source".into(),
            )),
        }
    }
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    a.iter()
        .zip(&b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

// ---------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------

/// SplitMix64 step, used to derive independent per-source and
/// per-channel RNG streams from the scenario seed.
fn derived_seed(base: u64, tag: u64) -> u64 {
    let mut z = base ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed tag for source `i`'s signal stream.
fn source_tag(i: usize) -> u64 {
    1 + i as u64
}

/// Seed tag for microphone `m`'s sensor-noise stream.
fn sensor_tag(m: usize) -> u64 {
    0x1000_0000 + m as u64
}

fn mean_sq(x: &[f64]) -> f64 {
    if x.is_empty() {
        0.0
    } else {
        x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
    }
}

/// Linear convolution via FFT, truncated or zero-padded to `out_len`.
fn fft_convolve(signal: &[f64], kernel: &[f64], out_len: usize) -> Vec<f64> {
    if signal.is_empty() || kernel.is_empty() || out_len == 0 {
        return vec![0.0; out_len];
    }
    let full = signal.len() + kernel.len() - 1;
    let size = full.next_power_of_two();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);
    let mut a: Vec<Complex64> = signal
        .iter()
        .map(|&x| Complex64::new(x, 0.0))
        .chain(std::iter::repeat(Complex64::default()))
        .take(size)
        .collect();
    let mut b: Vec<Complex64> = kernel
        .iter()
        .map(|&x| Complex64::new(x, 0.0))
        .chain(std::iter::repeat(Complex64::default()))
        .take(size)
        .collect();
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (x, y) in a.iter_mut().zip(&b) {
        *x *= y;
    }
    inv.process(&mut a);
    let scale = 1.0 / size as f64;
    (0..out_len)
        .map(|i| if i < full { a[i].re * scale } else { 0.0 })
        .collect()
}

fn source_signal(spec: &SourceSpec, sample_rate: u32, seed: u64) -> Result<Vec<f64>> {
    match &spec.signal {
        SignalSpec::Synthetic { kind, duration_s } => {
            let wave = synth_test_signals(*kind, *duration_s, sample_rate, seed)?;
            Ok(wave.channel(0).to_vec())
        }
        SignalSpec::File { file } => {
            let wave = read_wav(file)?;
            if wave.num_channels() != 1 {
                return Err(Error::InvalidParameter(format!(
                    "signal file {} has {} channels, expected mono",
                    file.display(),
                    wave.num_channels()
                )));
            }
            if wave.sample_rate() != sample_rate {
                return Err(Error::InconsistentMetadata(format!(
                    "signal file {} is sampled at {} Hz but the scenario runs at {} Hz",
                    file.display(),
                    wave.sample_rate(),
                    sample_rate
                )));
            }
            Ok(wave.channel(0).to_vec())
        }
    }
}

/// Impulse responses from one source to every microphone, either
/// imported from files or simulated.
fn resolve_rirs(scenario: &Scenario, source_index: usize) -> Result<Vec<Vec<f64>>> {
    let source = &scenario.sources[source_index];
    if let Some(files) = &source.rir_files {
        return files
            .iter()
            .enumerate()
            .map(|(m, f)| {
                let wave = read_wav(f)?;
                if wave.num_channels() != 1 {
                    return Err(Error::InvalidParameter(format!(
                        "rir file {} has {} channels, expected mono",
                        f.display(),
                        wave.num_channels()
                    )));
                }
                if wave.sample_rate() != scenario.sample_rate_hz {
                    return Err(Error::InconsistentMetadata(format!(
                        "rir file {} (microphone {m}) is sampled at {} Hz but the \
                         scenario runs at {} Hz",
                        f.display(),
                        wave.sample_rate(),
                        scenario.sample_rate_hz
                    )));
                }
                Ok(wave.channel(0).to_vec())
            })
            .collect();
    }
    scenario
        .mic_positions_m
        .par_iter()
        .map(|&mic| {
            image_method_rir(
                scenario.room_dims_m,
                source.position_m,
                mic,
                scenario.rt60_s,
                scenario.max_image_order,
                scenario.sample_rate_hz,
            )
        })
        .collect()
}

/// Render a scenario to calibrated multichannel audio.
///
/// The scene length equals the desired source's signal length; longer
/// interferer signals are cropped and shorter ones padded. Interferers
/// share one gain (their relative levels are preserved) chosen so the
/// interference-plus-noise power at the reference microphone meets the
/// target exactly, accounting for the finite-sample cross term between
/// interference and noise. Without interferers the sensor noise itself
/// is scaled to the target; without either, the mixture is the desired
/// image unchanged.
pub fn render_scenario(scenario: &Scenario) -> Result<SceneAudio> {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    scenario.ensure_valid()?;
    let fs = scenario.sample_rate_hz;
    let num_mics = scenario.mic_positions_m.len();
    let des_idx = scenario.desired_source_index()?;

    let signals: Vec<Vec<f64>> = scenario
        .sources
        .iter()
        .enumerate()
        .map(|(i, s)| source_signal(s, fs, derived_seed(scenario.seed, source_tag(i))))
        .collect::<Result<_>>()?;
    let n = signals[des_idx].len();

    let rirs: Vec<Vec<Vec<f64>>> = (0..scenario.sources.len())
        .map(|i| resolve_rirs(scenario, i))
        .collect::<Result<_>>()?;

    // Per-source images at the microphones, cropped to the scene length.
    let images: Vec<Vec<Vec<f64>>> = rirs
        .par_iter()
        .enumerate()
        .map(|(i, per_mic)| {
            per_mic
                .par_iter()
                .map(|rir| fft_convolve(&signals[i], rir, n))
                .collect()
        })
        .collect();

    let desired_image = images[des_idx].clone();
    let mut interference = vec![vec![0.0; n]; num_mics];
    let mut has_interference = false;
    for (i, img) in images.iter().enumerate() {
        if scenario.sources[i].role == SourceRole::Interference {
            has_interference = true;
            for (acc, ch) in interference.iter_mut().zip(img) {
                for (a, &x) in acc.iter_mut().zip(ch) {
                    *a += x;
                }
            }
        }
    }

    let p_des = mean_sq(&desired_image[REFERENCE_CHANNEL]);
    if p_des <= 0.0 {
        return Err(Error::NumericGuard(
            "desired source renders to silence at the reference microphone; \
             mixing levels are undefined"
                .into(),
        ));
    }
    let p_ipn_target = p_des * 10f64.powf(-scenario.input_sinr_db / 10.0);

    // Sensor noise at its nominal level (relative to the desired image).
    let noise: Vec<Vec<f64>> = if scenario.sensor_noise {
        let sigma = (p_des * 10f64.powf(-scenario.sensor_noise_snr_db / 10.0)).sqrt();
        (0..num_mics)
            .map(|m| {
                let mut rng =
                    ChaCha8Rng::seed_from_u64(derived_seed(scenario.seed, sensor_tag(m)));
                (0..n)
                    .map(|_| sigma * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            })
            .collect()
    } else {
        vec![vec![0.0; n]; num_mics]
    };

    let ipn: Vec<Vec<f64>> = if has_interference {
        // One gain g for all interferers, from the exact power budget at
        // the reference microphone:
        //   g^2 P_int + 2 g C + P_noise = P_target,
        // with C the interference/noise cross term.
        let p_int = mean_sq(&interference[REFERENCE_CHANNEL]);
        if p_int <= 0.0 {
            return Err(Error::NumericGuard(
                "interference sources render to silence at the reference microphone; \
                 the input SINR target cannot be met"
                    .into(),
            ));
        }
        let p_noise = mean_sq(&noise[REFERENCE_CHANNEL]);
        let cross = interference[REFERENCE_CHANNEL]
            .iter()
            .zip(&noise[REFERENCE_CHANNEL])
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / n as f64;
        let c0 = p_noise - p_ipn_target;
        if c0 > 0.0 {
            return Err(Error::InvalidParameter(format!(
                "input SINR target {} dB cannot be met: sensor noise alone already \
                 exceeds the interference-plus-noise budget (noise at {:.2} dB SINR)",
                scenario.input_sinr_db,
                10.0 * (p_des / p_noise).log10()
            )));
        }
        let b = 2.0 * cross;
        let g = (-b + (b * b - 4.0 * p_int * c0).sqrt()) / (2.0 * p_int);
        noise
            .iter()
            .zip(&interference)
            .map(|(nv, iv)| nv.iter().zip(iv).map(|(&v, &i)| g * i + v).collect())
            .collect()
    } else if scenario.sensor_noise {
        // Noise is the entire interference-plus-noise budget, so it is
        // scaled to the SINR target regardless of its nominal level.
        let p_noise = mean_sq(&noise[REFERENCE_CHANNEL]);
        if p_noise <= 0.0 {
            return Err(Error::NumericGuard(
                "sensor noise rendered as exactly zero; cannot calibrate input SINR".into(),
            ));
        }
        let scale = (p_ipn_target / p_noise).sqrt();
        noise
            .iter()
            .map(|nv| nv.iter().map(|&v| scale * v).collect())
            .collect()
    } else {
        vec![vec![0.0; n]; num_mics]
    };

    let mixture: Vec<Vec<f64>> = desired_image
        .iter()
        .zip(&ipn)
        .map(|(d, v)| d.iter().zip(v).map(|(&a, &b)| a + b).collect())
        .collect();

    let p_ipn = mean_sq(&ipn[REFERENCE_CHANNEL]);
    let realized_input_sinr_db = if p_ipn > 0.0 {
        Some(10.0 * (p_des / p_ipn).log10())
    } else {
        None
    };

    Ok(SceneAudio {
        mixture: Waveform::new(mixture, fs)?,
        desired_image: Waveform::new(desired_image, fs)?,
        interference_plus_noise_image: Waveform::new(ipn, fs)?,
        rirs,
        sample_rate: fs,
        seed: scenario.seed,
        realized_input_sinr_db,
        reference_channel: REFERENCE_CHANNEL,
    })
}

// ---------------------------------------------------------------------
// Steering
// ---------------------------------------------------------------------

/// Steering vector toward the scenario's desired source, normalized to
/// the reference channel, for an analysis frame of `frame_len` samples.
pub fn steering_from_scenario(
    scenario: &Scenario,
    mode: SteeringMode,
    frame_len: usize,
) -> Result<SteeringVector> {
    scenario.ensure_valid()?;
    if frame_len < 2 || frame_len % 2 != 0 {
        return Err(Error::InvalidParameter(format!(
            "frame length must be even and at least 2, got {frame_len}"
        )));
    }
    let des_idx = scenario.desired_source_index()?;
    let num_bins = frame_len / 2 + 1;
    let fs = scenario.sample_rate_hz as f64;

    let raw: Vec<Vec<Complex64>> = match mode {
        SteeringMode::Freefield => {
            let centroid = scenario.array_centroid();
            let src = scenario.sources[des_idx].position_m;
            let range = dist(src, centroid);
            if range < 1e-6 {
                return Err(Error::Geometry(
                    "desired source coincides with the array centroid; its direction \
                     is undefined"
                        .into(),
                ));
            }
            let u = [
                (src[0] - centroid[0]) / range,
                (src[1] - centroid[1]) / range,
                (src[2] - centroid[2]) / range,
            ];
            // Plane-wave arrival: a microphone displaced toward the
            // source hears the wave earlier.
            let delays: Vec<f64> = scenario
                .mic_positions_m
                .iter()
                .map(|mic| {
                    let proj = (mic[0] - centroid[0]) * u[0]
                        + (mic[1] - centroid[1]) * u[1]
                        + (mic[2] - centroid[2]) * u[2];
                    -proj / SPEED_OF_SOUND
                })
                .collect();
            (0..num_bins)
                .map(|k| {
                    let f = k as f64 * fs / frame_len as f64;
                    delays
                        .iter()
                        .map(|&tau| Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * f * tau))
                        .collect()
                })
                .collect()
        }
        SteeringMode::DirectPathRtf | SteeringMode::FullRtf => {
            let rirs = resolve_rirs(scenario, des_idx)?;
            let spectra: Vec<Vec<Complex64>> = rirs
                .iter()
                .map(|rir| {
                    let kernel = if mode == SteeringMode::DirectPathRtf {
                        let cut = ((0.008 * fs).round() as usize).min(rir.len());
                        &rir[..cut]
                    } else {
                        &rir[..]
                    };
                    folded_spectrum(kernel, frame_len)
                })
                .collect();
            (0..num_bins)
                .map(|k| spectra.iter().map(|s| s[k]).collect())
                .collect()
        }
    };

    SteeringVector::new(raw, REFERENCE_CHANNEL, Normalization::ReferenceChannel)
}

/// One-sided spectrum of a kernel time-aliased into a `frame_len` frame.
fn folded_spectrum(kernel: &[f64], frame_len: usize) -> Vec<Complex64> {
    let mut buf = vec![Complex64::default(); frame_len];
    for (i, &x) in kernel.iter().enumerate() {
        buf[i % frame_len] += Complex64::new(x, 0.0);
    }
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(frame_len).process(&mut buf);
    buf.truncate(frame_len / 2 + 1);
    buf
}
