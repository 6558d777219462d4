//! Distortionless spatial filters: MPDR, MLDR, oracle MVDR, and the
//! iteratively reweighted variant with a generalized-Gaussian shape
//! parameter `p`.
//!
//! All of them share one closed form per frequency bin,
//! `w = R^{-1} h / (h^H R^{-1} h)`, and differ only in which covariance
//! `R` they evaluate it on:
//!
//! * MPDR: the plain sample covariance of the noisy mixture;
//! * oracle MVDR: the sample covariance of the clean
//!   interference-plus-noise frames;
//! * MLDR: mixture frames weighted by the inverse of the current speech
//!   power estimate `max(|S|^2, delta)`;
//! * the reweighted beamformer: mixture frames weighted by
//!   `max(|S|^2, delta)^(p/2 - 1)`, which sweeps continuously from MPDR
//!   (`p = 2`, all weights 1) to MLDR (`p = 0`).
//!
//! The iterative variants alternate a speech estimate `S = w^H y` with a
//! weight update on the reweighted covariance, starting from the MPDR
//! solution.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cxlinalg::{sample_covariance, solve_regularized, weighted_covariance, HermitianMatrix};
use crate::stft::StftTensor;
use crate::{Error, Result};

/// How steering vectors are scaled after construction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Relative transfer function convention: the reference channel entry
    /// is exactly 1, so beamformer output is calibrated to that channel.
    ReferenceChannel,
    /// Unit L2 norm per bin.
    UnitNorm,
}

/// Per-bin steering (acoustic transfer) vectors toward the desired
/// source, stored already normalized.
#[derive(Clone, Debug)]
pub struct SteeringVector {
    vectors: Vec<Vec<Complex64>>,
    reference_channel: usize,
    normalization: Normalization,
}

impl SteeringVector {
    /// Normalize raw per-bin vectors and validate them: every bin must be
    /// non-zero, and the reference entry must be non-zero when the
    /// reference-channel convention is requested.
    pub fn new(
        raw: Vec<Vec<Complex64>>,
        reference_channel: usize,
        normalization: Normalization,
    ) -> Result<Self> {
        if raw.is_empty() {
            return Err(Error::EmptyInput("steering vector has no bins"));
        }
        let channels = raw[0].len();
        if channels == 0 {
            return Err(Error::EmptyInput("steering vector has no channels"));
        }
        if reference_channel >= channels {
            return Err(Error::InvalidParameter(format!(
                "reference channel {reference_channel} out of range for {channels} channels"
            )));
        }
        let mut vectors = Vec::with_capacity(raw.len());
        for (k, h) in raw.into_iter().enumerate() {
            if h.len() != channels {
                return Err(Error::DimensionMismatch(format!(
                    "bin {k} has {} channels, bin 0 has {channels}",
                    h.len()
                )));
            }
            let norm = h.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Err(Error::NumericGuard(format!(
                    "steering vector is identically zero at bin {k}"
                )));
            }
            let scaled: Vec<Complex64> = match normalization {
                Normalization::ReferenceChannel => {
                    let r = h[reference_channel];
                    if r.norm() == 0.0 {
                        return Err(Error::NumericGuard(format!(
                            "reference channel entry is zero at bin {k}, cannot normalize"
                        )));
                    }
                    h.iter().map(|z| z / r).collect()
                }
                Normalization::UnitNorm => h.iter().map(|z| z / norm).collect(),
            };
            vectors.push(scaled);
        }
        Ok(Self {
            vectors,
            reference_channel,
            normalization,
        })
    }

    pub fn num_bins(&self) -> usize {
        self.vectors.len()
    }

    pub fn num_channels(&self) -> usize {
        self.vectors[0].len()
    }

    pub fn bin(&self, k: usize) -> &[Complex64] {
        &self.vectors[k]
    }

    pub fn reference_channel(&self) -> usize {
        self.reference_channel
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }
}

/// Per-bin beamformer weight vectors `w(k)`.
#[derive(Clone, Debug)]
pub struct BeamWeights {
    vectors: Vec<Vec<Complex64>>,
}

impl BeamWeights {
    fn new(vectors: Vec<Vec<Complex64>>) -> Self {
        Self { vectors }
    }

    /// Build weights from explicit per-bin vectors (fixed spatial filters,
    /// channel selectors, test fixtures).
    pub fn from_vectors(vectors: Vec<Vec<Complex64>>) -> Result<Self> {
        if vectors.is_empty() {
            return Err(Error::EmptyInput("weights have no bins"));
        }
        let channels = vectors[0].len();
        if channels == 0 {
            return Err(Error::EmptyInput("weights have no channels"));
        }
        for (k, w) in vectors.iter().enumerate() {
            if w.len() != channels {
                return Err(Error::DimensionMismatch(format!(
                    "bin {k} has {} channels, bin 0 has {channels}",
                    w.len()
                )));
            }
        }
        Ok(Self { vectors })
    }

    /// The filter that passes `channel` through untouched at every bin.
    pub fn channel_selector(num_bins: usize, num_channels: usize, channel: usize) -> Result<Self> {
        if channel >= num_channels {
            return Err(Error::InvalidParameter(format!(
                "selector channel {channel} out of range for {num_channels} channels"
            )));
        }
        if num_bins == 0 {
            return Err(Error::EmptyInput("weights have no bins"));
        }
        let mut w = vec![Complex64::new(0.0, 0.0); num_channels];
        w[channel] = Complex64::new(1.0, 0.0);
        Ok(Self {
            vectors: vec![w; num_bins],
        })
    }

    pub fn num_bins(&self) -> usize {
        self.vectors.len()
    }

    pub fn num_channels(&self) -> usize {
        self.vectors[0].len()
    }

    pub fn bin(&self, k: usize) -> &[Complex64] {
        &self.vectors[k]
    }

    /// Largest deviation of `w^H h` from 1 over all bins; the
    /// distortionless constraint holds when this is at machine-precision
    /// level.
    pub fn max_constraint_deviation(&self, steering: &SteeringVector) -> f64 {
        (0..self.num_bins())
            .map(|k| (inner(self.bin(k), steering.bin(k)) - Complex64::new(1.0, 0.0)).norm())
            .fold(0.0, f64::max)
    }

    /// Largest relative L2 change `||new - old|| / ||old||` over bins.
    pub fn max_relative_change(&self, old: &BeamWeights) -> f64 {
        (0..self.num_bins())
            .map(|k| {
                let new = self.bin(k);
                let old = old.bin(k);
                let diff: f64 = new
                    .iter()
                    .zip(old)
                    .map(|(a, b)| (a - b).norm_sqr())
                    .sum::<f64>()
                    .sqrt();
                let base: f64 = old.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                diff / base
            })
            .fold(0.0, f64::max)
    }
}

/// `w^H y` with the beamformer convention (conjugate on the weights).
fn inner(w: &[Complex64], y: &[Complex64]) -> Complex64 {
    w.iter().zip(y).map(|(a, b)| a.conj() * b).sum()
}

/// Flooring rule for the per-frame speech power estimate.
///
/// The floor decides which frames the reweighting treats as
/// "speech-free": frames whose estimated power falls below it all get
/// the same (maximal) weight instead of ever-growing ones. Placing it
/// between the beamformed noise level and the active-speech level is
/// what keeps the iteration stable for small shape parameters; orders
/// of magnitude below the noise level, the weakest frames dominate the
/// covariance and the weights keep reshuffling.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaFloor {
    /// Fixed floor in absolute power units.
    Absolute(f64),
    /// Floor relative to the mean noisy power of each bin (mean of
    /// `|y|^2` over channels and frames). Keeps the whole iteration
    /// invariant to input scaling.
    RelativeToNoisyPower(f64),
    /// Floor relative to the mean output power of the initialization in
    /// each bin (mean of `|w0^H y|^2` over frames). Unlike the input
    /// power, this is on the same scale as the per-frame estimates being
    /// floored, so a moderate fraction (0.01 to 0.1) lands between the
    /// pause level and the active-speech level.
    RelativeToInitialOutputPower(f64),
}

/// Configuration of the iteratively reweighted beamformers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CggdConfig {
    /// Shape parameter `p` in [0, 2]; 2 freezes the iteration at MPDR,
    /// 0 reproduces MLDR.
    pub shape_p: f64,
    /// Floor for the per-frame power estimate, applied before the
    /// exponent.
    pub floor_delta: DeltaFloor,
    /// Hard cap on the number of weight updates.
    pub max_iterations: usize,
    /// Relative diagonal loading passed to every solve.
    pub loading: f64,
    /// Stop early once the largest relative weight change over bins
    /// drops below this; `None` runs exactly `max_iterations` updates.
    pub convergence_tol: Option<f64>,
    /// Keep the weights of every iteration (index 0 is the MPDR
    /// initialization) in the output.
    pub record_history: bool,
}

impl CggdConfig {
    /// Defaults for a given shape parameter: relative floor 1e-6,
    /// relative loading 1e-6, at most 10 updates, early stop at 1e-4.
    pub fn with_shape(shape_p: f64) -> Self {
        Self {
            shape_p,
            floor_delta: DeltaFloor::RelativeToNoisyPower(1e-6),
            max_iterations: 10,
            loading: 1e-6,
            convergence_tol: Some(1e-4),
            record_history: false,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..=2.0).contains(&self.shape_p) {
            return Err(Error::InvalidParameter(format!(
                "shape parameter p must lie in [0, 2], got {}",
                self.shape_p
            )));
        }
        let floor_value = match self.floor_delta {
            DeltaFloor::Absolute(d)
            | DeltaFloor::RelativeToNoisyPower(d)
            | DeltaFloor::RelativeToInitialOutputPower(d) => d,
        };
        if !(floor_value >= 0.0 && floor_value.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "floor delta must be finite and non-negative, got {floor_value}"
            )));
        }
        if !(self.loading >= 0.0 && self.loading.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "loading must be finite and non-negative, got {}",
                self.loading
            )));
        }
        if let Some(tol) = self.convergence_tol {
            if !(tol > 0.0 && tol.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "convergence tolerance must be positive, got {tol}"
                )));
            }
        }
        Ok(())
    }
}

/// Result of an iterative beamformer run.
#[derive(Clone, Debug)]
pub struct EnhancedOutput {
    /// Single-channel estimate `S(k, l) = w(k)^H y(k, l)` under the final
    /// weights, with the input's framing metadata.
    pub estimates: StftTensor,
    /// Final weights.
    pub weights: BeamWeights,
    /// Number of weight updates actually performed.
    pub iterations_run: usize,
    /// Largest relative weight change over bins, one entry per update.
    pub per_iteration_weight_delta: Vec<f64>,
    /// All iterates when requested: entry 0 is the initialization, entry
    /// `i` the weights after update `i`.
    pub weights_history: Option<Vec<BeamWeights>>,
    /// The resolved power floor per bin (useful for auditing the
    /// reweighting and for cost-monotonicity checks).
    pub floor_per_bin: Vec<f64>,
}

/// Current speech-power update of the reweighted iteration:
/// `|S|^(2 - p)` for the running estimate `S = w^H y`.
///
/// At `p = 2` the result is `|S|^0`, taken as 1 even at `S = 0` (the
/// IEEE `pow(0, 0) = 1` convention), which is what freezes the iteration
/// at MPDR. For `p < 2`, `S = 0` maps to 0 and is handled downstream by
/// the covariance floor.
pub fn lambda_update(s_hat: Complex64, shape_p: f64) -> f64 {
    debug_assert!((0.0..=2.0).contains(&shape_p));
    s_hat.norm().powf(2.0 - shape_p)
}

/// Apply per-bin weights to a multichannel tensor, producing the
/// single-channel beamformed estimate.
pub fn apply_weights(weights: &BeamWeights, tensor: &StftTensor) -> Result<StftTensor> {
    if weights.num_bins() != tensor.num_bins() {
        return Err(Error::DimensionMismatch(format!(
            "{} weight bins for {} tensor bins",
            weights.num_bins(),
            tensor.num_bins()
        )));
    }
    if weights.num_channels() != tensor.num_channels() {
        return Err(Error::DimensionMismatch(format!(
            "{} weight channels for {} tensor channels",
            weights.num_channels(),
            tensor.num_channels()
        )));
    }
    let mut out = tensor.like_single_channel();
    for k in 0..tensor.num_bins() {
        let w = weights.bin(k);
        for l in 0..tensor.num_frames() {
            let y: Vec<Complex64> = (0..tensor.num_channels())
                .map(|m| tensor.get(m, k, l))
                .collect();
            out.set(0, k, l, inner(w, &y));
        }
    }
    Ok(out)
}

/// One distortionless solve: `w = x / (h^H x)` with `x = (R + ridge)^{-1} h`.
fn distortionless_solve(
    covariance: &HermitianMatrix,
    h: &[Complex64],
    loading: f64,
) -> Result<Vec<Complex64>> {
    let x = solve_regularized(covariance, h, loading)?;
    let q: Complex64 = h.iter().zip(&x).map(|(hi, xi)| hi.conj() * xi).sum();
    if !(q.norm() > 0.0 && q.is_finite()) {
        return Err(Error::NumericGuard(
            "h^H R^{-1} h vanished; steering vector is in the null space".into(),
        ));
    }
    Ok(x.iter().map(|xi| xi / q).collect())
}

fn check_bins_channels(
    covariances: &[HermitianMatrix],
    steering: &SteeringVector,
) -> Result<()> {
    if covariances.len() != steering.num_bins() {
        return Err(Error::DimensionMismatch(format!(
            "{} covariances for {} steering bins",
            covariances.len(),
            steering.num_bins()
        )));
    }
    for (k, r) in covariances.iter().enumerate() {
        if r.dim() != steering.num_channels() {
            return Err(Error::DimensionMismatch(format!(
                "covariance at bin {k} is {}x{} but steering has {} channels",
                r.dim(),
                r.dim(),
                steering.num_channels()
            )));
        }
    }
    Ok(())
}

/// Minimum-power distortionless response weights from per-bin mixture
/// covariances.
pub fn mpdr_weights(
    covariances: &[HermitianMatrix],
    steering: &SteeringVector,
    loading: f64,
) -> Result<BeamWeights> {
    check_bins_channels(covariances, steering)?;
    let vectors = covariances
        .par_iter()
        .enumerate()
        .map(|(k, r)| distortionless_solve(r, steering.bin(k), loading).map_err(|e| e.with_bin(k)))
        .collect::<Result<Vec<_>>>()?;
    Ok(BeamWeights::new(vectors))
}

/// Minimum-variance distortionless response weights from clean
/// interference-plus-noise covariances (the oracle upper bound; same
/// closed form as [`mpdr_weights`], different covariance input).
pub fn oracle_mvdr_weights(
    noise_covariances: &[HermitianMatrix],
    steering: &SteeringVector,
    loading: f64,
) -> Result<BeamWeights> {
    mpdr_weights(noise_covariances, steering, loading)
}

/// Resolve the configured floor into a concrete per-bin value. Needs
/// the initialization weights because one of the rules is scaled by the
/// initial output power.
fn resolve_floor(
    cfg: &CggdConfig,
    tensor: &StftTensor,
    init: &BeamWeights,
    snapshots: &[Vec<Vec<Complex64>>],
) -> Vec<f64> {
    (0..tensor.num_bins())
        .map(|k| match cfg.floor_delta {
            DeltaFloor::Absolute(d) => d,
            DeltaFloor::RelativeToNoisyPower(rel) => rel * tensor.bin_mean_power(k),
            DeltaFloor::RelativeToInitialOutputPower(rel) => {
                let w = init.bin(k);
                let frames = &snapshots[k];
                let mean =
                    frames.iter().map(|y| inner(w, y).norm_sqr()).sum::<f64>()
                        / frames.len() as f64;
                rel * mean
            }
        })
        .collect()
}

fn check_finite(w: &[Complex64], iteration: usize, bin: usize) -> Result<()> {
    if w.iter().all(|z| z.is_finite()) {
        Ok(())
    } else {
        Err(Error::Diverged {
            iteration,
            bin: Some(bin),
        })
    }
}

/// The shared alternating loop. `reweight` maps the per-frame speech
/// power estimates `|S|^2` and the bin floor to a reweighted covariance.
fn reweighted_iteration<F>(
    tensor: &StftTensor,
    steering: &SteeringVector,
    cfg: &CggdConfig,
    reweight: F,
) -> Result<EnhancedOutput>
where
    F: Fn(&[Vec<Complex64>], &[f64], f64) -> Result<HermitianMatrix> + Sync,
{
    cfg.validate()?;
    if tensor.num_bins() != steering.num_bins() {
        return Err(Error::DimensionMismatch(format!(
            "{} tensor bins for {} steering bins",
            tensor.num_bins(),
            steering.num_bins()
        )));
    }
    if tensor.num_channels() != steering.num_channels() {
        return Err(Error::DimensionMismatch(format!(
            "{} tensor channels for {} steering channels",
            tensor.num_channels(),
            steering.num_channels()
        )));
    }
    if tensor.num_frames() < tensor.num_channels() {
        log::warn!(
            "only {} frames for {} channels: sample covariances are rank deficient and lean on diagonal loading",
            tensor.num_frames(),
            tensor.num_channels()
        );
    }

    let bins = tensor.num_bins();
    let snapshots: Vec<Vec<Vec<Complex64>>> = (0..bins).map(|k| tensor.bin_snapshots(k)).collect();

    // MPDR initialization.
    let mut weights = BeamWeights::new(
        (0..bins)
            .into_par_iter()
            .map(|k| {
                let r = sample_covariance(&snapshots[k])?;
                distortionless_solve(&r, steering.bin(k), cfg.loading).map_err(|e| e.with_bin(k))
            })
            .collect::<Result<Vec<_>>>()?,
    );
    let floors = resolve_floor(cfg, tensor, &weights, &snapshots);

    let mut history = cfg.record_history.then(|| vec![weights.clone()]);
    let mut deltas = Vec::new();
    let mut iterations_run = 0;

    for iteration in 1..=cfg.max_iterations {
        let updated = (0..bins)
            .into_par_iter()
            .map(|k| {
                let frames = &snapshots[k];
                let w = weights.bin(k);
                let powers: Vec<f64> = frames.iter().map(|y| inner(w, y).norm_sqr()).collect();
                let r = reweight(frames, &powers, floors[k]).map_err(|e| e.with_bin(k))?;
                let w_new = distortionless_solve(&r, steering.bin(k), cfg.loading)
                    .map_err(|e| e.with_bin(k))?;
                check_finite(&w_new, iteration, k)?;
                Ok(w_new)
            })
            .collect::<Result<Vec<_>>>()?;
        let updated = BeamWeights::new(updated);

        let delta = updated.max_relative_change(&weights);
        deltas.push(delta);
        weights = updated;
        if let Some(h) = history.as_mut() {
            h.push(weights.clone());
        }
        iterations_run = iteration;

        if let Some(tol) = cfg.convergence_tol {
            if delta < tol {
                break;
            }
        }
    }

    let estimates = apply_weights(&weights, tensor)?;
    Ok(EnhancedOutput {
        estimates,
        weights,
        iterations_run,
        per_iteration_weight_delta: deltas,
        weights_history: history,
        floor_per_bin: floors,
    })
}

/// Iteratively reweighted distortionless beamformer with shape parameter
/// `cfg.shape_p`.
///
/// Starting from the MPDR solution, each iteration estimates the speech
/// power per frame from the current output, rebuilds the covariance with
/// per-frame weights `max(|S|^2, delta)^(p/2 - 1)`, and re-solves the
/// distortionless problem. The weighted output power is non-increasing
/// across each weight update, and the endpoints reduce to MPDR (`p = 2`)
/// and MLDR (`p = 0`).
pub fn cggd_mldr(
    tensor: &StftTensor,
    steering: &SteeringVector,
    cfg: &CggdConfig,
) -> Result<EnhancedOutput> {
    let p = cfg.shape_p;
    reweighted_iteration(tensor, steering, cfg, move |frames, powers, floor| {
        Ok(weighted_covariance(frames, powers, p, floor)?.matrix)
    })
}

/// Maximum-likelihood distortionless response beamformer: the classical
/// inverse-power reweighting `R = sum_l y y^H / max(|S|^2, delta)`.
///
/// This is an independent implementation of the `p = 0` endpoint of
/// [`cggd_mldr`] (the frames are pre-scaled by the square root of the
/// weight instead of going through the exponent path), kept separate so
/// the two can be cross-validated against each other. `cfg.shape_p` is
/// ignored.
pub fn mldr(
    tensor: &StftTensor,
    steering: &SteeringVector,
    cfg: &CggdConfig,
) -> Result<EnhancedOutput> {
    let mut cfg = *cfg;
    cfg.shape_p = 0.0;
    reweighted_iteration(tensor, steering, &cfg, |frames, powers, floor| {
        if floor == 0.0 && powers.iter().any(|&x| x == 0.0) {
            return Err(Error::NumericGuard(
                "zero power estimate with zero floor delta".into(),
            ));
        }
        let scaled: Vec<Vec<Complex64>> = frames
            .iter()
            .zip(powers)
            .map(|(y, &lambda)| {
                let s = 1.0 / lambda.max(floor).sqrt();
                y.iter().map(|z| z * s).collect()
            })
            .collect();
        sample_covariance(&scaled)
    })
}
