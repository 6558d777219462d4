//! Deterministic synthetic source signals for simulated scenarios.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::stft::Waveform;
use crate::{Error, Result};

/// Family of synthetic test signals. All are reproducible from a seed;
/// the chirp happens to ignore it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalKind {
    /// Gaussian noise shaped by a syllabic on/off envelope: sparse in
    /// time like speech, with genuine pauses, so adaptive beamformers
    /// see the level fluctuations they were designed for.
    SpeechLikeModulatedNoise,
    /// Stationary Gaussian noise with the same spectral tilt as the
    /// speech-like signal but no envelope: a babble-style interferer
    /// whose level holds steady while the talker pauses.
    SpeechShapedNoise,
    /// Linear sine sweep from 200 Hz toward the upper band edge.
    TonalChirp,
    /// Stationary white Gaussian noise.
    White,
}

/// Synthesize a mono test signal of `duration_s` seconds.
///
/// Output RMS is approximately 0.1 so rendered scenes stay well inside
/// 16-bit range after room filtering and mixing.
pub fn synth_test_signals(
    kind: SignalKind,
    duration_s: f64,
    sample_rate: u32,
    seed: u64,
) -> Result<Waveform> {
    if !(duration_s > 0.0 && duration_s.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "signal duration must be positive, got {duration_s}"
        )));
    }
    if sample_rate == 0 {
        return Err(Error::InvalidParameter("sample rate must be positive".into()));
    }
    let n = (duration_s * sample_rate as f64).round() as usize;
    if n == 0 {
        return Err(Error::InvalidParameter(format!(
            "duration {duration_s} s is shorter than one sample at {sample_rate} Hz"
        )));
    }

    let samples = match kind {
        SignalKind::White => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..n)
                .map(|_| 0.1 * rng.sample::<f64, _>(StandardNormal))
                .collect()
        }
        SignalKind::TonalChirp => tonal_chirp(n, sample_rate),
        SignalKind::SpeechLikeModulatedNoise => speech_like(n, sample_rate, seed),
        SignalKind::SpeechShapedNoise => speech_shaped(n, seed),
    };
    Waveform::new(vec![samples], sample_rate)
}

fn tonal_chirp(n: usize, sample_rate: u32) -> Vec<f64> {
    let fs = sample_rate as f64;
    let f0 = 200.0_f64.min(0.1 * fs);
    let f1 = 3800.0_f64.min(0.45 * fs);
    let total = n as f64 / fs;
    (0..n)
        .map(|i| {
            let t = i as f64 / fs;
            let phase = 2.0 * std::f64::consts::PI * (f0 * t + (f1 - f0) * t * t / (2.0 * total));
            0.3 * phase.sin()
        })
        .collect()
}

/// White noise through a one-pole low-frequency tilt, the shared
/// carrier for both speech-style signals.
fn tilted_noise(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut carrier = vec![0.0_f64; n];
    let mut state = 0.0;
    for c in carrier.iter_mut() {
        let x: f64 = rng.sample(StandardNormal);
        state = x + 0.6 * state;
        *c = state;
    }
    carrier
}

fn normalize_rms(out: &mut [f64]) {
    let rms = (out.iter().map(|x| x * x).sum::<f64>() / out.len() as f64).sqrt();
    if rms > 0.0 {
        let scale = 0.1 / rms;
        for x in out.iter_mut() {
            *x *= scale;
        }
    }
}

fn speech_shaped(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = tilted_noise(n, &mut rng);
    normalize_rms(&mut out);
    out
}

fn speech_like(n: usize, sample_rate: u32, seed: u64) -> Vec<f64> {
    let fs = sample_rate as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let carrier = tilted_noise(n, &mut rng);

    // Syllabic envelope: piecewise segments of 80-250 ms, log-normal in
    // level with an occasional near-silent pause, like a steady talker.
    let pause_p = 0.08;
    let sigma = 0.6;
    let mut env = Vec::with_capacity(n);
    while env.len() < n {
        let seg_len = (rng.gen_range(0.08..0.25) * fs).round() as usize;
        let level = if rng.gen_bool(pause_p) {
            0.02
        } else {
            (sigma * rng.sample::<f64, _>(StandardNormal)).exp()
        };
        let take = seg_len.min(n - env.len()).max(1);
        env.extend(std::iter::repeat(level).take(take));
    }

    // Two passes of a short moving average give raised-cosine-like
    // transitions instead of hard level jumps.
    let width = ((0.008 * fs).round() as usize).max(1);
    let env = moving_average(&moving_average(&env, width), width);

    let mut out: Vec<f64> = carrier.iter().zip(&env).map(|(c, e)| c * e).collect();
    normalize_rms(&mut out);
    out
}

fn moving_average(x: &[f64], width: usize) -> Vec<f64> {
    if width <= 1 || x.is_empty() {
        return x.to_vec();
    }
    let mut out = Vec::with_capacity(x.len());
    let mut acc = 0.0;
    let mut from = 0usize;
    for i in 0..x.len() {
        acc += x[i];
        if i >= width {
            acc -= x[i - width];
            from = i - width + 1;
        }
        out.push(acc / (i - from + 1) as f64);
    }
    out
}
