//! Multichannel short-time Fourier analysis and synthesis.
//!
//! Conventions used throughout:
//!
//! * frames of `frame_len` samples advance by `hop` samples, with the same
//!   window applied on analysis and synthesis (matched windowing);
//! * spectra are one-sided, bins `0..=frame_len/2`, with the DC and
//!   Nyquist bins forced real (they are mathematically real for real
//!   input, forcing removes last-ulp noise from the FFT);
//! * one full frame of zeros is prepended and appended before framing and
//!   trimmed again after overlap-add, so for a constant-overlap-add
//!   window/hop pair the round trip reproduces every input sample, not
//!   just the interior ones.

mod wav;
mod window;

pub use wav::{read_wav, write_wav_float32, write_wav_int16};
pub use window::Window;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::{Error, Result};

/// Multichannel time-domain audio with a common sample rate.
///
/// All channels have the same length and contain finite samples; both are
/// enforced on construction.
#[derive(Clone, Debug, PartialEq)]
pub struct Waveform {
    channels: Vec<Vec<f64>>,
    sample_rate: u32,
}

impl Waveform {
    pub fn new(channels: Vec<Vec<f64>>, sample_rate: u32) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::EmptyInput("waveform has no channels"));
        }
        if channels[0].is_empty() {
            return Err(Error::EmptyInput("waveform has no samples"));
        }
        if sample_rate == 0 {
            return Err(Error::InvalidParameter("sample_rate must be positive".into()));
        }
        let len = channels[0].len();
        for (m, ch) in channels.iter().enumerate() {
            if ch.len() != len {
                return Err(Error::DimensionMismatch(format!(
                    "channel {m} has {} samples, channel 0 has {len}",
                    ch.len()
                )));
            }
            if !ch.iter().all(|x| x.is_finite()) {
                return Err(Error::NumericGuard(format!(
                    "channel {m} contains non-finite samples"
                )));
            }
        }
        Ok(Self {
            channels,
            sample_rate,
        })
    }

    /// Single-channel constructor.
    pub fn mono(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        Self::new(vec![samples], sample_rate)
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    /// Samples per channel.
    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels[0].is_empty()
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn channel(&self, m: usize) -> &[f64] {
        &self.channels[m]
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    /// Extract one channel as a new mono waveform.
    pub fn extract_channel(&self, m: usize) -> Waveform {
        Waveform {
            channels: vec![self.channels[m].clone()],
            sample_rate: self.sample_rate,
        }
    }

    /// Mean squared sample value of one channel.
    pub fn channel_power(&self, m: usize) -> f64 {
        let ch = &self.channels[m];
        ch.iter().map(|x| x * x).sum::<f64>() / ch.len() as f64
    }
}

/// Multichannel one-sided STFT, indexed `(channel m, bin k, frame l)`.
///
/// Carries the framing metadata needed to invert it: frame length, hop,
/// window, sample rate and the original sample count (`source_len`).
#[derive(Clone, Debug)]
pub struct StftTensor {
    data: Vec<Complex64>,
    channels: usize,
    num_bins: usize,
    num_frames: usize,
    frame_len: usize,
    hop: usize,
    window: Window,
    sample_rate: u32,
    source_len: usize,
}

impl StftTensor {
    /// Zero-filled tensor with validated metadata.
    pub fn zeros(
        channels: usize,
        num_frames: usize,
        frame_len: usize,
        hop: usize,
        window: Window,
        sample_rate: u32,
        source_len: usize,
    ) -> Result<Self> {
        validate_framing(frame_len, hop)?;
        window.cola_constant(frame_len, hop)?;
        if channels == 0 {
            return Err(Error::EmptyInput("tensor has no channels"));
        }
        if num_frames == 0 {
            return Err(Error::EmptyInput("tensor has no frames"));
        }
        let num_bins = frame_len / 2 + 1;
        if source_len + frame_len > (num_frames - 1) * hop + frame_len {
            return Err(Error::InconsistentMetadata(format!(
                "source_len {source_len} does not fit {num_frames} frames at hop {hop}"
            )));
        }
        Ok(Self {
            data: vec![Complex64::new(0.0, 0.0); channels * num_bins * num_frames],
            channels,
            num_bins,
            num_frames,
            frame_len,
            hop,
            window,
            sample_rate,
            source_len,
        })
    }

    /// Single-channel tensor with the same framing metadata as `self`.
    pub fn like_single_channel(&self) -> StftTensor {
        let mut t = self.clone();
        t.channels = 1;
        t.data = vec![Complex64::new(0.0, 0.0); self.num_bins * self.num_frames];
        t
    }

    fn idx(&self, m: usize, k: usize, l: usize) -> usize {
        debug_assert!(m < self.channels && k < self.num_bins && l < self.num_frames);
        (m * self.num_bins + k) * self.num_frames + l
    }

    pub fn get(&self, m: usize, k: usize, l: usize) -> Complex64 {
        self.data[self.idx(m, k, l)]
    }

    pub fn set(&mut self, m: usize, k: usize, l: usize, value: Complex64) {
        let i = self.idx(m, k, l);
        self.data[i] = value;
    }

    pub fn num_channels(&self) -> usize {
        self.channels
    }

    pub fn num_bins(&self) -> usize {
        self.num_bins
    }

    pub fn num_frames(&self) -> usize {
        self.num_frames
    }

    pub fn frame_len(&self) -> usize {
        self.frame_len
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn window(&self) -> Window {
        self.window
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    /// Original sample count restored by [`synthesize`].
    pub fn source_len(&self) -> usize {
        self.source_len
    }

    /// Center frequency of bin `k` in Hz.
    pub fn bin_frequency(&self, k: usize) -> f64 {
        k as f64 * self.sample_rate as f64 / self.frame_len as f64
    }

    /// All per-frame channel vectors `y(k, l)` for one bin, indexed
    /// `[l][m]`. This is the snapshot layout beamformers consume.
    pub fn bin_snapshots(&self, k: usize) -> Vec<Vec<Complex64>> {
        (0..self.num_frames)
            .map(|l| (0..self.channels).map(|m| self.get(m, k, l)).collect())
            .collect()
    }

    /// Mean squared magnitude over channels and frames for one bin.
    pub fn bin_mean_power(&self, k: usize) -> f64 {
        let mut acc = 0.0;
        for m in 0..self.channels {
            for l in 0..self.num_frames {
                acc += self.get(m, k, l).norm_sqr();
            }
        }
        acc / (self.channels * self.num_frames) as f64
    }
}

fn validate_framing(frame_len: usize, hop: usize) -> Result<()> {
    if frame_len < 2 || frame_len % 2 != 0 {
        return Err(Error::InvalidParameter(format!(
            "frame_len must be even and >= 2, got {frame_len}"
        )));
    }
    if hop == 0 || hop > frame_len || frame_len % hop != 0 {
        return Err(Error::InvalidParameter(format!(
            "hop must divide frame_len and satisfy 1 <= hop <= frame_len, got hop {hop} for frame_len {frame_len}"
        )));
    }
    Ok(())
}

/// Number of analysis frames for `len` input samples once one frame of
/// leading zero padding is in place.
fn frame_count(len: usize, frame_len: usize, hop: usize) -> usize {
    (frame_len + len - 1) / hop + 1
}

/// Short-time Fourier analysis of a multichannel waveform.
///
/// The window/hop pair must satisfy the constant-overlap-add condition
/// checked by [`Window::cola_constant`]; pairs that do not are rejected
/// here rather than producing a tensor that cannot be inverted.
pub fn analyze(wave: &Waveform, frame_len: usize, hop: usize, window: Window) -> Result<StftTensor> {
    validate_framing(frame_len, hop)?;
    window.cola_constant(frame_len, hop)?;

    let len = wave.len();
    let num_frames = frame_count(len, frame_len, hop);
    let mut tensor = StftTensor::zeros(
        wave.num_channels(),
        num_frames,
        frame_len,
        hop,
        window,
        wave.sample_rate(),
        len,
    )?;

    let w = window.samples(frame_len);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(frame_len);
    let num_bins = tensor.num_bins;
    let padded_len = (num_frames - 1) * hop + frame_len;

    let mut padded = vec![0.0f64; padded_len];
    let mut buf = vec![Complex64::new(0.0, 0.0); frame_len];
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];

    for m in 0..wave.num_channels() {
        padded.iter_mut().for_each(|x| *x = 0.0);
        padded[frame_len..frame_len + len].copy_from_slice(wave.channel(m));

        for l in 0..num_frames {
            let offset = l * hop;
            for (n, slot) in buf.iter_mut().enumerate() {
                *slot = Complex64::new(padded[offset + n] * w[n], 0.0);
            }
            fft.process_with_scratch(&mut buf, &mut scratch);
            for k in 0..num_bins {
                let mut v = buf[k];
                if k == 0 || k == num_bins - 1 {
                    v.im = 0.0;
                }
                tensor.set(m, k, l, v);
            }
        }
    }
    Ok(tensor)
}

/// Overlap-add synthesis, the inverse of [`analyze`].
///
/// Rebuilds the two-sided spectrum from the one-sided bins by conjugate
/// symmetry, so the output is real by construction. Returns exactly
/// `source_len` samples per channel.
pub fn synthesize(tensor: &StftTensor) -> Result<Waveform> {
    let frame_len = tensor.frame_len;
    let hop = tensor.hop;
    validate_framing(frame_len, hop)?;
    let cola = tensor.window.cola_constant(frame_len, hop)?;
    if tensor.num_bins != frame_len / 2 + 1 {
        return Err(Error::InconsistentMetadata(format!(
            "{} bins is not one-sided for frame_len {}",
            tensor.num_bins, frame_len
        )));
    }
    if tensor.source_len + frame_len > (tensor.num_frames - 1) * hop + frame_len {
        return Err(Error::InconsistentMetadata(format!(
            "source_len {} does not fit {} frames at hop {}",
            tensor.source_len, tensor.num_frames, hop
        )));
    }

    let w = tensor.window.samples(frame_len);
    let ifft = FftPlanner::<f64>::new().plan_fft_inverse(frame_len);
    let mut scratch = vec![Complex64::new(0.0, 0.0); ifft.get_inplace_scratch_len()];
    let padded_len = (tensor.num_frames - 1) * hop + frame_len;
    let scale = 1.0 / (frame_len as f64 * cola);

    let mut channels = Vec::with_capacity(tensor.channels);
    let mut buf = vec![Complex64::new(0.0, 0.0); frame_len];
    for m in 0..tensor.channels {
        let mut acc = vec![0.0f64; padded_len];
        for l in 0..tensor.num_frames {
            for k in 0..tensor.num_bins {
                buf[k] = tensor.get(m, k, l);
            }
            for k in 1..tensor.num_bins - 1 {
                buf[frame_len - k] = buf[k].conj();
            }
            ifft.process_with_scratch(&mut buf, &mut scratch);
            let offset = l * hop;
            for n in 0..frame_len {
                acc[offset + n] += buf[n].re * w[n] * scale;
            }
        }
        let trimmed = acc[frame_len..frame_len + tensor.source_len].to_vec();
        channels.push(trimmed);
    }
    Waveform::new(channels, tensor.sample_rate)
}
