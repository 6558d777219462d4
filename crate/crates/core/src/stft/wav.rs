use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::Waveform;
use crate::{Error, Result};

fn wav_err(path: &Path, source: hound::Error) -> Error {
    Error::Wav {
        path: path.to_path_buf(),
        source,
    }
}

/// Read a RIFF/WAVE file into a [`Waveform`].
///
/// Supports the two formats this crate writes: 16-bit integer PCM
/// (scaled to [-1, 1) by 1/32768) and 32-bit float (taken as-is).
pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let path = path.as_ref();
    let mut reader = WavReader::open(path).map_err(|e| wav_err(path, e))?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 {
        return Err(Error::EmptyInput("wav file has no channels"));
    }

    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| wav_err(path, e))?,
        (SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| wav_err(path, e))?,
        (format, bits) => {
            return Err(Error::InvalidParameter(format!(
                "unsupported wav format {format:?}/{bits}-bit in {}; expected 16-bit PCM or 32-bit float",
                path.display()
            )))
        }
    };

    let frames = interleaved.len() / channels;
    let mut deinterleaved = vec![Vec::with_capacity(frames); channels];
    for (i, &x) in interleaved.iter().enumerate() {
        deinterleaved[i % channels].push(x);
    }
    Waveform::new(deinterleaved, spec.sample_rate)
}

/// Write a [`Waveform`] as 32-bit float WAV (the lossless-enough default
/// for intermediate audio).
pub fn write_wav_float32(path: impl AsRef<Path>, wave: &Waveform) -> Result<()> {
    let path = path.as_ref();
    let spec = WavSpec {
        channels: wave.num_channels() as u16,
        sample_rate: wave.sample_rate(),
        bits_per_sample: 32,
        sample_format: SampleFormat::Float,
    };
    let mut writer = WavWriter::create(path, spec).map_err(|e| wav_err(path, e))?;
    for n in 0..wave.len() {
        for m in 0..wave.num_channels() {
            writer
                .write_sample(wave.channel(m)[n] as f32)
                .map_err(|e| wav_err(path, e))?;
        }
    }
    writer.finalize().map_err(|e| wav_err(path, e))
}

/// Write a [`Waveform`] as 16-bit PCM WAV. Samples are clamped to
/// [-1, 1] before quantization.
pub fn write_wav_int16(path: impl AsRef<Path>, wave: &Waveform) -> Result<()> {
    let path = path.as_ref();
    let spec = WavSpec {
        channels: wave.num_channels() as u16,
        sample_rate: wave.sample_rate(),
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut writer = WavWriter::create(path, spec).map_err(|e| wav_err(path, e))?;
    for n in 0..wave.len() {
        for m in 0..wave.num_channels() {
            let x = wave.channel(m)[n].clamp(-1.0, 1.0);
            writer
                .write_sample((x * 32767.0).round() as i16)
                .map_err(|e| wav_err(path, e))?;
        }
    }
    writer.finalize().map_err(|e| wav_err(path, e))
}
