use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::Waveform;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Reads a PCM WAV file, normalizing integer samples by full scale
/// (`2^(bits-1)`), so 16-bit 16384 becomes 0.5.
///
/// Multichannel files need an explicit `channel`.
pub fn load_wav<T: Scalar>(path: impl AsRef<Path>, channel: Option<usize>) -> Result<Waveform<T>> {
    let path = path.as_ref();
    let reader = WavReader::open(path).map_err(|e| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::Wav(other),
    })?;
    let spec = reader.spec();
    if spec.sample_format != SampleFormat::Int {
        return Err(Error::UnsupportedEncoding(format!(
            "{}: {}-bit float samples; only integer PCM is accepted",
            path.display(),
            spec.bits_per_sample
        )));
    }
    let channels = spec.channels;
    let channel = match (channels, channel) {
        (1, None) => 0,
        (_, None) => return Err(Error::ChannelSelectionRequired { channels }),
        (_, Some(c)) if c >= channels as usize => {
            return Err(Error::ChannelOutOfRange {
                channel: c,
                channels,
            })
        }
        (_, Some(c)) => c,
    };
    let full_scale = (1u64 << (spec.bits_per_sample - 1)) as f64;
    let stride = channels as usize;
    let samples = reader
        .into_samples::<i32>()
        .skip(channel)
        .step_by(stride)
        .map(|s| s.map(|v| T::of(v as f64 / full_scale)))
        .collect::<std::result::Result<Vec<T>, _>>()?;
    Waveform::new(samples, spec.sample_rate)
}

/// Writes 16-bit PCM, rounding to the nearest step and clipping to the
/// representable range.
pub fn save_wav<T: Scalar>(path: impl AsRef<Path>, w: &Waveform<T>) -> Result<()> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: w.sample_rate(),
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut writer = create(path.as_ref(), spec)?;
    for &s in w.samples() {
        let q = (s.as_f64() * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        writer.write_sample(q)?;
    }
    writer.finalize()?;
    Ok(())
}

/// Writes 32-bit IEEE float samples without scaling, for inspecting
/// intermediate signals.
pub fn save_wav_float<T: Scalar>(path: impl AsRef<Path>, w: &Waveform<T>) -> Result<()> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: w.sample_rate(),
        bits_per_sample: 32,
        sample_format: SampleFormat::Float,
    };
    let mut writer = create(path.as_ref(), spec)?;
    for &s in w.samples() {
        writer.write_sample(s.as_f64() as f32)?;
    }
    writer.finalize()?;
    Ok(())
}

fn create(path: &Path, spec: WavSpec) -> Result<WavWriter<std::io::BufWriter<std::fs::File>>> {
    WavWriter::create(path, spec).map_err(|e| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::Wav(other),
    })
}
