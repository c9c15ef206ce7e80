use std::path::Path;

use crate::error::Error;
use crate::signal::AudioClip;
use crate::{Real, Result, SAMPLE_RATE};

/// Reads 16-bit PCM mono WAV at 22 050 Hz.
pub fn read_wav<T: Real>(path: &Path) -> Result<AudioClip<T>> {
    let mut reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    if spec.sample_rate != SAMPLE_RATE {
        return Err(Error::UnsupportedSampleRate(spec.sample_rate));
    }
    if spec.channels != 1 {
        return Err(Error::UnsupportedFormat(format!(
            "{} channels, expected mono",
            spec.channels
        )));
    }
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(Error::UnsupportedFormat(format!(
            "{}-bit {:?} samples, expected 16-bit PCM",
            spec.bits_per_sample, spec.sample_format
        )));
    }
    let scale = T::lit(1.0 / 32768.0);
    let samples = reader
        .samples::<i16>()
        .map(|s| s.map(|v| T::lit(v as f64) * scale))
        .collect::<std::result::Result<Vec<T>, _>>()?;
    AudioClip::new(samples, spec.sample_rate)
}

/// Writes a clip as 16-bit PCM mono WAV.
pub fn write_wav<T: Real>(path: &Path, clip: &AudioClip<T>) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate(),
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(path, spec)?;
    for &s in clip.samples() {
        let v = (s.to_f64_lossy() * 32767.0).round().clamp(-32768.0, 32767.0) as i16;
        w.write_sample(v)?;
    }
    w.finalize()?;
    Ok(())
}
