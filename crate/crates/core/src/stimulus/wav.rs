//! 16-bit PCM mono WAV, backed by `hound`.

use super::{AudioBuffer, AudioError};
use std::fs::File;
use std::io::{self, BufReader};
use std::path::Path;
use thiserror::Error;

const FULL_SCALE: f64 = 32768.0;

#[derive(Debug, Error)]
pub enum WavError {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("malformed WAV file: {0}")]
    Malformed(String),
    #[error("unsupported WAV format: {0}")]
    Unsupported(String),
    #[error("invalid audio: {0}")]
    Audio(#[from] AudioError),
}

impl From<hound::Error> for WavError {
    fn from(e: hound::Error) -> Self {
        match e {
            hound::Error::IoError(e) => WavError::Io(e),
            hound::Error::Unsupported => WavError::Unsupported("encoding not supported".into()),
            other => WavError::Malformed(other.to_string()),
        }
    }
}

/// Errors raised while decoding an already opened file; short reads mean truncation.
fn decode_error(e: hound::Error) -> WavError {
    match e {
        hound::Error::IoError(e) => WavError::Malformed(format!("truncated or unreadable: {e}")),
        other => other.into(),
    }
}

pub fn write_wav(buffer: &AudioBuffer, path: &Path) -> Result<(), WavError> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: buffer.sample_rate_hz(),
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec)?;
    {
        let mut w = writer.get_i16_writer(buffer.len() as u32);
        for &s in buffer.samples() {
            let q = (s * FULL_SCALE).round().clamp(i16::MIN as f64, i16::MAX as f64) as i16;
            w.write_sample(q);
        }
        w.flush()?;
    }
    writer.finalize()?;
    Ok(())
}

pub fn read_wav(path: &Path) -> Result<AudioBuffer, WavError> {
    let file = BufReader::new(File::open(path)?);
    let reader = hound::WavReader::new(file).map_err(decode_error)?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(WavError::Unsupported(format!(
            "{} channels, only mono is supported",
            spec.channels
        )));
    }
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(WavError::Unsupported(format!(
            "{}-bit {:?}, only 16-bit PCM is supported",
            spec.bits_per_sample, spec.sample_format
        )));
    }
    let declared = reader.len() as usize;
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| v as f64 / FULL_SCALE))
        .collect::<Result<Vec<f64>, _>>()
        .map_err(decode_error)?;
    if samples.len() != declared {
        return Err(WavError::Malformed(format!(
            "header declares {declared} samples, found {}",
            samples.len()
        )));
    }
    Ok(AudioBuffer::new(samples, spec.sample_rate)?)
}
