//! 16-bit PCM WAV input and output.

use std::path::Path;

use crate::error::{Error, Result};
use crate::signal::Signal;

const FULL_SCALE: f64 = 32768.0;

fn map_err(e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) if io.kind() == std::io::ErrorKind::UnexpectedEof => {
            Error::CorruptHeader(format!("truncated file: {io}"))
        }
        hound::Error::IoError(io) => Error::Io(io),
        hound::Error::FormatError(msg) => Error::CorruptHeader(msg.to_string()),
        hound::Error::Unsupported => Error::UnsupportedFormat("compressed or unknown WAV encoding".into()),
        other => Error::UnsupportedFormat(other.to_string()),
    }
}

/// Reads a PCM16 file, scaling samples by 1/32768. Multichannel files yield
/// their first channel.
pub fn read_wav(path: impl AsRef<Path>) -> Result<Signal<f64>> {
    let path = path.as_ref();
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    // The file opened, so read failures while parsing the header mean it is malformed.
    let reader = hound::WavReader::new(file).map_err(|e| match e {
        hound::Error::IoError(io) => Error::CorruptHeader(io.to_string()),
        other => map_err(other),
    })?;
    let spec = reader.spec();
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(Error::UnsupportedFormat(format!(
            "{:?} with {} bits per sample",
            spec.sample_format, spec.bits_per_sample
        )));
    }
    let channels = spec.channels.max(1) as usize;
    if channels > 1 {
        log::warn!("{}: {channels} channels, using the first", path.display());
    }
    let mut samples = Vec::with_capacity(reader.len() as usize / channels);
    for (i, s) in reader.into_samples::<i16>().enumerate() {
        let s = s.map_err(map_err)?;
        if i % channels == 0 {
            samples.push(s as f64 / FULL_SCALE);
        }
    }
    if samples.is_empty() {
        return Err(Error::CorruptHeader("no sample data".into()));
    }
    Signal::new(samples, spec.sample_rate as f64)
}

/// Writes a mono PCM16 file; samples are rounded and saturated to the 16-bit range.
pub fn write_wav(path: impl AsRef<Path>, signal: &Signal<f64>) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: signal.sample_rate().round() as u32,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(path, spec).map_err(map_err)?;
    for &x in signal.samples() {
        let q = (x * FULL_SCALE).round().clamp(i16::MIN as f64, i16::MAX as f64) as i16;
        w.write_sample(q).map_err(map_err)?;
    }
    w.finalize().map_err(map_err)
}
