//! WAV file input and output.
//!
//! Accepts 16-bit PCM and 32-bit float, mono or multi-channel (channels are
//! averaged to mono with a warning). Output is always 16-bit PCM mono,
//! little-endian, clamped into [-1, 1].

use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::signal::Waveform;

fn hound_err(e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) => Error::Io(io),
        other => Error::UnsupportedFormat(other.to_string()),
    }
}

/// Reads a WAV file into a mono waveform.
pub fn read_wav<S: Scalar>(path: &Path) -> Result<Waveform<S>> {
    let mut reader = hound::WavReader::open(path).map_err(hound_err)?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 {
        return Err(Error::UnsupportedFormat("zero channels".into()));
    }
    let mono: Vec<S> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => {
            // Mirror of the writer's full-scale constant; -32768 lands just
            // below -1 and is clamped.
            let scale = 1.0 / 32767.0;
            average_channels(
                reader
                    .samples::<i16>()
                    .map(|s| {
                        s.map(|v| S::of_f64((v as f64 * scale).clamp(-1.0, 1.0)))
                            .map_err(hound_err)
                    }),
                channels,
            )?
        }
        (hound::SampleFormat::Float, 32) => average_channels(
            reader
                .samples::<f32>()
                .map(|s| s.map(|v| S::of_f64(v as f64)).map_err(hound_err)),
            channels,
        )?,
        (fmt, bits) => {
            return Err(Error::UnsupportedFormat(format!(
                "{bits}-bit {fmt:?} WAV; expected 16-bit PCM or 32-bit float"
            )))
        }
    };
    if channels > 1 {
        log::warn!(
            "{}: averaged {} channels to mono",
            path.display(),
            channels
        );
    }
    Waveform::new(mono, spec.sample_rate)
}

fn average_channels<S: Scalar>(
    samples: impl Iterator<Item = Result<S>>,
    channels: usize,
) -> Result<Vec<S>> {
    let mut mono = Vec::new();
    let mut acc = S::zero();
    let mut c = 0;
    let scale = S::one() / S::of_usize(channels);
    for s in samples {
        acc += s?;
        c += 1;
        if c == channels {
            mono.push(acc * scale);
            acc = S::zero();
            c = 0;
        }
    }
    if c != 0 {
        return Err(Error::UnsupportedFormat(
            "sample count is not a multiple of the channel count".into(),
        ));
    }
    Ok(mono)
}

/// Writes a waveform as 16-bit PCM mono, clamping into [-1, 1] first.
pub fn write_wav<S: Scalar>(w: &Waveform<S>, path: &Path) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: w.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(hound_err)?;
    for &s in &w.samples {
        let clamped = s.into_f64().clamp(-1.0, 1.0);
        let v = (clamped * 32767.0).round() as i16;
        writer.write_sample(v).map_err(hound_err)?;
    }
    writer.finalize().map_err(hound_err)?;
    Ok(())
}
