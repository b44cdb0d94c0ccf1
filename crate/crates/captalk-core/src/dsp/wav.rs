//! WAV ingestion: 16 kHz mono, PCM 16-bit or 32-bit float. Anything else is
//! rejected with a descriptive error; there is no resampling.

use super::{Waveform, SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::num::Real;
use hound::{SampleFormat, WavSpec};
use std::path::Path;

pub fn read_wav<F: Real>(path: impl AsRef<Path>) -> Result<Waveform<F>> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let mut reader = hound::WavReader::open(path).map_err(|e| Error::WavFormat {
        path: display.clone(),
        reason: e.to_string(),
    })?;
    let spec = reader.spec();

    if spec.channels != 1 {
        return Err(Error::WavFormat {
            path: display,
            reason: format!("expected mono, got {} channels", spec.channels),
        });
    }
    if spec.sample_rate != SAMPLE_RATE {
        return Err(Error::WavFormat {
            path: display,
            reason: format!("expected {SAMPLE_RATE} Hz, got {} Hz", spec.sample_rate),
        });
    }

    let samples: Vec<F> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| {
                s.map(|v| F::from_f64_c(v as f64 / 32768.0))
                    .map_err(|e| Error::WavFormat {
                        path: display.clone(),
                        reason: e.to_string(),
                    })
            })
            .collect::<Result<_>>()?,
        (SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| {
                s.map(|v| F::from_f64_c(v as f64))
                    .map_err(|e| Error::WavFormat {
                        path: display.clone(),
                        reason: e.to_string(),
                    })
            })
            .collect::<Result<_>>()?,
        (format, bits) => {
            return Err(Error::WavFormat {
                path: display,
                reason: format!("unsupported encoding {format:?}/{bits}-bit"),
            })
        }
    };

    Waveform::new(samples).map_err(|_| Error::WavFormat {
        path: path.display().to_string(),
        reason: "empty or non-finite audio".into(),
    })
}

/// Writes 16-bit PCM at 16 kHz; samples are clipped to `[-1, 1]`.
pub fn write_wav_i16<F: Real>(path: impl AsRef<Path>, w: &Waveform<F>) -> Result<()> {
    let path = path.as_ref();
    let spec = WavSpec {
        channels: 1,
        sample_rate: SAMPLE_RATE,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| Error::WavFormat {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    for &s in w.samples() {
        let v = s.to_f64().unwrap().clamp(-1.0, 1.0);
        let q = (v * 32767.0).round() as i16;
        writer.write_sample(q).map_err(|e| Error::WavFormat {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
    }
    writer.finalize().map_err(|e| Error::WavFormat {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    Ok(())
}
