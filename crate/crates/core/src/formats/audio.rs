//! Two-microphone audio: header-less interleaved `.f32x2` and 2-channel WAV.

use std::fs;
use std::path::Path;

use crate::cfmcw::ReceivedAudio;
use crate::error::{Error, Result};

/// Interleave `(mic0, mic1)` as little-endian f32.
pub fn encode_f32x2(mics: &[ReceivedAudio; 2]) -> Result<Vec<u8>> {
    let n = mics[0].samples.len();
    if mics[1].samples.len() != n {
        return Err(Error::Alignment(format!(
            "mic streams differ in length ({n} vs {})",
            mics[1].samples.len()
        )));
    }
    let mut out = Vec::with_capacity(8 * n);
    for (a, b) in mics[0].samples.iter().zip(&mics[1].samples) {
        out.extend_from_slice(&(*a as f32).to_le_bytes());
        out.extend_from_slice(&(*b as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn decode_f32x2(bytes: &[u8], sample_rate: f64) -> Result<[ReceivedAudio; 2]> {
    if bytes.len() % 8 != 0 {
        return Err(Error::Malformed(format!(
            ".f32x2 payload of {} bytes is not a whole number of stereo f32 samples",
            bytes.len()
        )));
    }
    let mut mic0 = Vec::with_capacity(bytes.len() / 8);
    let mut mic1 = Vec::with_capacity(bytes.len() / 8);
    for pair in bytes.chunks_exact(8) {
        mic0.push(f32::from_le_bytes(pair[..4].try_into().unwrap()) as f64);
        mic1.push(f32::from_le_bytes(pair[4..].try_into().unwrap()) as f64);
    }
    Ok([
        ReceivedAudio::new(0, mic0, sample_rate),
        ReceivedAudio::new(1, mic1, sample_rate),
    ])
}

pub fn write_f32x2(path: impl AsRef<Path>, mics: &[ReceivedAudio; 2]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_f32x2(mics)?).map_err(|e| Error::io(path, e))
}

/// `.f32x2` carries no header, so the sample rate is supplied by the caller.
pub fn read_f32x2(path: impl AsRef<Path>, sample_rate: f64) -> Result<[ReceivedAudio; 2]> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_f32x2(&bytes, sample_rate)
}

pub fn write_wav(path: impl AsRef<Path>, mics: &[ReceivedAudio; 2]) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 2,
        sample_rate: mics[0].sample_rate.round() as u32,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let mut writer = hound::WavWriter::create(path.as_ref(), spec)?;
    for (a, b) in mics[0].samples.iter().zip(&mics[1].samples) {
        writer.write_sample(*a as f32)?;
        writer.write_sample(*b as f32)?;
    }
    writer.finalize()?;
    Ok(())
}

/// Read a 2-channel WAV (float, or integer PCM scaled to [-1, 1)).
pub fn read_wav(path: impl AsRef<Path>) -> Result<[ReceivedAudio; 2]> {
    let mut reader = hound::WavReader::open(path.as_ref())?;
    let spec = reader.spec();
    if spec.channels != 2 {
        return Err(Error::Malformed(format!(
            "expected 2-channel WAV, found {} channels",
            spec.channels
        )));
    }
    let interleaved: Vec<f64> = match spec.sample_format {
        hound::SampleFormat::Float => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()?,
        hound::SampleFormat::Int => {
            let scale = 1.0 / (1u64 << (spec.bits_per_sample - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f64 * scale))
                .collect::<std::result::Result<_, _>>()?
        }
    };
    let rate = spec.sample_rate as f64;
    let mic0 = interleaved.iter().step_by(2).copied().collect();
    let mic1 = interleaved.iter().skip(1).step_by(2).copied().collect();
    Ok([
        ReceivedAudio::new(0, mic0, rate),
        ReceivedAudio::new(1, mic1, rate),
    ])
}

/// Dispatch on extension: `.wav` is parsed as WAV, anything else as `.f32x2`.
pub fn read_audio(path: impl AsRef<Path>, sample_rate: f64) -> Result<[ReceivedAudio; 2]> {
    let path = path.as_ref();
    let is_wav = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("wav"));
    if is_wav {
        read_wav(path)
    } else {
        read_f32x2(path, sample_rate)
    }
}
