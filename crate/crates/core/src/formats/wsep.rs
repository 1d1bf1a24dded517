//! `.wsep` echo-profile files.
//!
//! Layout, all little-endian:
//!
//! | bytes | field |
//! |-------|-------|
//! | 4 | magic `WSEP` |
//! | 4 | u32 version (1) |
//! | 4 | u32 channels |
//! | 4 | u32 range bins |
//! | 8 | u64 frames |
//! | 8 | f64 sample rate |
//! | 4·n | f32 values, `[frame][channel][bin]` |

use std::fs;
use std::path::Path;

use crate::cfmcw::ProfileGrid;
use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"WSEP";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 32;

pub fn encode(grid: &ProfileGrid) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * grid.values.len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(grid.channels as u32).to_le_bytes());
    out.extend_from_slice(&(grid.range_bins as u32).to_le_bytes());
    out.extend_from_slice(&(grid.frames as u64).to_le_bytes());
    out.extend_from_slice(&grid.sample_rate.to_le_bytes());
    for v in &grid.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<ProfileGrid> {
    if bytes.len() < HEADER_LEN {
        // A short file with the wrong magic is reported as a magic error.
        if bytes.len() >= 4 && bytes[..4] != MAGIC {
            return Err(Error::BadMagic {
                expected: MAGIC,
                found: bytes[..4].try_into().unwrap(),
            });
        }
        return Err(Error::Truncated {
            expected: HEADER_LEN as u64,
            actual: bytes.len() as u64,
        });
    }
    let found: [u8; 4] = bytes[..4].try_into().unwrap();
    if found != MAGIC {
        return Err(Error::BadMagic {
            expected: MAGIC,
            found,
        });
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let version = u32_at(4);
    if version != VERSION {
        return Err(Error::UnsupportedVersion {
            found: version,
            supported: VERSION,
        });
    }
    let channels = u32_at(8) as u64;
    let range_bins = u32_at(12) as u64;
    let frames = u64::from_le_bytes(bytes[16..24].try_into().unwrap());
    let sample_rate = f64::from_le_bytes(bytes[24..32].try_into().unwrap());

    let count = channels
        .checked_mul(range_bins)
        .and_then(|v| v.checked_mul(frames))
        .ok_or_else(|| Error::Malformed("header dimensions overflow".into()))?;
    let expected = count
        .checked_mul(4)
        .and_then(|v| v.checked_add(HEADER_LEN as u64))
        .ok_or_else(|| Error::Malformed("header dimensions overflow".into()))?;
    let actual = bytes.len() as u64;
    if actual < expected {
        return Err(Error::Truncated { expected, actual });
    }
    if actual > expected {
        return Err(Error::TrailingData {
            extra: actual - expected,
        });
    }
    let values = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(ProfileGrid {
        frames: frames as usize,
        channels: channels as usize,
        range_bins: range_bins as usize,
        sample_rate,
        values,
    })
}

pub fn write_wsep(path: impl AsRef<Path>, grid: &ProfileGrid) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode(grid)).map_err(|e| Error::io(path, e))
}

pub fn read_wsep(path: impl AsRef<Path>) -> Result<ProfileGrid> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}
