//! Grayscale rendering of one profile channel as a binary PGM.
//!
//! Width is the number of frames, height the number of range bins (bin 0 on
//! the top row). Pixels are `|v|` min-max scaled to `0..=255` per image; a flat
//! image renders black.

use std::fs;
use std::path::Path;

use crate::cfmcw::ProfileGrid;
use crate::error::{Error, Result};

pub fn render_pgm(grid: &ProfileGrid, channel: usize) -> Result<Vec<u8>> {
    if channel >= grid.channels {
        return Err(Error::precondition(format!(
            "channel {channel} out of range (profile has {})",
            grid.channels
        )));
    }
    let (w, h) = (grid.frames, grid.range_bins);
    let mut mags = Vec::with_capacity(w * h);
    for b in 0..h {
        for t in 0..w {
            mags.push(grid.get(t, channel, b).abs());
        }
    }
    let lo = mags.iter().copied().fold(f32::INFINITY, f32::min);
    let hi = mags.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let span = hi - lo;
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(mags.iter().map(|m| {
        if span > 0.0 {
            (((m - lo) / span) * 255.0).round().clamp(0.0, 255.0) as u8
        } else {
            0
        }
    }));
    Ok(out)
}

pub fn write_pgm(grid: &ProfileGrid, channel: usize, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = render_pgm(grid, channel)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
