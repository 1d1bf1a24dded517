use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::cfmcw::{DifferentialEchoProfile, CHANNELS, RANGE_BINS};
use crate::error::{Error, Result};
use crate::sim::GestureLabel;

/// Frames per window (one second of differential frames).
pub const WINDOW_FRAMES: usize = 83;
/// Hop between window starts: floor(83 / 2).
pub const WINDOW_HOP: usize = 41;
/// Columns kept by a crop.
pub const CROP_FRAMES: usize = 80;
/// Largest crop start; `83 - 80`.
pub const MAX_CROP_START: usize = WINDOW_FRAMES - CROP_FRAMES;
pub const PATCHES_PER_CHANNEL: usize = 4;
pub const PATCH_FRAMES: usize = CROP_FRAMES / PATCHES_PER_CHANNEL;
pub const N_PATCHES: usize = CHANNELS * PATCHES_PER_CHANNEL;
pub const PATCH_DIM: usize = RANGE_BINS * PATCH_FRAMES;

/// Where a window came from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Provenance {
    pub participant_id: u32,
    pub session_id: u32,
    pub repetition: u32,
    pub label_id: u32,
    pub window_index: u32,
}

/// One labelled window, values laid out `[channel][bin][frame]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EchoWindow {
    values: Vec<f32>,
    pub label: GestureLabel,
    pub provenance: Provenance,
}

fn dims_string(c: usize, b: usize, t: usize) -> String {
    format!("({c}, {b}, {t})")
}

impl EchoWindow {
    pub const SHAPE: (usize, usize, usize) = (CHANNELS, RANGE_BINS, WINDOW_FRAMES);

    pub fn new(values: Vec<f32>, label: GestureLabel, provenance: Provenance) -> Result<Self> {
        let expected = CHANNELS * RANGE_BINS * WINDOW_FRAMES;
        if values.len() != expected {
            return Err(Error::Shape {
                expected: dims_string(CHANNELS, RANGE_BINS, WINDOW_FRAMES),
                actual: format!("{} values", values.len()),
            });
        }
        Ok(EchoWindow {
            values,
            label,
            provenance,
        })
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f32] {
        &mut self.values
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let n = RANGE_BINS * WINDOW_FRAMES;
        &self.values[c * n..(c + 1) * n]
    }

    pub fn get(&self, channel: usize, bin: usize, frame: usize) -> f32 {
        self.values[(channel * RANGE_BINS + bin) * WINDOW_FRAMES + frame]
    }
}

/// Cut a differential profile into 83-frame windows with a 41-frame hop.
/// A trailing partial window is dropped.
pub fn sliding_windows(
    profile: &DifferentialEchoProfile,
    label: &GestureLabel,
    origin: &Provenance,
) -> Result<Vec<EchoWindow>> {
    let g = profile.grid();
    if g.frames < WINDOW_FRAMES {
        return Err(Error::InsufficientFrames {
            needed: WINDOW_FRAMES,
            actual: g.frames,
        });
    }
    let count = window_count(g.frames)?;
    let mut out = Vec::with_capacity(count);
    for w in 0..count {
        let start = w * WINDOW_HOP;
        let mut values = vec![0.0f32; CHANNELS * RANGE_BINS * WINDOW_FRAMES];
        for t in 0..WINDOW_FRAMES {
            for c in 0..CHANNELS {
                let row = g.frame_channel(start + t, c);
                for (b, v) in row.iter().enumerate() {
                    values[(c * RANGE_BINS + b) * WINDOW_FRAMES + t] = *v;
                }
            }
        }
        let provenance = Provenance {
            window_index: w as u32,
            ..origin.clone()
        };
        out.push(EchoWindow::new(values, label.clone(), provenance)?);
    }
    Ok(out)
}

pub fn window_count(frames: usize) -> Result<usize> {
    if frames < WINDOW_FRAMES {
        return Err(Error::InsufficientFrames {
            needed: WINDOW_FRAMES,
            actual: frames,
        });
    }
    Ok((frames - WINDOW_FRAMES) / WINDOW_HOP + 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CropMode {
    Train,
    Eval,
}

/// `[channel][bin][frame]` with 80 frames.
#[derive(Debug, Clone, PartialEq)]
pub struct CroppedWindow {
    pub values: Vec<f32>,
    pub start: usize,
}

impl CroppedWindow {
    pub fn from_values(values: Vec<f32>) -> Result<Self> {
        if values.len() != CHANNELS * RANGE_BINS * CROP_FRAMES {
            return Err(Error::Shape {
                expected: dims_string(CHANNELS, RANGE_BINS, CROP_FRAMES),
                actual: format!("{} values", values.len()),
            });
        }
        Ok(CroppedWindow { values, start: 0 })
    }

    pub fn get(&self, channel: usize, bin: usize, frame: usize) -> f32 {
        self.values[(channel * RANGE_BINS + bin) * CROP_FRAMES + frame]
    }
}

/// Take 80 consecutive frames. Training draws the start from `{0..=3}`,
/// shared by all channels; evaluation always starts at 0.
pub fn crop_jitter<R: Rng + ?Sized>(window: &EchoWindow, mode: CropMode, rng: &mut R) -> CroppedWindow {
    let start = match mode {
        CropMode::Train => rng.random_range(0..=MAX_CROP_START),
        CropMode::Eval => 0,
    };
    crop_at(window, start)
}

pub fn crop_at(window: &EchoWindow, start: usize) -> CroppedWindow {
    assert!(start <= MAX_CROP_START, "crop start {start} out of range");
    let mut values = Vec::with_capacity(CHANNELS * RANGE_BINS * CROP_FRAMES);
    for row in window.values.chunks_exact(WINDOW_FRAMES) {
        values.extend_from_slice(&row[start..start + CROP_FRAMES]);
    }
    CroppedWindow { values, start }
}

/// 16 patches of 4000 values. Patch `c * 4 + j` holds channel `c`, frames
/// `[20j, 20j + 20)`, flattened bin-major: element `bin * 20 + frame`.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchSequence {
    data: Vec<f64>,
}

impl PatchSequence {
    pub fn from_flat(data: Vec<f64>) -> Result<Self> {
        if data.len() != N_PATCHES * PATCH_DIM {
            return Err(Error::Shape {
                expected: format!("{N_PATCHES} x {PATCH_DIM}"),
                actual: format!("{} values", data.len()),
            });
        }
        Ok(PatchSequence { data })
    }

    pub fn len(&self) -> usize {
        N_PATCHES
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn patch(&self, i: usize) -> &[f64] {
        &self.data[i * PATCH_DIM..(i + 1) * PATCH_DIM]
    }

    /// Row-major `16 x 4000`.
    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    /// Inverse of [`patchify`].
    pub fn unpatchify(&self) -> CroppedWindow {
        let mut values = vec![0.0f32; CHANNELS * RANGE_BINS * CROP_FRAMES];
        for c in 0..CHANNELS {
            for j in 0..PATCHES_PER_CHANNEL {
                let patch = self.patch(c * PATCHES_PER_CHANNEL + j);
                for b in 0..RANGE_BINS {
                    for k in 0..PATCH_FRAMES {
                        values[(c * RANGE_BINS + b) * CROP_FRAMES + j * PATCH_FRAMES + k] =
                            patch[b * PATCH_FRAMES + k] as f32;
                    }
                }
            }
        }
        CroppedWindow { values, start: 0 }
    }
}

pub fn patchify(cropped: &CroppedWindow) -> Result<PatchSequence> {
    if cropped.values.len() != CHANNELS * RANGE_BINS * CROP_FRAMES {
        return Err(Error::Shape {
            expected: dims_string(CHANNELS, RANGE_BINS, CROP_FRAMES),
            actual: format!("{} values", cropped.values.len()),
        });
    }
    let mut data = vec![0.0f64; N_PATCHES * PATCH_DIM];
    for c in 0..CHANNELS {
        for b in 0..RANGE_BINS {
            let row = &cropped.values[(c * RANGE_BINS + b) * CROP_FRAMES..][..CROP_FRAMES];
            for j in 0..PATCHES_PER_CHANNEL {
                let p = c * PATCHES_PER_CHANNEL + j;
                let dst = &mut data[p * PATCH_DIM + b * PATCH_FRAMES..][..PATCH_FRAMES];
                for (d, s) in dst.iter_mut().zip(&row[j * PATCH_FRAMES..][..PATCH_FRAMES]) {
                    *d = *s as f64;
                }
            }
        }
    }
    Ok(PatchSequence { data })
}

/// Population standard deviation over all values of the window.
pub fn window_std(window: &EchoWindow) -> f64 {
    let n = window.values.len() as f64;
    let mean = window.values.iter().map(|v| *v as f64).sum::<f64>() / n;
    let var = window
        .values
        .iter()
        .map(|v| (*v as f64 - mean).powi(2))
        .sum::<f64>()
        / n;
    var.sqrt()
}

/// Add `N(0, (sigma_rel * std(window))^2)` noise to every element.
pub fn augment_gaussian<R: Rng + ?Sized>(
    window: &EchoWindow,
    sigma_rel: f64,
    rng: &mut R,
) -> Result<EchoWindow> {
    if !(sigma_rel >= 0.0) {
        return Err(Error::precondition(format!("sigma_rel must be >= 0 (got {sigma_rel})")));
    }
    let mut out = window.clone();
    let sigma = sigma_rel * window_std(window);
    if sigma == 0.0 {
        return Ok(out);
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::precondition(e.to_string()))?;
    for v in out.values.iter_mut() {
        *v = (*v as f64 + normal.sample(rng)) as f32;
    }
    Ok(out)
}
