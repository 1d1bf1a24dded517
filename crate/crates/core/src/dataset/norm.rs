use crate::cfmcw::CHANNELS;
use crate::error::{Error, Result};

use super::window::EchoWindow;

/// Per-channel standardization fitted on a training split.
///
/// A channel whose standard deviation is zero gets divisor 1 and is flagged.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NormStats {
    fitted: Option<Fitted>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Fitted {
    mean: [f64; CHANNELS],
    std: [f64; CHANNELS],
    flagged: [bool; CHANNELS],
}

/// Serialized size: `[mean, std, flag]` per channel as f64 LE.
pub const NORM_BLOB_LEN: usize = 3 * CHANNELS;

impl NormStats {
    pub fn unfitted() -> Self {
        NormStats::default()
    }

    pub fn fit(windows: &[EchoWindow]) -> Result<Self> {
        if windows.is_empty() {
            return Err(Error::Empty("training split"));
        }
        let mut sum = [0.0f64; CHANNELS];
        let mut count = 0usize;
        for w in windows {
            for (c, s) in sum.iter_mut().enumerate() {
                *s += w.channel(c).iter().map(|v| *v as f64).sum::<f64>();
            }
            count += w.channel(0).len();
        }
        let mean = sum.map(|s| s / count as f64);
        let mut sq = [0.0f64; CHANNELS];
        for w in windows {
            for (c, s) in sq.iter_mut().enumerate() {
                *s += w
                    .channel(c)
                    .iter()
                    .map(|v| (*v as f64 - mean[c]).powi(2))
                    .sum::<f64>();
            }
        }
        let raw = sq.map(|s| (s / count as f64).sqrt());
        let flagged = raw.map(|s| !(s > 0.0 && s.is_finite()));
        let mut std = raw;
        for c in 0..CHANNELS {
            if flagged[c] {
                std[c] = 1.0;
            }
        }
        Ok(NormStats {
            fitted: Some(Fitted { mean, std, flagged }),
        })
    }

    pub fn is_fitted(&self) -> bool {
        self.fitted.is_some()
    }

    fn get(&self) -> Result<&Fitted> {
        self.fitted.as_ref().ok_or(Error::UnfittedStats)
    }

    pub fn mean(&self) -> Result<[f64; CHANNELS]> {
        Ok(self.get()?.mean)
    }

    pub fn std(&self) -> Result<[f64; CHANNELS]> {
        Ok(self.get()?.std)
    }

    pub fn flagged(&self) -> Result<[bool; CHANNELS]> {
        Ok(self.get()?.flagged)
    }

    pub fn apply(&self, window: &EchoWindow) -> Result<EchoWindow> {
        let f = self.get()?;
        let mut out = window.clone();
        let n = out.values().len() / CHANNELS;
        for (c, chunk) in out.values_mut().chunks_exact_mut(n).enumerate() {
            for v in chunk {
                *v = ((*v as f64 - f.mean[c]) / f.std[c]) as f32;
            }
        }
        Ok(out)
    }

    pub fn to_blob(&self) -> Result<Vec<f64>> {
        let f = self.get()?;
        let mut out = Vec::with_capacity(NORM_BLOB_LEN);
        for c in 0..CHANNELS {
            out.extend([f.mean[c], f.std[c], if f.flagged[c] { 1.0 } else { 0.0 }]);
        }
        Ok(out)
    }

    pub fn from_blob(blob: &[f64]) -> Result<Self> {
        if blob.len() != NORM_BLOB_LEN {
            return Err(Error::Malformed(format!(
                "normalization blob has {} values, expected {NORM_BLOB_LEN}",
                blob.len()
            )));
        }
        let mut mean = [0.0; CHANNELS];
        let mut std = [0.0; CHANNELS];
        let mut flagged = [false; CHANNELS];
        for c in 0..CHANNELS {
            mean[c] = blob[3 * c];
            std[c] = blob[3 * c + 1];
            flagged[c] = blob[3 * c + 2] != 0.0;
            if !(std[c] > 0.0) {
                return Err(Error::Malformed(format!("channel {c} has std {}", std[c])));
            }
        }
        Ok(NormStats {
            fitted: Some(Fitted { mean, std, flagged }),
        })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        Ok(self.to_blob()?.iter().flat_map(|v| v.to_le_bytes()).collect())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() != 8 * NORM_BLOB_LEN {
            return Err(Error::Malformed(format!(
                "normalization blob has {} bytes, expected {}",
                bytes.len(),
                8 * NORM_BLOB_LEN
            )));
        }
        let blob: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        NormStats::from_blob(&blob)
    }
}
