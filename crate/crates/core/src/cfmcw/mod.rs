//! Cross-correlation FMCW sensing: chirp synthesis, band filtering, echo
//! frames and (differential) echo profiles.
//!
//! Two speakers transmit linear up-chirps in disjoint ultrasonic bands
//! continuously, back to back. Each microphone frame is band-filtered to one
//! transmitter's band and circularly cross-correlated with that transmitter's
//! chirp; lag `k` of the result corresponds to a round-trip delay of `k`
//! samples, i.e. a one-way range of `k * c / (2 * fs)`.

mod correlate;
mod profile;

pub use correlate::{band_filter, echo_frame, EchoProcessor};
pub use profile::{
    compute_echo_profile, compute_echo_profile_with, differentiate, DifferentialEchoProfile, EchoProfile, ProfileGrid,
    ReceivedAudio,
};

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Speed of sound used for range conversion, m/s.
pub const SPEED_OF_SOUND: f64 = 343.0;
pub const SAMPLE_RATE: f64 = 50_000.0;
pub const FRAME_LEN: usize = 600;
/// Number of correlation lags kept per echo frame.
pub const RANGE_BINS: usize = 200;
/// (tx_a, mic0), (tx_b, mic0), (tx_a, mic1), (tx_b, mic1).
pub const CHANNELS: usize = 4;
/// Minimum spacing between the two transmit bands, Hz.
pub const MIN_GUARD_HZ: f64 = 400.0;
/// Minimum echo-frame rate, frames per second.
pub const MIN_FRAME_RATE: f64 = 83.0;
/// Fraction of the chirp (at each end) covered by the raised-cosine taper.
pub const TAPER_FRACTION: f64 = 0.05;

/// Channel index for a (transmitter, microphone) pair.
#[inline]
pub fn channel_index(tx: usize, mic: usize) -> usize {
    tx + 2 * mic
}

/// One-way distance covered by a single range bin, in metres.
pub fn bin_size_m(sample_rate: f64) -> f64 {
    SPEED_OF_SOUND / (2.0 * sample_rate)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChirpSpec {
    pub f_start: f64,
    pub f_end: f64,
    pub sample_rate: f64,
    pub n_samples: usize,
    pub amplitude: f64,
}

impl ChirpSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.f_start > 0.0) {
            return Err(Error::precondition(format!(
                "f_start must be > 0 (got {})",
                self.f_start
            )));
        }
        if !(self.f_start < self.f_end) {
            return Err(Error::precondition(format!(
                "f_start < f_end required (got {} >= {})",
                self.f_start, self.f_end
            )));
        }
        if !(self.f_end < self.sample_rate / 2.0) {
            return Err(Error::precondition(format!(
                "f_end must be below Nyquist {} (got {})",
                self.sample_rate / 2.0,
                self.f_end
            )));
        }
        if self.n_samples < 2 {
            return Err(Error::precondition(format!(
                "n_samples >= 2 required (got {})",
                self.n_samples
            )));
        }
        if !(self.amplitude > 0.0 && self.amplitude <= 1.0) {
            return Err(Error::precondition(format!(
                "amplitude must be in (0, 1] (got {})",
                self.amplitude
            )));
        }
        Ok(())
    }

    pub fn band(&self) -> (f64, f64) {
        (self.f_start, self.f_end)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransmitConfig {
    pub tx_a: ChirpSpec,
    pub tx_b: ChirpSpec,
    pub sample_rate: f64,
    pub frame_len: usize,
}

impl Default for TransmitConfig {
    fn default() -> Self {
        let chirp = |f_start, f_end| ChirpSpec {
            f_start,
            f_end,
            sample_rate: SAMPLE_RATE,
            n_samples: FRAME_LEN,
            amplitude: 1.0,
        };
        TransmitConfig {
            tx_a: chirp(18_000.0, 21_000.0),
            tx_b: chirp(21_500.0, 24_500.0),
            sample_rate: SAMPLE_RATE,
            frame_len: FRAME_LEN,
        }
    }
}

impl TransmitConfig {
    pub fn validate(&self) -> Result<()> {
        self.tx_a.validate()?;
        self.tx_b.validate()?;
        for (name, spec) in [("tx_a", &self.tx_a), ("tx_b", &self.tx_b)] {
            if spec.sample_rate != self.sample_rate {
                return Err(Error::precondition(format!(
                    "{name}.sample_rate {} differs from shared sample_rate {}",
                    spec.sample_rate, self.sample_rate
                )));
            }
            if spec.n_samples != self.frame_len {
                return Err(Error::precondition(format!(
                    "{name}.n_samples {} differs from frame_len {}",
                    spec.n_samples, self.frame_len
                )));
            }
        }
        let (lo, hi) = if self.tx_a.f_start <= self.tx_b.f_start {
            (&self.tx_a, &self.tx_b)
        } else {
            (&self.tx_b, &self.tx_a)
        };
        let gap = hi.f_start - lo.f_end;
        if gap < MIN_GUARD_HZ {
            return Err(Error::precondition(format!(
                "transmit bands need a guard gap >= {MIN_GUARD_HZ} Hz (got {gap} Hz)"
            )));
        }
        let rate = self.frame_rate();
        if rate < MIN_FRAME_RATE {
            return Err(Error::precondition(format!(
                "frame rate {rate:.3} Hz below minimum {MIN_FRAME_RATE}"
            )));
        }
        if self.frame_len < RANGE_BINS {
            return Err(Error::precondition(format!(
                "frame_len {} shorter than {RANGE_BINS} range bins",
                self.frame_len
            )));
        }
        Ok(())
    }

    pub fn frame_rate(&self) -> f64 {
        self.sample_rate / self.frame_len as f64
    }

    pub fn chirp(&self, tx: usize) -> &ChirpSpec {
        match tx {
            0 => &self.tx_a,
            _ => &self.tx_b,
        }
    }
}

/// Raised-cosine weight for sample `n` of an `len`-sample chirp.
fn taper(n: usize, len: usize) -> f64 {
    let edge = ((len as f64) * TAPER_FRACTION).round() as usize;
    if edge == 0 {
        return 1.0;
    }
    let from_edge = n.min(len - 1 - n);
    if from_edge >= edge {
        1.0
    } else {
        0.5 * (1.0 - (PI * (from_edge as f64 + 0.5) / edge as f64).cos())
    }
}

/// Linear up-chirp from `f_start` to `f_end` over `n_samples`, with a
/// raised-cosine taper over the first and last 5% of samples.
pub fn generate_chirp(spec: &ChirpSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let fs = spec.sample_rate;
    let n_total = spec.n_samples as f64;
    let sweep = spec.f_end - spec.f_start;
    Ok((0..spec.n_samples)
        .map(|n| {
            let x = n as f64;
            let phase = 2.0 * PI * (spec.f_start * x / fs + sweep * x * x / (2.0 * n_total * fs));
            spec.amplitude * taper(n, spec.n_samples) * phase.sin()
        })
        .collect())
}

/// Both speakers' streams: each chirp repeated back to back `n_frames` times.
pub fn transmit_stream(config: &TransmitConfig, n_frames: usize) -> Result<[Vec<f64>; 2]> {
    if n_frames == 0 {
        return Err(Error::EmptyStream);
    }
    config.validate()?;
    let repeat = |spec: &ChirpSpec| -> Result<Vec<f64>> {
        let chirp = generate_chirp(spec)?;
        Ok(chirp.iter().copied().cycle().take(n_frames * chirp.len()).collect())
    };
    Ok([repeat(&config.tx_a)?, repeat(&config.tx_b)?])
}
