use std::sync::Arc;

use rustfft::{num_complex::Complex, Fft, FftPlanner};

use super::{generate_chirp, TransmitConfig, RANGE_BINS};
use crate::error::{Error, Result};

fn check_band(band: (f64, f64), sample_rate: f64) -> Result<()> {
    let (lo, hi) = band;
    if !(lo > 0.0 && lo < hi && hi < sample_rate / 2.0) {
        return Err(Error::precondition(format!(
            "band ({lo}, {hi}) must satisfy 0 < f_lo < f_hi < Nyquist {}",
            sample_rate / 2.0
        )));
    }
    Ok(())
}

/// Keep mask for a brick-wall band: bin `k` (and its mirror `n - k`) is kept
/// when its frequency lies in `[lo, hi]`.
fn band_mask(n: usize, band: (f64, f64), sample_rate: f64) -> Vec<bool> {
    (0..n)
        .map(|k| {
            let mirrored = if k <= n / 2 { k } else { n - k };
            let f = mirrored as f64 * sample_rate / n as f64;
            f >= band.0 && f <= band.1
        })
        .collect()
}

fn to_complex(x: &[f64]) -> Vec<Complex<f64>> {
    x.iter().map(|&v| Complex::new(v, 0.0)).collect()
}

/// FFT plans and template spectra for one frame length, reused across frames.
pub struct EchoProcessor {
    frame_len: usize,
    sample_rate: f64,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// Conjugated spectra of the two transmit chirps.
    template_conj: [Vec<Complex<f64>>; 2],
    masks: [Vec<bool>; 2],
}

impl EchoProcessor {
    pub fn new(config: &TransmitConfig) -> Result<Self> {
        config.validate()?;
        let n = config.frame_len;
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let spectrum = |tx: usize| -> Result<Vec<Complex<f64>>> {
            let mut buf = to_complex(&generate_chirp(config.chirp(tx))?);
            forward.process(&mut buf);
            Ok(buf.into_iter().map(|c| c.conj()).collect())
        };
        let template_conj = [spectrum(0)?, spectrum(1)?];
        let masks = [
            band_mask(n, config.tx_a.band(), config.sample_rate),
            band_mask(n, config.tx_b.band(), config.sample_rate),
        ];
        Ok(EchoProcessor {
            frame_len: n,
            sample_rate: config.sample_rate,
            forward,
            inverse,
            template_conj,
            masks,
        })
    }

    pub fn frame_len(&self) -> usize {
        self.frame_len
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    /// Band-filter one frame to transmitter `tx`'s band.
    pub fn filter_frame(&self, frame: &[f64], tx: usize) -> Result<Vec<f64>> {
        self.check_len(frame, "rx_frame")?;
        let mut buf = to_complex(frame);
        self.forward.process(&mut buf);
        for (c, &keep) in buf.iter_mut().zip(&self.masks[tx]) {
            if !keep {
                *c = Complex::new(0.0, 0.0);
            }
        }
        self.inverse.process(&mut buf);
        let scale = 1.0 / self.frame_len as f64;
        Ok(buf.iter().map(|c| c.re * scale).collect())
    }

    /// Circular cross-correlation of a frame with transmitter `tx`'s chirp,
    /// truncated to the first `RANGE_BINS` lags.
    pub fn correlate_frame(&self, frame: &[f64], tx: usize) -> Result<Vec<f64>> {
        self.check_len(frame, "rx_frame")?;
        let mut buf = to_complex(frame);
        self.forward.process(&mut buf);
        for (c, t) in buf.iter_mut().zip(&self.template_conj[tx]) {
            *c *= t;
        }
        self.inverse.process(&mut buf);
        let scale = 1.0 / self.frame_len as f64;
        Ok(buf[..RANGE_BINS].iter().map(|c| c.re * scale).collect())
    }

    /// Filter then correlate: one echo frame for a (tx, mic-frame) pair.
    pub fn echo_frame(&self, frame: &[f64], tx: usize) -> Result<Vec<f64>> {
        let filtered = self.filter_frame(frame, tx)?;
        self.correlate_frame(&filtered, tx)
    }

    fn check_len(&self, frame: &[f64], what: &'static str) -> Result<()> {
        if frame.len() != self.frame_len {
            return Err(Error::LengthMismatch {
                what,
                actual: frame.len(),
                expected: self.frame_len,
            });
        }
        Ok(())
    }
}

/// Frequency-domain brick-wall band-pass filter with zero group delay.
pub fn band_filter(signal: &[f64], band: (f64, f64), sample_rate: f64) -> Result<Vec<f64>> {
    check_band(band, sample_rate)?;
    let n = signal.len();
    if n < 2 {
        return Err(Error::precondition(format!(
            "signal length >= 2 required (got {n})"
        )));
    }
    let mut planner = FftPlanner::new();
    let mut buf = to_complex(signal);
    planner.plan_fft_forward(n).process(&mut buf);
    for (c, keep) in buf.iter_mut().zip(band_mask(n, band, sample_rate)) {
        if !keep {
            *c = Complex::new(0.0, 0.0);
        }
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    let scale = 1.0 / n as f64;
    Ok(buf.iter().map(|c| c.re * scale).collect())
}

/// Circular cross-correlation `c[k] = sum_n rx[(n + k) mod N] * template[n]`
/// for the first `RANGE_BINS` lags (or all lags if the frame is shorter).
pub fn echo_frame(rx_frame: &[f64], template: &[f64]) -> Result<Vec<f64>> {
    if rx_frame.len() != template.len() {
        return Err(Error::LengthMismatch {
            what: "rx_frame (vs template)",
            actual: rx_frame.len(),
            expected: template.len(),
        });
    }
    let n = rx_frame.len();
    if n == 0 {
        return Err(Error::Empty("frame"));
    }
    let mut planner = FftPlanner::new();
    let forward = planner.plan_fft_forward(n);
    let mut rx = to_complex(rx_frame);
    let mut tp = to_complex(template);
    forward.process(&mut rx);
    forward.process(&mut tp);
    for (r, t) in rx.iter_mut().zip(&tp) {
        *r *= t.conj();
    }
    planner.plan_fft_inverse(n).process(&mut rx);
    let scale = 1.0 / n as f64;
    Ok(rx[..RANGE_BINS.min(n)].iter().map(|c| c.re * scale).collect())
}
