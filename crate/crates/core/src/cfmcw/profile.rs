use super::{channel_index, EchoProcessor, TransmitConfig, CHANNELS, RANGE_BINS};
use crate::error::{Error, Result};

/// One microphone's recording. `mic_id` 0 faces outward, 1 faces the body.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceivedAudio {
    pub mic_id: u8,
    pub samples: Vec<f64>,
    pub sample_rate: f64,
}

impl ReceivedAudio {
    pub fn new(mic_id: u8, samples: Vec<f64>, sample_rate: f64) -> Self {
        ReceivedAudio {
            mic_id,
            samples,
            sample_rate,
        }
    }

    /// Drop the trailing partial frame, if any.
    pub fn trim_to_frames(&mut self, frame_len: usize) {
        let whole = self.samples.len() / frame_len * frame_len;
        self.samples.truncate(whole);
    }
}

/// Dense `[frame][channel][bin]` grid of correlation values, the layout
/// shared by echo profiles, differential profiles and `.wsep` files.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileGrid {
    pub frames: usize,
    pub channels: usize,
    pub range_bins: usize,
    pub sample_rate: f64,
    pub values: Vec<f32>,
}

impl ProfileGrid {
    pub fn zeros(frames: usize, channels: usize, range_bins: usize, sample_rate: f64) -> Self {
        ProfileGrid {
            frames,
            channels,
            range_bins,
            sample_rate,
            values: vec![0.0; frames * channels * range_bins],
        }
    }

    #[inline]
    pub fn index(&self, frame: usize, channel: usize, bin: usize) -> usize {
        (frame * self.channels + channel) * self.range_bins + bin
    }

    #[inline]
    pub fn get(&self, frame: usize, channel: usize, bin: usize) -> f32 {
        self.values[self.index(frame, channel, bin)]
    }

    pub fn frame_channel(&self, frame: usize, channel: usize) -> &[f32] {
        let start = self.index(frame, channel, 0);
        &self.values[start..start + self.range_bins]
    }

    fn check_standard(&self) -> Result<()> {
        if self.channels != CHANNELS || self.range_bins != RANGE_BINS {
            return Err(Error::Shape {
                expected: format!("{CHANNELS} channels x {RANGE_BINS} bins"),
                actual: format!("{} channels x {} bins", self.channels, self.range_bins),
            });
        }
        if self.values.len() != self.frames * self.channels * self.range_bins {
            return Err(Error::Shape {
                expected: format!("{} values", self.frames * self.channels * self.range_bins),
                actual: format!("{} values", self.values.len()),
            });
        }
        Ok(())
    }
}

/// Per-frame echo frames for the four (tx, mic) channels.
#[derive(Debug, Clone, PartialEq)]
pub struct EchoProfile(ProfileGrid);

/// Consecutive-frame differences of an [`EchoProfile`]; signed.
#[derive(Debug, Clone, PartialEq)]
pub struct DifferentialEchoProfile(ProfileGrid);

macro_rules! profile_wrapper {
    ($ty:ident) => {
        impl $ty {
            pub fn from_grid(grid: ProfileGrid) -> Result<Self> {
                grid.check_standard()?;
                Ok($ty(grid))
            }

            pub fn grid(&self) -> &ProfileGrid {
                &self.0
            }

            pub fn into_grid(self) -> ProfileGrid {
                self.0
            }

            pub fn frames(&self) -> usize {
                self.0.frames
            }

            #[inline]
            pub fn get(&self, frame: usize, channel: usize, bin: usize) -> f32 {
                self.0.get(frame, channel, bin)
            }
        }
    };
}

profile_wrapper!(EchoProfile);
profile_wrapper!(DifferentialEchoProfile);

/// Filter and correlate both microphones against both chirps, frame by frame.
pub fn compute_echo_profile(
    mics: &[ReceivedAudio; 2],
    config: &TransmitConfig,
) -> Result<EchoProfile> {
    let processor = EchoProcessor::new(config)?;
    compute_echo_profile_with(&processor, mics)
}

pub fn compute_echo_profile_with(
    processor: &EchoProcessor,
    mics: &[ReceivedAudio; 2],
) -> Result<EchoProfile> {
    let frame_len = processor.frame_len();
    for (slot, mic) in mics.iter().enumerate() {
        if mic.mic_id as usize != slot {
            return Err(Error::Alignment(format!(
                "mic slot {slot} holds mic_id {}",
                mic.mic_id
            )));
        }
        if mic.sample_rate != processor.sample_rate() {
            return Err(Error::precondition(format!(
                "mic {slot} sample rate {} differs from transmit sample rate {}",
                mic.sample_rate,
                processor.sample_rate()
            )));
        }
    }
    let len = mics[0].samples.len();
    if mics[1].samples.len() != len {
        return Err(Error::Alignment(format!(
            "mic streams differ in length ({} vs {})",
            len,
            mics[1].samples.len()
        )));
    }
    if len % frame_len != 0 {
        return Err(Error::Alignment(format!(
            "stream length {len} is not a multiple of frame length {frame_len}"
        )));
    }
    let frames = len / frame_len;
    if frames == 0 {
        return Err(Error::InsufficientData(format!(
            "need at least one {frame_len}-sample frame"
        )));
    }

    let mut grid = ProfileGrid::zeros(frames, CHANNELS, RANGE_BINS, processor.sample_rate());
    for t in 0..frames {
        for (m, mic) in mics.iter().enumerate() {
            let frame = &mic.samples[t * frame_len..(t + 1) * frame_len];
            for tx in 0..2 {
                let echo = processor.echo_frame(frame, tx)?;
                let start = grid.index(t, channel_index(tx, m), 0);
                for (dst, v) in grid.values[start..start + RANGE_BINS].iter_mut().zip(echo) {
                    *dst = v as f32;
                }
            }
        }
    }
    Ok(EchoProfile(grid))
}

/// `out[t] = profile[t + 1] - profile[t]`, channel by channel.
pub fn differentiate(profile: &EchoProfile) -> Result<DifferentialEchoProfile> {
    let src = profile.grid();
    if src.frames < 2 {
        return Err(Error::InsufficientFrames {
            needed: 2,
            actual: src.frames,
        });
    }
    let stride = src.channels * src.range_bins;
    let values = src.values[stride..]
        .iter()
        .zip(&src.values)
        .map(|(next, prev)| next - prev)
        .collect();
    Ok(DifferentialEchoProfile(ProfileGrid {
        frames: src.frames - 1,
        channels: src.channels,
        range_bins: src.range_bins,
        sample_rate: src.sample_rate,
        values,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cfmcw::{generate_chirp, FRAME_LEN, SAMPLE_RATE};

    fn profile_from(frames: usize, f: impl Fn(usize, usize, usize) -> f32) -> EchoProfile {
        let mut g = ProfileGrid::zeros(frames, CHANNELS, RANGE_BINS, SAMPLE_RATE);
        for t in 0..frames {
            for c in 0..CHANNELS {
                for b in 0..RANGE_BINS {
                    let i = g.index(t, c, b);
                    g.values[i] = f(t, c, b);
                }
            }
        }
        EchoProfile::from_grid(g).unwrap()
    }

    fn silent(frames: usize) -> [ReceivedAudio; 2] {
        [0u8, 1].map(|m| ReceivedAudio::new(m, vec![0.0; frames * FRAME_LEN], SAMPLE_RATE))
    }

    #[test]
    fn silent_mics_give_zero_profile() {
        let p = compute_echo_profile(&silent(83), &TransmitConfig::default()).unwrap();
        assert_eq!(p.frames(), 83);
        assert_eq!(p.grid().channels, 4);
        assert_eq!(p.grid().range_bins, 200);
        assert!(p.grid().values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn reflector_on_mic0_only() {
        let cfg = TransmitConfig::default();
        let a = generate_chirp(&cfg.tx_a).unwrap();
        let b = generate_chirp(&cfg.tx_b).unwrap();
        let frames = 5;
        let d = 50;
        let mic0: Vec<f64> = (0..frames * FRAME_LEN)
            .map(|n| {
                let k = (n % FRAME_LEN + FRAME_LEN - d) % FRAME_LEN;
                0.3 * a[k] + 0.2 * b[k]
            })
            .collect();
        let mics = [
            ReceivedAudio::new(0, mic0, SAMPLE_RATE),
            ReceivedAudio::new(1, vec![0.0; frames * FRAME_LEN], SAMPLE_RATE),
        ];
        let p = compute_echo_profile(&mics, &cfg).unwrap();
        for t in 0..frames {
            for ch in 0..2 {
                let row = p.grid().frame_channel(t, ch);
                let peak = (0..RANGE_BINS)
                    .max_by(|&i, &j| row[i].abs().total_cmp(&row[j].abs()))
                    .unwrap();
                assert_eq!(peak, d);
            }
            for ch in 2..4 {
                assert!(p.grid().frame_channel(t, ch).iter().all(|&v| v.abs() < 1e-9));
            }
        }
    }

    #[test]
    fn unequal_streams_rejected() {
        let mut mics = silent(2);
        mics[1].samples.pop();
        assert!(matches!(
            compute_echo_profile(&mics, &TransmitConfig::default()),
            Err(Error::Alignment(_))
        ));
    }

    #[test]
    fn partial_frame_rejected_until_trimmed() {
        let mut mics = silent(2);
        for m in &mut mics {
            m.samples.extend([0.0; 7]);
        }
        assert!(matches!(
            compute_echo_profile(&mics, &TransmitConfig::default()),
            Err(Error::Alignment(_))
        ));
        for m in &mut mics {
            m.trim_to_frames(FRAME_LEN);
        }
        assert_eq!(
            compute_echo_profile(&mics, &TransmitConfig::default())
                .unwrap()
                .frames(),
            2
        );
    }

    #[test]
    fn empty_streams_are_insufficient() {
        assert!(matches!(
            compute_echo_profile(&silent(0), &TransmitConfig::default()),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn constant_profile_differentiates_to_zero() {
        let p = profile_from(10, |_, c, b| (c * 1000 + b) as f32 * 0.37);
        let d = differentiate(&p).unwrap();
        assert_eq!(d.frames(), 9);
        assert!(d.grid().values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn moving_peak_gives_paired_lobes() {
        // Peak at bin 50 + t for t = 0, 1, 2.
        let p = profile_from(3, |t, _, b| if b == 50 + t { 1.0 } else { 0.0 });
        let d = differentiate(&p).unwrap();
        for t in 0..2 {
            for c in 0..CHANNELS {
                assert_eq!(d.get(t, c, 50 + t), -1.0);
                assert_eq!(d.get(t, c, 51 + t), 1.0);
                let nonzero = d.grid().frame_channel(t, c).iter().filter(|v| **v != 0.0).count();
                assert_eq!(nonzero, 2);
            }
        }
    }

    #[test]
    fn differential_frames_are_consecutive_differences() {
        let p = profile_from(84, |t, c, b| ((t * 7 + c * 3 + b) % 11) as f32 - 5.0);
        let d = differentiate(&p).unwrap();
        assert_eq!(d.frames(), 83);
        for t in [0, 40, 82] {
            for c in 0..CHANNELS {
                for b in [0, 99, 199] {
                    assert_eq!(d.get(t, c, b), p.get(t + 1, c, b) - p.get(t, c, b));
                }
            }
        }
    }

    #[test]
    fn single_frame_cannot_differentiate() {
        let p = profile_from(1, |_, _, _| 0.0);
        assert!(matches!(
            differentiate(&p),
            Err(Error::InsufficientFrames { needed: 2, actual: 1 })
        ));
    }

    #[test]
    fn nonstandard_grid_rejected() {
        let g = ProfileGrid::zeros(3, 2, RANGE_BINS, SAMPLE_RATE);
        assert!(matches!(EchoProfile::from_grid(g), Err(Error::Shape { .. })));
    }
}
