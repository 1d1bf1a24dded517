use std::f64::consts::PI;

use crate::cfmcw::{CHANNELS, RANGE_BINS};

/// Largest round-trip delay (in samples) inside the sensing range.
pub const MAX_DELAY: f64 = (RANGE_BINS - 1) as f64;

/// A delay offset component, in samples, as a closed-form function of time.
#[derive(Debug, Clone, PartialEq)]
pub enum Motion {
    /// 0 before `start`, `delta` after `end`, linear in between.
    Ramp { delta: f64, start: f64, end: f64 },
    Sine {
        amplitude: f64,
        freq_hz: f64,
        phase: f64,
    },
    /// Approach-dwell-retreat: 0 -> `depth` over `rise`, back to 0 over `fall`.
    Excursion {
        depth: f64,
        rise: (f64, f64),
        fall: (f64, f64),
    },
    /// Sine confined to `[start, end]` under a Hann envelope.
    Burst {
        amplitude: f64,
        freq_hz: f64,
        phase: f64,
        start: f64,
        end: f64,
    },
    Drift { rate: f64 },
}

fn ramp01(t: f64, start: f64, end: f64) -> f64 {
    if t <= start {
        0.0
    } else if t >= end {
        1.0
    } else {
        (t - start) / (end - start)
    }
}

impl Motion {
    pub fn offset(&self, t: f64) -> f64 {
        match *self {
            Motion::Ramp { delta, start, end } => delta * ramp01(t, start, end),
            Motion::Sine {
                amplitude,
                freq_hz,
                phase,
            } => amplitude * (2.0 * PI * freq_hz * t + phase).sin(),
            Motion::Excursion { depth, rise, fall } => {
                depth * (ramp01(t, rise.0, rise.1) - ramp01(t, fall.0, fall.1))
            }
            Motion::Burst {
                amplitude,
                freq_hz,
                phase,
                start,
                end,
            } => {
                if t <= start || t >= end {
                    0.0
                } else {
                    let u = (t - start) / (end - start);
                    let window = 0.5 * (1.0 - (2.0 * PI * u).cos());
                    amplitude * window * (2.0 * PI * freq_hz * (t - start) + phase).sin()
                }
            }
            Motion::Drift { rate } => rate * t,
        }
    }
}

/// Round-trip delay in samples: `base` plus the sum of all motion offsets.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayFn {
    pub base: f64,
    pub motions: Vec<Motion>,
}

impl DelayFn {
    pub fn fixed(base: f64) -> Self {
        DelayFn {
            base,
            motions: Vec::new(),
        }
    }

    pub fn with(mut self, motion: Motion) -> Self {
        self.motions.push(motion);
        self
    }

    pub fn eval(&self, t: f64) -> f64 {
        let d = self.motions.iter().fold(self.base, |acc, m| acc + m.offset(t));
        d.clamp(0.0, MAX_DELAY)
    }
}

/// Time-dependent scaling of the channel gains.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Envelope {
    Constant,
    /// Hann-shaped fade in over `ramp` seconds from `start`, fade out ending at `end`.
    Window { start: f64, end: f64, ramp: f64 },
}

impl Envelope {
    fn eval(&self, t: f64) -> f64 {
        match *self {
            Envelope::Constant => 1.0,
            Envelope::Window { start, end, ramp } => {
                if t <= start || t >= end {
                    0.0
                } else if ramp <= 0.0 {
                    1.0
                } else {
                    let edge = ((t - start).min(end - t) / ramp).min(1.0);
                    0.5 * (1.0 - (PI * edge).cos())
                }
            }
        }
    }
}

/// Per-channel amplitudes, ordered like echo-profile channels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainFn {
    pub gains: [f64; CHANNELS],
    pub envelope: Envelope,
}

impl GainFn {
    pub fn constant(gains: [f64; CHANNELS]) -> Self {
        GainFn {
            gains,
            envelope: Envelope::Constant,
        }
    }

    pub fn eval(&self, t: f64) -> [f64; CHANNELS] {
        let e = self.envelope.eval(t);
        self.gains.map(|g| g * e)
    }
}

/// One reflecting body part.
#[derive(Debug, Clone, PartialEq)]
pub struct ScattererTrack {
    pub delay: DelayFn,
    pub gain: GainFn,
    /// Active interval `[start, end)` in seconds.
    pub active: (f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackState {
    pub delay: f64,
    pub gains: [f64; CHANNELS],
}

impl TrackState {
    pub fn is_active(&self) -> bool {
        self.gains.iter().any(|&g| g != 0.0)
    }
}

impl ScattererTrack {
    pub fn new(delay: DelayFn, gain: GainFn) -> Self {
        ScattererTrack {
            delay,
            gain,
            active: (0.0, f64::INFINITY),
        }
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.active.0 && t < self.active.1
    }
}

/// Delay and channel gains of `track` at time `t`. Outside the active
/// interval the gains are all zero, which marks the track as inactive.
pub fn eval_trajectory(track: &ScattererTrack, t: f64) -> TrackState {
    let delay = track.delay.eval(t);
    let gains = if track.contains(t) {
        track.gain.eval(t).map(|g| g.max(0.0))
    } else {
        [0.0; CHANNELS]
    };
    TrackState { delay, gains }
}

#[cfg(test)]
mod tests {
    use super::*;

    const G: [f64; 4] = [0.3, 0.2, 0.0, 0.0];

    #[test]
    fn static_track() {
        let track = ScattererTrack::new(DelayFn::fixed(100.0), GainFn::constant(G));
        for t in [0.0, 0.3, 0.99] {
            let s = eval_trajectory(&track, t);
            assert_eq!(s.delay, 100.0);
            assert_eq!(s.gains, G);
        }
    }

    #[test]
    fn linear_approach_midpoint() {
        let delay = DelayFn::fixed(150.0).with(Motion::Ramp {
            delta: -100.0,
            start: 0.0,
            end: 1.0,
        });
        let track = ScattererTrack::new(delay, GainFn::constant(G));
        assert_eq!(eval_trajectory(&track, 0.5).delay, 100.0);
    }

    #[test]
    fn brushing_sine_at_quarter_period() {
        let delay = DelayFn::fixed(80.0).with(Motion::Sine {
            amplitude: 10.0,
            freq_hz: 3.0,
            phase: 0.0,
        });
        let track = ScattererTrack::new(delay, GainFn::constant(G));
        let d = eval_trajectory(&track, 1.0 / 12.0).delay;
        assert!((d - 90.0).abs() < 1e-12, "{d}");
    }

    #[test]
    fn inactive_track_has_zero_gain() {
        let mut track = ScattererTrack::new(DelayFn::fixed(10.0), GainFn::constant(G));
        track.active = (0.2, 0.4);
        assert!(!eval_trajectory(&track, 0.1).is_active());
        assert!(eval_trajectory(&track, 0.3).is_active());
        assert!(!eval_trajectory(&track, 0.4).is_active());
    }

    #[test]
    fn excursion_returns_to_rest() {
        let m = Motion::Excursion {
            depth: -12.0,
            rise: (0.1, 0.3),
            fall: (0.6, 0.8),
        };
        assert_eq!(m.offset(0.0), 0.0);
        assert!((m.offset(0.2) + 6.0).abs() < 1e-12);
        assert_eq!(m.offset(0.45), -12.0);
        assert_eq!(m.offset(0.9), 0.0);
    }

    #[test]
    fn burst_is_silent_outside_its_interval_and_continuous() {
        let m = Motion::Burst {
            amplitude: 3.0,
            freq_hz: 5.0,
            phase: 0.4,
            start: 0.2,
            end: 0.7,
        };
        assert_eq!(m.offset(0.1), 0.0);
        assert_eq!(m.offset(0.8), 0.0);
        assert!(m.offset(0.2 + 1e-9).abs() < 1e-6);
        assert!(m.offset(0.7 - 1e-9).abs() < 1e-6);
    }

    #[test]
    fn delays_are_clamped_to_range() {
        let d = DelayFn::fixed(195.0).with(Motion::Drift { rate: 100.0 });
        assert_eq!(d.eval(1.0), MAX_DELAY);
        let d = DelayFn::fixed(2.0).with(Motion::Drift { rate: -100.0 });
        assert_eq!(d.eval(1.0), 0.0);
    }

    #[test]
    fn window_envelope_fades() {
        let g = GainFn {
            gains: [1.0; 4],
            envelope: Envelope::Window {
                start: 0.0,
                end: 1.0,
                ramp: 0.1,
            },
        };
        assert_eq!(g.eval(0.5), [1.0; 4]);
        assert!((g.eval(0.05)[0] - 0.5).abs() < 1e-12);
        assert_eq!(g.eval(1.2), [0.0; 4]);
    }
}
