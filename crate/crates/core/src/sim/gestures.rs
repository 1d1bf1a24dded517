//! Parametric trajectory families for each label, with per-participant and
//! per-repetition variability.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::labels::{GestureLabel, LabelRegistry};
use super::scene::{AmbientNoise, Scene};
use super::trajectory::{DelayFn, Envelope, GainFn, Motion, ScattererTrack};
use crate::cfmcw::{FRAME_LEN, SAMPLE_RATE};
use crate::error::{Error, Result};

/// SplitMix64 finalizer.
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive an independent seed from a base seed and a path of integers.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix(base), |acc, &p| splitmix(acc ^ splitmix(p)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Environment {
    Lab,
    IndoorWalk,
    Cafe,
    Curbside,
}

impl Environment {
    pub const ALL: [Environment; 4] = [
        Environment::Lab,
        Environment::IndoorWalk,
        Environment::Cafe,
        Environment::Curbside,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Environment::Lab => "lab",
            Environment::IndoorWalk => "indoor_walk",
            Environment::Cafe => "cafe",
            Environment::Curbside => "curbside",
        }
    }

    pub fn is_walking(&self) -> bool {
        matches!(self, Environment::IndoorWalk | Environment::Curbside)
    }

    pub fn is_noisy(&self) -> bool {
        matches!(self, Environment::Cafe | Environment::Curbside)
    }
}

impl fmt::Display for Environment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Environment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Environment::ALL
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| Error::Malformed(format!("unknown environment {s:?}")))
    }
}

macro_rules! families {
    ($($variant:ident => $name:literal),* $(,)?) => {
        /// Trajectory family rendered for a label.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
        pub enum Family { $($variant),* }

        impl Family {
            pub const ALL: &'static [Family] = &[$(Family::$variant),*];

            pub fn as_str(&self) -> &'static str {
                match self { $(Family::$variant => $name),* }
            }
        }
    };
}

families! {
    EarlobeTouch => "earlobe_touch",
    TempleTap => "temple_tap",
    ForeheadRub => "forehead_rub",
    Squeeze => "squeeze",
    NoseTap => "nose_tap",
    ChinSwipe => "chin_swipe",
    NearApproach => "near_approach",
    NearRetreat => "near_retreat",
    DoubleTapFar => "double_tap_far",
    ArmSweep => "arm_sweep",
    Drink => "drink",
    Brush => "brush",
    SkincareRub => "skincare_rub",
    Cough => "cough",
    SlowArmSwing => "slow_arm_swing",
    Nod => "nod",
    Shake => "shake",
    TurnLeft => "turn_left",
    TurnRight => "turn_right",
    TiltA => "tilt_a",
    TiltB => "tilt_b",
    Still => "still",
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .iter()
            .copied()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| Error::Malformed(format!("unknown trajectory family {s:?}")))
    }
}

/// Simulator knobs shared by every scene of a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Scales all per-repetition randomness; 0 disables it.
    pub jitter: f64,
    /// Scales the per-participant parameter perturbation.
    pub participant_spread: f64,
    pub noise_sigma: f64,
    /// Frames per recording; the scene lasts `record_frames * frame_len / fs`.
    pub record_frames: usize,
    /// Amplitude (delay samples) of the whole-profile walking oscillation.
    pub walk_amplitude: f64,
    pub walk_gain: f64,
    pub ambient_level: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            jitter: 1.0,
            participant_spread: 1.0,
            noise_sigma: 0.003,
            record_frames: 84,
            walk_amplitude: 6.0,
            walk_gain: 0.3,
            ambient_level: 0.5,
        }
    }
}

impl SimConfig {
    pub fn duration(&self) -> f64 {
        self.record_frames as f64 * FRAME_LEN as f64 / SAMPLE_RATE
    }
}

/// A systematic offset applied on top of a participant's random parameters,
/// modelling a user whose data is out of the training distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParticipantShift {
    pub delay_offset: f64,
    pub speed_scale: f64,
    pub gain_scale: f64,
}

impl Default for ParticipantShift {
    fn default() -> Self {
        ParticipantShift {
            delay_offset: 0.0,
            speed_scale: 1.0,
            gain_scale: 1.0,
        }
    }
}

/// Per-participant body and motion-style parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParticipantParams {
    pub delay_offset: f64,
    pub speed: f64,
    pub amplitude: f64,
    pub gain: f64,
    pub channel_balance: [f64; 4],
    pub onset: f64,
}

impl ParticipantParams {
    pub fn from_seed(seed: u64, spread: f64, shift: ParticipantShift) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[0x5045_5253]));
        let mut sym = |half: f64| spread * half * (2.0 * rng.random::<f64>() - 1.0);
        let delay_offset = sym(5.0) + shift.delay_offset;
        let speed = (1.0 + sym(0.12)) * shift.speed_scale;
        let amplitude = 1.0 + sym(0.15);
        let gain = (1.0 + sym(0.25)) * shift.gain_scale;
        let channel_balance = [0; 4].map(|_| 1.0 + sym(0.12));
        let onset = sym(0.04);
        ParticipantParams {
            delay_offset,
            speed,
            amplitude,
            gain,
            channel_balance,
            onset,
        }
    }
}

/// Per-repetition perturbation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RepJitter {
    pub time_shift: f64,
    pub delay: f64,
    pub speed: f64,
    pub amplitude: f64,
    pub gain: f64,
    pub phase: f64,
}

impl RepJitter {
    pub fn from_seed(seed: u64, level: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[0x5245_5053]));
        let mut sym = |half: f64| level * half * (2.0 * rng.random::<f64>() - 1.0);
        RepJitter {
            time_shift: sym(0.05),
            delay: sym(2.0),
            speed: 1.0 + sym(0.06),
            amplitude: 1.0 + sym(0.1),
            gain: 1.0 + sym(0.1),
            phase: sym(PI),
        }
    }
}

/// Everything a family needs to lay out its tracks.
struct Layout {
    /// Onset of the gesture in seconds.
    t0: f64,
    /// Gesture-time scale: a segment of nominal length `x` lasts `x / speed`.
    speed: f64,
    delay: f64,
    amp: f64,
    gain: f64,
    balance: [f64; 4],
    phase: f64,
}

#[derive(Clone, Copy)]
enum Side {
    Outward,
    Body,
    Both(f64),
}

impl Layout {
    /// Absolute time of nominal gesture time `u`.
    fn at(&self, u: f64) -> f64 {
        self.t0 + u / self.speed
    }

    fn span(&self, a: f64, b: f64) -> (f64, f64) {
        (self.at(a), self.at(b))
    }

    fn freq(&self, f: f64) -> f64 {
        f * self.speed
    }

    fn gains(&self, side: Side, g: f64) -> [f64; 4] {
        let g = g * self.gain;
        // tx_b reflects slightly weaker than tx_a.
        let raw = match side {
            Side::Outward => [g, 0.8 * g, 0.0, 0.0],
            Side::Body => [0.0, 0.0, g, 0.8 * g],
            Side::Both(body) => [g, 0.8 * g, body * g, 0.8 * body * g],
        };
        let mut out = [0.0; 4];
        for i in 0..4 {
            out[i] = raw[i] * self.balance[i];
        }
        out
    }

    fn track(&self, side: Side, g: f64, base: f64, motions: Vec<Motion>) -> ScattererTrack {
        ScattererTrack::new(
            DelayFn {
                base: base + self.delay,
                motions,
            },
            GainFn::constant(self.gains(side, g)),
        )
    }

    fn excursion(&self, depth: f64, rise: (f64, f64), fall: (f64, f64)) -> Motion {
        Motion::Excursion {
            depth: depth * self.amp,
            rise: self.span(rise.0, rise.1),
            fall: self.span(fall.0, fall.1),
        }
    }

    fn ramp(&self, delta: f64, start: f64, end: f64) -> Motion {
        let (start, end) = self.span(start, end);
        Motion::Ramp {
            delta: delta * self.amp,
            start,
            end,
        }
    }

    fn burst(&self, amplitude: f64, freq: f64, start: f64, end: f64, phase: f64) -> Motion {
        let (start, end) = self.span(start, end);
        Motion::Burst {
            amplitude: amplitude * self.amp,
            freq_hz: self.freq(freq),
            phase: phase + self.phase * 0.1,
            start,
            end,
        }
    }

    fn sine(&self, amplitude: f64, freq: f64, phase: f64) -> Motion {
        Motion::Sine {
            amplitude: amplitude * self.amp,
            freq_hz: self.freq(freq),
            phase: phase + self.phase,
        }
    }
}

fn family_tracks(family: Family, l: &Layout) -> Vec<ScattererTrack> {
    use Side::*;
    match family {
        Family::EarlobeTouch => vec![
            l.track(Outward, 0.3, 150.0, vec![l.excursion(-12.0, (0.0, 0.2), (0.55, 0.75))]),
            l.track(Body, 0.15, 90.0, vec![l.excursion(-5.0, (0.0, 0.2), (0.55, 0.75))]),
        ],
        Family::TempleTap => vec![
            l.track(
                Outward,
                0.3,
                125.0,
                vec![
                    l.excursion(-8.0, (0.0, 0.15), (0.7, 0.85)),
                    l.burst(1.5, 5.0, 0.15, 0.7, 0.0),
                ],
            ),
            l.track(Body, 0.15, 85.0, vec![l.burst(0.6, 5.0, 0.15, 0.7, 0.0)]),
        ],
        Family::ForeheadRub => vec![
            l.track(Outward, 0.3, 110.0, vec![l.burst(5.0, 2.5, 0.0, 0.8, 0.0)]),
            l.track(Body, 0.2, 70.0, vec![l.burst(2.5, 2.5, 0.0, 0.8, 0.0)]),
        ],
        Family::Squeeze => vec![l.track(
            Outward,
            0.15,
            35.0,
            vec![l.excursion(-4.0, (0.05, 0.35), (0.5, 0.8))],
        )],
        Family::NoseTap => vec![
            l.track(Outward, 0.3, 95.0, vec![l.burst(1.2, 6.0, 0.05, 0.75, 0.0)]),
            l.track(Body, 0.15, 75.0, vec![l.burst(0.4, 6.0, 0.05, 0.75, 0.0)]),
        ],
        Family::ChinSwipe => vec![
            l.track(Outward, 0.3, 70.0, vec![l.ramp(40.0, 0.15, 0.55)]),
            l.track(Body, 0.15, 60.0, vec![l.ramp(10.0, 0.15, 0.55)]),
        ],
        Family::NearApproach => {
            vec![l.track(Outward, 0.3, 165.0, vec![l.ramp(-45.0, 0.05, 0.65)])]
        }
        Family::NearRetreat => {
            vec![l.track(Outward, 0.3, 110.0, vec![l.ramp(50.0, 0.1, 0.7)])]
        }
        Family::DoubleTapFar => vec![l.track(
            Outward,
            0.35,
            175.0,
            vec![
                l.excursion(-6.0, (0.05, 0.15), (0.2, 0.3)),
                l.excursion(-6.0, (0.45, 0.55), (0.6, 0.7)),
            ],
        )],
        Family::ArmSweep => vec![
            l.track(Body, 0.3, 40.0, vec![l.ramp(60.0, 0.05, 0.75)]),
            l.track(Outward, 0.1, 120.0, vec![l.ramp(-8.0, 0.05, 0.75)]),
        ],
        Family::Drink => vec![
            l.track(Body, 0.3, 120.0, vec![l.excursion(-45.0, (0.0, 0.35), (0.65, 0.95))]),
            l.track(Outward, 0.25, 80.0, vec![l.burst(2.0, 1.5, 0.25, 0.8, 0.0)]),
        ],
        Family::Brush => vec![
            l.track(Outward, 0.3, 65.0, vec![l.sine(4.0, 6.0, 0.0)]),
            l.track(Body, 0.25, 45.0, vec![l.sine(3.0, 6.0, PI / 2.0)]),
        ],
        Family::SkincareRub => vec![
            l.track(Outward, 0.3, 55.0, vec![l.sine(6.0, 2.0, 0.0)]),
            l.track(Body, 0.25, 100.0, vec![l.sine(6.0, 2.0, PI / 2.0)]),
        ],
        Family::Cough => vec![
            l.track(Outward, 0.3, 50.0, vec![l.excursion(-15.0, (0.15, 0.23), (0.3, 0.45))]),
            l.track(Body, 0.2, 70.0, vec![l.excursion(-8.0, (0.15, 0.23), (0.3, 0.45))]),
            l.track(Outward, 0.2, 135.0, vec![l.burst(3.0, 8.0, 0.15, 0.45, 0.0)]),
        ],
        Family::SlowArmSwing => {
            vec![l.track(Body, 0.3, 130.0, vec![l.sine(15.0, 1.0, 0.0)])]
        }
        Family::Nod => vec![
            l.track(Outward, 0.3, 150.0, vec![l.burst(8.0, 2.0, 0.0, 0.9, 0.0)]),
            l.track(Body, 0.1, 95.0, vec![l.burst(0.8, 2.0, 0.0, 0.9, 0.0)]),
        ],
        Family::Shake => vec![
            l.track(Outward, 0.25, 140.0, vec![l.burst(3.0, 3.0, 0.0, 0.9, 0.0)]),
            l.track(Outward, 0.25, 160.0, vec![l.burst(3.0, 3.0, 0.0, 0.9, PI)]),
        ],
        Family::TurnLeft => vec![
            l.track(Outward, 0.3, 145.0, vec![l.ramp(18.0, 0.1, 0.6)]),
            l.track(Body, 0.15, 80.0, vec![l.ramp(4.0, 0.1, 0.6)]),
        ],
        Family::TurnRight => {
            vec![l.track(Outward, 0.3, 163.0, vec![l.ramp(-18.0, 0.1, 0.6)])]
        }
        Family::TiltA => vec![l.track(
            Outward,
            0.3,
            120.0,
            vec![l.excursion(10.0, (0.1, 0.4), (0.6, 0.9))],
        )],
        Family::TiltB => vec![l.track(
            Both(0.5),
            0.3,
            185.0,
            vec![l.excursion(-10.0, (0.1, 0.4), (0.6, 0.9))],
        )],
        Family::Still => vec![
            l.track(Outward, 0.1, 100.0, vec![Motion::Drift { rate: 0.02 * l.amp }]),
            l.track(Body, 0.1, 60.0, vec![Motion::Drift { rate: -0.02 * l.amp }]),
        ],
    }
}

/// Static reflectors present in every scene (wrist strap, torso, table edge).
fn background_tracks(l: &Layout) -> Vec<ScattererTrack> {
    vec![
        ScattererTrack::new(DelayFn::fixed(12.0), GainFn::constant(l.gains(Side::Both(1.0), 0.5))),
        ScattererTrack::new(
            DelayFn::fixed(105.0 + l.delay),
            GainFn::constant(l.gains(Side::Body, 0.3)),
        ),
        ScattererTrack::new(
            DelayFn::fixed(190.0),
            GainFn::constant(l.gains(Side::Outward, 0.2)),
        ),
    ]
}

/// Locomotion adds a strong low-frequency oscillation visible on every channel
/// plus arm swing on the body-facing side.
fn walking_tracks(seed: u64, cfg: &SimConfig, duration: f64) -> Vec<ScattererTrack> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[0x5741_4c4b]));
    let cadence = 1.6 + 0.5 * rng.random::<f64>();
    let phase = 2.0 * PI * rng.random::<f64>();
    let swing_phase = 2.0 * PI * rng.random::<f64>();
    let g = cfg.walk_gain;
    let sway = ScattererTrack {
        delay: DelayFn::fixed(100.0 + 40.0 * rng.random::<f64>()).with(Motion::Sine {
            amplitude: cfg.walk_amplitude,
            freq_hz: cadence,
            phase,
        }),
        gain: GainFn {
            gains: [0.6 * g, 0.5 * g, g, 0.8 * g],
            envelope: Envelope::Constant,
        },
        active: (0.0, duration + 1.0),
    };
    let swing = ScattererTrack::new(
        DelayFn::fixed(30.0 + 40.0 * rng.random::<f64>()).with(Motion::Sine {
            amplitude: 0.5 * cfg.walk_amplitude,
            freq_hz: cadence / 2.0,
            phase: swing_phase,
        }),
        GainFn::constant([0.0, 0.0, 0.7 * g, 0.6 * g]),
    );
    vec![sway, swing]
}

/// Build the scene for one repetition of `label`.
///
/// `participant_seed` fixes the participant's style parameters; `rep_seed`
/// drives the per-repetition jitter, the walking pattern and all noise.
pub fn gesture_scene(
    registry: &LabelRegistry,
    label: &GestureLabel,
    participant_seed: u64,
    rep_seed: u64,
    environment: Environment,
    cfg: &SimConfig,
) -> Result<Scene> {
    gesture_scene_shifted(
        registry,
        label,
        participant_seed,
        ParticipantShift::default(),
        rep_seed,
        environment,
        cfg,
    )
}

pub fn gesture_scene_shifted(
    registry: &LabelRegistry,
    label: &GestureLabel,
    participant_seed: u64,
    shift: ParticipantShift,
    rep_seed: u64,
    environment: Environment,
    cfg: &SimConfig,
) -> Result<Scene> {
    let entry = registry.resolve(label)?;
    let p = ParticipantParams::from_seed(participant_seed, cfg.participant_spread, shift);
    let j = RepJitter::from_seed(rep_seed, cfg.jitter);
    let layout = Layout {
        t0: 0.12 + p.onset + j.time_shift,
        speed: p.speed * j.speed,
        delay: p.delay_offset + j.delay,
        amp: p.amplitude * j.amplitude,
        gain: p.gain * j.gain,
        balance: p.channel_balance,
        phase: j.phase,
    };
    let duration = cfg.duration();
    let mut tracks = background_tracks(&layout);
    tracks.extend(family_tracks(entry.family, &layout));
    if environment.is_walking() {
        tracks.extend(walking_tracks(rep_seed, cfg, duration));
    }
    let ambient = environment.is_noisy().then(|| AmbientNoise {
        level: cfg.ambient_level,
        ..AmbientNoise::default()
    });
    Ok(Scene {
        tracks,
        noise_sigma: cfg.noise_sigma,
        duration,
        seed: derive_seed(rep_seed, &[0x4e4f_4953]),
        ambient,
    })
}
