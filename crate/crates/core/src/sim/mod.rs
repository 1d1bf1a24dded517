//! Acoustic scene simulator standing in for the wearable and its users.

pub mod gestures;
pub mod labels;
pub mod scene;
pub mod synth;
pub mod trajectory;

pub use gestures::{
    derive_seed, gesture_scene, gesture_scene_shifted, Environment, Family, ParticipantShift,
    SimConfig,
};
pub use labels::{Category, GestureLabel, LabelEntry, LabelRegistry};
pub use scene::{render_received, AmbientNoise, Scene};
pub use synth::{
    synth_dataset, synth_each, synth_record, synth_records, ParticipantSpec, RecordKey, SynthPlan, SynthRecord,
};
pub use trajectory::{eval_trajectory, DelayFn, Envelope, GainFn, Motion, ScattererTrack, TrackState};
