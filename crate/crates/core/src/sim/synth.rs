//! Labelled dataset synthesis: scenes -> audio -> differential profiles.

use std::fs;
use std::path::{Path, PathBuf};

use super::gestures::{derive_seed, gesture_scene_shifted, Environment, ParticipantShift, SimConfig};
use super::labels::{GestureLabel, LabelRegistry};
use super::scene::render_received;
use crate::cfmcw::{
    compute_echo_profile_with, differentiate, DifferentialEchoProfile, EchoProcessor,
    ReceivedAudio, TransmitConfig,
};
use crate::dataset::manifest::{write_manifest, Manifest, ManifestRecord};
use crate::error::{Error, Result};
use crate::formats::{write_f32x2, write_wsep};

/// Largest per-session offset of the sensor mount, in delay samples.
const REMOUNT_DELAY: f64 = 1.5;

/// One simulated participant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParticipantSpec {
    pub id: u32,
    pub shift: ParticipantShift,
}

impl ParticipantSpec {
    pub fn regular(id: u32) -> Self {
        ParticipantSpec {
            id,
            shift: ParticipantShift::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthPlan {
    pub participants: Vec<ParticipantSpec>,
    pub n_sessions: u32,
    pub n_reps: u32,
    /// Session `k` is recorded in `environments[k % len]`.
    pub environments: Vec<Environment>,
    pub seed: u64,
    pub sim: SimConfig,
    pub transmit: TransmitConfig,
    pub registry: LabelRegistry,
}

impl SynthPlan {
    pub fn new(
        n_participants: u32,
        n_sessions: u32,
        n_reps: u32,
        environments: Vec<Environment>,
        seed: u64,
    ) -> Self {
        SynthPlan {
            participants: (0..n_participants).map(ParticipantSpec::regular).collect(),
            n_sessions,
            n_reps,
            environments,
            seed,
            sim: SimConfig::default(),
            transmit: TransmitConfig::default(),
            registry: LabelRegistry::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.participants.is_empty() || self.n_sessions == 0 || self.n_reps == 0 {
            return Err(Error::precondition(
                "participant, session and repetition counts must all be >= 1",
            ));
        }
        if self.environments.is_empty() {
            return Err(Error::precondition("at least one environment is required"));
        }
        for (i, p) in self.participants.iter().enumerate() {
            if self.participants[..i].iter().any(|q| q.id == p.id) {
                return Err(Error::precondition(format!("duplicate participant id {}", p.id)));
            }
        }
        self.transmit.validate()
    }

    pub fn environment(&self, session: u32) -> Environment {
        self.environments[session as usize % self.environments.len()]
    }

    pub fn n_records(&self) -> usize {
        self.participants.len()
            * self.n_sessions as usize
            * self.n_reps as usize
            * self.registry.len()
    }

    /// Record keys in canonical order: participant, session, repetition, label.
    pub fn keys(&self) -> Vec<RecordKey> {
        let mut keys = Vec::with_capacity(self.n_records());
        for p in &self.participants {
            for session in 0..self.n_sessions {
                for rep in 0..self.n_reps {
                    for label in self.registry.labels() {
                        keys.push(RecordKey {
                            participant: *p,
                            session,
                            repetition: rep,
                            label: label.clone(),
                            environment: self.environment(session),
                        });
                    }
                }
            }
        }
        keys
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordKey {
    pub participant: ParticipantSpec,
    pub session: u32,
    pub repetition: u32,
    pub label: GestureLabel,
    pub environment: Environment,
}

impl RecordKey {
    pub fn stem(&self) -> String {
        format!(
            "p{:02}_s{:02}_r{:02}_l{:02}",
            self.participant.id, self.session, self.repetition, self.label.id
        )
    }
}

#[derive(Debug, Clone)]
pub struct SynthRecord {
    pub key: RecordKey,
    pub audio: [ReceivedAudio; 2],
    pub profile: DifferentialEchoProfile,
}

/// Round audio to the f32 precision it is stored with, so profiles computed
/// in memory match profiles recomputed from the written audio files.
fn quantize(audio: [ReceivedAudio; 2]) -> [ReceivedAudio; 2] {
    audio.map(|mut a| {
        for v in a.samples.iter_mut() {
            *v = *v as f32 as f64;
        }
        a
    })
}

pub fn synth_record(plan: &SynthPlan, processor: &EchoProcessor, key: &RecordKey) -> Result<SynthRecord> {
    let pid = key.participant.id as u64;
    let participant_seed = derive_seed(plan.seed, &[pid]);
    let session_seed = derive_seed(plan.seed, &[pid, key.session as u64, 0x5345_5353]);
    let remount = REMOUNT_DELAY
        * plan.sim.participant_spread
        * (2.0 * (session_seed >> 11) as f64 / (1u64 << 53) as f64 - 1.0);
    let shift = ParticipantShift {
        delay_offset: key.participant.shift.delay_offset + remount,
        ..key.participant.shift
    };
    let rep_seed = derive_seed(
        plan.seed,
        &[pid, key.session as u64, key.repetition as u64, key.label.id as u64],
    );
    let scene = gesture_scene_shifted(
        &plan.registry,
        &key.label,
        participant_seed,
        shift,
        rep_seed,
        key.environment,
        &plan.sim,
    )?;
    let audio = quantize(render_received(&scene, &plan.transmit)?);
    let profile = differentiate(&compute_echo_profile_with(processor, &audio)?)?;
    Ok(SynthRecord {
        key: key.clone(),
        audio,
        profile,
    })
}

/// Synthesize every record of the plan in memory, in canonical order.
pub fn synth_records(plan: &SynthPlan) -> Result<Vec<SynthRecord>> {
    let mut out = Vec::with_capacity(plan.n_records());
    synth_each(plan, |r| {
        out.push(r);
        Ok(())
    })?;
    Ok(out)
}

/// Stream records in canonical order without holding them all.
pub fn synth_each(plan: &SynthPlan, mut f: impl FnMut(SynthRecord) -> Result<()>) -> Result<()> {
    plan.validate()?;
    let processor = EchoProcessor::new(&plan.transmit)?;
    for k in plan.keys() {
        f(synth_record(plan, &processor, &k)?)?;
    }
    Ok(())
}

/// Render the plan to `out_dir`: `audio/<stem>.f32x2`, `profiles/<stem>.wsep`
/// (differential profiles) and `manifest.tsv`. On error, every file created by
/// this call is removed.
pub fn synth_dataset(plan: &SynthPlan, out_dir: impl AsRef<Path>) -> Result<Manifest> {
    let out_dir = out_dir.as_ref();
    plan.validate()?;
    let mut created: Vec<PathBuf> = Vec::new();
    let result = write_all(plan, out_dir, &mut created);
    if result.is_err() {
        for path in created.iter().rev() {
            if path.is_dir() {
                let _ = fs::remove_dir(path);
            } else {
                let _ = fs::remove_file(path);
            }
        }
    }
    result
}

fn create_dir(path: &Path, created: &mut Vec<PathBuf>) -> Result<()> {
    if path.is_dir() {
        return Ok(());
    }
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            create_dir(parent, created)?;
        }
    }
    fs::create_dir(path).map_err(|e| Error::io(path, e))?;
    created.push(path.to_path_buf());
    Ok(())
}

fn write_all(plan: &SynthPlan, out_dir: &Path, created: &mut Vec<PathBuf>) -> Result<Manifest> {
    create_dir(out_dir, created)?;
    create_dir(&out_dir.join("audio"), created)?;
    create_dir(&out_dir.join("profiles"), created)?;
    let processor = EchoProcessor::new(&plan.transmit)?;
    let mut records = Vec::with_capacity(plan.n_records());
    for key in plan.keys() {
        let rec = synth_record(plan, &processor, &key)?;
        let audio_rel = format!("audio/{}.f32x2", key.stem());
        let profile_rel = format!("profiles/{}.wsep", key.stem());
        let audio_path = out_dir.join(&audio_rel);
        created.push(audio_path.clone());
        write_f32x2(&audio_path, &rec.audio)?;
        let profile_path = out_dir.join(&profile_rel);
        created.push(profile_path.clone());
        write_wsep(&profile_path, rec.profile.grid())?;
        records.push(ManifestRecord {
            participant_id: key.participant.id,
            session_id: key.session,
            repetition: key.repetition,
            label: key.label.clone(),
            environment: key.environment,
            audio_path: audio_rel,
            profile_path: profile_rel,
        });
    }
    let manifest = Manifest::new(records)?;
    let manifest_path = out_dir.join("manifest.tsv");
    created.push(manifest_path.clone());
    write_manifest(&manifest_path, &manifest)?;
    Ok(manifest)
}
