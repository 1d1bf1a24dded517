//! Model inputs from differential echo profiles.
//!
//! Shape chain: profile -> `(4, 200, 83)` windows -> `(4, 200, 80)` crops ->
//! 16 patches of 4000 values.

pub mod manifest;
pub mod norm;
pub mod window;

use std::path::Path;

pub use manifest::{read_manifest, write_manifest, Manifest, ManifestRecord};
pub use norm::NormStats;
pub use window::{
    augment_gaussian, crop_at, crop_jitter, patchify, sliding_windows, window_count, CropMode,
    CroppedWindow, EchoWindow, PatchSequence, Provenance, CROP_FRAMES, N_PATCHES, PATCH_DIM,
    WINDOW_FRAMES, WINDOW_HOP,
};

use crate::cfmcw::DifferentialEchoProfile;
use crate::error::Result;
use crate::formats::read_wsep;
use crate::sim::{synth_each, SynthPlan, SynthRecord};

/// Load every record's profile and cut it into windows, sorted by provenance.
pub fn load_windows(manifest: &Manifest, base_dir: &Path) -> Result<Vec<EchoWindow>> {
    let mut out = Vec::new();
    for r in &manifest.records {
        let profile = DifferentialEchoProfile::from_grid(read_wsep(base_dir.join(&r.profile_path))?)?;
        let origin = Provenance {
            participant_id: r.participant_id,
            session_id: r.session_id,
            repetition: r.repetition,
            label_id: r.label.id,
            window_index: 0,
        };
        out.extend(sliding_windows(&profile, &r.label, &origin)?);
    }
    out.sort_by(|a, b| a.provenance.cmp(&b.provenance));
    Ok(out)
}

fn record_windows(r: &SynthRecord) -> Result<Vec<EchoWindow>> {
    let origin = Provenance {
        participant_id: r.key.participant.id,
        session_id: r.key.session,
        repetition: r.key.repetition,
        label_id: r.key.label.id,
        window_index: 0,
    };
    sliding_windows(&r.profile, &r.key.label, &origin)
}

/// Windows of in-memory synthesized records, sorted by provenance.
pub fn windows_from_records(records: &[SynthRecord]) -> Result<Vec<EchoWindow>> {
    let mut out = Vec::new();
    for r in records {
        out.extend(record_windows(r)?);
    }
    out.sort_by(|a, b| a.provenance.cmp(&b.provenance));
    Ok(out)
}

/// Synthesize a plan straight to windows, dropping audio as it goes.
pub fn synth_windows(plan: &SynthPlan) -> Result<Vec<EchoWindow>> {
    let mut out = Vec::with_capacity(plan.n_records());
    synth_each(plan, |r| {
        out.extend(record_windows(&r)?);
        Ok(())
    })?;
    out.sort_by(|a, b| a.provenance.cmp(&b.provenance));
    Ok(out)
}
