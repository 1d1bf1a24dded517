//! Dataset manifests: one tab-separated record per line.
//!
//! Columns: participant_id, session_id, repetition, label_id, label_name,
//! category, environment, audio_path, profile_path. Paths are relative to the
//! manifest's directory. Lines starting with `#` are comments.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::formats::{read_f32x2, read_wsep};
use crate::sim::{Environment, GestureLabel, LabelRegistry};

pub const HEADER: &str = "# participant_id\tsession_id\trepetition\tlabel_id\tlabel_name\tcategory\tenvironment\taudio_path\tprofile_path";

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRecord {
    pub participant_id: u32,
    pub session_id: u32,
    pub repetition: u32,
    pub label: GestureLabel,
    pub environment: Environment,
    pub audio_path: String,
    pub profile_path: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub records: Vec<ManifestRecord>,
}

impl Manifest {
    /// Rejects duplicate (participant, session, repetition, label) tuples.
    pub fn new(records: Vec<ManifestRecord>) -> Result<Self> {
        let mut seen = HashSet::new();
        for r in &records {
            if !seen.insert((r.participant_id, r.session_id, r.repetition, r.label.id)) {
                return Err(Error::Malformed(format!(
                    "duplicate record: participant {} session {} repetition {} label {}",
                    r.participant_id, r.session_id, r.repetition, r.label.id
                )));
            }
        }
        Ok(Manifest { records })
    }

    pub fn participants(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self.records.iter().map(|r| r.participant_id).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    pub fn filter(&self, keep: impl Fn(&ManifestRecord) -> bool) -> Manifest {
        Manifest {
            records: self.records.iter().filter(|r| keep(r)).cloned().collect(),
        }
    }

    /// Every label must match the registry entry with the same id.
    pub fn check_labels(&self, registry: &LabelRegistry) -> Result<()> {
        for r in &self.records {
            registry.resolve(&r.label)?;
        }
        Ok(())
    }

    /// Every referenced file must exist and parse.
    pub fn check_files(&self, base_dir: &Path, sample_rate: f64) -> Result<()> {
        for r in &self.records {
            read_f32x2(base_dir.join(&r.audio_path), sample_rate)?;
            read_wsep(base_dir.join(&r.profile_path))?;
        }
        Ok(())
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from(HEADER);
        out.push('\n');
        for r in &self.records {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                r.participant_id,
                r.session_id,
                r.repetition,
                r.label.id,
                r.label.name,
                r.label.category,
                r.environment,
                r.audio_path,
                r.profile_path
            ));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 9 {
                return Err(Error::Malformed(format!(
                    "manifest line {}: expected 9 fields, found {}",
                    i + 1,
                    f.len()
                )));
            }
            let num = |s: &str, what: &str| -> Result<u32> {
                s.parse()
                    .map_err(|_| Error::Malformed(format!("manifest line {}: bad {what} {s:?}", i + 1)))
            };
            records.push(ManifestRecord {
                participant_id: num(f[0], "participant_id")?,
                session_id: num(f[1], "session_id")?,
                repetition: num(f[2], "repetition")?,
                label: GestureLabel {
                    id: num(f[3], "label_id")?,
                    name: f[4].to_string(),
                    category: f[5].parse()?,
                },
                environment: f[6].parse()?,
                audio_path: f[7].to_string(),
                profile_path: f[8].to_string(),
            });
        }
        Manifest::new(records)
    }
}

pub fn write_manifest(path: impl AsRef<Path>, manifest: &Manifest) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, manifest.to_tsv()).map_err(|e| Error::io(path, e))
}

/// Returns the manifest and the directory its paths are relative to.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<(Manifest, PathBuf)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((Manifest::parse(&text)?, base))
}
