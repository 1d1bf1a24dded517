//! Gesture label registry.
//!
//! The registry is plain data: one `id<TAB>name<TAB>category<TAB>family` line
//! per label. `family` names the simulator trajectory family used to render
//! that label, so labels can be renamed or reassigned without code changes.
//! Slots named `placeholder_*` stand in for actions whose names are not known;
//! edit the registry file to rename them.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::gestures::Family;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Gesture,
    Activity,
    HeadMotion,
    Null,
}

impl Category {
    pub const ALL: [Category; 4] = [
        Category::Gesture,
        Category::Activity,
        Category::HeadMotion,
        Category::Null,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Category::Gesture => "gesture",
            Category::Activity => "activity",
            Category::HeadMotion => "head_motion",
            Category::Null => "null",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Category::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::Malformed(format!("unknown category {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GestureLabel {
    pub id: u32,
    pub name: String,
    pub category: Category,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelEntry {
    pub label: GestureLabel,
    pub family: Family,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelRegistry {
    entries: Vec<LabelEntry>,
}

const DEFAULT_REGISTRY: &str = "\
0\ttouching_earlobe\tgesture\tearlobe_touch
1\ttapping_temple\tgesture\ttemple_tap
2\trubbing_forehead\tgesture\tforehead_rub
3\tsqueezing\tgesture\tsqueeze
4\ttapping_nose\tgesture\tnose_tap
5\tswiping_chin\tgesture\tchin_swipe
6\tplaceholder_gesture_7\tgesture\tnear_approach
7\tplaceholder_gesture_8\tgesture\tnear_retreat
8\tplaceholder_gesture_9\tgesture\tdouble_tap_far
9\tplaceholder_gesture_10\tgesture\tarm_sweep
10\tdrinking\tactivity\tdrink
11\tbrushing_teeth\tactivity\tbrush
12\tskincare\tactivity\tskincare_rub
13\tcoughing\tactivity\tcough
14\tplaceholder_activity_5\tactivity\tslow_arm_swing
15\tnodding\thead_motion\tnod
16\thead_shaking\thead_motion\tshake
17\thead_rotation_left\thead_motion\tturn_left
18\thead_rotation_right\thead_motion\tturn_right
19\tplaceholder_head_motion_5\thead_motion\ttilt_a
20\tplaceholder_head_motion_6\thead_motion\ttilt_b
21\tnull\tnull\tstill
";

impl Default for LabelRegistry {
    fn default() -> Self {
        LabelRegistry::parse(DEFAULT_REGISTRY).expect("built-in registry parses")
    }
}

impl LabelRegistry {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim_end();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 4 {
                return Err(Error::Malformed(format!(
                    "registry line {}: expected 4 tab-separated fields, found {}",
                    lineno + 1,
                    fields.len()
                )));
            }
            let id: u32 = fields[0].parse().map_err(|_| {
                Error::Malformed(format!("registry line {}: bad id {:?}", lineno + 1, fields[0]))
            })?;
            entries.push(LabelEntry {
                label: GestureLabel {
                    id,
                    name: fields[1].to_string(),
                    category: fields[2].parse()?,
                },
                family: fields[3].parse()?,
            });
        }
        let registry = LabelRegistry { entries };
        registry.validate()?;
        Ok(registry)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        LabelRegistry::parse(&text)
    }

    pub fn to_tsv(&self) -> String {
        self.entries
            .iter()
            .map(|e| {
                format!(
                    "{}\t{}\t{}\t{}\n",
                    e.label.id, e.label.name, e.label.category, e.family
                )
            })
            .collect()
    }

    /// Ids must be `0..n` in order and names unique.
    fn validate(&self) -> Result<()> {
        if self.entries.is_empty() {
            return Err(Error::Empty("label registry"));
        }
        for (i, e) in self.entries.iter().enumerate() {
            if e.label.id as usize != i {
                return Err(Error::Malformed(format!(
                    "registry ids must be consecutive from 0; entry {i} has id {}",
                    e.label.id
                )));
            }
            if self.entries[..i].iter().any(|o| o.label.name == e.label.name) {
                return Err(Error::Malformed(format!(
                    "duplicate label name {:?}",
                    e.label.name
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[LabelEntry] {
        &self.entries
    }

    pub fn labels(&self) -> impl Iterator<Item = &GestureLabel> {
        self.entries.iter().map(|e| &e.label)
    }

    pub fn by_id(&self, id: u32) -> Result<&LabelEntry> {
        self.entries
            .get(id as usize)
            .ok_or_else(|| Error::UnknownLabel(format!("id {id}")))
    }

    pub fn by_name(&self, name: &str) -> Result<&LabelEntry> {
        self.entries
            .iter()
            .find(|e| e.label.name == name)
            .ok_or_else(|| Error::UnknownLabel(name.to_string()))
    }

    /// Entry matching the label's id, name and category.
    pub fn resolve(&self, label: &GestureLabel) -> Result<&LabelEntry> {
        match self.entries.get(label.id as usize) {
            Some(e) if e.label == *label => Ok(e),
            _ => Err(Error::UnknownLabel(format!("{} (id {})", label.name, label.id))),
        }
    }

    pub fn in_category(&self, category: Category) -> Vec<&GestureLabel> {
        self.labels().filter(|l| l.category == category).collect()
    }
}
