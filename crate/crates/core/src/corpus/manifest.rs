use std::collections::{BTreeMap, HashSet};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{EventLabel, SampleRecord, Split, ToySpec};
use crate::{Error, Result};

pub const MANIFEST_FORMAT: &str = "rdalm-manifest";
const MANIFEST_VERSION: u32 = 1;

/// Mixture synthesis parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Recipe {
    pub sample_rate_hz: u32,
    pub segment_s: f64,
    pub segment_hop_ms: f64,
    pub speech_gain_db: f64,
    pub train_fraction: f64,
}

impl Default for Recipe {
    fn default() -> Self {
        Self {
            sample_rate_hz: 44_100,
            segment_s: 1.0,
            segment_hop_ms: 10.0,
            speech_gain_db: -5.0,
            train_fraction: 0.9,
        }
    }
}

impl Recipe {
    pub fn validate(&self) -> Result<()> {
        if self.sample_rate_hz == 0 || !(self.segment_s > 0.0) || !(self.segment_hop_ms > 0.0) {
            return Err(Error::invalid("recipe rates and durations must be positive"));
        }
        if !self.speech_gain_db.is_finite() {
            return Err(Error::invalid("recipe speech gain must be finite"));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::invalid("recipe train_fraction must lie in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CountEntry {
    pub split: Split,
    pub event_label: EventLabel,
    pub speech_flag: bool,
    pub count: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    version: u32,
    seed: u64,
    recipe: Recipe,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    toy: Option<ToySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    config_hash: Option<String>,
    counts: Vec<CountEntry>,
}

/// A dataset: header metadata plus one record per example.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub seed: u64,
    pub recipe: Recipe,
    /// Generator parameters when the corpus is synthetic.
    pub toy: Option<ToySpec>,
    pub config_hash: Option<String>,
    pub records: Vec<SampleRecord>,
    /// Directory that record paths are relative to.
    pub root: PathBuf,
}

impl DatasetManifest {
    pub fn resolve(&self, relative: &Path) -> PathBuf {
        self.root.join(relative)
    }

    pub fn records_in(&self, split: Split) -> impl Iterator<Item = &SampleRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    pub fn has_split(&self, split: Split) -> bool {
        self.records.iter().any(|r| r.split == split)
    }

    /// Counts for every (split, label, flag) combination, zeros included.
    pub fn counts(&self) -> Vec<CountEntry> {
        let mut map: BTreeMap<(Split, EventLabel, bool), usize> = BTreeMap::new();
        for split in Split::ALL {
            for label in EventLabel::ALL {
                for flag in [false, true] {
                    map.insert((split, label, flag), 0);
                }
            }
        }
        for r in &self.records {
            *map.entry((r.split, r.event_label, r.speech_flag)).or_default() += 1;
        }
        map.into_iter()
            .map(|((split, event_label, speech_flag), count)| CountEntry {
                split,
                event_label,
                speech_flag,
                count,
            })
            .collect()
    }

    pub fn count(&self, split: Split, label: Option<EventLabel>, speech: Option<bool>) -> usize {
        self.records
            .iter()
            .filter(|r| {
                r.split == split
                    && label.map_or(true, |l| r.event_label == l)
                    && speech.map_or(true, |s| r.speech_flag == s)
            })
            .count()
    }

    /// Record-level schema: unique ids and the target/speech pairing.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for r in &self.records {
            r.validate()?;
            if !seen.insert(r.id.as_str()) {
                return Err(Error::invalid(format!("duplicate record id {}", r.id)));
            }
        }
        Ok(())
    }

    /// Within every split and class, speech and non-speech counts differ by
    /// at most one.
    pub fn check_balance(&self) -> Result<()> {
        for split in Split::ALL {
            for label in EventLabel::ALL {
                let s = self.count(split, Some(label), Some(true));
                let n = self.count(split, Some(label), Some(false));
                if s.abs_diff(n) > 1 {
                    return Err(Error::Corpus(format!(
                        "{split}/{label}: {s} speech vs {n} non-speech records"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Every audio file belongs to exactly one split.
    pub fn check_disjoint(&self) -> Result<()> {
        let mut owner: BTreeMap<&Path, Split> = BTreeMap::new();
        for r in &self.records {
            let paths = std::iter::once(r.audio_path.as_path()).chain(r.target_path.as_deref());
            for p in paths {
                if let Some(prev) = owner.insert(p, r.split) {
                    if prev != r.split {
                        return Err(Error::Corpus(format!(
                            "{} appears in both {prev} and {}",
                            p.display(),
                            r.split
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let header = Header {
            format: MANIFEST_FORMAT.to_string(),
            version: MANIFEST_VERSION,
            seed: self.seed,
            recipe: self.recipe.clone(),
            toy: self.toy.clone(),
            config_hash: self.config_hash.clone(),
            counts: self.counts(),
        };
        let mut out = serde_json::to_string(&header).expect("header serializes");
        out.push('\n');
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        Ok(out)
    }

    pub fn from_jsonl(text: &str, root: PathBuf) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, first) = lines.next().ok_or(Error::Manifest {
            line: 1,
            message: "empty manifest".into(),
        })?;
        let header: Header = serde_json::from_str(first).map_err(|e| Error::Manifest {
            line: 1,
            message: format!("bad header: {e}"),
        })?;
        if header.format != MANIFEST_FORMAT || header.version != MANIFEST_VERSION {
            return Err(Error::Manifest {
                line: 1,
                message: format!("unsupported format {} v{}", header.format, header.version),
            });
        }
        let mut records = Vec::new();
        let mut ids = HashSet::new();
        for (i, line) in lines {
            let line_no = i + 1;
            let id = serde_json::from_str::<serde_json::Value>(line)
                .ok()
                .and_then(|v| v.get("id").and_then(|id| id.as_str()).map(str::to_owned))
                .unwrap_or_else(|| "<unknown>".into());
            let record: SampleRecord = serde_json::from_str(line).map_err(|e| Error::Manifest {
                line: line_no,
                message: format!("record {id}: {e}"),
            })?;
            record.validate().map_err(|e| Error::Manifest {
                line: line_no,
                message: format!("record {id}: {e}"),
            })?;
            if !ids.insert(record.id.clone()) {
                return Err(Error::Manifest {
                    line: line_no,
                    message: format!("record {id}: duplicate id"),
                });
            }
            records.push(record);
        }
        let manifest = Self {
            seed: header.seed,
            recipe: header.recipe,
            toy: header.toy,
            config_hash: header.config_hash,
            records,
            root,
        };
        if manifest.counts() != header.counts {
            return Err(Error::Manifest {
                line: 1,
                message: "header counts disagree with records".into(),
            });
        }
        Ok(manifest)
    }
}

pub fn save_manifest(manifest: &DatasetManifest, path: &Path) -> Result<()> {
    manifest.validate()?;
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(manifest.to_jsonl()?.as_bytes())
        .map_err(|e| Error::io(path, e))
}

/// Loads and schema-checks a manifest; record paths resolve against the
/// manifest's directory.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let root = path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    DatasetManifest::from_jsonl(&text, root)
}
