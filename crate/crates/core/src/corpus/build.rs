//! Ingestion of pre-downloaded event and speech corpora.
//!
//! Expected layout (WAV only):
//!
//! ```text
//! event_dev/<class>/**/*.wav     event_test/<class>/**/*.wav
//! speech_dev/**/*.wav            speech_test/**/*.wav
//! ```
//!
//! where `<class>` is one of `dog_barking`, `glass_breaking`, `gun_shot`.
//! The development pools feed the train/validation splits and the test pools
//! the test split.

use std::path::{Path, PathBuf};

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::split::assign_dev_split;
use super::{derive_seed, DatasetManifest, EventLabel, Recipe, SampleRecord, Split};
use crate::dsp::{apply_gain_db, mix, most_energetic_segment, resample, standardize, Waveform};
use crate::wav::{read_wav, write_wav};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSources {
    pub event_dev: PathBuf,
    pub event_test: PathBuf,
    pub speech_dev: PathBuf,
    pub speech_test: PathBuf,
}

impl CorpusSources {
    fn check(&self) -> Result<()> {
        for p in [&self.event_dev, &self.event_test, &self.speech_dev, &self.speech_test] {
            if !p.is_dir() {
                return Err(Error::Corpus(format!("corpus directory {} does not exist", p.display())));
            }
        }
        Ok(())
    }
}

fn wav_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        let entries = std::fs::read_dir(&d).map_err(|e| Error::io(&d, e))?;
        for entry in entries {
            let path = entry.map_err(|e| Error::io(&d, e))?.path();
            if path.is_dir() {
                stack.push(path);
            } else if path
                .extension()
                .is_some_and(|e| e.eq_ignore_ascii_case("wav"))
            {
                out.push(path);
            }
        }
    }
    out.sort();
    Ok(out)
}

/// Resampled, most energetic, standardized segment; `None` (with a warning)
/// for unreadable or degenerate files.
fn prepare_segment(path: &Path, recipe: &Recipe) -> Option<Waveform> {
    let run = || -> Result<Waveform> {
        let w = read_wav(path)?;
        let w = resample(&w, recipe.sample_rate_hz)?;
        let w = most_energetic_segment(&w, recipe.segment_s, recipe.segment_hop_ms / 1000.0)?;
        let w = standardize(&w)?;
        Ok(quantize(&w))
    };
    match run() {
        Ok(w) => Some(w),
        Err(e) => {
            warn!("skipping {}: {e}", path.display());
            None
        }
    }
}

fn quantize(w: &Waveform) -> Waveform {
    let s = w.samples().iter().map(|&v| v as f32 as f64).collect();
    Waveform::new(s, w.sample_rate_hz()).expect("finite")
}

/// Supplies attenuated speech segments: uniform draws without replacement,
/// reshuffling and reusing only once the pool is exhausted.
struct SpeechPool<'a> {
    files: Vec<PathBuf>,
    cursor: usize,
    rng: ChaCha8Rng,
    recipe: &'a Recipe,
    usable_seen: usize,
}

impl<'a> SpeechPool<'a> {
    fn new(dir: &Path, recipe: &'a Recipe, seed: u64) -> Result<Self> {
        let mut files = wav_files(dir)?;
        if files.is_empty() {
            return Err(Error::Corpus(format!("no speech audio under {}", dir.display())));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        files.shuffle(&mut rng);
        Ok(Self {
            files,
            cursor: 0,
            rng,
            recipe,
            usable_seen: 0,
        })
    }

    fn next(&mut self) -> Result<Waveform> {
        let mut attempts = 0;
        loop {
            if self.cursor == self.files.len() {
                if self.usable_seen == 0 {
                    return Err(Error::Corpus("no usable speech segment in pool".into()));
                }
                warn!("speech pool exhausted, reusing segments");
                self.files.shuffle(&mut self.rng);
                self.cursor = 0;
            }
            let path = self.files[self.cursor].clone();
            self.cursor += 1;
            attempts += 1;
            if let Some(seg) = prepare_segment(&path, self.recipe) {
                self.usable_seen += 1;
                return Ok(quantize(&apply_gain_db(&seg, self.recipe.speech_gain_db)));
            }
            if attempts > 2 * self.files.len() && self.usable_seen == 0 {
                return Err(Error::Corpus("no usable speech segment in pool".into()));
            }
        }
    }
}

struct Pending {
    label: EventLabel,
    event: Waveform,
    speech: bool,
    pool_index: usize,
}

fn load_pool(event_dir: &Path, recipe: &Recipe, seed: u64) -> Result<Vec<Pending>> {
    let mut out = Vec::new();
    for label in EventLabel::ALL {
        let dir = event_dir.join(label.as_str());
        if !dir.is_dir() {
            return Err(Error::Corpus(format!("missing class directory {}", dir.display())));
        }
        let events: Vec<Waveform> = wav_files(&dir)?
            .iter()
            .filter_map(|p| prepare_segment(p, recipe))
            .collect();
        if events.is_empty() {
            return Err(Error::Corpus(format!("class {label} has no usable audio in {}", dir.display())));
        }
        let n = events.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, label.index() as u64)));
        let mut speech = vec![false; n];
        for &k in &order[..n / 2] {
            speech[k] = true;
        }
        out.extend(events.into_iter().enumerate().map(|(k, event)| Pending {
            label,
            event,
            speech: speech[k],
            pool_index: k,
        }));
    }
    Ok(out)
}

/// Builds the mixture corpus under `out_dir` and writes `manifest.jsonl`.
pub fn build_mixture_corpus(
    sources: &CorpusSources,
    recipe: &Recipe,
    seed: u64,
    out_dir: &Path,
) -> Result<DatasetManifest> {
    recipe.validate()?;
    sources.check()?;
    let mut records = Vec::new();
    for (pool_name, event_dir, speech_dir, tag) in [
        ("dev", &sources.event_dev, &sources.speech_dev, 0u64),
        ("test", &sources.event_test, &sources.speech_test, 1u64),
    ] {
        let pending = load_pool(event_dir, recipe, derive_seed(seed, 100 + tag))?;
        let splits = if tag == 0 {
            let keys: Vec<_> = pending.iter().map(|p| (p.label, p.speech)).collect();
            assign_dev_split(&keys, recipe.train_fraction, derive_seed(seed, 200))?
        } else {
            vec![Split::Test; pending.len()]
        };
        let mut speech_pool = SpeechPool::new(speech_dir, recipe, derive_seed(seed, 300 + tag))?;
        for (p, split) in pending.into_iter().zip(splits) {
            let id = format!("{pool_name}-{}-{:05}", p.label, p.pool_index);
            let audio_path = format!("{split}/{}/{id}.wav", p.label);
            let (mixture, target_path) = if p.speech {
                let speech = speech_pool.next()?;
                let target_path = format!("{split}/targets/{id}.wav");
                write_wav(&out_dir.join(&target_path), &p.event)?;
                (mix(&p.event, &speech)?, Some(PathBuf::from(target_path)))
            } else {
                (p.event, None)
            };
            write_wav(&out_dir.join(&audio_path), &mixture)?;
            records.push(SampleRecord {
                id,
                audio_path: audio_path.into(),
                event_label: p.label,
                speech_flag: p.speech,
                split,
                target_path,
            });
        }
    }
    records.sort_by(|a, b| (a.split, &a.id).cmp(&(b.split, &b.id)));
    let manifest = DatasetManifest {
        seed,
        recipe: recipe.clone(),
        toy: None,
        config_hash: None,
        records,
        root: out_dir.to_path_buf(),
    };
    super::save_manifest(&manifest, &out_dir.join("manifest.jsonl"))?;
    Ok(manifest)
}
