//! In-memory examples: mixture magnitudes, targets and log-mel features.

use rdalm_core::corpus::{DatasetManifest, SampleRecord, Split};
use rdalm_core::dsp::{DspConfig, FrontEnd, LogMelFeature, MagnitudeSpectrogram};
use rdalm_core::wav::read_wav;

use crate::{Error, Result};

#[derive(Clone, Debug)]
pub struct Example {
    pub id: String,
    pub event: usize,
    pub speech: bool,
    pub mixture: MagnitudeSpectrogram,
    /// Magnitude of the isolated event; present for speech-bearing examples.
    pub target: Option<MagnitudeSpectrogram>,
    /// Log-mel of the unmasked mixture.
    pub log_mel: LogMelFeature,
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub front: FrontEnd,
    splits: [Vec<Example>; 3],
}

fn slot(split: Split) -> usize {
    match split {
        Split::Train => 0,
        Split::Validation => 1,
        Split::Test => 2,
    }
}

impl Dataset {
    /// Reads every record of `manifest` and runs the front end on it.
    pub fn load(manifest: &DatasetManifest, dsp: &DspConfig) -> Result<Self> {
        let front = FrontEnd::new(dsp)?;
        let mut splits: [Vec<Example>; 3] = Default::default();
        for rec in &manifest.records {
            splits[slot(rec.split)].push(load_record(manifest, rec, &front)?);
        }
        Self::from_parts(front, splits)
    }

    pub fn from_examples(front: FrontEnd, train: Vec<Example>, validation: Vec<Example>, test: Vec<Example>) -> Result<Self> {
        Self::from_parts(front, [train, validation, test])
    }

    fn from_parts(front: FrontEnd, splits: [Vec<Example>; 3]) -> Result<Self> {
        let mut shape = None;
        for e in splits.iter().flatten() {
            let s = (e.mixture.frames, e.mixture.bins);
            if *shape.get_or_insert(s) != s {
                return Err(Error::data(format!(
                    "example {} is {}x{}, others are {}x{}; segments must share a length",
                    e.id, s.0, s.1, shape.unwrap().0, shape.unwrap().1
                )));
            }
        }
        Ok(Self { front, splits })
    }

    pub fn split(&self, split: Split) -> &[Example] {
        &self.splits[slot(split)]
    }

    pub fn has_split(&self, split: Split) -> bool {
        !self.split(split).is_empty()
    }

    /// Speech-bearing examples of `split`, the separator's training pairs.
    pub fn pairs(&self, split: Split) -> Vec<&Example> {
        self.split(split).iter().filter(|e| e.target.is_some()).collect()
    }

    pub fn mask_threshold(&self) -> f64 {
        self.front.config.mask_threshold
    }
}

fn load_record(manifest: &DatasetManifest, rec: &SampleRecord, front: &FrontEnd) -> Result<Example> {
    rec.validate()?;
    let rate = front.config.sample_rate_hz;
    let read = |rel: &std::path::Path| -> Result<MagnitudeSpectrogram> {
        let w = read_wav(&manifest.resolve(rel))?;
        if w.sample_rate_hz() != rate {
            return Err(Error::data(format!(
                "{} is at {} Hz but the dsp block expects {rate} Hz",
                rel.display(),
                w.sample_rate_hz()
            )));
        }
        Ok(front.magnitude(&w)?)
    };
    let mixture = read(&rec.audio_path)?;
    let target = rec.target_path.as_deref().map(read).transpose()?;
    if let Some(t) = &target {
        if !t.same_shape(&mixture) {
            return Err(Error::data(format!("target of {} differs in length from its mixture", rec.id)));
        }
    }
    Ok(Example {
        id: rec.id.clone(),
        event: rec.event_label.index(),
        speech: rec.speech_flag,
        log_mel: front.log_mel(&mixture)?,
        mixture,
        target,
    })
}
