//! Construction of `(audio, event label, speech flag)` datasets.
//!
//! Two producers share one manifest format: [`build_mixture_corpus`] ingests
//! pre-downloaded event and speech corpora, and [`synth_toy_corpus`]
//! generates a desk-scale synthetic stand-in with the same balance rules.

mod build;
mod manifest;
mod split;
mod toy;

pub use build::{build_mixture_corpus, CorpusSources};
pub use manifest::{load_manifest, save_manifest, CountEntry, DatasetManifest, Recipe, MANIFEST_FORMAT};
pub use split::{split_dev, train_count};
pub use toy::{synth_toy_corpus, synth_toy_record, SpeechLayout, SplitCounts, ToyClip, ToySpec};

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dsp::Waveform;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventLabel {
    DogBarking,
    GlassBreaking,
    GunShot,
}

impl EventLabel {
    pub const ALL: [EventLabel; 3] = [Self::DogBarking, Self::GlassBreaking, Self::GunShot];

    pub fn index(self) -> usize {
        match self {
            Self::DogBarking => 0,
            Self::GlassBreaking => 1,
            Self::GunShot => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::DogBarking => "dog_barking",
            Self::GlassBreaking => "glass_breaking",
            Self::GunShot => "gun_shot",
        }
    }
}

impl fmt::Display for EventLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EventLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown event label {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Self::Train, Self::Validation, Self::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Train => "train",
            Self::Validation => "validation",
            Self::Test => "test",
        }
    }

    pub fn is_development(self) -> bool {
        matches!(self, Self::Train | Self::Validation)
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One `(x, y, s)` example. Paths are relative to the manifest directory.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleRecord {
    pub id: String,
    pub audio_path: PathBuf,
    pub event_label: EventLabel,
    pub speech_flag: bool,
    pub split: Split,
    /// Isolated-event audio; present exactly when `speech_flag` is set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_path: Option<PathBuf>,
}

impl SampleRecord {
    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::invalid("record id is empty"));
        }
        match (self.speech_flag, &self.target_path) {
            (true, None) => Err(Error::invalid(format!(
                "record {} carries speech but has no target_path",
                self.id
            ))),
            (false, Some(_)) => Err(Error::invalid(format!(
                "record {} has a target_path but no speech",
                self.id
            ))),
            _ => Ok(()),
        }
    }
}

/// A speech-bearing mixture and the event audio it was built from.
#[derive(Clone, Debug, PartialEq)]
pub struct SeparationPair {
    pub mixture: Waveform,
    pub target: Waveform,
}

impl SeparationPair {
    pub fn new(mixture: Waveform, target: Waveform) -> Result<Self> {
        if mixture.len() != target.len() || mixture.sample_rate_hz() != target.sample_rate_hz() {
            return Err(Error::shape(format!(
                "mixture {}@{} vs target {}@{}",
                mixture.len(),
                mixture.sample_rate_hz(),
                target.len(),
                target.sample_rate_hz()
            )));
        }
        Ok(Self { mixture, target })
    }

    /// The interference, mixture minus target.
    pub fn residual(&self) -> Waveform {
        let r = self
            .mixture
            .samples()
            .iter()
            .zip(self.target.samples())
            .map(|(m, t)| m - t)
            .collect();
        Waveform::new(r, self.mixture.sample_rate_hz()).expect("finite difference of finite waveforms")
    }
}

/// Derives an independent stream seed from a base seed and a tag.
pub fn derive_seed(base: u64, tag: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = base ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_round_trip_through_strings() {
        for l in EventLabel::ALL {
            assert_eq!(l.as_str().parse::<EventLabel>().unwrap(), l);
            assert_eq!(EventLabel::from_index(l.index()), Some(l));
        }
        assert!("cat_meow".parse::<EventLabel>().is_err());
    }

    #[test]
    fn record_target_invariant() {
        let mut r = SampleRecord {
            id: "a".into(),
            audio_path: "a.wav".into(),
            event_label: EventLabel::GunShot,
            speech_flag: true,
            split: Split::Train,
            target_path: None,
        };
        assert!(r.validate().is_err());
        r.target_path = Some("t.wav".into());
        assert!(r.validate().is_ok());
        r.speech_flag = false;
        assert!(r.validate().is_err());
    }

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(1, 2), derive_seed(1, 3));
        assert_ne!(derive_seed(1, 2), derive_seed(2, 2));
        assert_eq!(derive_seed(7, 9), derive_seed(7, 9));
    }
}
