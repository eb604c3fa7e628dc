//! Synthetic stand-in corpus.
//!
//! Each event class is a band-limited noise burst with a class-specific
//! temporal envelope; speech is a harmonic chirp shaped by formant-like
//! bands. In the overlapping layout the formants reach into the event bands,
//! so a spectral mask cannot remove speech without also touching the event.

use std::f64::consts::PI;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{derive_seed, DatasetManifest, EventLabel, Recipe, SampleRecord, Split};
use crate::dsp::{apply_gain_db, mix, most_energetic_segment, standardize, Waveform};
use crate::wav::write_wav;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitCounts {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

impl SplitCounts {
    pub fn get(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train,
            Split::Validation => self.validation,
            Split::Test => self.test,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpeechLayout {
    /// Formants partially cover the event bands.
    Overlapping,
    /// Speech energy confined to bands no event occupies.
    Disjoint,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToySpec {
    pub sample_rate_hz: u32,
    /// Raw clip length before the most energetic segment is taken.
    pub clip_s: f64,
    pub per_class: SplitCounts,
    pub event_centers_hz: [f64; 3],
    /// Band width as a fraction of the centre frequency.
    pub event_rel_bandwidth: f64,
    /// Broadband floor added to every event clip, relative to its RMS.
    pub noise_floor_db: f64,
    pub speech: SpeechLayout,
    pub f0_range_hz: [f64; 2],
    /// Each speech clip gets an extra gain drawn uniformly from
    /// `[-speech_level_spread_db, 0]` on top of the recipe gain.
    pub speech_level_spread_db: f64,
}

impl Default for ToySpec {
    fn default() -> Self {
        Self {
            sample_rate_hz: 16_000,
            clip_s: 1.5,
            per_class: SplitCounts {
                train: 8,
                validation: 8,
                test: 8,
            },
            event_centers_hz: [500.0, 2000.0, 6000.0],
            event_rel_bandwidth: 0.3,
            noise_floor_db: -20.0,
            speech: SpeechLayout::Overlapping,
            f0_range_hz: [100.0, 300.0],
            speech_level_spread_db: 0.0,
        }
    }
}

/// Frequency ranges speech may occupy in the disjoint layout.
const DISJOINT_SPEECH_BANDS: [(f64, f64); 2] = [(800.0, 1400.0), (2700.0, 4500.0)];

impl ToySpec {
    pub fn validate(&self, recipe: &Recipe) -> Result<()> {
        if self.sample_rate_hz != recipe.sample_rate_hz {
            return Err(Error::invalid(format!(
                "toy rate {} differs from recipe rate {}",
                self.sample_rate_hz, recipe.sample_rate_hz
            )));
        }
        for split in Split::ALL {
            if self.per_class.get(split) < 4 {
                return Err(Error::invalid(format!(
                    "{split}: need at least 4 clips per class (2 per speech stratum)"
                )));
            }
        }
        let nyquist = self.sample_rate_hz as f64 / 2.0;
        for c in self.event_centers_hz {
            if !(c > 0.0) || c * (1.0 + self.event_rel_bandwidth / 2.0) >= nyquist {
                return Err(Error::invalid(format!("event band at {c} Hz exceeds Nyquist")));
            }
        }
        if !(self.event_rel_bandwidth > 0.0 && self.event_rel_bandwidth < 1.0) {
            return Err(Error::invalid("event_rel_bandwidth must lie in (0, 1)"));
        }
        let [lo, hi] = self.f0_range_hz;
        if !(lo > 0.0 && hi >= lo) {
            return Err(Error::invalid("f0 range must be positive and ordered"));
        }
        if self.speech == SpeechLayout::Disjoint {
            for c in self.event_centers_hz {
                let (a, b) = self.event_band(c);
                if DISJOINT_SPEECH_BANDS.iter().any(|&(s, e)| a < e && s < b) {
                    return Err(Error::invalid(format!(
                        "event band {a}-{b} Hz intersects the disjoint speech bands"
                    )));
                }
            }
        }
        if !(self.speech_level_spread_db >= 0.0 && self.speech_level_spread_db.is_finite()) {
            return Err(Error::invalid("speech_level_spread_db must be finite and non-negative"));
        }
        if !(self.clip_s > 0.0) || !self.noise_floor_db.is_finite() {
            return Err(Error::invalid("clip_s must be positive and noise floor finite"));
        }
        Ok(())
    }

    fn event_band(&self, centre: f64) -> (f64, f64) {
        let half = centre * self.event_rel_bandwidth / 2.0;
        (centre - half, centre + half)
    }

    fn clip_len(&self) -> usize {
        (self.clip_s * self.sample_rate_hz as f64).round() as usize
    }
}

/// One synthetic example before it is written to disk.
#[derive(Clone, Debug, PartialEq)]
pub struct ToyClip {
    /// Standardized event segment; the separation target.
    pub event: Waveform,
    /// Standardized, attenuated speech segment.
    pub speech: Option<Waveform>,
    pub mixture: Waveform,
}

fn band_noise(rng: &mut ChaCha8Rng, len: usize, rate: f64, lo: f64, hi: f64) -> Vec<f64> {
    const PARTIALS: usize = 48;
    let partials: Vec<(f64, f64)> = (0..PARTIALS)
        .map(|_| (rng.random_range(lo..hi), rng.random_range(0.0..2.0 * PI)))
        .collect();
    (0..len)
        .map(|n| {
            let t = n as f64 / rate;
            partials
                .iter()
                .map(|(f, p)| (2.0 * PI * f * t + p).sin())
                .sum::<f64>()
        })
        .collect()
}

fn decay_env(t: f64, onset: f64, attack: f64, tau: f64) -> f64 {
    if t < onset {
        0.0
    } else if t < onset + attack {
        (t - onset) / attack
    } else {
        (-(t - onset - attack) / tau).exp()
    }
}

fn event_envelope(label: EventLabel, rng: &mut ChaCha8Rng, len: usize, rate: f64, clip_s: f64) -> Vec<f64> {
    let onset = rng.random_range(0.05..(clip_s * 0.4).max(0.06));
    let mut bursts: Vec<(f64, f64, f64, f64)> = Vec::new(); // onset, attack, tau, gain
    match label {
        EventLabel::DogBarking => {
            let mut t = onset;
            for _ in 0..rng.random_range(2..=3) {
                bursts.push((t, 0.01, rng.random_range(0.06..0.1), 1.0));
                t += rng.random_range(0.25..0.4);
            }
        }
        EventLabel::GlassBreaking => {
            bursts.push((onset, 0.004, rng.random_range(0.15..0.3), 1.0));
            for _ in 0..3 {
                let t = onset + rng.random_range(0.1..0.6);
                bursts.push((t, 0.002, 0.03, rng.random_range(0.2..0.5)));
            }
        }
        EventLabel::GunShot => {
            bursts.push((onset, 0.002, rng.random_range(0.04..0.08), 1.0));
            bursts.push((onset + 0.01, 0.02, 0.25, 0.18));
        }
    }
    (0..len)
        .map(|n| {
            let t = n as f64 / rate;
            bursts
                .iter()
                .map(|&(o, a, tau, g)| g * decay_env(t, o, a, tau))
                .sum()
        })
        .collect()
}

fn raw_event(spec: &ToySpec, label: EventLabel, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let rate = spec.sample_rate_hz as f64;
    let len = spec.clip_len();
    let (lo, hi) = spec.event_band(spec.event_centers_hz[label.index()]);
    let noise = band_noise(rng, len, rate, lo, hi);
    let env = event_envelope(label, rng, len, rate, spec.clip_s);
    let mut x: Vec<f64> = noise.iter().zip(&env).map(|(n, e)| n * e).collect();
    let rms = (x.iter().map(|v| v * v).sum::<f64>() / len as f64).sqrt();
    let floor = rms * 10f64.powf(spec.noise_floor_db / 20.0);
    for v in &mut x {
        let g: f64 = rng.sample(StandardNormal);
        *v += floor * g;
    }
    x
}

/// Raised-cosine ramp to zero at the edges of the disjoint speech bands.
fn band_taper(f: f64) -> f64 {
    const RAMP_HZ: f64 = 150.0;
    DISJOINT_SPEECH_BANDS
        .iter()
        .map(|&(lo, hi)| {
            if f <= lo || f >= hi {
                0.0
            } else {
                let edge = ((f - lo).min(hi - f) / RAMP_HZ).min(1.0);
                0.5 * (1.0 - (PI * edge).cos())
            }
        })
        .fold(0.0, f64::max)
}

fn formant_gain(layout: SpeechLayout, formants: &[(f64, f64, f64)], f: f64) -> f64 {
    let taper = match layout {
        SpeechLayout::Disjoint => band_taper(f),
        SpeechLayout::Overlapping => 1.0,
    };
    if taper == 0.0 {
        return 0.0;
    }
    taper
        * formants
            .iter()
            .map(|&(centre, width, gain)| gain * (-0.5 * ((f - centre) / width).powi(2)).exp())
            .sum::<f64>()
}

fn raw_speech(spec: &ToySpec, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let rate = spec.sample_rate_hz as f64;
    let len = spec.clip_len();
    let [f0_lo, f0_hi] = spec.f0_range_hz;
    let f0_start = rng.random_range(f0_lo..=f0_hi);
    let f0_end = rng.random_range(f0_lo..=f0_hi);
    let formants: Vec<(f64, f64, f64)> = match spec.speech {
        SpeechLayout::Overlapping => vec![
            (rng.random_range(450.0..800.0), 120.0, 1.0),
            (rng.random_range(1600.0..2300.0), 180.0, 0.6),
            (rng.random_range(2700.0..3400.0), 250.0, 0.3),
        ],
        SpeechLayout::Disjoint => vec![
            (rng.random_range(950.0..1250.0), 150.0, 1.0),
            (rng.random_range(3000.0..4200.0), 300.0, 0.5),
        ],
    };
    let syllable_rate = rng.random_range(3.0..6.0);
    let syllable_phase = rng.random_range(0.0..2.0 * PI);
    let nyquist = rate / 2.0;
    let max_harmonic = (nyquist * 0.9 / f0_lo.min(f0_hi)).floor() as usize;
    let duration = len as f64 / rate;

    let mut phase = 0.0;
    let mut out = Vec::with_capacity(len);
    for n in 0..len {
        let t = n as f64 / rate;
        let f0 = f0_start + (f0_end - f0_start) * t / duration;
        let f0 = f0 * (1.0 + 0.03 * (2.0 * PI * 5.0 * t).sin());
        phase += 2.0 * PI * f0 / rate;
        let syllable = (0.5 * (1.0 + (2.0 * PI * syllable_rate * t + syllable_phase).sin())).powi(2);
        let mut v = 0.0;
        for h in 1..=max_harmonic {
            let f = h as f64 * f0;
            if f >= nyquist * 0.9 {
                break;
            }
            let g = formant_gain(spec.speech, &formants, f);
            if g > 1e-6 {
                v += g * (h as f64 * phase).sin();
            }
        }
        out.push(syllable * v);
    }
    out
}

/// Synthesizes one example following the mixture recipe: the event clip is
/// reduced to its standardized most energetic segment, speech (when present)
/// likewise and then attenuated by the recipe gain before summation.
pub fn synth_toy_record(
    spec: &ToySpec,
    recipe: &Recipe,
    label: EventLabel,
    with_speech: bool,
    seed: u64,
) -> Result<ToyClip> {
    spec.validate(recipe)?;
    let rate = spec.sample_rate_hz;
    let hop_s = recipe.segment_hop_ms / 1000.0;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 1));
    let event = Waveform::new(raw_event(spec, label, &mut rng), rate)?;
    let event = quantize(&standardize(&most_energetic_segment(&event, recipe.segment_s, hop_s)?)?);
    if !with_speech {
        return Ok(ToyClip {
            mixture: event.clone(),
            event,
            speech: None,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 2));
    let speech = Waveform::new(raw_speech(spec, &mut rng), rate)?;
    let speech = standardize(&most_energetic_segment(&speech, recipe.segment_s, hop_s)?)?;
    let mut gain_db = recipe.speech_gain_db;
    if spec.speech_level_spread_db > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 3));
        gain_db -= rng.random_range(0.0..=spec.speech_level_spread_db);
    }
    let speech = quantize(&apply_gain_db(&speech, gain_db));
    let mixture = mix(&event, &speech)?;
    Ok(ToyClip {
        event,
        speech: Some(speech),
        mixture,
    })
}

/// Rounds samples to `f32` so that on-disk audio carries exactly the values
/// the mixtures were computed from.
fn quantize(w: &Waveform) -> Waveform {
    let s = w.samples().iter().map(|&v| v as f32 as f64).collect();
    Waveform::new(s, w.sample_rate_hz()).expect("finite")
}

fn record_tag(split: Split, label: EventLabel, k: usize) -> u64 {
    ((split as u64) << 40) | ((label.index() as u64) << 32) | k as u64
}

/// Generates WAV files under `out_dir` using the `<split>/<class>/<id>.wav`
/// layout (targets in `<split>/targets/`) and writes `manifest.jsonl` there.
pub fn synth_toy_corpus(
    spec: &ToySpec,
    recipe: &Recipe,
    seed: u64,
    out_dir: &Path,
) -> Result<DatasetManifest> {
    spec.validate(recipe)?;
    recipe.validate()?;
    let mut records = Vec::new();
    for split in Split::ALL {
        for label in EventLabel::ALL {
            let n = spec.per_class.get(split);
            let mut order: Vec<usize> = (0..n).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, record_tag(split, label, 1 << 31)));
            order.shuffle(&mut rng);
            let mut speech = vec![false; n];
            for &k in &order[..n / 2] {
                speech[k] = true;
            }
            for k in 0..n {
                let id = format!("{split}-{label}-{k:04}");
                let clip = synth_toy_record(spec, recipe, label, speech[k], derive_seed(seed, record_tag(split, label, k)))?;
                let audio_path = format!("{split}/{label}/{id}.wav");
                write_wav(&out_dir.join(&audio_path), &clip.mixture)?;
                let target_path = if speech[k] {
                    let p = format!("{split}/targets/{id}.wav");
                    write_wav(&out_dir.join(&p), &clip.event)?;
                    Some(p.into())
                } else {
                    None
                };
                records.push(SampleRecord {
                    id,
                    audio_path: audio_path.into(),
                    event_label: label,
                    speech_flag: speech[k],
                    split,
                    target_path,
                });
            }
        }
    }
    let manifest = DatasetManifest {
        seed,
        recipe: recipe.clone(),
        toy: Some(spec.clone()),
        config_hash: None,
        records,
        root: out_dir.to_path_buf(),
    };
    super::save_manifest(&manifest, &out_dir.join("manifest.jsonl"))?;
    Ok(manifest)
}
