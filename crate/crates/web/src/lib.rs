//! WebAssembly side of the browser demo.
//!
//! Every export is an ordinary Rust function as well, so the numerics are
//! tested natively. Errors cross into JavaScript as strings.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rdalm_core::corpus::{synth_toy_record, EventLabel, Recipe, ToySpec};
use rdalm_core::dsp::{apply_mask, binarize_mask, DspConfig, FrontEnd, MagnitudeSpectrogram, SpectralMask};
use rdalm_core::metrics::{roc_auc, sdr};
use wasm_bindgen::prelude::*;

const RATE_HZ: u32 = 16_000;
/// Dynamic range shown by the spectrogram images.
const DISPLAY_RANGE_DB: f64 = 80.0;

/// Oracle ratio mask on one toy mixture and what thresholding it does to the
/// event estimate.
#[wasm_bindgen]
pub struct MaskView {
    frames: usize,
    bins: usize,
    mixture: Vec<f32>,
    mask: Vec<f32>,
    masked: Vec<f32>,
    sdr_mixture_db: f64,
    sdr_soft_db: f64,
    sdr_binary_db: f64,
    kept: f64,
}

#[wasm_bindgen]
impl MaskView {
    #[wasm_bindgen(getter)]
    pub fn frames(&self) -> usize {
        self.frames
    }

    #[wasm_bindgen(getter)]
    pub fn bins(&self) -> usize {
        self.bins
    }

    /// Mixture magnitude scaled to `[0, 1]` in dB, `frames × bins` row-major.
    #[wasm_bindgen(getter)]
    pub fn mixture(&self) -> Vec<f32> {
        self.mixture.clone()
    }

    /// The thresholded mask, 0 or 1 per bin.
    #[wasm_bindgen(getter)]
    pub fn mask(&self) -> Vec<f32> {
        self.mask.clone()
    }

    /// Mixture after applying the thresholded mask, same scale as `mixture`.
    #[wasm_bindgen(getter)]
    pub fn masked(&self) -> Vec<f32> {
        self.masked.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn sdr_mixture_db(&self) -> f64 {
        self.sdr_mixture_db
    }

    #[wasm_bindgen(getter)]
    pub fn sdr_soft_db(&self) -> f64 {
        self.sdr_soft_db
    }

    #[wasm_bindgen(getter)]
    pub fn sdr_binary_db(&self) -> f64 {
        self.sdr_binary_db
    }

    /// Fraction of time-frequency bins the thresholded mask keeps.
    #[wasm_bindgen(getter)]
    pub fn kept(&self) -> f64 {
        self.kept
    }
}

fn to_display(spec: &MagnitudeSpectrogram, peak_db: f64) -> Vec<f32> {
    spec.values
        .iter()
        .map(|&v| {
            let db = 20.0 * v.max(1e-12).log10();
            ((db - peak_db + DISPLAY_RANGE_DB) / DISPLAY_RANGE_DB).clamp(0.0, 1.0) as f32
        })
        .collect()
}

/// Synthesizes a toy event of class `class` (0..3) mixed with speech at
/// `speech_db` relative to the event, then masks it with the oracle ratio
/// mask binarized at `threshold`. SDRs are measured on magnitudes against
/// the clean event.
#[wasm_bindgen]
pub fn mask_view(class: usize, speech_db: f64, threshold: f64, seed: u32) -> Result<MaskView, String> {
    let label = EventLabel::from_index(class).ok_or_else(|| format!("unknown class {class}"))?;
    let recipe = Recipe {
        sample_rate_hz: RATE_HZ,
        speech_gain_db: speech_db,
        ..Recipe::default()
    };
    let spec = ToySpec {
        sample_rate_hz: RATE_HZ,
        ..ToySpec::default()
    };
    let clip = synth_toy_record(&spec, &recipe, label, true, seed as u64).map_err(|e| e.to_string())?;
    let front = FrontEnd::new(&DspConfig {
        sample_rate_hz: RATE_HZ,
        ..DspConfig::default()
    })
    .map_err(|e| e.to_string())?;
    let mixture = front.magnitude(&clip.mixture).map_err(|e| e.to_string())?;
    let event = front.magnitude(&clip.event).map_err(|e| e.to_string())?;

    let ratio: Vec<f64> = event
        .values
        .iter()
        .zip(&mixture.values)
        .map(|(&e, &x)| if x > 0.0 { (e / x).min(1.0) } else { 1.0 })
        .collect();
    let soft = SpectralMask::new(mixture.frames, mixture.bins, ratio).map_err(|e| e.to_string())?;
    let binary = binarize_mask(&soft, threshold).map_err(|e| e.to_string())?;
    let soft_est = apply_mask(&mixture, &soft).map_err(|e| e.to_string())?;
    let binary_est = apply_mask(&mixture, &binary).map_err(|e| e.to_string())?;

    let score = |est: &MagnitudeSpectrogram| sdr(&event.values, &est.values).map_err(|e| e.to_string());
    let peak = mixture.values.iter().fold(0.0f64, |a, &b| a.max(b));
    let peak_db = 20.0 * peak.max(1e-12).log10();
    let kept = binary.values.iter().sum::<f64>() / binary.values.len() as f64;
    Ok(MaskView {
        frames: mixture.frames,
        bins: mixture.bins,
        mixture: to_display(&mixture, peak_db),
        mask: binary.values.iter().map(|&v| v as f32).collect(),
        masked: to_display(&binary_est, peak_db),
        sdr_mixture_db: score(&mixture)?,
        sdr_soft_db: score(&soft_est)?,
        sdr_binary_db: score(&binary_est)?,
        kept,
    })
}

#[wasm_bindgen]
pub struct RocView {
    fpr: Vec<f64>,
    tpr: Vec<f64>,
    auc: f64,
}

#[wasm_bindgen]
impl RocView {
    #[wasm_bindgen(getter)]
    pub fn fpr(&self) -> Vec<f64> {
        self.fpr.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn tpr(&self) -> Vec<f64> {
        self.tpr.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn auc(&self) -> f64 {
        self.auc
    }
}

fn roc_view(scores: &[f64], labels: &[bool]) -> Result<RocView, String> {
    let (curve, auc) = roc_auc(scores, labels).map_err(|e| e.to_string())?;
    Ok(RocView {
        fpr: curve.points.iter().map(|p| p.fpr).collect(),
        tpr: curve.points.iter().map(|p| p.tpr).collect(),
        auc,
    })
}

/// ROC of an attacker whose scores are unit normal for non-speech clips and
/// shifted by `separation` for speech clips.
#[wasm_bindgen]
pub fn roc_gaussian(separation: f64, per_class: usize, seed: u32) -> Result<RocView, String> {
    if !separation.is_finite() {
        return Err("separation must be finite".into());
    }
    if per_class == 0 {
        return Err("need at least one score per class".into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed as u64);
    let mut scores = Vec::with_capacity(2 * per_class);
    let mut labels = Vec::with_capacity(2 * per_class);
    for speech in [false, true] {
        for _ in 0..per_class {
            let z: f64 = rng.sample(StandardNormal);
            scores.push(if speech { z + separation } else { z });
            labels.push(speech);
        }
    }
    roc_view(&scores, &labels)
}

/// ROC from pasted `score,label` lines, label `1`/`0` or `true`/`false`.
/// Blank lines, `#` comments and a non-numeric header row are skipped.
#[wasm_bindgen]
pub fn roc_text(text: &str) -> Result<RocView, String> {
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut cols = line.rsplitn(2, |c: char| c == ',' || c.is_whitespace());
        let label = cols.next().unwrap_or("").trim();
        let score = cols.next().unwrap_or("").trim().trim_end_matches(',');
        let Ok(score) = score.parse::<f64>() else {
            if i == 0 {
                continue;
            }
            return Err(format!("line {}: cannot parse score {score:?}", i + 1));
        };
        let label = match label {
            "1" | "true" => true,
            "0" | "false" => false,
            other => return Err(format!("line {}: label {other:?} is not 0/1", i + 1)),
        };
        scores.push(score);
        labels.push(label);
    }
    roc_view(&scores, &labels)
}
