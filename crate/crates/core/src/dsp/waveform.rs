use std::f64::consts::PI;

use crate::{Error, Result};

/// Mono time-domain audio.
#[derive(Clone, Debug, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate_hz: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate_hz: u32) -> Result<Self> {
        if sample_rate_hz == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if samples.is_empty() {
            return Err(Error::invalid("waveform must hold at least one sample"));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::invalid(format!("non-finite sample at index {i}")));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
        })
    }

    pub fn zeros(len: usize, sample_rate_hz: u32) -> Result<Self> {
        Self::new(vec![0.0; len], sample_rate_hz)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }

    fn with_samples(&self, samples: Vec<f64>) -> Self {
        Self {
            samples,
            sample_rate_hz: self.sample_rate_hz,
        }
    }
}

/// Zero crossings of the interpolation kernel on each side of its centre.
const SINC_ZERO_CROSSINGS: f64 = 32.0;
/// Fraction of the lower Nyquist frequency kept by the anti-aliasing filter.
const SINC_ROLLOFF: f64 = 0.95;

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

fn blackman(u: f64) -> f64 {
    // u in [-1, 1]
    0.42 + 0.5 * (PI * u).cos() + 0.08 * (2.0 * PI * u).cos()
}

/// Band-limited (Blackman-windowed sinc) sample-rate conversion.
pub fn resample(w: &Waveform, target_rate_hz: u32) -> Result<Waveform> {
    if target_rate_hz == 0 {
        return Err(Error::invalid("target sample rate must be positive"));
    }
    let src = w.sample_rate_hz;
    if target_rate_hz == src {
        return Ok(w.clone());
    }
    let ratio = target_rate_hz as f64 / src as f64;
    let out_len = ((w.len() as f64 * ratio).round() as usize).max(1);
    let cutoff = SINC_ROLLOFF * ratio.min(1.0);
    let half_width = SINC_ZERO_CROSSINGS / cutoff;
    let x = &w.samples;
    let last = x.len() as isize - 1;

    let out = (0..out_len)
        .map(|n| {
            let t = n as f64 / ratio;
            let lo = ((t - half_width).ceil() as isize).max(0);
            let hi = ((t + half_width).floor() as isize).min(last);
            let mut acc = 0.0;
            for k in lo..=hi {
                let d = t - k as f64;
                acc += x[k as usize] * cutoff * sinc(cutoff * d) * blackman(d / half_width);
            }
            acc
        })
        .collect();
    Ok(Waveform {
        samples: out,
        sample_rate_hz: target_rate_hz,
    })
}

/// Returns the window of `duration_s` seconds, taken on a `hop_s` grid, with
/// the largest sum of squared samples. Earliest offset wins ties. Inputs
/// shorter than the window are zero-padded at the end.
pub fn most_energetic_segment(w: &Waveform, duration_s: f64, hop_s: f64) -> Result<Waveform> {
    if !(duration_s > 0.0) {
        return Err(Error::invalid("segment duration must be positive"));
    }
    if !(hop_s > 0.0) {
        return Err(Error::invalid("segment hop must be positive"));
    }
    let rate = w.sample_rate_hz as f64;
    let win = ((duration_s * rate).round() as usize).max(1);
    if w.len() <= win {
        let mut samples = w.samples.clone();
        samples.resize(win, 0.0);
        return Ok(w.with_samples(samples));
    }
    let hop = ((hop_s * rate).round() as usize).max(1);
    let mut best_offset = 0;
    let mut best_energy = f64::NEG_INFINITY;
    let mut offset = 0;
    while offset + win <= w.len() {
        let energy: f64 = w.samples[offset..offset + win].iter().map(|s| s * s).sum();
        if energy > best_energy {
            best_energy = energy;
            best_offset = offset;
        }
        offset += hop;
    }
    Ok(w.with_samples(w.samples[best_offset..best_offset + win].to_vec()))
}

/// Zero mean, unit population standard deviation.
pub fn standardize(w: &Waveform) -> Result<Waveform> {
    let n = w.len() as f64;
    let mean = w.samples.iter().sum::<f64>() / n;
    let var = w.samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if std < 1e-10 {
        return Err(Error::DegenerateSignal(format!(
            "standard deviation {std:e} is below 1e-10"
        )));
    }
    Ok(w.with_samples(w.samples.iter().map(|s| (s - mean) / std).collect()))
}

pub fn db_to_amplitude(gain_db: f64) -> f64 {
    10f64.powf(gain_db / 20.0)
}

pub fn apply_gain_db(w: &Waveform, gain_db: f64) -> Waveform {
    let g = db_to_amplitude(gain_db);
    w.with_samples(w.samples.iter().map(|s| s * g).collect())
}

/// Sample-wise sum, no renormalization.
pub fn mix(event: &Waveform, speech: &Waveform) -> Result<Waveform> {
    if event.sample_rate_hz != speech.sample_rate_hz {
        return Err(Error::shape(format!(
            "sample rates differ: {} vs {}",
            event.sample_rate_hz, speech.sample_rate_hz
        )));
    }
    if event.len() != speech.len() {
        return Err(Error::shape(format!(
            "lengths differ: {} vs {}",
            event.len(),
            speech.len()
        )));
    }
    Ok(event.with_samples(
        event
            .samples
            .iter()
            .zip(&speech.samples)
            .map(|(a, b)| a + b)
            .collect(),
    ))
}
