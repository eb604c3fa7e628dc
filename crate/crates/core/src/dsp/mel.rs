use super::MagnitudeSpectrogram;
use crate::{Error, Result};

/// Number of mel bands fed to the feature extractor.
pub const MEL_BANDS: usize = 64;

// Slaney mel scale: linear below 1 kHz, logarithmic above.
const F_SP: f64 = 200.0 / 3.0;
const MIN_LOG_HZ: f64 = 1000.0;
const MIN_LOG_MEL: f64 = MIN_LOG_HZ / F_SP;

fn log_step() -> f64 {
    6.4f64.ln() / 27.0
}

pub fn hz_to_mel(hz: f64) -> f64 {
    if hz < MIN_LOG_HZ {
        hz / F_SP
    } else {
        MIN_LOG_MEL + (hz / MIN_LOG_HZ).ln() / log_step()
    }
}

pub fn mel_to_hz(mel: f64) -> f64 {
    if mel < MIN_LOG_MEL {
        mel * F_SP
    } else {
        MIN_LOG_HZ * (log_step() * (mel - MIN_LOG_MEL)).exp()
    }
}

/// Triangular mel filters, area-normalized, `bands × bins` row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct MelFilterbank {
    pub bands: usize,
    pub bins: usize,
    pub weights: Vec<f64>,
}

impl MelFilterbank {
    /// Filters spanning 0 Hz to Nyquist.
    pub fn slaney(sample_rate_hz: u32, fft_size: usize, bands: usize) -> Self {
        let bins = fft_size / 2 + 1;
        let nyquist = sample_rate_hz as f64 / 2.0;
        let (mel_lo, mel_hi) = (hz_to_mel(0.0), hz_to_mel(nyquist));
        let edges: Vec<f64> = (0..bands + 2)
            .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (bands + 1) as f64))
            .collect();
        let freqs: Vec<f64> = (0..bins)
            .map(|k| k as f64 * sample_rate_hz as f64 / fft_size as f64)
            .collect();
        let mut weights = vec![0.0; bands * bins];
        for m in 0..bands {
            let (lo, centre, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            let norm = 2.0 / (hi - lo);
            for (k, &f) in freqs.iter().enumerate() {
                let rise = (f - lo) / (centre - lo);
                let fall = (hi - f) / (hi - centre);
                weights[m * bins + k] = rise.min(fall).max(0.0) * norm;
            }
        }
        Self {
            bands,
            bins,
            weights,
        }
    }

    pub fn row(&self, band: usize) -> &[f64] {
        &self.weights[band * self.bins..(band + 1) * self.bins]
    }
}

/// `frames × 64` natural-log mel energies.
#[derive(Clone, Debug, PartialEq)]
pub struct LogMelFeature {
    pub frames: usize,
    pub values: Vec<f64>,
}

impl LogMelFeature {
    pub fn new(frames: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != frames * MEL_BANDS {
            return Err(Error::shape(format!(
                "{} values for {frames} frames of {MEL_BANDS} bands",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("log-mel entries must be finite"));
        }
        Ok(Self { frames, values })
    }

    pub fn mel_band_count(&self) -> usize {
        MEL_BANDS
    }
}

/// Squared magnitudes through the filterbank, then `ln(max(p, floor))`.
pub fn log_mel(spec: &MagnitudeSpectrogram, fb: &MelFilterbank, floor: f64) -> Result<LogMelFeature> {
    if spec.bins != fb.bins {
        return Err(Error::shape(format!(
            "spectrogram has {} bins, filterbank expects {}",
            spec.bins, fb.bins
        )));
    }
    if fb.bands != MEL_BANDS {
        return Err(Error::shape(format!("filterbank has {} bands", fb.bands)));
    }
    let mut values = Vec::with_capacity(spec.frames * fb.bands);
    for t in 0..spec.frames {
        let row = spec.row(t);
        for m in 0..fb.bands {
            let p: f64 = fb.row(m).iter().zip(row).map(|(w, x)| w * x * x).sum();
            values.push(p.max(floor).ln());
        }
    }
    LogMelFeature::new(spec.frames, values)
}
