//! Deterministic signal-processing front end.
//!
//! Everything in here is a pure function of its inputs. Timing constants are
//! carried by [`DspConfig`] so that call sites never hard-code them.

mod mask;
mod mel;
mod stft;
mod waveform;

pub use mask::{apply_mask, binarize_mask, SpectralMask};
pub use mel::{log_mel, LogMelFeature, MelFilterbank, MEL_BANDS};
pub use stft::{stft_magnitude, MagnitudeSpectrogram, StftConfig};
pub use waveform::{
    apply_gain_db, db_to_amplitude, mix, most_energetic_segment, resample, standardize, Waveform,
};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Front-end constants shared by corpus construction and feature extraction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DspConfig {
    pub sample_rate_hz: u32,
    pub window_ms: f64,
    pub hop_ms: f64,
    pub mel_bands: usize,
    pub log_floor: f64,
    pub mask_threshold: f64,
    pub segment_s: f64,
    pub segment_hop_ms: f64,
}

impl Default for DspConfig {
    fn default() -> Self {
        Self {
            sample_rate_hz: 44_100,
            window_ms: 32.0,
            hop_ms: 10.0,
            mel_bands: MEL_BANDS,
            log_floor: 1e-10,
            mask_threshold: 0.4,
            segment_s: 1.0,
            segment_hop_ms: 10.0,
        }
    }
}

impl DspConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sample_rate_hz == 0 {
            return Err(Error::invalid("dsp.sample_rate_hz must be positive"));
        }
        if !(self.window_ms > 0.0 && self.hop_ms > 0.0 && self.segment_hop_ms > 0.0) {
            return Err(Error::invalid("dsp timing constants must be positive"));
        }
        if self.mel_bands != MEL_BANDS {
            return Err(Error::invalid(format!(
                "dsp.mel_bands must be {MEL_BANDS}, got {}",
                self.mel_bands
            )));
        }
        if !(self.log_floor > 0.0) {
            return Err(Error::invalid("dsp.log_floor must be positive"));
        }
        if !(0.0..=1.0).contains(&self.mask_threshold) {
            return Err(Error::invalid("dsp.mask_threshold must lie in [0, 1]"));
        }
        if !(self.segment_s > 0.0) {
            return Err(Error::invalid("dsp.segment_s must be positive"));
        }
        Ok(())
    }

    pub fn stft(&self) -> StftConfig {
        StftConfig::from_timing(self.sample_rate_hz, self.window_ms, self.hop_ms)
    }

    pub fn mel_filterbank(&self) -> MelFilterbank {
        let stft = self.stft();
        MelFilterbank::slaney(self.sample_rate_hz, stft.fft_size, self.mel_bands)
    }

    pub fn segment_hop_s(&self) -> f64 {
        self.segment_hop_ms / 1000.0
    }
}

/// Reusable STFT + mel front end bound to one configuration.
#[derive(Clone, Debug)]
pub struct FrontEnd {
    pub config: DspConfig,
    pub stft: StftConfig,
    pub filterbank: MelFilterbank,
}

impl FrontEnd {
    pub fn new(config: &DspConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config: config.clone(),
            stft: config.stft(),
            filterbank: config.mel_filterbank(),
        })
    }

    pub fn magnitude(&self, w: &Waveform) -> Result<MagnitudeSpectrogram> {
        if w.sample_rate_hz() != self.stft.sample_rate_hz {
            return Err(Error::shape(format!(
                "waveform at {} Hz, front end configured for {} Hz",
                w.sample_rate_hz(),
                self.stft.sample_rate_hz
            )));
        }
        stft_magnitude(w, &self.stft)
    }

    pub fn log_mel(&self, spec: &MagnitudeSpectrogram) -> Result<LogMelFeature> {
        log_mel(spec, &self.filterbank, self.config.log_floor)
    }
}
