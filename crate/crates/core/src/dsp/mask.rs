use super::MagnitudeSpectrogram;
use crate::{Error, Result};

/// Per time-frequency gain in `[0, 1]`, `frames × bins` row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralMask {
    pub frames: usize,
    pub bins: usize,
    pub values: Vec<f64>,
}

impl SpectralMask {
    pub fn new(frames: usize, bins: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != frames * bins {
            return Err(Error::shape(format!(
                "{} values for a {frames}x{bins} mask",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid(format!("mask entry {v} outside [0, 1]")));
        }
        Ok(Self {
            frames,
            bins,
            values,
        })
    }

    pub fn ones(frames: usize, bins: usize) -> Self {
        Self {
            frames,
            bins,
            values: vec![1.0; frames * bins],
        }
    }
}

pub fn apply_mask(spec: &MagnitudeSpectrogram, mask: &SpectralMask) -> Result<MagnitudeSpectrogram> {
    if spec.frames != mask.frames || spec.bins != mask.bins {
        return Err(Error::shape(format!(
            "spectrogram {}x{} vs mask {}x{}",
            spec.frames, spec.bins, mask.frames, mask.bins
        )));
    }
    Ok(spec.with_values(
        spec.values
            .iter()
            .zip(&mask.values)
            .map(|(x, m)| x * m)
            .collect(),
    ))
}

/// Entries below `threshold` become 0, the rest 1.
pub fn binarize_mask(mask: &SpectralMask, threshold: f64) -> Result<SpectralMask> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::invalid(format!("threshold {threshold} outside [0, 1]")));
    }
    Ok(SpectralMask {
        frames: mask.frames,
        bins: mask.bins,
        values: mask
            .values
            .iter()
            .map(|&v| if v < threshold { 0.0 } else { 1.0 })
            .collect(),
    })
}
