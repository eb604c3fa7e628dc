use std::f64::consts::PI;

use rustfft::{num_complex::Complex, FftPlanner};

use super::Waveform;
use crate::{Error, Result};

/// Frame geometry of the short-time Fourier transform.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StftConfig {
    pub sample_rate_hz: u32,
    pub window_len: usize,
    pub hop: usize,
    pub fft_size: usize,
}

impl StftConfig {
    /// Window and hop are rounded to whole samples; the FFT size is the next
    /// power of two at or above the window length.
    pub fn from_timing(sample_rate_hz: u32, window_ms: f64, hop_ms: f64) -> Self {
        let rate = sample_rate_hz as f64;
        let window_len = ((window_ms / 1000.0 * rate).round() as usize).max(1);
        let hop = ((hop_ms / 1000.0 * rate).round() as usize).max(1);
        Self {
            sample_rate_hz,
            window_len,
            hop,
            fft_size: window_len.next_power_of_two(),
        }
    }

    pub fn bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    /// Frame count under centred framing.
    pub fn frames_for(&self, num_samples: usize) -> usize {
        1 + num_samples / self.hop
    }

    /// Periodic Hamming window of `window_len` samples, zero-padded and
    /// centred inside an `fft_size` frame.
    pub fn padded_window(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.fft_size];
        let lead = (self.fft_size - self.window_len) / 2;
        let l = self.window_len as f64;
        for n in 0..self.window_len {
            out[lead + n] = 0.54 - 0.46 * (2.0 * PI * n as f64 / l).cos();
        }
        out
    }
}

/// `frames × bins` magnitudes, row-major by frame.
#[derive(Clone, Debug, PartialEq)]
pub struct MagnitudeSpectrogram {
    pub frames: usize,
    pub bins: usize,
    pub values: Vec<f64>,
    pub window_len: usize,
    pub hop: usize,
    pub fft_size: usize,
}

impl MagnitudeSpectrogram {
    pub fn new(frames: usize, bins: usize, values: Vec<f64>, geometry: &StftConfig) -> Result<Self> {
        if values.len() != frames * bins {
            return Err(Error::shape(format!(
                "{} values for a {frames}x{bins} spectrogram",
                values.len()
            )));
        }
        if bins != geometry.bins() {
            return Err(Error::shape(format!(
                "{bins} bins but fft size {} implies {}",
                geometry.fft_size,
                geometry.bins()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::invalid(format!("magnitude entry {v} is not a finite non-negative value")));
        }
        Ok(Self {
            frames,
            bins,
            values,
            window_len: geometry.window_len,
            hop: geometry.hop,
            fft_size: geometry.fft_size,
        })
    }

    pub fn at(&self, frame: usize, bin: usize) -> f64 {
        self.values[frame * self.bins + bin]
    }

    pub fn row(&self, frame: usize) -> &[f64] {
        &self.values[frame * self.bins..(frame + 1) * self.bins]
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.frames == other.frames && self.bins == other.bins
    }

    pub(crate) fn with_values(&self, values: Vec<f64>) -> Self {
        Self {
            values,
            ..self.clone()
        }
    }
}

fn reflect(index: isize, len: usize) -> usize {
    // Reflection without edge repetition: x[-1] = x[1], x[len] = x[len - 2].
    let n = len as isize;
    let mut i = index;
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    i = i.rem_euclid(period);
    if i >= n {
        i = period - i;
    }
    i as usize
}

/// Centred, reflection-padded STFT magnitude with a Hamming window.
pub fn stft_magnitude(w: &Waveform, cfg: &StftConfig) -> Result<MagnitudeSpectrogram> {
    if w.len() < cfg.window_len {
        return Err(Error::shape(format!(
            "{} samples is shorter than the {}-sample window",
            w.len(),
            cfg.window_len
        )));
    }
    let x = w.samples();
    let frames = cfg.frames_for(x.len());
    let bins = cfg.bins();
    let window = cfg.padded_window();
    let half = (cfg.fft_size / 2) as isize;
    let fft = FftPlanner::new().plan_fft_forward(cfg.fft_size);
    let mut buf = vec![Complex::new(0.0, 0.0); cfg.fft_size];
    let mut values = Vec::with_capacity(frames * bins);
    for t in 0..frames {
        let centre = (t * cfg.hop) as isize;
        for (k, slot) in buf.iter_mut().enumerate() {
            let idx = reflect(centre - half + k as isize, x.len());
            *slot = Complex::new(x[idx] * window[k], 0.0);
        }
        fft.process(&mut buf);
        values.extend(buf[..bins].iter().map(|c| c.norm()));
    }
    MagnitudeSpectrogram::new(frames, bins, values, cfg)
}
