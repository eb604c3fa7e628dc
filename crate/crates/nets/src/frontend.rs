//! Differentiable `mask -> apply_mask -> log_mel` path for learnable masks.

use rdalm_core::dsp::{MagnitudeSpectrogram, MelFilterbank, MEL_BANDS};

use crate::tensor::{gemm, Tensor};
use crate::{Error, Result};

/// Maps a padded `[N, 1, H, W]` mask and the spectrograms it applies to onto
/// `[N, 1, T, 64]` log-mel features. The forward agrees with
/// `rdalm_core::dsp::log_mel(apply_mask(spec, mask))`.
#[derive(Clone, Debug)]
pub struct MaskedLogMel {
    filterbank: MelFilterbank,
    floor: f64,
    cache: Option<Cache>,
}

#[derive(Clone, Debug)]
struct Cache {
    frames: usize,
    bins: usize,
    padded_w: usize,
    padded_h: usize,
    mags: Vec<Vec<f64>>,
    masked: Vec<Vec<f64>>,
    power: Vec<Vec<f64>>,
}

impl MaskedLogMel {
    pub fn new(filterbank: MelFilterbank, floor: f64) -> Self {
        assert_eq!(filterbank.bands, MEL_BANDS);
        Self {
            filterbank,
            floor,
            cache: None,
        }
    }

    pub fn forward(&mut self, specs: &[&MagnitudeSpectrogram], mask: &Tensor) -> Result<Tensor> {
        let (n, c, ph, pw) = mask.dims4();
        let first = specs.first().ok_or_else(|| Error::invalid("empty batch"))?;
        let (t, f) = (first.frames, first.bins);
        if n != specs.len() || c != 1 || ph < t || pw < f || f != self.filterbank.bins {
            return Err(Error::shape(format!(
                "mask {:?} does not cover {n} spectrograms of {t}x{f} (filterbank {} bins)",
                mask.shape(),
                self.filterbank.bins
            )));
        }
        let mut out = Tensor::zeros(&[n, 1, t, MEL_BANDS]);
        let mut cache = Cache {
            frames: t,
            bins: f,
            padded_w: pw,
            padded_h: ph,
            mags: Vec::with_capacity(n),
            masked: Vec::with_capacity(n),
            power: Vec::with_capacity(n),
        };
        for (i, s) in specs.iter().enumerate() {
            if s.frames != t || s.bins != f {
                return Err(Error::shape("spectrograms in a batch must share a shape"));
            }
            let m = mask.sample(i);
            let mut xm = vec![0.0; t * f];
            let mut sq = vec![0.0; t * f];
            for r in 0..t {
                for k in 0..f {
                    let v = s.values[r * f + k] * m[r * pw + k];
                    xm[r * f + k] = v;
                    sq[r * f + k] = v * v;
                }
            }
            let mut p = vec![0.0; t * MEL_BANDS];
            gemm(t, f, MEL_BANDS, 1.0, &sq, false, &self.filterbank.weights, true, 0.0, &mut p);
            for (o, v) in out.sample_mut(i).iter_mut().zip(&p) {
                *o = v.max(self.floor).ln();
            }
            cache.mags.push(s.values.clone());
            cache.masked.push(xm);
            cache.power.push(p);
        }
        self.cache = Some(cache);
        Ok(out)
    }

    /// Gradient w.r.t. the padded mask; zero on the padding.
    pub fn backward(&mut self, dfeat: &Tensor) -> Tensor {
        let c = self.cache.as_ref().expect("masked log-mel backward without forward");
        let (t, f, pw) = (c.frames, c.bins, c.padded_w);
        let n = c.mags.len();
        let mut dmask = Tensor::zeros(&[n, 1, c.padded_h, pw]);
        let mut dp = vec![0.0; t * MEL_BANDS];
        let mut dsq = vec![0.0; t * f];
        for i in 0..n {
            for ((d, g), p) in dp.iter_mut().zip(dfeat.sample(i)).zip(&c.power[i]) {
                *d = if *p > self.floor { g / p } else { 0.0 };
            }
            gemm(t, MEL_BANDS, f, 1.0, &dp, false, &self.filterbank.weights, false, 0.0, &mut dsq);
            let dm = dmask.sample_mut(i);
            for r in 0..t {
                for k in 0..f {
                    let j = r * f + k;
                    dm[r * pw + k] = dsq[j] * 2.0 * c.masked[i][j] * c.mags[i][j];
                }
            }
        }
        dmask
    }
}
