//! Separator pre-training on speech-bearing mixtures.

use log::info;
use rdalm_core::corpus::{derive_seed, Split};
use rdalm_core::dsp::{apply_mask, binarize_mask, MagnitudeSpectrogram};
use rdalm_core::metrics::{mask_loss, sdr};
use rdalm_nets::{Module, Optimizer, Separator, SeparatorArch, Tensor};
use serde::{Deserialize, Serialize};

use crate::config::TrainConfig;
use crate::data::{Dataset, Example};
use crate::schedule::{batches, chunks, EarlyStopping, Opt};
use crate::{Error, Result};

pub(crate) const SEPARATOR_TAG: u64 = 0x5e9a;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparatorEpoch {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Clone, Debug)]
pub struct PretrainedSeparator {
    pub separator: Separator,
    pub history: Vec<SeparatorEpoch>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
}

/// Trains a separator from `cfg.seed` to minimize the mean absolute error
/// between the masked mixture and the event magnitude, keeping the
/// best-validation parameters.
pub fn pretrain_separator(data: &Dataset, arch: &SeparatorArch, cfg: &TrainConfig) -> Result<PretrainedSeparator> {
    cfg.validate()?;
    let train = data.pairs(Split::Train);
    let val = data.pairs(Split::Validation);
    if train.is_empty() {
        return Err(Error::invalid("no speech-bearing training pairs for the separator"));
    }
    if val.is_empty() {
        return Err(Error::invalid("no speech-bearing validation pairs for the separator"));
    }
    let mut sep = Separator::new(arch, derive_seed(cfg.seed, SEPARATOR_TAG))?;
    let mut opt = Opt::new(cfg.optimizer, cfg.learning_rate);
    let mut stop = EarlyStopping::new(cfg.patience);
    let mut best = (sep.clone(), 0);
    let mut history = Vec::new();
    for epoch in 0..cfg.pretrain_max_epochs {
        let mut total = 0.0;
        let mut count = 0;
        for idx in batches(train.len(), cfg.pretrain_batch_size, derive_seed(cfg.seed, (SEPARATOR_TAG << 20) + epoch as u64)) {
            let batch: Vec<&Example> = idx.iter().map(|&i| train[i]).collect();
            sep.zero_grad();
            let loss = separator_step(&mut sep, &batch)?;
            opt.step(sep.params_mut())?;
            total += loss * batch.len() as f64;
            count += batch.len();
        }
        let val_loss = separation_loss(&mut sep, &val, cfg.pretrain_batch_size)?;
        let train_loss = if count > 0 { total / count as f64 } else { f64::NAN };
        if stop.observe(val_loss) {
            best = (sep.clone(), epoch);
        }
        info!("separator epoch {epoch}: train {train_loss:.5} val {val_loss:.5}");
        history.push(SeparatorEpoch {
            epoch,
            train_loss,
            val_loss,
        });
        if stop.should_stop() {
            break;
        }
    }
    Ok(PretrainedSeparator {
        separator: best.0,
        best_epoch: best.1,
        best_val_loss: stop.best(),
        history,
    })
}

/// Forward and backward of the mask loss for one batch; gradients are
/// accumulated into the separator.
fn separator_step(sep: &mut Separator, batch: &[&Example]) -> Result<f64> {
    let mixes: Vec<&MagnitudeSpectrogram> = batch.iter().map(|e| &e.mixture).collect();
    let x = sep.pad_batch(&mixes)?;
    let mask = sep.forward_tensor(&x, true)?;
    let (_, _, _, w) = mask.dims4();
    let mut dmask = Tensor::zeros(mask.shape());
    let mut loss = 0.0;
    for (i, e) in batch.iter().enumerate() {
        let target = e.target.as_ref().expect("pairs carry targets");
        let (t, f) = (e.mixture.frames, e.mixture.bins);
        let scale = 1.0 / (batch.len() * t * f) as f64;
        let m = mask.sample(i);
        let dm = dmask.sample_mut(i);
        for r in 0..t {
            for k in 0..f {
                let x = e.mixture.values[r * f + k];
                let diff = m[r * w + k] * x - target.values[r * f + k];
                loss += diff.abs() * scale;
                let sign = if diff > 0.0 {
                    1.0
                } else if diff < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                dm[r * w + k] = sign * x * scale;
            }
        }
    }
    sep.backward(&dmask);
    Ok(loss)
}

/// Mean mask loss over `pairs` with the separator in inference mode.
pub fn separation_loss(sep: &mut Separator, pairs: &[&Example], batch_size: usize) -> Result<f64> {
    let mut est = Vec::with_capacity(pairs.len());
    let mut tgt = Vec::with_capacity(pairs.len());
    for r in chunks(pairs.len(), batch_size) {
        let mixes: Vec<&MagnitudeSpectrogram> = pairs[r.clone()].iter().map(|e| &e.mixture).collect();
        for (mask, e) in sep.separate_batch(&mixes)?.into_iter().zip(&pairs[r]) {
            est.push(apply_mask(&e.mixture, &mask)?.values);
            tgt.push(e.target.as_ref().expect("pairs carry targets").values.clone());
        }
    }
    Ok(mask_loss(&est, &tgt)?)
}

/// Mean SDR in dB of the masked mixture magnitude against the event
/// magnitude; `None` when there are no pairs. With `binary_threshold` the
/// mask is binarized first.
pub fn separation_sdr(
    sep: &mut Separator,
    pairs: &[&Example],
    binary_threshold: Option<f64>,
    batch_size: usize,
) -> Result<Option<f64>> {
    if pairs.is_empty() {
        return Ok(None);
    }
    let mut total = 0.0;
    for r in chunks(pairs.len(), batch_size) {
        let mixes: Vec<&MagnitudeSpectrogram> = pairs[r.clone()].iter().map(|e| &e.mixture).collect();
        for (mask, e) in sep.separate_batch(&mixes)?.into_iter().zip(&pairs[r]) {
            let mask = match binary_threshold {
                Some(th) => binarize_mask(&mask, th)?,
                None => mask,
            };
            let est = apply_mask(&e.mixture, &mask)?;
            total += sdr(&e.target.as_ref().expect("pairs carry targets").values, &est.values)?;
        }
    }
    Ok(Some(total / pairs.len() as f64))
}
