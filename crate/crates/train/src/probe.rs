//! Speech classifiers on frozen latents: the discriminator refresh and the
//! post-hoc attacker probe.

use rdalm_core::corpus::{derive_seed, Split};
use rdalm_core::metrics::adv_loss;
use rdalm_nets::{sigmoid_bce, Discriminator, Module, Optimizer, Tensor, LATENT_DIM};

use crate::config::{RefreshInit, TrainConfig};
use crate::data::Dataset;
use crate::evaluate::{evaluate, MetricsReport};
use crate::schedule::{batches, EarlyStopping, Opt};
use crate::system::TrainedSystem;
use crate::{Error, Result};

pub(crate) const REFRESH_TAG: u64 = 0xd9;
pub(crate) const PROBE_TAG: u64 = 0x9b;

/// Latents with their speech flags.
pub struct Labelled {
    pub z: Tensor,
    pub speech: Vec<bool>,
}

impl Labelled {
    pub fn new(z: Tensor, speech: Vec<bool>) -> Result<Self> {
        if z.batch() != speech.len() {
            return Err(Error::invalid(format!("{} latents for {} labels", z.batch(), speech.len())));
        }
        Ok(Self { z, speech })
    }

    fn rows(&self, idx: &[usize]) -> Result<(Tensor, Vec<bool>)> {
        let items: Vec<&[f64]> = idx.iter().map(|&i| self.z.sample(i)).collect();
        let s = idx.iter().map(|&i| self.speech[i]).collect();
        Ok((Tensor::stack(&items, &[LATENT_DIM])?, s))
    }
}

pub(crate) fn labelled(system: &mut TrainedSystem, data: &Dataset, split: Split) -> Result<Labelled> {
    let z = system.latents(data, split)?;
    Labelled::new(z, data.split(split).iter().map(|e| e.speech).collect())
}

/// Mean BCE of `d` on `set`.
pub fn speech_loss(d: &mut Discriminator, set: &Labelled) -> Result<f64> {
    Ok(adv_loss(&d.forward(&set.z), &set.speech)?)
}

pub struct FitSettings {
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

/// Trains `d` on `train` by BCE with patience on `val`; leaves `d` at its
/// best-validation parameters and returns that loss.
pub fn fit_speech_classifier(d: &mut Discriminator, train: &Labelled, val: &Labelled, s: &FitSettings) -> Result<f64> {
    let mut opt = Opt::new(crate::config::OptimizerKind::Adam, s.lr);
    let mut stop = EarlyStopping::new(s.patience);
    let mut best = d.clone();
    for epoch in 0..s.max_epochs {
        for idx in batches(train.speech.len(), s.batch_size, derive_seed(s.seed, epoch as u64)) {
            let (z, speech) = train.rows(&idx)?;
            d.zero_grad();
            let (_, dl) = sigmoid_bce(&d.logits(&z, true), &speech)?;
            d.backward(&dl);
            opt.step(d.params_mut())?;
        }
        if stop.observe(speech_loss(d, val)?) {
            best = d.clone();
        }
        if stop.should_stop() {
            break;
        }
    }
    d.copy_from(&best)?;
    Ok(stop.best())
}

/// Trains D' on frozen latents and copies it into D. Only D and D' change.
pub fn refresh_discriminator(system: &mut TrainedSystem, data: &Dataset, cfg: &TrainConfig, epoch: usize) -> Result<f64> {
    let train = labelled(system, data, Split::Train)?;
    let val = labelled(system, data, Split::Validation)?;
    refresh_with(system, &train, &val, cfg, epoch)
}

pub(crate) fn refresh_with(
    system: &mut TrainedSystem,
    train: &Labelled,
    val: &Labelled,
    cfg: &TrainConfig,
    epoch: usize,
) -> Result<f64> {
    let d = system
        .discriminator
        .as_mut()
        .ok_or_else(|| Error::invalid(format!("{} has no discriminator to refresh", system.regime)))?;
    let seed = derive_seed(cfg.seed, (REFRESH_TAG << 32) + epoch as u64);
    let mut fresh = match cfg.refresh_init {
        RefreshInit::Fresh => Discriminator::new(seed),
        RefreshInit::WarmStart => d.clone(),
    };
    let settings = FitSettings {
        max_epochs: cfg.refresh_train_epochs,
        patience: cfg.refresh_patience,
        batch_size: cfg.batch_size,
        lr: cfg.learning_rate,
        seed,
    };
    let loss = fit_speech_classifier(&mut fresh, train, val, &settings)?;
    d.copy_from(&fresh)?;
    fresh.zero_grad();
    d.zero_grad();
    system.refreshed = Some(fresh);
    system.refreshes += 1;
    Ok(loss)
}

/// Trains a new speech classifier on the frozen latents of `system` (train
/// split, patience on validation) and reports it on the test split.
pub fn train_attack_probe(
    system: &mut TrainedSystem,
    data: &Dataset,
    cfg: &TrainConfig,
) -> Result<(Discriminator, MetricsReport)> {
    for split in Split::ALL {
        if !data.has_split(split) {
            return Err(Error::invalid(format!("the attack probe needs a {split} split")));
        }
    }
    let train = labelled(system, data, Split::Train)?;
    let val = labelled(system, data, Split::Validation)?;
    let seed = derive_seed(cfg.seed, PROBE_TAG);
    let mut probe = Discriminator::new(seed);
    let settings = FitSettings {
        max_epochs: cfg.probe_max_epochs,
        patience: cfg.probe_patience,
        batch_size: cfg.batch_size,
        lr: cfg.learning_rate,
        seed,
    };
    fit_speech_classifier(&mut probe, &train, &val, &settings)?;
    let report = evaluate(system, data, Split::Test, Some(&mut probe))?;
    Ok((probe, report))
}
