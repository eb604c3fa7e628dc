//! The joint training loop shared by every regime.
//!
//! Per batch: (i) D takes one step on the detached latents; (ii) F and C (and
//! M in learnable mode) take one step on the classification loss plus the
//! reversed adversarial gradient. λ is zero during warm-up, and every
//! `refresh_period` epochs afterwards D is replaced by a freshly trained D'.

use log::info;
use rdalm_core::corpus::{derive_seed, Split};
use rdalm_core::dsp::{LogMelFeature, MagnitudeSpectrogram};
use rdalm_core::metrics::{adv_loss, cls_loss, sed_accuracy, BatchLabels};
use rdalm_nets::{
    grl_backward, grl_forward, sigmoid_bce, softmax_cross_entropy, Classifier, Discriminator, Extractor,
    MaskedLogMel, Module, Optimizer, Separator, Tensor,
};

use crate::config::{MaskMode, Regime, TrainConfig};
use crate::data::Dataset;
use crate::history::EpochRecord;
use crate::pretrain::SEPARATOR_TAG;
use crate::probe::{refresh_with, Labelled};
use crate::schedule::{batches, Opt};
use crate::system::{ModelConfig, TrainedSystem};
use crate::{Error, Result};

const EXTRACTOR_TAG: u64 = 0xf;
const CLASSIFIER_TAG: u64 = 0xc;
const DISCRIMINATOR_TAG: u64 = 0xd;
const SHUFFLE_TAG: u64 = 0x5f;

#[derive(Clone, Debug, PartialEq)]
pub struct StepStats {
    pub cls_loss: f64,
    pub adv_loss: Option<f64>,
    pub disc_loss: Option<f64>,
}

/// Per-parameter gradients of one step, taken by separate backward passes.
/// `adv` holds the plain, un-reversed gradient of the adversarial loss.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradCapture {
    pub extractor_cls: Vec<Vec<f64>>,
    pub extractor_adv: Vec<Vec<f64>>,
    pub separator_cls: Vec<Vec<f64>>,
    pub separator_adv: Vec<Vec<f64>>,
    /// Largest |gradient| on F right after the discriminator's own update.
    pub extractor_grad_after_disc_step: f64,
}

pub struct Trainer<'a> {
    data: &'a Dataset,
    cfg: TrainConfig,
    system: TrainedSystem,
    front: Option<MaskedLogMel>,
    train_feats: Vec<LogMelFeature>,
    val_feats: Vec<LogMelFeature>,
    opt_m: Opt,
    opt_f: Opt,
    opt_c: Opt,
    opt_d: Opt,
    best: Option<(TrainedSystem, f64, f64)>,
    bad_epochs: usize,
    epoch: usize,
}

fn grads<M: Module>(m: &M) -> Vec<Vec<f64>> {
    m.params().iter().map(|p| p.grad.clone()).collect()
}

impl<'a> Trainer<'a> {
    /// `separator` must be given exactly for the regimes that use a frozen
    /// pre-trained separator.
    pub fn new(
        data: &'a Dataset,
        cfg: &TrainConfig,
        model: &ModelConfig,
        separator: Option<&Separator>,
        config_hash: &str,
    ) -> Result<Self> {
        cfg.validate()?;
        let regime = cfg.regime;
        for split in [Split::Train, Split::Validation] {
            if data.split(split).len() < 2 {
                return Err(Error::invalid(format!("training needs at least two {split} examples")));
            }
        }
        let separator = match (regime.mask_mode(), separator) {
            (MaskMode::Continuous | MaskMode::Binary, None) => {
                return Err(Error::invalid(format!(
                    "regime {regime} masks with a pre-trained separator, but none was supplied"
                )))
            }
            (MaskMode::Continuous | MaskMode::Binary, Some(m)) => {
                let mut m = m.clone();
                m.set_frozen(true);
                m.zero_grad();
                Some(m)
            }
            (MaskMode::Learnable, None) => Some(Separator::new(&model.separator, derive_seed(cfg.seed, SEPARATOR_TAG))?),
            (_, Some(_)) => {
                return Err(Error::invalid(format!("regime {regime} does not take a pre-trained separator")))
            }
            (MaskMode::None, None) => None,
        };
        let adversarial = regime.is_adversarial();
        let system = TrainedSystem {
            regime,
            seed: cfg.seed,
            config_hash: config_hash.to_string(),
            separator,
            extractor: Extractor::new(&model.extractor, derive_seed(cfg.seed, EXTRACTOR_TAG))?,
            classifier: Classifier::new(derive_seed(cfg.seed, CLASSIFIER_TAG)),
            discriminator: adversarial.then(|| Discriminator::new(derive_seed(cfg.seed, DISCRIMINATOR_TAG))),
            refreshed: adversarial.then(|| Discriminator::new(derive_seed(cfg.seed, DISCRIMINATOR_TAG + 1))),
            history: Vec::new(),
            best_epoch: 0,
            refreshes: 0,
        };
        let mut t = Self {
            data,
            front: (regime.mask_mode() == MaskMode::Learnable)
                .then(|| MaskedLogMel::new(data.front.filterbank.clone(), data.front.config.log_floor)),
            train_feats: Vec::new(),
            val_feats: Vec::new(),
            opt_m: Opt::new(cfg.optimizer, cfg.learning_rate),
            opt_f: Opt::new(cfg.optimizer, cfg.learning_rate),
            opt_c: Opt::new(cfg.optimizer, cfg.learning_rate),
            opt_d: Opt::new(cfg.optimizer, cfg.learning_rate),
            cfg: cfg.clone(),
            system,
            best: None,
            bad_epochs: 0,
            epoch: 0,
        };
        if t.front.is_none() {
            t.train_feats = t.system.features(data, data.split(Split::Train))?;
            t.val_feats = t.system.features(data, data.split(Split::Validation))?;
        }
        Ok(t)
    }

    pub fn system(&self) -> &TrainedSystem {
        &self.system
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    /// Builds the extractor input for training examples `idx`; in learnable
    /// mode this runs M in training mode.
    fn input(&mut self, idx: &[usize]) -> Result<Tensor> {
        let train = self.data.split(Split::Train);
        match (&mut self.front, self.system.separator.as_mut()) {
            (Some(front), Some(sep)) => {
                let specs: Vec<&MagnitudeSpectrogram> = idx.iter().map(|&i| &train[i].mixture).collect();
                let mask = sep.forward_tensor(&sep.pad_batch(&specs)?, true)?;
                Ok(front.forward(&specs, &mask)?)
            }
            _ => {
                let feats: Vec<&LogMelFeature> = idx.iter().map(|&i| &self.train_feats[i]).collect();
                Ok(Extractor::batch(&feats)?)
            }
        }
    }

    /// Sends a gradient w.r.t. the extractor input on into M (learnable only).
    fn backward_into_mask(&mut self, dx: &Tensor) {
        if let (Some(front), Some(sep)) = (&mut self.front, self.system.separator.as_mut()) {
            let dmask = front.backward(dx);
            sep.backward(&dmask);
        }
    }

    fn zero_trainable(&mut self) {
        self.system.extractor.zero_grad();
        self.system.classifier.zero_grad();
        if self.front.is_some() {
            if let Some(m) = self.system.separator.as_mut() {
                m.zero_grad();
            }
        }
    }

    pub fn step(&mut self, idx: &[usize], lambda: f64) -> Result<StepStats> {
        self.step_inner(idx, lambda, None)
    }

    /// As [`Trainer::step`], additionally recording the classification and
    /// adversarial gradients of F (and M) separately.
    pub fn step_with_capture(&mut self, idx: &[usize], lambda: f64) -> Result<(StepStats, GradCapture)> {
        let mut cap = GradCapture::default();
        let stats = self.step_inner(idx, lambda, Some(&mut cap))?;
        Ok((stats, cap))
    }

    fn step_inner(&mut self, idx: &[usize], lambda: f64, mut cap: Option<&mut GradCapture>) -> Result<StepStats> {
        let train = self.data.split(Split::Train);
        let events: Vec<usize> = idx.iter().map(|&i| train[i].event).collect();
        let speech: Vec<bool> = idx.iter().map(|&i| train[i].speech).collect();
        let labels = BatchLabels::new(&events, &speech)?;
        self.zero_trainable();

        let x = self.input(idx)?;
        let z = self.system.extractor.forward(&x, true)?;

        // (i) discriminator step on the detached latents.
        let mut disc_loss = None;
        if let Some(d) = self.system.discriminator.as_mut() {
            d.zero_grad();
            let (loss, dl) = sigmoid_bce(&d.logits(&z, true), &speech)?;
            d.backward(&dl);
            self.opt_d.step(d.params_mut())?;
            d.zero_grad();
            disc_loss = Some(loss);
        }
        if let Some(c) = cap.as_deref_mut() {
            c.extractor_grad_after_disc_step = self
                .system
                .extractor
                .params()
                .iter()
                .flat_map(|p| p.grad.iter())
                .fold(0.0, |m, g| m.max(g.abs()));
        }

        // (ii) F, C (and M) on L_cls and the reversed L_adv.
        let (cls, dlogits) = softmax_cross_entropy(&self.system.classifier.logits(&z, true), &labels)?;
        let mut dz = self.system.classifier.backward(&dlogits);
        if let Some(c) = cap.as_deref_mut() {
            let dx = self.system.extractor.backward(&dz);
            self.backward_into_mask(&dx);
            c.extractor_cls = grads(&self.system.extractor);
            c.separator_cls = self.system.separator.as_ref().map(grads).unwrap_or_default();
            self.zero_trainable_but_classifier();
        }
        let mut adv = None;
        if let Some(d) = self.system.discriminator.as_mut() {
            let (loss, dl) = sigmoid_bce(&d.logits(&grl_forward(&z), true), &speech)?;
            let raw = d.backward(&dl);
            d.zero_grad();
            adv = Some(loss);
            if let Some(c) = cap.as_deref_mut() {
                let dx = self.system.extractor.backward(&raw);
                self.backward_into_mask(&dx);
                c.extractor_adv = grads(&self.system.extractor);
                c.separator_adv = self.system.separator.as_ref().map(grads).unwrap_or_default();
                self.zero_trainable_but_classifier();
            }
            dz.add_assign(&grl_backward(&raw, lambda)?);
        }
        let dx = self.system.extractor.backward(&dz);
        self.backward_into_mask(&dx);

        self.opt_f.step(self.system.extractor.params_mut())?;
        self.opt_c.step(self.system.classifier.params_mut())?;
        if self.front.is_some() {
            if let Some(m) = self.system.separator.as_mut() {
                self.opt_m.step(m.params_mut())?;
            }
        }
        Ok(StepStats {
            cls_loss: cls,
            adv_loss: adv,
            disc_loss,
        })
    }

    fn zero_trainable_but_classifier(&mut self) {
        self.system.extractor.zero_grad();
        if let Some(m) = self.system.separator.as_mut() {
            m.zero_grad();
        }
    }

    /// Validation features; in learnable mode recomputed through the current M.
    fn val_features(&mut self) -> Result<Vec<LogMelFeature>> {
        if self.front.is_some() {
            self.system.features(self.data, self.data.split(Split::Validation))
        } else {
            Ok(self.val_feats.clone())
        }
    }

    fn train_features(&mut self) -> Result<Vec<LogMelFeature>> {
        if self.front.is_some() {
            self.system.features(self.data, self.data.split(Split::Train))
        } else {
            Ok(self.train_feats.clone())
        }
    }

    /// Trains D' on the current frozen latents and copies it into D; resets
    /// D's optimizer state.
    pub fn refresh(&mut self, epoch: usize) -> Result<f64> {
        let train_z = {
            let f = self.train_features()?;
            self.system.latents_of(&f)?
        };
        let val_z = {
            let f = self.val_features()?;
            self.system.latents_of(&f)?
        };
        let flags = |s: Split| self.data.split(s).iter().map(|e| e.speech).collect();
        let train = Labelled::new(train_z, flags(Split::Train))?;
        let val = Labelled::new(val_z, flags(Split::Validation))?;
        let loss = refresh_with(&mut self.system, &train, &val, &self.cfg, epoch)?;
        self.opt_d.reset();
        Ok(loss)
    }

    /// Runs one epoch: all batches, validation, model selection and, when
    /// scheduled, a refresh.
    pub fn train_epoch(&mut self) -> Result<EpochRecord> {
        let epoch = self.epoch;
        let lambda = if self.system.regime.is_adversarial() {
            self.cfg.lambda_at(epoch)
        } else {
            0.0
        };
        let n = self.data.split(Split::Train).len();
        let (mut cls, mut adv, mut disc, mut count) = (0.0, 0.0, 0.0, 0usize);
        for idx in batches(n, self.cfg.batch_size, derive_seed(self.cfg.seed, (SHUFFLE_TAG << 32) + epoch as u64)) {
            let s = self.step(&idx, lambda)?;
            let k = idx.len() as f64;
            cls += s.cls_loss * k;
            adv += s.adv_loss.unwrap_or(0.0) * k;
            disc += s.disc_loss.unwrap_or(0.0) * k;
            count += idx.len();
        }
        let count = count as f64;
        let adversarial = self.system.regime.is_adversarial();

        let feats = self.val_features()?;
        let z = self.system.latents_of(&feats)?;
        let val = self.data.split(Split::Validation);
        let events: Vec<usize> = val.iter().map(|e| e.event).collect();
        let speech: Vec<bool> = val.iter().map(|e| e.speech).collect();
        let post = self.system.classifier.forward(&z);
        let val_cls = cls_loss(&post, &BatchLabels::new(&events, &speech)?)?;
        let val_sed = sed_accuracy(&post, &events)?;
        let val_adv = match self.system.discriminator.as_mut() {
            Some(d) => Some(adv_loss(&d.forward(&z), &speech)?),
            None => None,
        };

        self.select(epoch, val_sed, val_cls);

        let refresh_val_loss = if adversarial && self.cfg.refresh_after(epoch) {
            Some(self.refresh(epoch)?)
        } else {
            None
        };
        let rec = EpochRecord {
            epoch,
            lambda,
            train_cls_loss: cls / count,
            train_adv_loss: adversarial.then_some(adv / count),
            disc_loss: adversarial.then_some(disc / count),
            val_cls_loss: val_cls,
            val_sed_accuracy: val_sed,
            val_adv_loss: val_adv,
            refresh_val_loss,
        };
        info!(
            "{} epoch {epoch}: cls {:.4} val_sed {:.3} val_cls {:.4}{}",
            self.system.regime,
            rec.train_cls_loss,
            val_sed,
            val_cls,
            val_adv.map(|v| format!(" val_adv {v:.4}")).unwrap_or_default()
        );
        self.system.history.push(rec.clone());
        self.epoch += 1;
        Ok(rec)
    }

    /// Supervised runs keep the best validation SED accuracy (ties: lower
    /// validation loss). Adversarial runs only consider post-warm-up epochs
    /// and prefer the later epoch on ties.
    fn select(&mut self, epoch: usize, sed: f64, loss: f64) {
        let adversarial = self.system.regime.is_adversarial();
        if adversarial && epoch < self.cfg.warmup_epochs {
            return;
        }
        let better = match &self.best {
            None => true,
            Some((_, bs, bl)) => {
                if adversarial {
                    sed >= *bs
                } else {
                    sed > *bs || (sed == *bs && loss < *bl)
                }
            }
        };
        if better {
            let mut snap = self.system.clone();
            snap.history.clear();
            snap.best_epoch = epoch;
            self.best = Some((snap, sed, loss));
            self.bad_epochs = 0;
        } else {
            self.bad_epochs += 1;
        }
    }

    pub fn should_stop(&self) -> bool {
        self.epoch >= self.cfg.max_epochs || self.bad_epochs >= self.cfg.patience
    }

    /// Trains until the epoch budget or patience runs out and returns the
    /// selected modules with the full history.
    pub fn fit(mut self) -> Result<TrainedSystem> {
        while !self.should_stop() {
            self.train_epoch()?;
        }
        Ok(self.finish())
    }

    /// The selected modules (or the current ones if no epoch qualified) with
    /// the full history and refresh count.
    pub fn finish(self) -> TrainedSystem {
        let history = self.system.history.clone();
        let refreshes = self.system.refreshes;
        let mut out = match self.best {
            Some((snap, _, _)) => snap,
            None => {
                let mut s = self.system;
                s.best_epoch = s.history.len().saturating_sub(1);
                s
            }
        };
        out.history = history;
        out.refreshes = refreshes;
        out
    }
}

/// Trains any regime. `separator` is the frozen pre-trained M for the
/// masking and fixed-mask regimes.
pub fn train(
    data: &Dataset,
    cfg: &TrainConfig,
    model: &ModelConfig,
    separator: Option<&Separator>,
    config_hash: &str,
) -> Result<TrainedSystem> {
    Trainer::new(data, cfg, model, separator, config_hash)?.fit()
}

fn expect_regime(cfg: &TrainConfig, ok: &[Regime], op: &str) -> Result<()> {
    if ok.contains(&cfg.regime) {
        Ok(())
    } else {
        Err(Error::invalid(format!("{op} cannot run regime {}", cfg.regime)))
    }
}

/// F and C on the classification loss alone: baseline and both masking
/// regimes.
pub fn train_supervised(
    data: &Dataset,
    cfg: &TrainConfig,
    model: &ModelConfig,
    frozen_separator: Option<&Separator>,
    config_hash: &str,
) -> Result<TrainedSystem> {
    expect_regime(
        cfg,
        &[Regime::Baseline, Regime::MaskingContinuous, Regime::MaskingBinary],
        "supervised training",
    )?;
    train(data, cfg, model, frozen_separator, config_hash)
}

pub fn train_rdal(data: &Dataset, cfg: &TrainConfig, model: &ModelConfig, config_hash: &str) -> Result<TrainedSystem> {
    expect_regime(cfg, &[Regime::Rdal], "adversarial training without a mask")?;
    train(data, cfg, model, None, config_hash)
}

/// Adversarial training behind a separator: frozen pre-trained M
/// (`rdalm_fixed`) or M learned in the loop (`rdalm_learnable`).
pub fn train_rdalm(
    data: &Dataset,
    cfg: &TrainConfig,
    model: &ModelConfig,
    pretrained: Option<&Separator>,
    config_hash: &str,
) -> Result<TrainedSystem> {
    expect_regime(cfg, &[Regime::RdalmFixed, Regime::RdalmLearnable], "masked adversarial training")?;
    train(data, cfg, model, pretrained, config_hash)
}
