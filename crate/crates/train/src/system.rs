//! The trained modules of one run and their checkpoint form.

use std::path::Path;

use rdalm_core::corpus::Split;
use rdalm_core::dsp::{apply_mask, binarize_mask, LogMelFeature, MagnitudeSpectrogram};
use rdalm_nets::{
    Checkpoint, Classifier, Discriminator, Extractor, ExtractorArch, LayerSpec, Module, Separator, SeparatorArch,
    Tensor,
};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{MaskMode, Regime};
use crate::data::{Dataset, Example};
use crate::history::EpochRecord;
use crate::schedule::chunks;
use crate::{Error, Result};

/// Architecture overrides for the trainable networks.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub separator: SeparatorArch,
    pub extractor: ExtractorArch,
}

#[derive(Clone, Debug)]
pub struct TrainedSystem {
    pub regime: Regime,
    pub seed: u64,
    pub config_hash: String,
    pub separator: Option<Separator>,
    pub extractor: Extractor,
    pub classifier: Classifier,
    pub discriminator: Option<Discriminator>,
    /// The most recent refreshed discriminator D'.
    pub refreshed: Option<Discriminator>,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub refreshes: usize,
}

const INFER_BATCH: usize = 16;

impl TrainedSystem {
    /// Checks that the present components match the regime.
    pub fn validate(&self) -> Result<()> {
        if self.separator.is_some() != self.regime.has_separator() {
            return Err(Error::invalid(format!("{} system with a mismatched separator", self.regime)));
        }
        let adv = self.regime.is_adversarial();
        if self.discriminator.is_some() != adv || self.refreshed.is_some() != adv {
            return Err(Error::invalid(format!("{} system with mismatched discriminators", self.regime)));
        }
        Ok(())
    }

    /// Log-mel input of F for `examples`, with the separator (if any) in
    /// inference mode.
    pub fn features(&mut self, data: &Dataset, examples: &[Example]) -> Result<Vec<LogMelFeature>> {
        let mode = self.regime.mask_mode();
        let Some(sep) = self.separator.as_mut() else {
            return Ok(examples.iter().map(|e| e.log_mel.clone()).collect());
        };
        let mut out = Vec::with_capacity(examples.len());
        for r in chunks(examples.len(), INFER_BATCH) {
            let specs: Vec<&MagnitudeSpectrogram> = examples[r.clone()].iter().map(|e| &e.mixture).collect();
            for (mask, spec) in sep.separate_batch(&specs)?.into_iter().zip(specs) {
                let mask = if mode == MaskMode::Binary {
                    binarize_mask(&mask, data.mask_threshold())?
                } else {
                    mask
                };
                out.push(data.front.log_mel(&apply_mask(spec, &mask)?)?);
            }
        }
        Ok(out)
    }

    /// Latents `[N, 64]` of precomputed features with F in inference mode.
    pub fn latents_of(&mut self, feats: &[LogMelFeature]) -> Result<Tensor> {
        let mut rows = Vec::with_capacity(feats.len());
        for r in chunks(feats.len(), INFER_BATCH) {
            let refs: Vec<&LogMelFeature> = feats[r].iter().collect();
            let z = self.extractor.forward(&Extractor::batch(&refs)?, false)?;
            rows.push(z);
        }
        let flat: Vec<&[f64]> = rows.iter().flat_map(|z| (0..z.batch()).map(|i| z.sample(i))).collect();
        Ok(Tensor::stack(&flat, &[rdalm_nets::LATENT_DIM])?)
    }

    pub fn latents(&mut self, data: &Dataset, split: Split) -> Result<Tensor> {
        let feats = self.features(data, data.split(split))?;
        self.latents_of(&feats)
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            separator: self.separator.as_ref().map(|s| s.arch().clone()).unwrap_or_default(),
            extractor: self.extractor.arch().clone(),
        }
    }

    fn audit(&self) -> serde_json::Value {
        json!({
            "separator": self.separator.as_ref().map(Separator::audit),
            "extractor": self.extractor.audit(),
            "classifier": self.classifier.audit(),
            "discriminator": self.discriminator.as_ref().map(Discriminator::audit),
        })
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        self.validate()?;
        let model = self.model_config();
        let mut ck = Checkpoint::new(json!({
            "kind": "system",
            "regime": self.regime,
            "seed": self.seed,
            "config_hash": self.config_hash,
            "separator_arch": self.separator.as_ref().map(|_| &model.separator),
            "extractor_arch": model.extractor,
            "best_epoch": self.best_epoch,
            "refreshes": self.refreshes,
            "history": self.history,
            "audit": self.audit(),
        }));
        if let Some(m) = &self.separator {
            ck.put_module("M", m);
        }
        ck.put_module("F", &self.extractor);
        ck.put_module("C", &self.classifier);
        if let (Some(d), Some(dp)) = (&self.discriminator, &self.refreshed) {
            ck.put_module("D", d);
            ck.put_module("Dp", dp);
        }
        Ok(ck)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let meta = &ck.meta;
        if meta["kind"] != "system" {
            return Err(Error::data(format!("checkpoint kind is {}, expected \"system\"", meta["kind"])));
        }
        let field = |name: &str| -> Result<serde_json::Value> {
            meta.get(name)
                .cloned()
                .ok_or_else(|| Error::data(format!("checkpoint metadata lacks {name}")))
        };
        let regime: Regime = from_value(field("regime")?, "regime")?;
        let extractor_arch: ExtractorArch = from_value(field("extractor_arch")?, "extractor_arch")?;
        let separator_arch: Option<SeparatorArch> = from_value(field("separator_arch")?, "separator_arch")?;
        let mut sys = TrainedSystem {
            regime,
            seed: from_value(field("seed")?, "seed")?,
            config_hash: from_value(field("config_hash")?, "config_hash")?,
            separator: separator_arch.map(|a| Separator::new(&a, 0)).transpose()?,
            extractor: Extractor::new(&extractor_arch, 0)?,
            classifier: Classifier::new(0),
            discriminator: regime.is_adversarial().then(|| Discriminator::new(0)),
            refreshed: regime.is_adversarial().then(|| Discriminator::new(0)),
            history: from_value(field("history")?, "history")?,
            best_epoch: from_value(field("best_epoch")?, "best_epoch")?,
            refreshes: from_value(field("refreshes")?, "refreshes")?,
        };
        sys.validate()?;
        if sys.audit() != field("audit")? {
            return Err(Error::data("checkpoint layer audit does not match the rebuilt networks"));
        }
        if let Some(m) = sys.separator.as_mut() {
            ck.load_module("M", m)?;
            m.set_frozen(regime.needs_pretrained_separator());
        }
        ck.load_module("F", &mut sys.extractor)?;
        ck.load_module("C", &mut sys.classifier)?;
        if let (Some(d), Some(dp)) = (sys.discriminator.as_mut(), sys.refreshed.as_mut()) {
            ck.load_module("D", d)?;
            ck.load_module("Dp", dp)?;
        }
        Ok(sys)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        Ok(self.to_checkpoint()?.save(path)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

fn from_value<T: serde::de::DeserializeOwned>(v: serde_json::Value, name: &str) -> Result<T> {
    serde_json::from_value(v).map_err(|e| Error::data(format!("checkpoint metadata {name}: {e}")))
}

/// Writes a pre-trained separator with its architecture and validation loss.
pub fn save_separator(path: &Path, sep: &Separator, val_loss: f64, best_epoch: usize, config_hash: &str) -> Result<()> {
    let mut ck = Checkpoint::new(json!({
        "kind": "separator",
        "arch": sep.arch(),
        "val_loss": val_loss,
        "best_epoch": best_epoch,
        "config_hash": config_hash,
        "audit": sep.audit(),
    }));
    ck.put_module("M", sep);
    Ok(ck.save(path)?)
}

/// Loads a separator checkpoint; returns it frozen with its config hash.
pub fn load_separator(path: &Path) -> Result<(Separator, String)> {
    let ck = Checkpoint::load(path)?;
    if ck.meta["kind"] != "separator" {
        return Err(Error::data(format!(
            "{} is not a separator checkpoint (kind {})",
            path.display(),
            ck.meta["kind"]
        )));
    }
    let arch: SeparatorArch = from_value(ck.meta["arch"].clone(), "arch")?;
    let mut sep = Separator::new(&arch, 0)?;
    let audit: Vec<LayerSpec> = from_value(ck.meta["audit"].clone(), "audit")?;
    if audit != sep.audit() {
        return Err(Error::data("separator layer audit does not match its architecture"));
    }
    ck.load_module("M", &mut sep)?;
    sep.set_frozen(true);
    let hash = ck.meta["config_hash"].as_str().unwrap_or_default().to_string();
    Ok((sep, hash))
}
