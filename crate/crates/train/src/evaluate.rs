use rdalm_core::corpus::Split;
use rdalm_core::metrics::{roc_auc, sad_accuracy, sed_accuracy, RocCurve};
use rdalm_nets::Discriminator;
use serde::{Deserialize, Serialize};

use crate::config::{MaskMode, Regime};
use crate::data::Dataset;
use crate::pretrain::separation_sdr;
use crate::system::TrainedSystem;
use crate::{Error, Result};

/// Metrics of one run on one split. Metrics that need a missing component
/// are `None`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsReport {
    pub regime: Regime,
    pub seed: u64,
    pub config_hash: String,
    pub split: Split,
    pub sed_accuracy: f64,
    pub sad_accuracy: Option<f64>,
    pub auc: Option<f64>,
    pub roc: Option<RocCurve>,
    /// Mean SDR in dB of the separator's masked magnitude.
    pub sdr_db: Option<f64>,
}

/// SED accuracy from C(F(.)), SAD accuracy and ROC from `probe` when given,
/// and the separator's SDR on the speech-bearing examples of `split`.
pub fn evaluate(
    system: &mut TrainedSystem,
    data: &Dataset,
    split: Split,
    probe: Option<&mut Discriminator>,
) -> Result<MetricsReport> {
    if !data.has_split(split) {
        return Err(Error::invalid(format!("the data has no {split} split")));
    }
    let examples = data.split(split);
    let z = system.latents(data, split)?;
    let events: Vec<usize> = examples.iter().map(|e| e.event).collect();
    let speech: Vec<bool> = examples.iter().map(|e| e.speech).collect();
    let sed = sed_accuracy(&system.classifier.forward(&z), &events)?;
    let (sad, auc, roc) = match probe {
        Some(p) => {
            let scores = p.forward(&z);
            let (roc, auc) = roc_auc(&scores, &speech)?;
            (Some(sad_accuracy(&scores, &speech)?), Some(auc), Some(roc))
        }
        None => (None, None, None),
    };
    let threshold = (system.regime.mask_mode() == MaskMode::Binary).then(|| data.mask_threshold());
    let sdr_db = match system.separator.as_mut() {
        Some(sep) => separation_sdr(sep, &data.pairs(split), threshold, 16)?,
        None => None,
    };
    Ok(MetricsReport {
        regime: system.regime,
        seed: system.seed,
        config_hash: system.config_hash.clone(),
        split,
        sed_accuracy: sed,
        sad_accuracy: sad,
        auc,
        roc,
        sdr_db,
    })
}
