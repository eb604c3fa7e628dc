use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// The six training regimes compared in the ablation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// F and C trained on the raw log-mel, no privacy measure.
    Baseline,
    /// Adversarial branch through the gradient reversal layer, no separator.
    Rdal,
    /// Frozen pre-trained separator, continuous mask, supervised F and C.
    MaskingContinuous,
    /// As above with the mask binarized at the configured threshold.
    MaskingBinary,
    /// Frozen pre-trained separator plus the adversarial branch.
    RdalmFixed,
    /// Separator trained inside the adversarial loop from a random init.
    RdalmLearnable,
}

/// How the separator's mask reaches the extractor.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MaskMode {
    None,
    Continuous,
    Binary,
    Learnable,
}

impl Regime {
    pub const ALL: [Regime; 6] = [
        Regime::Baseline,
        Regime::Rdal,
        Regime::MaskingContinuous,
        Regime::MaskingBinary,
        Regime::RdalmFixed,
        Regime::RdalmLearnable,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Baseline => "baseline",
            Regime::Rdal => "rdal",
            Regime::MaskingContinuous => "masking_continuous",
            Regime::MaskingBinary => "masking_binary",
            Regime::RdalmFixed => "rdalm_fixed",
            Regime::RdalmLearnable => "rdalm_learnable",
        }
    }

    pub fn is_adversarial(self) -> bool {
        matches!(self, Regime::Rdal | Regime::RdalmFixed | Regime::RdalmLearnable)
    }

    pub fn mask_mode(self) -> MaskMode {
        match self {
            Regime::Baseline | Regime::Rdal => MaskMode::None,
            Regime::MaskingContinuous | Regime::RdalmFixed => MaskMode::Continuous,
            Regime::MaskingBinary => MaskMode::Binary,
            Regime::RdalmLearnable => MaskMode::Learnable,
        }
    }

    /// Whether a pre-trained, frozen separator must be supplied.
    pub fn needs_pretrained_separator(self) -> bool {
        matches!(self.mask_mode(), MaskMode::Continuous | MaskMode::Binary)
    }

    pub fn has_separator(self) -> bool {
        self.mask_mode() != MaskMode::None
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Regime::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Regime::ALL.iter().map(|r| r.as_str()).collect();
                Error::invalid(format!("unknown regime {s:?}; expected one of {}", names.join(", ")))
            })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Adam,
    /// Plain gradient descent; used to check update rules exactly.
    Sgd,
}

/// Initialization of the refreshed discriminator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefreshInit {
    /// New random parameters with an epoch-derived seed.
    Fresh,
    /// Start from the current adversarial discriminator.
    WarmStart,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub regime: Regime,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    /// Post-warm-up weight of the reversed adversarial gradient.
    pub lambda: f64,
    /// Linear ramp from 0 to `lambda` over this many epochs after warm-up;
    /// 0 switches straight to `lambda`.
    pub lambda_ramp_epochs: usize,
    pub warmup_epochs: usize,
    pub refresh_period: usize,
    pub refresh_train_epochs: usize,
    pub refresh_patience: usize,
    pub refresh_init: RefreshInit,
    pub patience: usize,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub pretrain_max_epochs: usize,
    pub pretrain_batch_size: usize,
    pub probe_max_epochs: usize,
    pub probe_patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            regime: Regime::Baseline,
            learning_rate: 0.001,
            optimizer: OptimizerKind::Adam,
            lambda: 1.0,
            lambda_ramp_epochs: 0,
            warmup_epochs: 30,
            refresh_period: 10,
            refresh_train_epochs: 30,
            refresh_patience: 5,
            refresh_init: RefreshInit::Fresh,
            patience: 20,
            max_epochs: 200,
            batch_size: 32,
            seed: 0,
            pretrain_max_epochs: 200,
            pretrain_batch_size: 32,
            probe_max_epochs: 200,
            probe_patience: 20,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::invalid("lambda must be finite and >= 0"));
        }
        let counts = [
            ("refresh_period", self.refresh_period),
            ("refresh_train_epochs", self.refresh_train_epochs),
            ("refresh_patience", self.refresh_patience),
            ("patience", self.patience),
            ("max_epochs", self.max_epochs),
            ("batch_size", self.batch_size),
            ("pretrain_max_epochs", self.pretrain_max_epochs),
            ("pretrain_batch_size", self.pretrain_batch_size),
            ("probe_max_epochs", self.probe_max_epochs),
            ("probe_patience", self.probe_patience),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::invalid(format!("{name} must be positive")));
            }
        }
        if self.batch_size < 2 || self.pretrain_batch_size < 2 {
            return Err(Error::invalid("batch sizes must be at least 2 for batch normalization"));
        }
        Ok(())
    }

    /// Weight of the reversed gradient during 0-based `epoch`.
    pub fn lambda_at(&self, epoch: usize) -> f64 {
        if epoch < self.warmup_epochs {
            return 0.0;
        }
        if self.lambda_ramp_epochs == 0 {
            return self.lambda;
        }
        let k = (epoch - self.warmup_epochs + 1) as f64 / self.lambda_ramp_epochs as f64;
        self.lambda * k.min(1.0)
    }

    /// Whether the discriminator refresh runs after 0-based `epoch`
    /// completes, i.e. after `epoch + 1` epochs.
    pub fn refresh_after(&self, epoch: usize) -> bool {
        let done = epoch + 1;
        done > self.warmup_epochs && (done - self.warmup_epochs) % self.refresh_period == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regime_names_round_trip() {
        for r in Regime::ALL {
            assert_eq!(r.as_str().parse::<Regime>().unwrap(), r);
        }
        assert!("rdalm".parse::<Regime>().is_err());
    }

    #[test]
    fn warmup_and_ramp() {
        let mut c = TrainConfig {
            warmup_epochs: 3,
            lambda: 2.0,
            ..TrainConfig::default()
        };
        assert_eq!((0..3).map(|e| c.lambda_at(e)).sum::<f64>(), 0.0);
        assert_eq!(c.lambda_at(3), 2.0);
        c.lambda_ramp_epochs = 4;
        assert_eq!(c.lambda_at(3), 0.5);
        assert_eq!(c.lambda_at(6), 2.0);
        assert_eq!(c.lambda_at(60), 2.0);
    }

    #[test]
    fn refresh_count_follows_schedule() {
        let c = TrainConfig {
            warmup_epochs: 30,
            refresh_period: 10,
            ..TrainConfig::default()
        };
        for e in 31..120 {
            let count = (0..e).filter(|&i| c.refresh_after(i)).count();
            assert_eq!(count, (e - 30) / 10, "after {e} epochs");
        }
        assert_eq!((0..30).filter(|&i| c.refresh_after(i)).count(), 0);
    }

    #[test]
    fn rejects_bad_values() {
        let bad = [
            TrainConfig { lambda: -1.0, ..TrainConfig::default() },
            TrainConfig { batch_size: 1, ..TrainConfig::default() },
            TrainConfig { refresh_period: 0, ..TrainConfig::default() },
            TrainConfig { learning_rate: 0.0, ..TrainConfig::default() },
        ];
        for c in bad {
            assert!(c.validate().is_err());
        }
    }
}
