#![allow(dead_code)]

use rdalm_core::corpus::{synth_toy_corpus, Recipe, SplitCounts, ToySpec};
use rdalm_core::dsp::DspConfig;
use rdalm_nets::{ExtractorArch, SeparatorArch};
use rdalm_train::{Dataset, ModelConfig, OptimizerKind, Regime, TrainConfig};

pub const RATE: u32 = 16_000;

/// Quarter-second clips, 6/4/4 per class: small enough for debug-speed
/// contract tests.
pub fn tiny_dataset(seed: u64) -> Dataset {
    let dir = tempfile::tempdir().unwrap();
    let spec = ToySpec {
        clip_s: 0.5,
        per_class: SplitCounts {
            train: 6,
            validation: 4,
            test: 4,
        },
        ..ToySpec::default()
    };
    let recipe = Recipe {
        sample_rate_hz: RATE,
        segment_s: 0.25,
        ..Recipe::default()
    };
    let manifest = synth_toy_corpus(&spec, &recipe, seed, dir.path()).unwrap();
    Dataset::load(&manifest, &dsp()).unwrap()
}

pub fn dsp() -> DspConfig {
    DspConfig {
        sample_rate_hz: RATE,
        segment_s: 0.25,
        ..DspConfig::default()
    }
}

pub fn model() -> ModelConfig {
    ModelConfig {
        separator: SeparatorArch {
            base_filters: 2,
            depth: 2,
            kernel: 5,
        },
        extractor: ExtractorArch { widths: [2, 3, 3, 4] },
    }
}

pub fn config(regime: Regime) -> TrainConfig {
    TrainConfig {
        regime,
        warmup_epochs: 1,
        refresh_period: 1,
        refresh_train_epochs: 3,
        refresh_patience: 2,
        max_epochs: 3,
        patience: 50,
        batch_size: 6,
        seed: 4,
        pretrain_max_epochs: 2,
        pretrain_batch_size: 6,
        probe_max_epochs: 5,
        probe_patience: 3,
        ..TrainConfig::default()
    }
}

pub fn sgd(regime: Regime, lr: f64) -> TrainConfig {
    TrainConfig {
        optimizer: OptimizerKind::Sgd,
        learning_rate: lr,
        ..config(regime)
    }
}
