use std::path::{Path, PathBuf};

use rdalm_core::corpus::{CorpusSources, Recipe, ToySpec};
use rdalm_core::dsp::DspConfig;
use rdalm_train::{ModelConfig, TrainConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{config, Result};

/// Environment variables that may replace paths from the config file.
pub const ENV_DATA_DIR: &str = "RDALM_DATA_DIR";
pub const ENV_OUT_DIR: &str = "RDALM_OUT_DIR";
pub const ENV_EVENT_DEV: &str = "RDALM_EVENT_DEV";
pub const ENV_EVENT_TEST: &str = "RDALM_EVENT_TEST";
pub const ENV_SPEECH_DEV: &str = "RDALM_SPEECH_DEV";
pub const ENV_SPEECH_TEST: &str = "RDALM_SPEECH_TEST";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    pub dsp: DspConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub report: ReportConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Where the manifest and generated audio live.
    pub dir: PathBuf,
    /// Seed for synthesis, speech pairing and the development split.
    pub seed: u64,
    pub recipe: Recipe,
    /// Synthetic corpus parameters for `synth-data`.
    pub toy: Option<ToySpec>,
    /// Source corpora for `build-data`.
    pub sources: Option<CorpusSources>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("data"),
            seed: 0,
            recipe: Recipe::default(),
            toy: None,
            sources: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    pub out_dir: PathBuf,
    pub repetitions: usize,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self {
            out_dir: PathBuf::from("out"),
            repetitions: 1,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(config)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads, applies path overrides from the environment and validates.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: Self = toml::from_str(&text).map_err(|e| config(format!("{}: {e}", path.display())))?;
        cfg.apply_env(|k| std::env::var_os(k).map(PathBuf::from))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Only paths can be overridden; the four corpus variables go together
    /// unless the config already names the sources.
    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<PathBuf>) -> Result<()> {
        if let Some(p) = get(ENV_DATA_DIR) {
            self.data.dir = p;
        }
        if let Some(p) = get(ENV_OUT_DIR) {
            self.report.out_dir = p;
        }
        let vars = [ENV_EVENT_DEV, ENV_EVENT_TEST, ENV_SPEECH_DEV, ENV_SPEECH_TEST];
        let found: Vec<Option<PathBuf>> = vars.iter().map(|k| get(k)).collect();
        if found.iter().all(Option::is_none) {
            return Ok(());
        }
        let mut sources = match self.data.sources.take() {
            Some(s) => s,
            None => {
                if let Some(i) = found.iter().position(Option::is_none) {
                    return Err(config(format!(
                        "{} is not set and the config has no data.sources block",
                        vars[i]
                    )));
                }
                CorpusSources {
                    event_dev: PathBuf::new(),
                    event_test: PathBuf::new(),
                    speech_dev: PathBuf::new(),
                    speech_test: PathBuf::new(),
                }
            }
        };
        let slots = [
            &mut sources.event_dev,
            &mut sources.event_test,
            &mut sources.speech_dev,
            &mut sources.speech_test,
        ];
        for (slot, value) in slots.into_iter().zip(found) {
            if let Some(v) = value {
                *slot = v;
            }
        }
        self.data.sources = Some(sources);
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.data.recipe.validate().map_err(config)?;
        if let Some(toy) = &self.data.toy {
            toy.validate(&self.data.recipe).map_err(config)?;
        }
        self.dsp.validate().map_err(config)?;
        self.train.validate().map_err(config)?;
        self.model.separator.validate().map_err(config)?;
        self.model.extractor.validate().map_err(config)?;
        if self.dsp.sample_rate_hz != self.data.recipe.sample_rate_hz {
            return Err(config(format!(
                "dsp.sample_rate_hz {} differs from data.recipe.sample_rate_hz {}",
                self.dsp.sample_rate_hz, self.data.recipe.sample_rate_hz
            )));
        }
        if self.dsp.segment_s != self.data.recipe.segment_s {
            return Err(config("dsp.segment_s differs from data.recipe.segment_s"));
        }
        if self.report.repetitions == 0 {
            return Err(config("report.repetitions must be at least 1"));
        }
        Ok(())
    }

    /// Hash of everything that shapes results: paths, the report block and
    /// the per-run regime and seed are left out so that all runs of one
    /// experiment share it.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        let obj = v.as_object_mut().expect("object");
        obj.remove("report");
        if let Some(d) = obj.get_mut("data").and_then(|d| d.as_object_mut()) {
            d.remove("dir");
            d.remove("sources");
        }
        if let Some(t) = obj.get_mut("train").and_then(|t| t.as_object_mut()) {
            t.remove("regime");
            t.remove("seed");
        }
        let digest = Sha256::digest(v.to_string().as_bytes());
        hex::encode(&digest[..8])
    }
}
