//! Per-epoch training records and their JSON-lines form.

use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lambda: f64,
    pub train_cls_loss: f64,
    /// Adversarial loss seen by the reversal branch.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_adv_loss: Option<f64>,
    /// Loss of the discriminator's own update.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disc_loss: Option<f64>,
    pub val_cls_loss: f64,
    pub val_sed_accuracy: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub val_adv_loss: Option<f64>,
    /// Best validation loss of the refreshed discriminator, when a refresh
    /// ran at the end of this epoch.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refresh_val_loss: Option<f64>,
}

pub fn to_jsonl<T: Serialize>(items: &[T]) -> Result<String> {
    let mut out = String::new();
    for it in items {
        out.push_str(&serde_json::to_string(it).map_err(|e| Error::data(e.to_string()))?);
        out.push('\n');
    }
    Ok(out)
}

pub fn from_jsonl<T: DeserializeOwned>(text: &str) -> Result<Vec<T>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::data(format!("line {}: {e}", i + 1))))
        .collect()
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let io = |e: std::io::Error| Error::data(format!("{}: {e}", path.display()));
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io)?;
    }
    let mut f = std::fs::File::create(path).map_err(io)?;
    f.write_all(to_jsonl(items)?.as_bytes()).map_err(io)
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
    from_jsonl(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_absent_fields() {
        let recs = vec![
            EpochRecord {
                epoch: 0,
                lambda: 0.0,
                train_cls_loss: 1.1,
                train_adv_loss: None,
                disc_loss: None,
                val_cls_loss: 1.0,
                val_sed_accuracy: 0.5,
                val_adv_loss: None,
                refresh_val_loss: None,
            },
            EpochRecord {
                epoch: 1,
                lambda: 1.0,
                train_cls_loss: 0.3,
                train_adv_loss: Some(0.69),
                disc_loss: Some(0.6),
                val_cls_loss: 0.2,
                val_sed_accuracy: 1.0,
                val_adv_loss: Some(0.7),
                refresh_val_loss: Some(0.5),
            },
        ];
        let text = to_jsonl(&recs).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(!text.lines().next().unwrap().contains("adv"));
        assert_eq!(from_jsonl::<EpochRecord>(&text).unwrap(), recs);
        assert!(from_jsonl::<EpochRecord>("{\"epoch\": 1}").is_err());
    }
}
