//! On-disk layout of an experiment directory:
//!
//! ```text
//! <out>/separator/{checkpoint.rdlm, history.jsonl, report.json}
//! <out>/runs/<regime>/seed-<s>/{checkpoint.rdlm, history.jsonl, attack.json,
//!                               probe_scores.csv, eval-<split>.json}
//! <out>/report/{summary.json, table.md, roc_<regime>.csv}
//! ```

use std::path::{Path, PathBuf};

use rdalm_core::corpus::Split;
use rdalm_train::Regime;

pub const MANIFEST: &str = "manifest.jsonl";
pub const CHECKPOINT: &str = "checkpoint.rdlm";
pub const HISTORY: &str = "history.jsonl";
pub const SEPARATOR_REPORT: &str = "report.json";
pub const ATTACK_REPORT: &str = "attack.json";
pub const PROBE_SCORES: &str = "probe_scores.csv";
pub const SUMMARY: &str = "summary.json";
pub const TABLE: &str = "table.md";

pub fn manifest(data_dir: &Path) -> PathBuf {
    data_dir.join(MANIFEST)
}

pub fn separator_dir(out: &Path) -> PathBuf {
    out.join("separator")
}

pub fn runs_dir(out: &Path) -> PathBuf {
    out.join("runs")
}

pub fn run_dir(out: &Path, regime: Regime, seed: u64) -> PathBuf {
    runs_dir(out).join(regime.as_str()).join(format!("seed-{seed}"))
}

pub fn report_dir(out: &Path) -> PathBuf {
    out.join("report")
}

pub fn eval_report(split: Split) -> String {
    format!("eval-{split}.json")
}

pub fn roc_csv(regime: Regime) -> String {
    format!("roc_{regime}.csv")
}
