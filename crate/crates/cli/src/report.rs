use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::info;
use rdalm_core::metrics::{mean_std, roc_auc};
use rdalm_train::{MetricsReport, Regime};
use serde::{Deserialize, Serialize};

use crate::commands::{guard, load_config, out_dir, read_json, write_file, write_json};
use crate::error::{data, Result};
use crate::{layout, Common};

/// Mean over runs; `std` is the sample deviation and only present for two
/// or more runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stat {
    pub mean: f64,
    pub std: Option<f64>,
    pub n: usize,
}

impl Stat {
    pub fn of(values: &[f64]) -> Option<Self> {
        mean_std(values).map(|(mean, std)| Stat {
            mean,
            std,
            n: values.len(),
        })
    }

    fn cell(&self) -> String {
        match self.std {
            Some(s) => format!("{:.3} ± {:.3}", self.mean, s),
            None => format!("{:.3}", self.mean),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegimeSummary {
    pub regime: Regime,
    pub seeds: Vec<u64>,
    pub sed_accuracy: Stat,
    pub sad_accuracy: Option<Stat>,
    pub auc: Option<Stat>,
    pub sdr_db: Option<Stat>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Summary {
    pub config_hash: String,
    pub regimes: Vec<RegimeSummary>,
}

fn stat_of(reports: &[&MetricsReport], get: impl Fn(&MetricsReport) -> Option<f64>) -> Option<Stat> {
    let values: Vec<f64> = reports.iter().filter_map(|r| get(r)).collect();
    Stat::of(&values)
}

/// Groups reports by regime. Reports from different config hashes are
/// refused.
pub fn aggregate(reports: &[MetricsReport]) -> Result<Summary> {
    let first = reports.first().ok_or_else(|| data("no completed runs to aggregate"))?;
    if let Some(odd) = reports.iter().find(|r| r.config_hash != first.config_hash) {
        return Err(data(format!(
            "refusing to aggregate runs from different configs ({} and {})",
            first.config_hash, odd.config_hash
        )));
    }
    let mut regimes = Vec::new();
    for regime in Regime::ALL {
        let group: Vec<&MetricsReport> = reports.iter().filter(|r| r.regime == regime).collect();
        if group.is_empty() {
            continue;
        }
        regimes.push(RegimeSummary {
            regime,
            seeds: group.iter().map(|r| r.seed).collect(),
            sed_accuracy: stat_of(&group, |r| Some(r.sed_accuracy)).expect("non-empty group"),
            sad_accuracy: stat_of(&group, |r| r.sad_accuracy),
            auc: stat_of(&group, |r| r.auc),
            sdr_db: stat_of(&group, |r| r.sdr_db),
        });
    }
    Ok(Summary {
        config_hash: first.config_hash.clone(),
        regimes,
    })
}

/// Markdown table with one column per regime and rows SED accuracy, SAD
/// accuracy and AUC.
pub fn table_markdown(summary: &Summary) -> String {
    let mut t = String::from("| |");
    for r in &summary.regimes {
        let _ = write!(t, " {} |", r.regime);
    }
    t.push_str("\n|---|");
    for _ in &summary.regimes {
        t.push_str("---|");
    }
    t.push('\n');
    let rows: [(&str, fn(&RegimeSummary) -> Option<&Stat>); 3] = [
        ("SED accuracy", |r| Some(&r.sed_accuracy)),
        ("SAD accuracy", |r| r.sad_accuracy.as_ref()),
        ("AUC", |r| r.auc.as_ref()),
    ];
    for (name, get) in rows {
        let _ = write!(t, "| {name} |");
        for r in &summary.regimes {
            let cell = get(r).map(Stat::cell).unwrap_or_else(|| "n/a".into());
            let _ = write!(t, " {cell} |");
        }
        t.push('\n');
    }
    t
}

/// Parses `id,speech,score` rows written by `attack`.
pub fn read_probe_scores(path: &Path) -> Result<(Vec<f64>, Vec<bool>)> {
    let text = std::fs::read_to_string(path).map_err(|e| data(format!("cannot read {}: {e}", path.display())))?;
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let bad = || data(format!("{}:{}: malformed row", path.display(), i + 1));
        let mut cols = line.rsplitn(3, ',');
        let score: f64 = cols.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        let speech = match cols.next() {
            Some("1") => true,
            Some("0") => false,
            _ => return Err(bad()),
        };
        scores.push(score);
        labels.push(speech);
    }
    Ok((scores, labels))
}

fn discover(out: &Path) -> Vec<PathBuf> {
    let mut dirs = Vec::new();
    for regime in Regime::ALL {
        let root = layout::runs_dir(out).join(regime.as_str());
        let Ok(entries) = std::fs::read_dir(&root) else { continue };
        let mut found: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_dir() && p.file_name().is_some_and(|n| n.to_string_lossy().starts_with("seed-")))
            .collect();
        found.sort();
        dirs.extend(found);
    }
    dirs
}

pub fn report(common: &Common, repetitions: Option<usize>, run_dirs: &[PathBuf]) -> Result<()> {
    let cfg = load_config(common)?;
    let out = out_dir(common, &cfg);
    let dest = layout::report_dir(&out);
    guard(&dest.join(layout::SUMMARY), common.overwrite)?;
    let scanned = run_dirs.is_empty();
    let dirs = if scanned { discover(&out) } else { run_dirs.to_vec() };
    let mut reports = Vec::new();
    for dir in &dirs {
        let path = dir.join(layout::ATTACK_REPORT);
        if !path.exists() {
            return Err(data(format!(
                "{} has no {}; run `rdalm attack` first",
                dir.display(),
                layout::ATTACK_REPORT
            )));
        }
        reports.push(read_json::<MetricsReport>(&path)?);
    }
    let summary = aggregate(&reports)?;
    if summary.config_hash != cfg.hash() {
        return Err(data(format!(
            "runs were produced under config hash {}, current is {}",
            summary.config_hash,
            cfg.hash()
        )));
    }
    if scanned {
        let want = repetitions.unwrap_or(cfg.report.repetitions);
        if let Some(r) = summary.regimes.iter().find(|r| r.seeds.len() != want) {
            return Err(data(format!(
                "{} has {} completed runs, expected {want}",
                r.regime,
                r.seeds.len()
            )));
        }
    }
    let mut pooled: BTreeMap<Regime, (Vec<f64>, Vec<bool>)> = BTreeMap::new();
    for (dir, rep) in dirs.iter().zip(&reports) {
        let (s, l) = read_probe_scores(&dir.join(layout::PROBE_SCORES))?;
        let entry = pooled.entry(rep.regime).or_default();
        entry.0.extend(s);
        entry.1.extend(l);
    }
    for (regime, (scores, labels)) in &pooled {
        let (roc, _) = roc_auc(scores, labels).map_err(|e| data(format!("{regime}: {e}")))?;
        write_file(&dest.join(layout::roc_csv(*regime)), &roc.to_csv())?;
    }
    write_json(&dest.join(layout::SUMMARY), &summary)?;
    let table = table_markdown(&summary);
    write_file(&dest.join(layout::TABLE), &table)?;
    print!("{table}");
    info!("wrote report for {} runs to {}", reports.len(), dest.display());
    Ok(())
}
