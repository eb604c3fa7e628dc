use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rdalm_core::corpus::{build_mixture_corpus, load_manifest, save_manifest, synth_toy_corpus, DatasetManifest, Split};
use rdalm_nets::Separator;
use rdalm_train::history::write_jsonl;
use rdalm_train::{
    evaluate, load_separator, pretrain_separator, save_separator, separation_sdr, train, train_attack_probe, Dataset,
    MetricsReport, TrainConfig, TrainedSystem,
};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{config, data, runtime, CliError, Result};
use crate::{layout, report, Command, Common, RunSelection};

pub fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::SynthData(c) => synth_data(&c),
        Command::BuildData(c) => build_data(&c),
        Command::PretrainSep { common, seed } => pretrain_sep(&common, seed),
        Command::Train { common, runs, parallel } => train_runs(&common, &runs, parallel),
        Command::Attack {
            common,
            runs,
            checkpoint,
            parallel,
        } => attack(&common, &runs, checkpoint, parallel),
        Command::Evaluate {
            common,
            runs,
            checkpoint,
            split,
        } => evaluate_runs(&common, &runs, checkpoint, parse_split(&split)?),
        Command::Report {
            common,
            repetitions,
            run_dirs,
        } => report::report(&common, repetitions, &run_dirs),
    }
}

fn parse_split(s: &str) -> Result<Split> {
    Split::ALL
        .into_iter()
        .find(|x| x.as_str() == s)
        .ok_or_else(|| CliError::Usage(format!("unknown split {s:?}")))
}

pub(crate) fn load_config(common: &Common) -> Result<ExperimentConfig> {
    ExperimentConfig::load(&common.config)
}

pub(crate) fn out_dir(common: &Common, cfg: &ExperimentConfig) -> PathBuf {
    common.out.clone().unwrap_or_else(|| cfg.report.out_dir.clone())
}

/// Refuses to replace `path` unless `--overwrite` was given.
pub(crate) fn guard(path: &Path, overwrite: bool) -> Result<()> {
    if path.exists() && !overwrite {
        return Err(CliError::Usage(format!(
            "{} already exists; pass --overwrite to replace it",
            path.display()
        )));
    }
    Ok(())
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| runtime(format!("cannot create {}: {e}", parent.display())))?;
    }
    std::fs::write(path, contents).map_err(|e| runtime(format!("cannot write {}: {e}", path.display())))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(runtime)?;
    write_file(path, &(text + "\n"))
}

pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| data(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| data(format!("{}: {e}", path.display())))
}

fn stamp_manifest(mut manifest: DatasetManifest, path: &Path, hash: &str) -> Result<DatasetManifest> {
    manifest.config_hash = Some(hash.to_string());
    save_manifest(&manifest, path).map_err(runtime)?;
    Ok(manifest)
}

fn synth_data(common: &Common) -> Result<()> {
    let cfg = load_config(common)?;
    let dir = common.out.clone().unwrap_or_else(|| cfg.data.dir.clone());
    let path = layout::manifest(&dir);
    guard(&path, common.overwrite)?;
    let toy = cfg.data.toy.clone().unwrap_or_default();
    toy.validate(&cfg.data.recipe).map_err(config)?;
    std::fs::create_dir_all(&dir).map_err(|e| runtime(format!("cannot create {}: {e}", dir.display())))?;
    let manifest = synth_toy_corpus(&toy, &cfg.data.recipe, cfg.data.seed, &dir).map_err(runtime)?;
    let manifest = stamp_manifest(manifest, &path, &cfg.hash())?;
    info!("wrote {} records to {}", manifest.records.len(), path.display());
    Ok(())
}

fn build_data(common: &Common) -> Result<()> {
    let cfg = load_config(common)?;
    let sources = cfg
        .data
        .sources
        .clone()
        .ok_or_else(|| config("build-data needs a [data.sources] block or the RDALM_EVENT_*/RDALM_SPEECH_* variables"))?;
    let dir = common.out.clone().unwrap_or_else(|| cfg.data.dir.clone());
    let path = layout::manifest(&dir);
    guard(&path, common.overwrite)?;
    let manifest = build_mixture_corpus(&sources, &cfg.data.recipe, cfg.data.seed, &dir).map_err(|e| match e {
        rdalm_core::Error::Corpus(_) | rdalm_core::Error::Wav { .. } | rdalm_core::Error::Manifest { .. } => data(e),
        other => runtime(other),
    })?;
    let manifest = stamp_manifest(manifest, &path, &cfg.hash())?;
    for c in manifest.counts() {
        info!("{} {} speech={} : {}", c.split, c.event_label, c.speech_flag, c.count);
    }
    Ok(())
}

pub(crate) fn load_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    let path = layout::manifest(&cfg.data.dir);
    if !path.exists() {
        return Err(data(format!(
            "no manifest at {}; run `rdalm synth-data` or `rdalm build-data` first",
            path.display()
        )));
    }
    let manifest = load_manifest(&path).map_err(data)?;
    let hash = cfg.hash();
    if manifest.config_hash.as_deref() != Some(hash.as_str()) {
        warn!(
            "manifest {} was produced under config hash {:?}, current is {hash}",
            path.display(),
            manifest.config_hash
        );
    }
    Dataset::load(&manifest, &cfg.dsp).map_err(data)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeparatorReport {
    pub config_hash: String,
    pub seed: u64,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    /// Mean SDR in dB over the test speech pairs, when there are any.
    pub test_sdr_db: Option<f64>,
}

fn pretrain_sep(common: &Common, seed: Option<u64>) -> Result<()> {
    let cfg = load_config(common)?;
    let out = layout::separator_dir(&out_dir(common, &cfg));
    let ck = out.join(layout::CHECKPOINT);
    guard(&ck, common.overwrite)?;
    let data_set = load_dataset(&cfg)?;
    let tc = TrainConfig {
        seed: seed.unwrap_or(cfg.train.seed),
        ..cfg.train.clone()
    };
    let hash = cfg.hash();
    let mut result = pretrain_separator(&data_set, &cfg.model.separator, &tc).map_err(|e| match e {
        rdalm_train::Error::InvalidArgument(_) => data(e),
        other => runtime(other),
    })?;
    let sdr = separation_sdr(&mut result.separator, &data_set.pairs(Split::Test), None, tc.pretrain_batch_size)
        .map_err(runtime)?;
    save_separator(&ck, &result.separator, result.best_val_loss, result.best_epoch, &hash).map_err(runtime)?;
    write_jsonl(&out.join(layout::HISTORY), &result.history).map_err(runtime)?;
    let rep = SeparatorReport {
        config_hash: hash,
        seed: tc.seed,
        best_epoch: result.best_epoch,
        best_val_loss: result.best_val_loss,
        test_sdr_db: sdr,
    };
    write_json(&out.join(layout::SEPARATOR_REPORT), &rep)?;
    info!("separator: best epoch {}, test SDR {:?} dB", rep.best_epoch, rep.test_sdr_db);
    Ok(())
}

pub(crate) fn seeds(cfg: &ExperimentConfig, base: Option<u64>, repetitions: Option<usize>) -> Result<Vec<u64>> {
    let n = repetitions.unwrap_or(cfg.report.repetitions);
    if n == 0 {
        return Err(CliError::Usage("--repetitions must be at least 1".into()));
    }
    let base = base.unwrap_or(cfg.train.seed);
    Ok((0..n as u64).map(|k| base + k).collect())
}

fn load_pretrained(cfg: &ExperimentConfig, out: &Path, common: &Common) -> Result<Separator> {
    let path = layout::separator_dir(out).join(layout::CHECKPOINT);
    if !path.exists() {
        return Err(data(format!(
            "no separator checkpoint at {}; run `rdalm pretrain-sep --config {}` first",
            path.display(),
            common.config.display()
        )));
    }
    let (sep, hash) = load_separator(&path).map_err(data)?;
    if hash != cfg.hash() {
        return Err(config(format!(
            "separator {} was trained under config hash {hash}, current is {}; rerun `rdalm pretrain-sep`",
            path.display(),
            cfg.hash()
        )));
    }
    Ok(sep)
}

/// Runs `job` once per item, on scoped threads when `parallel` is set, and
/// returns the first error.
fn for_each<T: Sync>(items: &[T], parallel: bool, job: impl Fn(&T) -> Result<()> + Sync) -> Result<()> {
    if !parallel {
        return items.iter().try_for_each(job);
    }
    std::thread::scope(|s| {
        let handles: Vec<_> = items.iter().map(|it| s.spawn(|| job(it))).collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(runtime("worker thread panicked"))))
            .collect::<Vec<_>>()
            .into_iter()
            .collect()
    })
}

fn train_runs(common: &Common, sel: &RunSelection, parallel: bool) -> Result<()> {
    let cfg = load_config(common)?;
    let out = out_dir(common, &cfg);
    let regime = sel.regime.unwrap_or(cfg.train.regime);
    let seeds = seeds(&cfg, sel.seed, sel.repetitions)?;
    for &s in &seeds {
        guard(&layout::run_dir(&out, regime, s).join(layout::CHECKPOINT), common.overwrite)?;
    }
    let separator = match regime.needs_pretrained_separator() {
        true => Some(load_pretrained(&cfg, &out, common)?),
        false => None,
    };
    let data_set = load_dataset(&cfg)?;
    let hash = cfg.hash();
    for_each(&seeds, parallel, |&seed| {
        let tc = TrainConfig {
            regime,
            seed,
            ..cfg.train.clone()
        };
        let dir = layout::run_dir(&out, regime, seed);
        let sys = train(&data_set, &tc, &cfg.model, separator.as_ref(), &hash).map_err(runtime)?;
        std::fs::create_dir_all(&dir).map_err(|e| runtime(format!("cannot create {}: {e}", dir.display())))?;
        sys.save(&dir.join(layout::CHECKPOINT)).map_err(runtime)?;
        write_jsonl(&dir.join(layout::HISTORY), &sys.history).map_err(runtime)?;
        info!(
            "{regime} seed {seed}: {} epochs, best {}, {} refreshes",
            sys.history.len(),
            sys.best_epoch,
            sys.refreshes
        );
        Ok(())
    })
}

/// Checkpoints selected by `--checkpoint` or by regime and seeds.
fn selected_checkpoints(
    cfg: &ExperimentConfig,
    common: &Common,
    sel: &RunSelection,
    checkpoint: Option<PathBuf>,
) -> Result<Vec<PathBuf>> {
    if let Some(path) = checkpoint {
        return Ok(vec![path]);
    }
    let out = out_dir(common, cfg);
    let regime = sel.regime.unwrap_or(cfg.train.regime);
    Ok(seeds(cfg, sel.seed, sel.repetitions)?
        .into_iter()
        .map(|s| layout::run_dir(&out, regime, s).join(layout::CHECKPOINT))
        .collect())
}

fn load_system(path: &Path, cfg: &ExperimentConfig) -> Result<TrainedSystem> {
    if !path.exists() {
        return Err(data(format!(
            "no checkpoint at {}; run `rdalm train` first",
            path.display()
        )));
    }
    let sys = TrainedSystem::load(path).map_err(data)?;
    if sys.config_hash != cfg.hash() {
        return Err(config(format!(
            "{} was trained under config hash {}, current is {}",
            path.display(),
            sys.config_hash,
            cfg.hash()
        )));
    }
    Ok(sys)
}

fn sibling(checkpoint: &Path, name: &str) -> PathBuf {
    checkpoint.parent().unwrap_or(Path::new(".")).join(name)
}

fn attack(common: &Common, sel: &RunSelection, checkpoint: Option<PathBuf>, parallel: bool) -> Result<()> {
    let cfg = load_config(common)?;
    let checkpoints = selected_checkpoints(&cfg, common, sel, checkpoint)?;
    for ck in &checkpoints {
        guard(&sibling(ck, layout::ATTACK_REPORT), common.overwrite)?;
    }
    let data_set = load_dataset(&cfg)?;
    for_each(&checkpoints, parallel, |ck| {
        let mut sys = load_system(ck, &cfg)?;
        let tc = TrainConfig {
            regime: sys.regime,
            seed: sys.seed,
            ..cfg.train.clone()
        };
        let (mut probe, rep) = train_attack_probe(&mut sys, &data_set, &tc).map_err(|e| match e {
            rdalm_train::Error::InvalidArgument(_) => data(e),
            other => runtime(other),
        })?;
        let z = sys.latents(&data_set, Split::Test).map_err(runtime)?;
        let scores = probe.forward(&z);
        let mut csv = String::from("id,speech,score\n");
        for (ex, s) in data_set.split(Split::Test).iter().zip(&scores) {
            let _ = writeln!(csv, "{},{},{s}", ex.id, ex.speech as u8);
        }
        write_file(&sibling(ck, layout::PROBE_SCORES), &csv)?;
        write_json(&sibling(ck, layout::ATTACK_REPORT), &rep)?;
        info!(
            "{} seed {}: SED {:.3}, SAD {:.3}, AUC {:.3}",
            rep.regime,
            rep.seed,
            rep.sed_accuracy,
            rep.sad_accuracy.unwrap_or(f64::NAN),
            rep.auc.unwrap_or(f64::NAN)
        );
        Ok(())
    })
}

fn evaluate_runs(common: &Common, sel: &RunSelection, checkpoint: Option<PathBuf>, split: Split) -> Result<()> {
    let cfg = load_config(common)?;
    let checkpoints = selected_checkpoints(&cfg, common, sel, checkpoint)?;
    let name = layout::eval_report(split);
    for ck in &checkpoints {
        guard(&sibling(ck, &name), common.overwrite)?;
    }
    let data_set = load_dataset(&cfg)?;
    if !data_set.has_split(split) {
        return Err(data(format!("the corpus has no {split} split")));
    }
    for ck in &checkpoints {
        let mut sys = load_system(ck, &cfg)?;
        let rep: MetricsReport = evaluate(&mut sys, &data_set, split, None).map_err(runtime)?;
        write_json(&sibling(ck, &name), &rep)?;
        println!(
            "{} seed {} {split}: SED {:.4}{}",
            rep.regime,
            rep.seed,
            rep.sed_accuracy,
            rep.sdr_db.map(|d| format!(", SDR {d:.2} dB")).unwrap_or_default()
        );
    }
    Ok(())
}

