use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{derive_seed, DatasetManifest, EventLabel, Split};
use crate::{Error, Result};

/// Training share of a stratum of `n` records: `ceil(fraction * n)`.
pub fn train_count(n: usize, fraction: f64) -> usize {
    ((fraction * n as f64) - 1e-9).ceil().max(0.0) as usize
}

/// Assigns `split` over the development pool (train + validation records),
/// stratified by event label and speech flag. Test records are untouched.
/// Within each stratum the record order is shuffled under the seed and the
/// first [`train_count`] records go to training.
pub(crate) fn assign_dev_split(
    strata_keys: &[(EventLabel, bool)],
    train_fraction: f64,
    seed: u64,
) -> Result<Vec<Split>> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "train fraction {train_fraction} outside (0, 1)"
        )));
    }
    let mut strata: BTreeMap<(EventLabel, bool), Vec<usize>> = BTreeMap::new();
    for (i, key) in strata_keys.iter().enumerate() {
        strata.entry(*key).or_default().push(i);
    }
    let mut out = vec![Split::Validation; strata_keys.len()];
    for ((label, speech), mut members) in strata {
        let tag = (label.index() as u64) << 1 | speech as u64;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x5917 + tag));
        members.shuffle(&mut rng);
        for &i in &members[..train_count(members.len(), train_fraction)] {
            out[i] = Split::Train;
        }
    }
    Ok(out)
}

/// Re-draws the train/validation assignment of the development pool.
pub fn split_dev(manifest: &DatasetManifest, train_fraction: f64, seed: u64) -> Result<DatasetManifest> {
    let dev: Vec<usize> = (0..manifest.records.len())
        .filter(|&i| manifest.records[i].split.is_development())
        .collect();
    if dev.is_empty() {
        return Err(Error::invalid("manifest has no development records"));
    }
    let keys: Vec<(EventLabel, bool)> = dev
        .iter()
        .map(|&i| (manifest.records[i].event_label, manifest.records[i].speech_flag))
        .collect();
    let splits = assign_dev_split(&keys, train_fraction, seed)?;
    let mut out = manifest.clone();
    for (&i, split) in dev.iter().zip(splits) {
        out.records[i].split = split;
    }
    out.recipe.train_fraction = train_fraction;
    Ok(out)
}
