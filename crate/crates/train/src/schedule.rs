//! Early stopping, shuffled batching and optimizer selection.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rdalm_nets::{Adam, Optimizer, Param, Sgd};

use crate::config::OptimizerKind;

/// Patience counter on a loss that should decrease.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    bad_epochs: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::INFINITY,
            bad_epochs: 0,
        }
    }

    /// Records one epoch's value. Returns whether it is a new best; only a
    /// strict decrease counts.
    pub fn observe(&mut self, value: f64) -> bool {
        if value < self.best {
            self.best = value;
            self.bad_epochs = 0;
            true
        } else {
            self.bad_epochs += 1;
            false
        }
    }

    pub fn should_stop(&self) -> bool {
        self.bad_epochs >= self.patience
    }

    pub fn best(&self) -> f64 {
        self.best
    }
}

/// Shuffled mini-batches of `0..n`. A trailing batch of one is dropped
/// because batch normalization cannot use it.
pub fn batches(n: usize, batch_size: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order
        .chunks(batch_size)
        .filter(|c| c.len() > 1)
        .map(<[usize]>::to_vec)
        .collect()
}

/// Sequential, unshuffled chunks for inference.
pub fn chunks(n: usize, size: usize) -> impl Iterator<Item = std::ops::Range<usize>> {
    (0..n).step_by(size.max(1)).map(move |s| s..(s + size).min(n))
}

#[derive(Clone, Debug)]
pub enum Opt {
    Adam(Adam),
    Sgd(Sgd),
}

impl Opt {
    pub fn new(kind: OptimizerKind, lr: f64) -> Self {
        match kind {
            OptimizerKind::Adam => Opt::Adam(Adam::new(lr)),
            OptimizerKind::Sgd => Opt::Sgd(Sgd { lr }),
        }
    }

    pub fn reset(&mut self) {
        if let Opt::Adam(a) = self {
            a.reset();
        }
    }
}

impl Optimizer for Opt {
    fn step(&mut self, params: Vec<&mut Param>) -> rdalm_nets::Result<()> {
        match self {
            Opt::Adam(a) => a.step(params),
            Opt::Sgd(s) => s.step(params),
        }
    }

    fn learning_rate(&self) -> f64 {
        match self {
            Opt::Adam(a) => a.learning_rate(),
            Opt::Sgd(s) => s.learning_rate(),
        }
    }
}
