use rand::Rng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::{Error, Result};

/// A trainable array with its gradient accumulator.
#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<f64>,
    pub grad: Vec<f64>,
    /// Frozen parameters accumulate no gradient and are skipped by optimizers.
    pub frozen: bool,
}

impl Param {
    pub fn new(name: impl Into<String>, shape: &[usize], value: Vec<f64>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), value.len());
        Self {
            name: name.into(),
            shape: shape.to_vec(),
            grad: vec![0.0; value.len()],
            value,
            frozen: false,
        }
    }

    pub fn filled(name: impl Into<String>, shape: &[usize], v: f64) -> Self {
        Self::new(name, shape, vec![v; shape.iter().product()])
    }

    /// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn fan_in_uniform(name: impl Into<String>, shape: &[usize], fan_in: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let n = shape.iter().product();
        let value = (0..n).map(|_| rng.random_range(-bound..=bound)).collect();
        Self::new(name, shape, value)
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }

    /// Gradient buffer to accumulate into, or `None` when frozen.
    pub(crate) fn grad_sink(&mut self) -> Option<&mut [f64]> {
        (!self.frozen).then_some(self.grad.as_mut_slice())
    }
}

/// Non-trainable state saved with a network (batch-norm running statistics).
#[derive(Clone, Debug, PartialEq)]
pub struct Buffer {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<f64>,
}

impl Buffer {
    pub fn filled(name: impl Into<String>, shape: &[usize], v: f64) -> Self {
        Self {
            name: name.into(),
            shape: shape.to_vec(),
            value: vec![v; shape.iter().product()],
        }
    }
}

/// Parameter and buffer traversal shared by layers and networks.
pub trait Module {
    fn params(&self) -> Vec<&Param>;
    fn params_mut(&mut self) -> Vec<&mut Param>;

    fn buffers(&self) -> Vec<&Buffer> {
        Vec::new()
    }

    fn buffers_mut(&mut self) -> Vec<&mut Buffer> {
        Vec::new()
    }

    fn zero_grad(&mut self) {
        self.params_mut().into_iter().for_each(Param::zero_grad);
    }

    fn set_frozen(&mut self, frozen: bool) {
        for p in self.params_mut() {
            p.frozen = frozen;
        }
    }

    fn is_frozen(&self) -> bool {
        self.params().iter().all(|p| p.frozen)
    }

    fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// Hex SHA-256 over names, shapes and little-endian values of every
    /// parameter and buffer.
    fn param_hash(&self) -> String {
        let mut h = Sha256::new();
        let mut feed = |name: &str, shape: &[usize], value: &[f64]| {
            h.update(name.as_bytes());
            for d in shape {
                h.update((*d as u64).to_le_bytes());
            }
            for v in value {
                h.update(v.to_le_bytes());
            }
        };
        for p in self.params() {
            feed(&p.name, &p.shape, &p.value);
        }
        for b in self.buffers() {
            feed(&b.name, &b.shape, &b.value);
        }
        hex::encode(h.finalize())
    }

    /// Copies every parameter value and buffer from `src` (same architecture).
    /// Gradients and frozen flags of `self` are left as they are.
    fn copy_from(&mut self, src: &Self) -> Result<()>
    where
        Self: Sized,
    {
        let from = src.params();
        let mut to = self.params_mut();
        if from.len() != to.len() {
            return Err(Error::shape(format!("{} vs {} parameter arrays", from.len(), to.len())));
        }
        for (t, f) in to.iter_mut().zip(&from) {
            if t.shape != f.shape {
                return Err(Error::shape(format!("{}: {:?} vs {:?}", t.name, t.shape, f.shape)));
            }
        }
        for (t, f) in to.iter_mut().zip(&from) {
            t.value.copy_from_slice(&f.value);
        }
        let from = src.buffers();
        for (t, f) in self.buffers_mut().into_iter().zip(from) {
            t.value.copy_from_slice(&f.value);
        }
        Ok(())
    }
}

/// Names every tensor with a prefix, `prefix.name`.
pub(crate) fn prefixed(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}
