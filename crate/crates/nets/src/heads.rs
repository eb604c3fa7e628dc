//! Event classifier `C` and speech discriminator `D` (also used for `D'`
//! and the attacker probe).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rdalm_core::NUM_EVENTS;

use crate::arch::{LayerSpec, DISCRIMINATOR_HIDDEN, LATENT_DIM, LEAKY_SLOPE};
use crate::layers::{sigmoid, Act, Activation, Linear};
use crate::param::{Module, Param};
use crate::tensor::Tensor;

/// Row-wise softmax of `[N, K]` logits.
pub fn softmax(logits: &Tensor) -> Tensor {
    let mut p = logits.clone();
    let (n, _) = logits.dims2();
    for i in 0..n {
        let row = p.sample_mut(i);
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut s = 0.0;
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            s += *v;
        }
        row.iter_mut().for_each(|v| *v /= s);
    }
    p
}

/// One linear layer `64 -> 3` followed by softmax.
#[derive(Clone, Debug)]
pub struct Classifier {
    pub fc: Linear,
}

impl Classifier {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            fc: Linear::new("fc", LATENT_DIM, NUM_EVENTS, &mut rng),
        }
    }

    pub fn logits(&mut self, z: &Tensor, train: bool) -> Tensor {
        self.fc.forward(z, train)
    }

    /// Event posteriors, rows summing to one.
    pub fn forward(&mut self, z: &Tensor) -> Vec<[f64; NUM_EVENTS]> {
        posteriors(&softmax(&self.logits(z, false)))
    }

    /// Gradient w.r.t. `z` given the gradient w.r.t. the logits.
    pub fn backward(&mut self, dlogits: &Tensor) -> Tensor {
        self.fc.backward(dlogits)
    }

    pub fn audit(&self) -> Vec<LayerSpec> {
        vec![LayerSpec::new("linear", self.fc.in_features, self.fc.out_features, 0, 0, &["softmax"])]
    }
}

pub fn posteriors(p: &Tensor) -> Vec<[f64; NUM_EVENTS]> {
    (0..p.batch())
        .map(|i| {
            let mut r = [0.0; NUM_EVENTS];
            r.copy_from_slice(p.sample(i));
            r
        })
        .collect()
}

impl Module for Classifier {
    fn params(&self) -> Vec<&Param> {
        self.fc.params()
    }
    fn params_mut(&mut self) -> Vec<&mut Param> {
        self.fc.params_mut()
    }
}

/// MLP `64 -> 48 -> 32 -> 16 -> 1` with leaky rectification between layers
/// and a sigmoid output.
#[derive(Clone, Debug)]
pub struct Discriminator {
    layers: Vec<Linear>,
    acts: Vec<Act>,
}

impl Discriminator {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut dims = vec![LATENT_DIM];
        dims.extend(DISCRIMINATOR_HIDDEN);
        dims.push(1);
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(&format!("fc{i}"), w[0], w[1], &mut rng))
            .collect();
        let acts = (0..DISCRIMINATOR_HIDDEN.len())
            .map(|_| Act::new(Activation::LeakyRelu(LEAKY_SLOPE)))
            .collect();
        Self { layers, acts }
    }

    /// Pre-sigmoid scores, `[N, 1]`.
    pub fn logits(&mut self, z: &Tensor, train: bool) -> Tensor {
        let mut h = z.clone();
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter_mut().enumerate() {
            h = l.forward(&h, train);
            if i < last {
                h = self.acts[i].forward(&h, train);
            }
        }
        h
    }

    /// Speech posteriors in (0, 1).
    pub fn forward(&mut self, z: &Tensor) -> Vec<f64> {
        self.logits(z, false).data().iter().map(|v| sigmoid(*v)).collect()
    }

    pub fn backward(&mut self, dlogits: &Tensor) -> Tensor {
        let mut d = dlogits.clone();
        let last = self.layers.len() - 1;
        for i in (0..=last).rev() {
            if i < last {
                d = self.acts[i].backward(&d);
            }
            d = self.layers[i].backward(&d);
        }
        d
    }

    pub fn audit(&self) -> Vec<LayerSpec> {
        let last = self.layers.len() - 1;
        self.layers
            .iter()
            .enumerate()
            .map(|(i, l)| {
                let post = if i < last { "leaky_relu" } else { "sigmoid" };
                LayerSpec::new("linear", l.in_features, l.out_features, 0, 0, &[post])
            })
            .collect()
    }
}

impl Module for Discriminator {
    fn params(&self) -> Vec<&Param> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }
    fn params_mut(&mut self) -> Vec<&mut Param> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }
}
