//! CNN feature extractor `F`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rdalm_core::dsp::{LogMelFeature, MEL_BANDS};

use crate::arch::{ExtractorArch, LayerSpec, LATENT_DIM};
use crate::layers::{Act, Activation, BatchNorm2d, Conv2d, GlobalMaxPool, Linear, MaxPool2};
use crate::param::{Buffer, Module, Param};
use crate::tensor::Tensor;
use crate::{Error, Result};

#[derive(Clone, Debug)]
struct Block {
    conv: Conv2d,
    act: Act,
    bn: BatchNorm2d,
    pool: Option<MaxPool2>,
}

/// Four 3x3 conv blocks (conv, ReLU, batch norm), 2x2 max pooling after the
/// first three, global max pooling and a linear map to the 64-d latent.
#[derive(Clone, Debug)]
pub struct Extractor {
    arch: ExtractorArch,
    blocks: Vec<Block>,
    global: GlobalMaxPool,
    fc: Linear,
}

impl Extractor {
    pub fn new(arch: &ExtractorArch, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut blocks = Vec::new();
        let mut cin = 1;
        for (i, &w) in arch.widths.iter().enumerate() {
            blocks.push(Block {
                conv: Conv2d::new(&format!("block{i}.conv"), cin, w, 3, 1, 1, &mut rng),
                act: Act::new(Activation::Relu),
                bn: BatchNorm2d::new(&format!("block{i}.bn"), w),
                pool: (i < 3).then(MaxPool2::default),
            });
            cin = w;
        }
        Ok(Self {
            arch: arch.clone(),
            blocks,
            global: GlobalMaxPool::default(),
            fc: Linear::new("fc", cin, LATENT_DIM, &mut rng),
        })
    }

    pub fn arch(&self) -> &ExtractorArch {
        &self.arch
    }

    /// Stacks log-mel features of equal length into `[N, 1, T, 64]`.
    pub fn batch(features: &[&LogMelFeature]) -> Result<Tensor> {
        let first = features.first().ok_or_else(|| Error::invalid("empty feature batch"))?;
        let items: Vec<&[f64]> = features.iter().map(|f| f.values.as_slice()).collect();
        Tensor::stack(&items, &[1, first.frames, MEL_BANDS])
    }

    /// `[N, 1, T, 64] -> [N, 64]`.
    pub fn forward(&mut self, x: &Tensor, train: bool) -> Result<Tensor> {
        let (_, c, t, m) = x.dims4();
        if c != 1 || m != MEL_BANDS {
            return Err(Error::shape(format!("extractor expects [N, 1, T, {MEL_BANDS}], got {:?}", x.shape())));
        }
        if t < 8 {
            return Err(Error::shape(format!("{t} frames cannot pass three 2x2 poolings")));
        }
        let mut h = x.clone();
        for b in &mut self.blocks {
            h = b.bn.forward(&b.act.forward(&b.conv.forward(&h, train), train), train);
            if let Some(p) = &mut b.pool {
                h = p.forward(&h, train);
            }
        }
        let g = self.global.forward(&h, train);
        Ok(self.fc.forward(&g, train))
    }

    /// Gradient w.r.t. the input features.
    pub fn backward(&mut self, dz: &Tensor) -> Tensor {
        let mut d = self.global.backward(&self.fc.backward(dz));
        for b in self.blocks.iter_mut().rev() {
            if let Some(p) = &mut b.pool {
                d = p.backward(&d);
            }
            d = b.conv.backward(&b.act.backward(&b.bn.backward(&d)));
        }
        d
    }

    pub fn audit(&self) -> Vec<LayerSpec> {
        let mut out: Vec<LayerSpec> = self
            .blocks
            .iter()
            .map(|b| {
                let c = &b.conv;
                let mut post = vec!["relu", "batch_norm"];
                if b.pool.is_some() {
                    post.push("max_pool2x2");
                }
                LayerSpec::new("conv2d", c.in_channels, c.out_channels, c.kernel, c.stride, &post)
            })
            .collect();
        out.push(LayerSpec::new("global_max_pool", self.fc.in_features, self.fc.in_features, 0, 0, &[]));
        out.push(LayerSpec::new("linear", self.fc.in_features, self.fc.out_features, 0, 0, &[]));
        out
    }
}

impl Module for Extractor {
    fn params(&self) -> Vec<&Param> {
        let mut v = Vec::new();
        for b in &self.blocks {
            v.extend(b.conv.params());
            v.extend(b.bn.params());
        }
        v.extend(self.fc.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = Vec::new();
        for b in &mut self.blocks {
            v.extend(b.conv.params_mut());
            v.extend(b.bn.params_mut());
        }
        v.extend(self.fc.params_mut());
        v
    }

    fn buffers(&self) -> Vec<&Buffer> {
        self.blocks.iter().flat_map(|b| b.bn.buffers()).collect()
    }

    fn buffers_mut(&mut self) -> Vec<&mut Buffer> {
        self.blocks.iter_mut().flat_map(|b| b.bn.buffers_mut()).collect()
    }
}
