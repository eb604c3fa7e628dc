//! U-Net mask estimator.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rdalm_core::dsp::{MagnitudeSpectrogram, SpectralMask};

use crate::arch::{LayerSpec, SeparatorArch, LEAKY_SLOPE};
use crate::layers::{Act, Activation, BatchNorm2d, Conv2d, ConvTranspose2d};
use crate::param::{Buffer, Module, Param};
use crate::tensor::Tensor;
use crate::{Error, Result};

#[derive(Clone, Debug)]
struct Block<C> {
    conv: C,
    bn: BatchNorm2d,
    act: Act,
}

/// Encoder of strided 5x5 convolutions with batch norm and leaky
/// rectification, a mirrored decoder of transposed convolutions with
/// concatenation skips, and a 1x1 sigmoid output producing the mask.
#[derive(Clone, Debug)]
pub struct Separator {
    arch: SeparatorArch,
    encoder: Vec<Block<Conv2d>>,
    decoder: Vec<Block<ConvTranspose2d>>,
    output: Conv2d,
    sigmoid: Act,
    skip_split: Vec<usize>,
}

fn round_up(v: usize, m: usize) -> usize {
    v.div_ceil(m) * m
}

impl Separator {
    pub fn new(arch: &SeparatorArch, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = arch.kernel;
        let enc_w = arch.encoder_widths();
        let dec_w = arch.decoder_widths();
        let mut encoder = Vec::new();
        let mut cin = 1;
        for (i, &w) in enc_w.iter().enumerate() {
            encoder.push(Block {
                conv: Conv2d::new(&format!("enc{i}.conv"), cin, w, k, 2, k / 2, &mut rng),
                bn: BatchNorm2d::new(&format!("enc{i}.bn"), w),
                act: Act::new(Activation::LeakyRelu(LEAKY_SLOPE)),
            });
            cin = w;
        }
        let mut decoder = Vec::new();
        let mut skip_split = Vec::new();
        for (i, &w) in dec_w.iter().enumerate() {
            let cin = if i == 0 {
                enc_w[arch.depth - 1]
            } else {
                skip_split.push(dec_w[i - 1]);
                dec_w[i - 1] + enc_w[arch.depth - 1 - i]
            };
            decoder.push(Block {
                conv: ConvTranspose2d::new(&format!("dec{i}.conv"), cin, w, k, 2, k / 2, 1, &mut rng),
                bn: BatchNorm2d::new(&format!("dec{i}.bn"), w),
                act: Act::new(Activation::Relu),
            });
        }
        let output = Conv2d::new("out.conv", dec_w[arch.depth - 1], 1, 1, 1, 0, &mut rng);
        Ok(Self {
            arch: arch.clone(),
            encoder,
            decoder,
            output,
            sigmoid: Act::new(Activation::Sigmoid),
            skip_split,
        })
    }

    pub fn arch(&self) -> &SeparatorArch {
        &self.arch
    }

    /// Padded `(frames, bins)` the network runs on for a given input size.
    pub fn padded_dims(&self, frames: usize, bins: usize) -> (usize, usize) {
        let m = self.arch.pad_multiple();
        (round_up(frames, m), round_up(bins, m))
    }

    /// Zero-pads spectrograms of one shape into a `[N, 1, H, W]` batch.
    pub fn pad_batch(&self, specs: &[&MagnitudeSpectrogram]) -> Result<Tensor> {
        let first = specs.first().ok_or_else(|| Error::invalid("empty spectrogram batch"))?;
        let (t, f) = (first.frames, first.bins);
        let (h, w) = self.padded_dims(t, f);
        let mut out = Tensor::zeros(&[specs.len(), 1, h, w]);
        for (i, s) in specs.iter().enumerate() {
            if s.frames != t || s.bins != f {
                return Err(Error::shape(format!(
                    "batch mixes {t}x{f} and {}x{} spectrograms",
                    s.frames, s.bins
                )));
            }
            let dst = out.sample_mut(i);
            for r in 0..t {
                dst[r * w..r * w + f].copy_from_slice(s.row(r));
            }
        }
        Ok(out)
    }

    /// Mask on the padded grid, `[N, 1, H, W]` in (0, 1). `H` and `W` must be
    /// multiples of `2^depth`.
    pub fn forward_tensor(&mut self, x: &Tensor, train: bool) -> Result<Tensor> {
        let (_, c, h, w) = x.dims4();
        let m = self.arch.pad_multiple();
        if c != 1 || h % m != 0 || w % m != 0 {
            return Err(Error::shape(format!(
                "separator input [{c}, {h}, {w}] must be one channel with sides divisible by {m}"
            )));
        }
        let mut skips: Vec<Tensor> = Vec::with_capacity(self.arch.depth);
        let mut h = x.clone();
        for b in &mut self.encoder {
            h = b.act.forward(&b.bn.forward(&b.conv.forward(&h, train), train), train);
            skips.push(h.clone());
        }
        let depth = self.arch.depth;
        for i in 0..depth {
            let inp = if i == 0 {
                skips[depth - 1].clone()
            } else {
                Tensor::concat_channels(&h, &skips[depth - 1 - i])
            };
            let b = &mut self.decoder[i];
            h = b.act.forward(&b.bn.forward(&b.conv.forward(&inp, train), train), train);
        }
        let logits = self.output.forward(&h, train);
        Ok(self.sigmoid.forward(&logits, train))
    }

    /// Backpropagates a gradient w.r.t. the padded mask; returns the gradient
    /// w.r.t. the padded input.
    pub fn backward(&mut self, dmask: &Tensor) -> Tensor {
        let depth = self.arch.depth;
        let mut d = self.output.backward(&self.sigmoid.backward(dmask));
        let mut skip_grads: Vec<Option<Tensor>> = vec![None; depth];
        for i in (0..depth).rev() {
            let b = &mut self.decoder[i];
            let dinp = b.conv.backward(&b.bn.backward(&b.act.backward(&d)));
            if i == 0 {
                skip_grads[depth - 1] = Some(dinp);
            } else {
                let (dprev, dskip) = Tensor::split_channels(&dinp, self.skip_split[i - 1]);
                skip_grads[depth - 1 - i] = Some(dskip);
                d = dprev;
            }
        }
        let mut carry: Option<Tensor> = None;
        for j in (0..depth).rev() {
            let mut g = skip_grads[j].take().expect("every encoder output feeds the decoder");
            if let Some(c) = carry.take() {
                g.add_assign(&c);
            }
            let b = &mut self.encoder[j];
            carry = Some(b.conv.backward(&b.bn.backward(&b.act.backward(&g))));
        }
        carry.expect("depth >= 1")
    }

    /// Crops sample `i` of a padded `[N, 1, H, W]` mask back to `frames x bins`.
    pub fn crop(mask: &Tensor, i: usize, frames: usize, bins: usize) -> Result<SpectralMask> {
        let (_, _, _, w) = mask.dims4();
        let s = mask.sample(i);
        let mut values = Vec::with_capacity(frames * bins);
        for r in 0..frames {
            values.extend_from_slice(&s[r * w..r * w + bins]);
        }
        Ok(SpectralMask::new(frames, bins, values)?)
    }

    /// Inference-mode mask for one spectrogram (zero-pad, run, crop).
    pub fn separate(&mut self, spec: &MagnitudeSpectrogram) -> Result<SpectralMask> {
        Ok(self.separate_batch(&[spec])?.remove(0))
    }

    pub fn separate_batch(&mut self, specs: &[&MagnitudeSpectrogram]) -> Result<Vec<SpectralMask>> {
        let x = self.pad_batch(specs)?;
        let m = self.forward_tensor(&x, false)?;
        (0..specs.len())
            .map(|i| Self::crop(&m, i, specs[i].frames, specs[i].bins))
            .collect()
    }

    /// Layer walk in forward order.
    pub fn audit(&self) -> Vec<LayerSpec> {
        let mut out = Vec::new();
        for b in &self.encoder {
            let c = &b.conv;
            out.push(LayerSpec::new("conv2d", c.in_channels, c.out_channels, c.kernel, c.stride, &["batch_norm", "leaky_relu"]));
        }
        for b in &self.decoder {
            let c = &b.conv;
            out.push(LayerSpec::new("conv_transpose2d", c.in_channels, c.out_channels, c.kernel, c.stride, &["batch_norm", "relu"]));
        }
        let o = &self.output;
        out.push(LayerSpec::new("conv2d", o.in_channels, o.out_channels, o.kernel, o.stride, &["sigmoid"]));
        out
    }
}

impl Module for Separator {
    fn params(&self) -> Vec<&Param> {
        let mut v = Vec::new();
        for b in &self.encoder {
            v.extend(b.conv.params());
            v.extend(b.bn.params());
        }
        for b in &self.decoder {
            v.extend(b.conv.params());
            v.extend(b.bn.params());
        }
        v.extend(self.output.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = Vec::new();
        for b in &mut self.encoder {
            v.extend(b.conv.params_mut());
            v.extend(b.bn.params_mut());
        }
        for b in &mut self.decoder {
            v.extend(b.conv.params_mut());
            v.extend(b.bn.params_mut());
        }
        v.extend(self.output.params_mut());
        v
    }

    fn buffers(&self) -> Vec<&Buffer> {
        let mut v = Vec::new();
        for b in &self.encoder {
            v.extend(b.bn.buffers());
        }
        for b in &self.decoder {
            v.extend(b.bn.buffers());
        }
        v
    }

    fn buffers_mut(&mut self) -> Vec<&mut Buffer> {
        let mut v = Vec::new();
        for b in &mut self.encoder {
            v.extend(b.bn.buffers_mut());
        }
        for b in &mut self.decoder {
            v.extend(b.bn.buffers_mut());
        }
        v
    }
}
