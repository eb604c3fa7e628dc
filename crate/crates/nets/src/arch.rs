//! Architecture descriptors and the layer-walk audit.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Dimension of the latent `z` produced by the extractor.
pub const LATENT_DIM: usize = 64;
pub const DISCRIMINATOR_HIDDEN: [usize; 3] = [48, 32, 16];
pub const LEAKY_SLOPE: f64 = 0.01;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeparatorArch {
    /// Filters of the first encoder block; doubled at every further block.
    pub base_filters: usize,
    /// Number of encoder (and decoder) blocks.
    pub depth: usize,
    pub kernel: usize,
}

impl Default for SeparatorArch {
    fn default() -> Self {
        Self {
            base_filters: 16,
            depth: 6,
            kernel: 5,
        }
    }
}

impl SeparatorArch {
    pub fn validate(&self) -> Result<()> {
        if self.base_filters == 0 || self.depth < 2 || self.kernel % 2 == 0 {
            return Err(Error::invalid(
                "separator needs base_filters > 0, depth >= 2 and an odd kernel",
            ));
        }
        Ok(())
    }

    pub fn encoder_widths(&self) -> Vec<usize> {
        (0..self.depth).map(|i| self.base_filters << i).collect()
    }

    pub fn decoder_widths(&self) -> Vec<usize> {
        (0..self.depth)
            .map(|i| {
                if i + 1 < self.depth {
                    self.base_filters << (self.depth - 2 - i)
                } else {
                    self.base_filters
                }
            })
            .collect()
    }

    /// Both spatial axes are padded to a multiple of this.
    pub fn pad_multiple(&self) -> usize {
        1 << self.depth
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractorArch {
    /// Filters of the four 3x3 convolution blocks.
    pub widths: [usize; 4],
}

impl Default for ExtractorArch {
    fn default() -> Self {
        Self {
            widths: [64, 128, 256, 512],
        }
    }
}

impl ExtractorArch {
    pub fn validate(&self) -> Result<()> {
        if self.widths.contains(&0) {
            return Err(Error::invalid("extractor widths must be positive"));
        }
        Ok(())
    }
}

/// One row of the audit table.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: String,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    /// Activation or normalization applied after the layer, in order.
    pub post: Vec<String>,
}

impl LayerSpec {
    pub(crate) fn new(kind: &str, cin: usize, cout: usize, kernel: usize, stride: usize, post: &[&str]) -> Self {
        Self {
            kind: kind.into(),
            in_channels: cin,
            out_channels: cout,
            kernel,
            stride,
            post: post.iter().map(|s| s.to_string()).collect(),
        }
    }
}
