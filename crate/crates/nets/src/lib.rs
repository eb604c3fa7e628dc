//! Networks for mask-based, adversarially trained sound event detection.
//!
//! Everything runs in `f64` on the CPU with hand-written backward passes;
//! convolutions lower to `im2col` + GEMM.

pub mod arch;
pub mod checkpoint;
mod error;
pub mod extractor;
pub mod frontend;
pub mod heads;
pub mod layers;
pub mod loss;
pub mod optim;
pub mod param;
pub mod separator;
pub mod tensor;

pub use arch::{ExtractorArch, LayerSpec, SeparatorArch, DISCRIMINATOR_HIDDEN, LATENT_DIM};
pub use checkpoint::Checkpoint;
pub use error::{Error, Result};
pub use extractor::Extractor;
pub use frontend::MaskedLogMel;
pub use heads::{Classifier, Discriminator};
pub use loss::{grl_backward, grl_forward, sigmoid_bce, softmax_cross_entropy};
pub use optim::{Adam, Optimizer, Sgd};
pub use param::{Buffer, Module, Param};
pub use separator::Separator;
pub use tensor::Tensor;
