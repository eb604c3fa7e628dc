//! Signal front end, dataset construction and evaluation metrics for
//! privacy-preserving sound event detection.
//!
//! The crate is free of any training machinery so that it can be reused from
//! the command line tools, the training engine and the browser demo alike.

pub mod corpus;
pub mod dsp;
pub mod error;
pub mod metrics;
pub mod wav;

pub use error::{Error, Result};

/// Target sound event classes, in label-index order.
pub const NUM_EVENTS: usize = 3;
