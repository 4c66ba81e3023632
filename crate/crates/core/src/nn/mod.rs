//! Small dense networks with hand-written reverse mode, Adam, and a
//! categorical policy head.

mod adam;
mod categorical;
mod mlp;

pub use adam::{clip_global_norm, global_norm, AdamState};
pub use categorical::{argmax, log_sum_exp, Categorical};
pub use mlp::{ForwardCache, Mlp, MlpRecord};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite parameter")]
    NonFinite,
}

/// Hidden layer widths used by every agent network.
pub const DEFAULT_HIDDEN: [usize; 2] = [64, 64];

pub fn layer_sizes(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut sizes = Vec::with_capacity(hidden.len() + 2);
    sizes.push(input);
    sizes.extend_from_slice(hidden);
    sizes.push(output);
    sizes
}
