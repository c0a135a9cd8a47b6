//! Open-set speaker identification.
//!
//! Three classifier architectures share one MFCC front-end:
//!
//! * a generative GMM system, where each enrolled speaker is a diagonal
//!   Gaussian mixture and the best speaker's mean log-likelihood is
//!   normalized by a universal background model (UBM);
//! * a bank of 2-class neural networks, one per speaker, trained
//!   one-against-all with negatives sampled from the UBM;
//! * a single multi-class neural network with one softmax output per
//!   enrolled speaker.
//!
//! Every architecture splits a decision into a closed-set step (pick the
//! best enrolled speaker) and a verification step (compare its score with a
//! speaker-independent threshold). The [`eval`] module measures the
//! closed-set recognition rate and the open-set equal error rate, where
//! false acceptance is balanced against false rejection plus mislabeling.
//!
//! The [`pipeline`] module drives the whole flow over files on disk and
//! backs the `osid` command-line tool.

// `!(x > 0.0)` is how validation rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Numeric loops index several parallel arrays at once.
#![allow(clippy::needless_range_loop)]

mod binio;
pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod features;
pub mod gmm;
pub mod mlp;
pub mod openset;
pub mod pipeline;
pub mod synth;

pub use error::{Error, Result};
