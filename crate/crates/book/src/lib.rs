//! The guide under `book/src`, one module per chapter, so that
//! `cargo test` runs every code block in it.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/features.md")]
pub mod features {}
#[doc = include_str!("../../../book/src/gmm.md")]
pub mod gmm {}
#[doc = include_str!("../../../book/src/neural-networks.md")]
pub mod neural_networks {}
#[doc = include_str!("../../../book/src/open-set.md")]
pub mod open_set {}
#[doc = include_str!("../../../book/src/evaluation.md")]
pub mod evaluation {}
#[doc = include_str!("../../../book/src/pipeline.md")]
pub mod pipeline {}
