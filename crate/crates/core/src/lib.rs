//! Collaborative self-supervised learning for radiomic feature maps.
//!
//! Radiomic data is a set of per-ROI feature vectors with no spatial or
//! sequential order. This crate pretrains a position-free Transformer on two
//! collaborative pretext tasks — masked-ROI reconstruction and
//! subject-similarity discrimination — then fine-tunes it for downstream
//! classification or regression. It also ships:
//!
//! - a Bregman-divergence toolkit that verifies the algebraic identities the
//!   joint objective rests on,
//! - a moment-matched synthetic data generator with controllable
//!   class-separation difficulty,
//! - a nested cross-validation harness with an ablation sweep runner,
//! - a CLI exposing all of the above.

pub mod augment;
pub mod bregman;
pub mod cli;
pub mod data;
pub mod error;
pub mod losses;
pub mod nn;
pub mod pipeline;
pub mod sim;

pub use error::{Error, Result};
