//! Augmentation-aware error bounds for self-supervised contrastive learning.
//!
//! This crate is the pure computational core: a semantic-label pixel model,
//! the augmentation operators, Monte-Carlo distance estimators, InfoNCE risk
//! estimators, exhaustive decomposition oracles on finite worlds, bound
//! certificates, and small trainable encoders with analytic gradients.
//!
//! It is `no_std` and only needs `alloc`. File formats, configuration and the
//! command-line driver live in the `augbound` crate.
#![no_std]
#![warn(missing_debug_implementations)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod augment;
pub mod bounds;
pub mod decomposition;
pub mod encoder;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod pixel_model;
pub mod risk;
pub mod seed;

pub(crate) mod math;

pub use augment::{AugDistribution, Augmentation, ColorParams, CropParams, Transform};
pub use bounds::BoundReport;
pub use encoder::{Architecture, Embedder, Encoder, TrainConfig};
pub use error::{Error, Result};
pub use metrics::DistanceEstimate;
pub use pixel_model::{GenerativeConfig, Image, SemanticImage, SemanticMap};
pub use risk::{ContrastiveTuple, Estimate, LossForm};
