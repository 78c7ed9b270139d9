//! Knowledge graph embeddings trained with a denoising auxiliary loss, and
//! randomized-smoothing certification of their link predictions.
//!
//! The crate is organised bottom-up:
//!
//! - [`graph`]: triple files, reverse-relation augmentation, filter index
//! - [`models`]: TransE / DistMult / ComplEx / RotatE scoring and gradients
//! - [`train`]: sigma-quantile noise, denoising loss, joint objective, optimizer
//! - [`stats`]: normal quantile and Clopper-Pearson bounds
//! - [`certify`]: certified radius and ACR / CA aggregates
//! - [`eval`]: filtered ranking, perturbed evaluation, multi-hop path queries

pub mod certify;
pub mod error;
pub mod eval;
pub mod graph;
pub mod models;
pub mod rng;
pub mod stats;
pub mod synthetic;
pub mod train;

pub use certify::{CertConfig, CertificationRecord, RobustnessReport};
pub use error::{Error, Result};
pub use eval::{EvalCondition, PathQuery, RankingMetrics};
pub use graph::{FilterIndex, KnowledgeGraph, Query, Split, Triple};
pub use models::{EmbeddingModel, Family};
pub use train::{LossReport, NoiseDraw, OptimizerKind, SigmaRefresh, TrainConfig};
