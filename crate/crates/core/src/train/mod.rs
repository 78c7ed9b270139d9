//! Denoising training loop.
//!
//! Each batch step draws Gaussian noise for every head entity, evaluates the
//! joint objective `L = L_o + λ L_d` and applies one optimizer update.

mod loss;
mod noise;
mod optim;

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{self, EvalCondition};
use crate::graph::{FilterIndex, KnowledgeGraph, Split, Triple};
use crate::models::{EmbeddingModel, Family};
use crate::rng;

pub use loss::{
    denoising_loss, joint_objective, original_loss, BatchLosses, Gradients,
};
pub use noise::{perturb_entity, sigma_quantile, NoiseDraw};
pub use optim::{Optimizer, OptimizerKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SigmaRefresh {
    /// Recompute σ from the entity table at the start of every epoch.
    PerEpoch,
    /// Compute σ once from the initial table.
    Once,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub family: Family,
    pub dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    /// Noise scale α applied to the σ-scaled Gaussian noise.
    pub alpha: f64,
    /// Weight λ of the denoising loss.
    pub lambda: f64,
    pub sigma_refresh: SigmaRefresh,
    pub seed: u64,
    pub init_scale: f64,
    pub label_smoothing: f64,
    /// Probability that a batch triple's head is perturbed.
    pub perturb_prob: f64,
    /// Validation MRR every this many epochs (0 disables).
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            family: Family::RotatE,
            dim: 32,
            epochs: 100,
            batch_size: 128,
            learning_rate: 0.01,
            optimizer: OptimizerKind::default(),
            alpha: 0.5,
            lambda: 0.2,
            sigma_refresh: SigmaRefresh::PerEpoch,
            seed: 0,
            init_scale: 0.1,
            label_smoothing: 0.1,
            perturb_prob: 1.0,
            eval_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.dim == 0 {
            return bad("train.dim must be at least 1".into());
        }
        if self.batch_size == 0 {
            return bad("train.batch_size must be at least 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("train.learning_rate must be > 0, got {}", self.learning_rate));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad(format!("train.alpha must be >= 0, got {}", self.alpha));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("train.lambda must be >= 0, got {}", self.lambda));
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return bad(format!(
                "train.label_smoothing must be in [0, 1), got {}",
                self.label_smoothing
            ));
        }
        if !(0.0..=1.0).contains(&self.perturb_prob) {
            return bad(format!(
                "train.perturb_prob must be in [0, 1], got {}",
                self.perturb_prob
            ));
        }
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite()) {
            return bad(format!("train.init_scale must be >= 0, got {}", self.init_scale));
        }
        if let OptimizerKind::Adam { beta1, beta2, eps } = self.optimizer {
            if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || eps <= 0.0 {
                return bad("adam betas must be in [0, 1) and eps > 0".into());
            }
        }
        Ok(())
    }
}

/// Loss ledger of one batch step. `joint` is always `original + λ·denoising`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub original: f64,
    pub denoising: f64,
    pub joint: f64,
    pub epoch: usize,
    pub batch: usize,
}

/// Per-epoch training log record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub original: f64,
    pub denoising: f64,
    pub joint: f64,
    pub sigma: f64,
    pub valid_mrr: Option<f64>,
    pub wall_ms: u64,
}

/// Draw per-triple noise for a batch. The RNG is advanced identically for
/// every α, λ and perturbation probability so those knobs never shift the
/// stream.
pub fn draw_batch_noise<R: Rng + ?Sized>(
    model: &EmbeddingModel,
    batch: &[Triple],
    config: &TrainConfig,
    sigma: f64,
    rng: &mut R,
) -> Vec<Option<NoiseDraw>> {
    batch
        .iter()
        .map(|t| {
            let u: f64 = rng.random();
            let draw = perturb_entity(model, t.head, config.alpha, sigma, rng);
            (u < config.perturb_prob).then_some(draw)
        })
        .collect()
}

/// One optimizer update on the joint loss of `batch`.
#[allow(clippy::too_many_arguments)]
pub fn joint_step<R: Rng + ?Sized>(
    model: &mut EmbeddingModel,
    optimizer: &mut Optimizer,
    batch: &[Triple],
    config: &TrainConfig,
    sigma: f64,
    rng: &mut R,
    epoch: usize,
    batch_index: usize,
) -> Result<LossReport> {
    let draws = draw_batch_noise(model, batch, config, sigma, rng);
    let (losses, grads) =
        joint_objective(model, batch, &draws, config.lambda, config.label_smoothing);
    let report = LossReport {
        original: losses.original,
        denoising: losses.denoising,
        joint: losses.original + config.lambda * losses.denoising,
        epoch,
        batch: batch_index,
    };
    if !report.joint.is_finite() || !grads.is_finite() {
        return Err(Error::NonFinite {
            context: format!("loss at epoch {epoch}, batch {batch_index}"),
        });
    }
    optimizer.apply(model, &grads);
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: EmbeddingModel,
    pub log: Vec<EpochLog>,
}

pub fn train(kg: &KnowledgeGraph, config: &TrainConfig) -> Result<TrainOutcome> {
    train_with(kg, config, |_| {})
}

/// Train from a fresh initialization, calling `on_epoch` after each epoch.
pub fn train_with(
    kg: &KnowledgeGraph,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    if !kg.is_reverse_augmented() {
        return Err(Error::NotAugmented);
    }
    config.validate()?;
    let mut model = EmbeddingModel::init(
        config.family,
        config.dim,
        kg.num_entities(),
        kg.num_relations(),
        config.seed,
        config.init_scale,
    )?;
    let mut optimizer = Optimizer::new(config.optimizer, config.learning_rate, &model);
    let mut rng = rng::rng_for(config.seed, &[rng::stream::TRAIN]);
    let mut order: Vec<Triple> = kg.split(Split::Train).to_vec();
    let filter = FilterIndex::build(kg)?;
    let valid = kg.queries(Split::Valid)?;
    let start = Instant::now();
    let mut sigma = sigma_quantile(model.entity_table())?;
    let mut log = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        if config.sigma_refresh == SigmaRefresh::PerEpoch {
            sigma = sigma_quantile(model.entity_table())?;
        }
        order.shuffle(&mut rng);
        let (mut orig, mut den, mut seen) = (0.0, 0.0, 0usize);
        for (bi, batch) in order.chunks(config.batch_size).enumerate() {
            let r = joint_step(
                &mut model,
                &mut optimizer,
                batch,
                config,
                sigma,
                &mut rng,
                epoch,
                bi,
            )?;
            orig += r.original * batch.len() as f64;
            den += r.denoising * batch.len() as f64;
            seen += batch.len();
        }
        let n = seen.max(1) as f64;
        let (original, denoising) = (orig / n, den / n);
        let last = epoch + 1 == config.epochs;
        let valid_mrr = if config.eval_every > 0
            && !valid.is_empty()
            && ((epoch + 1) % config.eval_every == 0 || last)
        {
            Some(eval::link_prediction(&model, &valid, &filter, &EvalCondition::Clean)?.mrr)
        } else {
            None
        };
        let rec = EpochLog {
            epoch,
            original,
            denoising,
            joint: original + config.lambda * denoising,
            sigma,
            valid_mrr,
            wall_ms: start.elapsed().as_millis() as u64,
        };
        on_epoch(&rec);
        log.push(rec);
    }
    Ok(TrainOutcome { model, log })
}
