//! Gaussian entity noise scaled by the sigma-quantile of the embedding table.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::EmbeddingModel;

/// Quantile level, in ten-thousandths, used for the noise scale: the
/// three-sigma coverage point 99.73%.
const QUANTILE_PER_10K: usize = 9973;

/// σ for the noise model: the nearest-rank 99.73% quantile of the absolute
/// values of every component of `table`, pooled.
pub fn sigma_quantile(table: &[f64]) -> Result<f64> {
    if table.is_empty() {
        return Err(Error::EmptyTable);
    }
    if table.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite {
            context: "entity table".into(),
        });
    }
    let mut abs: Vec<f64> = table.iter().map(|x| x.abs()).collect();
    abs.sort_unstable_by(f64::total_cmp);
    let n = abs.len();
    let rank = (QUANTILE_PER_10K * n).div_ceil(10_000).clamp(1, n);
    Ok(abs[rank - 1])
}

/// One perturbed entity embedding: `perturbed = original + alpha · noise`
/// with `noise ~ N(0, σ²)` per component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseDraw {
    pub entity: usize,
    pub noise: Vec<f64>,
    pub perturbed: Vec<f64>,
    pub sigma: f64,
}

pub fn perturb_entity<R: Rng + ?Sized>(
    model: &EmbeddingModel,
    entity: usize,
    alpha: f64,
    sigma: f64,
    rng: &mut R,
) -> NoiseDraw {
    let e = model.entity(entity);
    let noise: Vec<f64> = e
        .iter()
        .map(|_| sigma * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let perturbed = e.iter().zip(&noise).map(|(x, n)| x + alpha * n).collect();
    NoiseDraw {
        entity,
        noise,
        perturbed,
        sigma,
    }
}
