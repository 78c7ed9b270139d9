//! Filtered link-prediction evaluation, clean or under entity perturbation.

mod paths;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{FilterIndex, Query};
use crate::models::EmbeddingModel;
use crate::rng;
use crate::train::sigma_quantile;

pub use paths::{
    answer_path_query, enumerate_path_queries, multihop_metrics, path_scores, PathQuery,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EvalCondition {
    Clean,
    /// Every entity embedding gets `alpha · N(0, σ²)` noise, one draw per
    /// entity per evaluation run, with σ the model's sigma-quantile.
    Perturbed { alpha: f64, seed: u64 },
}

impl EvalCondition {
    pub fn label(&self) -> String {
        match self {
            EvalCondition::Clean => "clean".to_owned(),
            EvalCondition::Perturbed { alpha, .. } => format!("alpha={alpha}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingMetrics {
    pub mrr: f64,
    pub mr: f64,
    pub hits1: f64,
    pub hits3: f64,
    pub hits10: f64,
    pub condition: EvalCondition,
    pub n: usize,
}

impl RankingMetrics {
    /// Aggregate mean-tie ranks: MRR uses them as is, MR and Hits@k use the
    /// half-up rounded integer rank.
    pub fn from_ranks(ranks: &[f64], condition: EvalCondition) -> Result<Self> {
        if ranks.is_empty() {
            return Err(Error::EmptyQueries);
        }
        let n = ranks.len() as f64;
        let (mut rr, mut r, mut h1, mut h3, mut h10) = (0.0, 0.0, 0usize, 0usize, 0usize);
        for &exact in ranks {
            let int = integer_rank(exact);
            rr += 1.0 / exact;
            r += int as f64;
            h1 += (int <= 1) as usize;
            h3 += (int <= 3) as usize;
            h10 += (int <= 10) as usize;
        }
        Ok(Self {
            mrr: rr / n,
            mr: r / n,
            hits1: h1 as f64 / n,
            hits3: h3 as f64 / n,
            hits10: h10 as f64 / n,
            condition,
            n: ranks.len(),
        })
    }
}

pub fn integer_rank(exact: f64) -> usize {
    (exact + 0.5).floor() as usize
}

/// Mean-tie rank of `target` in `scores`, ignoring the entities in `masked`
/// (the target itself is never masked).
pub fn rank_in_scores(scores: &[f64], target: usize, masked: &[usize]) -> f64 {
    let gold = scores[target];
    let (mut better, mut ties) = (0usize, 0usize);
    for (j, &s) in scores.iter().enumerate() {
        if j == target {
            continue;
        }
        if s > gold {
            better += 1;
        } else if s == gold {
            ties += 1;
        }
    }
    for &j in masked {
        if j == target {
            continue;
        }
        let s = scores[j];
        if s > gold {
            better -= 1;
        } else if s == gold {
            ties -= 1;
        }
    }
    better as f64 + 1.0 + ties as f64 / 2.0
}

/// Filtered rank of the query's gold tail. `head_override` replaces the
/// head embedding, e.g. with a perturbed vector.
pub fn filtered_rank(
    model: &EmbeddingModel,
    query: &Query,
    filter: &FilterIndex,
    head_override: Option<&[f64]>,
) -> f64 {
    let h = head_override.unwrap_or_else(|| model.entity(query.head));
    let scores = model.score_all_tails(h, query.relation);
    rank_in_scores(&scores, query.target, filter.tails(query.head, query.relation))
}

/// Copy of `model` with every entity embedding perturbed once.
pub fn perturbed_model(model: &EmbeddingModel, alpha: f64, seed: u64) -> Result<EmbeddingModel> {
    let sigma = sigma_quantile(model.entity_table())?;
    let mut rng = rng::rng_for(seed, &[rng::stream::EVAL]);
    let mut noisy = model.clone();
    for x in noisy.entity_table_mut() {
        let z: f64 = rng.sample(StandardNormal);
        *x += alpha * sigma * z;
    }
    Ok(noisy)
}

/// Filtered MRR / MR / Hits@{1,3,10} over `queries`.
pub fn link_prediction(
    model: &EmbeddingModel,
    queries: &[Query],
    filter: &FilterIndex,
    condition: &EvalCondition,
) -> Result<RankingMetrics> {
    if queries.is_empty() {
        return Err(Error::EmptyQueries);
    }
    let noisy;
    let m = match *condition {
        EvalCondition::Clean => model,
        EvalCondition::Perturbed { alpha, seed } => {
            noisy = perturbed_model(model, alpha, seed)?;
            &noisy
        }
    };
    let ranks: Vec<f64> = queries
        .par_iter()
        .map(|q| filtered_rank(m, q, filter, None))
        .collect();
    RankingMetrics::from_ranks(&ranks, *condition)
}

/// Unfiltered rank, for comparisons.
pub fn raw_rank(model: &EmbeddingModel, query: &Query) -> f64 {
    let scores = model.score_all_tails(model.entity(query.head), query.relation);
    rank_in_scores(&scores, query.target, &[])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_examples() {
        assert_eq!(rank_in_scores(&[0.1, 0.9, 0.2], 1, &[]), 1.0);
        assert_eq!(rank_in_scores(&[0.5; 5], 2, &[]), 3.0);
        assert_eq!(rank_in_scores(&[0.1, 0.5, 0.9, 0.2], 1, &[]), 2.0);
        // masking the competitor lifts the gold to rank 1
        assert_eq!(rank_in_scores(&[0.1, 0.5, 0.9, 0.2], 1, &[1, 2]), 1.0);
    }

    #[test]
    fn metrics_all_rank_one() {
        let m = RankingMetrics::from_ranks(&[1.0; 7], EvalCondition::Clean).unwrap();
        assert_eq!((m.mrr, m.mr, m.hits1, m.hits3, m.hits10), (1.0, 1.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn metrics_rounding() {
        // 1.5 rounds up to 2 for MR / Hits but stays fractional in MRR.
        let m = RankingMetrics::from_ranks(&[1.5, 4.0], EvalCondition::Clean).unwrap();
        assert_eq!(m.mr, 3.0);
        assert_eq!(m.hits1, 0.0);
        assert_eq!(m.hits3, 0.5);
        assert!((m.mrr - (1.0 / 1.5 + 0.25) / 2.0).abs() < 1e-15);
        assert!(RankingMetrics::from_ranks(&[], EvalCondition::Clean).is_err());
    }
}
