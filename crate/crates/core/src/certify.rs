//! Randomized-smoothing certification of link predictions.
//!
//! A query is smoothed by adding `N(0, σ²)` noise to its head embedding. Out
//! of `n0` noisy trials, `count` keep the gold tail as the filtered top-1
//! prediction. The Clopper-Pearson bound `p_lower` on the success rate gives
//! the certified radius `σ·Φ⁻¹(p_lower)` when `p_lower > 1/2`; otherwise the
//! query abstains and is recorded with radius 0.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{FilterIndex, Query};
use crate::models::EmbeddingModel;
use crate::rng;
use crate::stats::{clopper_pearson_lcb, phi_inverse};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertConfig {
    /// Noisy trials per query.
    pub n0: u64,
    /// One-sided confidence level of the lower bound.
    pub confidence: f64,
    /// Noise standard deviation.
    pub sigma: f64,
    pub seed: u64,
}

impl CertConfig {
    pub const DEFAULT_N0: u64 = 1000;
    pub const DEFAULT_CONFIDENCE: f64 = 0.999;

    pub fn new(sigma: f64, seed: u64) -> Self {
        Self {
            n0: Self::DEFAULT_N0,
            confidence: Self::DEFAULT_CONFIDENCE,
            sigma,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n0 == 0 {
            return Err(Error::InvalidConfig("certify.n0 must be at least 1".into()));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "certify.confidence must be in (0, 1), got {}",
                self.confidence
            )));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "certify.sigma must be >= 0, got {}",
                self.sigma
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertificationRecord {
    pub query_id: usize,
    pub query: Query,
    pub count: u64,
    pub n0: u64,
    pub p_lower: f64,
    pub cr: f64,
    pub certified: bool,
}

impl CertificationRecord {
    /// Turn a success count into a record: bound, abstention rule, radius.
    pub fn from_count(query_id: usize, query: Query, count: u64, config: &CertConfig) -> Result<Self> {
        let p_lower = clopper_pearson_lcb(config.n0, count, config.confidence)?;
        let cr = if p_lower > 0.5 {
            config.sigma * phi_inverse(p_lower)?
        } else {
            0.0
        };
        Ok(Self {
            query_id,
            query,
            count,
            n0: config.n0,
            p_lower,
            cr,
            certified: cr > 0.0,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    /// Mean certified radius over all queries (abstentions count as 0).
    pub acr: f64,
    /// Mean of `cr / σ`.
    pub acr_over_sigma: f64,
    /// `(R_p, CA(R_p))` with `CA(R_p)` the fraction of queries with `cr > R_p`.
    pub ca_curve: Vec<(f64, f64)>,
    /// `CA(0)`.
    pub ca0: f64,
    pub n: usize,
    pub sigma: f64,
}

fn gold_is_top1(scores_gold: f64, gold: usize, j: usize, s: f64) -> bool {
    s < scores_gold || (s == scores_gold && j > gold)
}

struct TrialContext<'a> {
    model: &'a EmbeddingModel,
    query: Query,
    /// `masked[j]`: j is another known tail of the query.
    masked: Vec<bool>,
    sigma: f64,
}

impl<'a> TrialContext<'a> {
    fn new(model: &'a EmbeddingModel, query: &Query, filter: &FilterIndex, sigma: f64) -> Self {
        let mut masked = vec![false; model.num_entities()];
        for &t in filter.tails(query.head, query.relation) {
            masked[t] = true;
        }
        masked[query.target] = false;
        Self {
            model,
            query: *query,
            masked,
            sigma,
        }
    }

    fn trial<R: Rng + ?Sized>(&self, rng: &mut R, h: &mut [f64], q: &mut [f64]) -> bool {
        let m = self.model;
        for (x, e) in h.iter_mut().zip(m.entity(self.query.head)) {
            let z: f64 = rng.sample(StandardNormal);
            *x = e + self.sigma * z;
        }
        m.combine_into(h, self.query.relation, q);
        let gold = self.query.target;
        let sg = m.match_tail(q, m.entity(gold));
        (0..m.num_entities())
            .filter(|&j| j != gold && !self.masked[j])
            .all(|j| gold_is_top1(sg, gold, j, m.match_tail(q, m.entity(j))))
    }
}

/// One noisy trial: does the filtered top-1 prediction from the perturbed
/// head equal the gold tail? Ties go to the lowest entity index.
pub fn smoothed_trial<R: Rng + ?Sized>(
    model: &EmbeddingModel,
    query: &Query,
    filter: &FilterIndex,
    sigma: f64,
    rng: &mut R,
) -> bool {
    let ctx = TrialContext::new(model, query, filter, sigma);
    let w = model.entity_width();
    ctx.trial(rng, &mut vec![0.0; w], &mut vec![0.0; w])
}

/// Count successes over `n0` trials. Trial `k` of query `query_id` draws from
/// its own stream derived from `(seed, query_id, k)`.
pub fn count_successes(
    model: &EmbeddingModel,
    query: &Query,
    query_id: usize,
    filter: &FilterIndex,
    config: &CertConfig,
) -> u64 {
    let ctx = TrialContext::new(model, query, filter, config.sigma);
    let w = model.entity_width();
    let (mut h, mut q) = (vec![0.0; w], vec![0.0; w]);
    (0..config.n0)
        .filter(|&k| {
            let mut rng = rng::rng_for(config.seed, &[rng::stream::CERTIFY, query_id as u64, k]);
            ctx.trial(&mut rng, &mut h, &mut q)
        })
        .count() as u64
}

pub fn certify_query(
    model: &EmbeddingModel,
    query: &Query,
    query_id: usize,
    filter: &FilterIndex,
    config: &CertConfig,
) -> Result<CertificationRecord> {
    config.validate()?;
    let count = count_successes(model, query, query_id, filter, config);
    CertificationRecord::from_count(query_id, *query, count, config)
}

/// Certify every query in parallel; record `i` belongs to `queries[i]`.
pub fn certify_queries(
    model: &EmbeddingModel,
    queries: &[Query],
    filter: &FilterIndex,
    config: &CertConfig,
) -> Result<Vec<CertificationRecord>> {
    config.validate()?;
    queries
        .par_iter()
        .enumerate()
        .map(|(i, q)| certify_query(model, q, i, filter, config))
        .collect()
}

/// Aggregate ACR, ACR/σ and the CA curve from per-query records.
pub fn report_from_records(
    records: &[CertificationRecord],
    sigma: f64,
    radii: &[f64],
) -> Result<RobustnessReport> {
    if records.is_empty() {
        return Err(Error::EmptyQueries);
    }
    let n = records.len() as f64;
    let acr = records.iter().map(|r| r.cr).sum::<f64>() / n;
    let acr_over_sigma = if sigma > 0.0 {
        records.iter().map(|r| r.cr / sigma).sum::<f64>() / n
    } else {
        0.0
    };
    let ca = |radius: f64| records.iter().filter(|r| r.cr > radius).count() as f64 / n;
    Ok(RobustnessReport {
        acr,
        acr_over_sigma,
        ca_curve: radii.iter().map(|&r| (r, ca(r))).collect(),
        ca0: ca(0.0),
        n: records.len(),
        sigma,
    })
}

/// Certify `queries` and aggregate.
pub fn robustness_report(
    model: &EmbeddingModel,
    queries: &[Query],
    filter: &FilterIndex,
    config: &CertConfig,
    radii: &[f64],
) -> Result<(Vec<CertificationRecord>, RobustnessReport)> {
    if queries.is_empty() {
        return Err(Error::EmptyQueries);
    }
    let records = certify_queries(model, queries, filter, config)?;
    let report = report_from_records(&records, config.sigma, radii)?;
    Ok((records, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Triple;
    use crate::models::Family;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn record(cr: f64) -> CertificationRecord {
        CertificationRecord {
            query_id: 0,
            query: Query {
                head: 0,
                relation: 0,
                target: 0,
            },
            count: 0,
            n0: 1,
            p_lower: 0.0,
            cr,
            certified: cr > 0.0,
        }
    }

    #[test]
    fn single_query_strict_boundary() {
        let rep = report_from_records(&[record(0.7)], 1.0, &[0.0, 0.69, 0.7, 0.8]).unwrap();
        assert_eq!(rep.acr, 0.7);
        assert_eq!(rep.ca_curve, vec![(0.0, 1.0), (0.69, 1.0), (0.7, 0.0), (0.8, 0.0)]);
    }

    #[test]
    fn all_abstain() {
        let rep = report_from_records(&[record(0.0), record(0.0)], 2.0, &[0.0]).unwrap();
        assert_eq!((rep.acr, rep.ca0, rep.acr_over_sigma), (0.0, 0.0, 0.0));
        assert!(report_from_records(&[], 1.0, &[]).is_err());
    }

    #[test]
    fn abstention_and_zero_sigma() {
        let q = Query {
            head: 0,
            relation: 0,
            target: 1,
        };
        let cfg = CertConfig::new(0.5, 0);
        let r = CertificationRecord::from_count(0, q, 500, &cfg).unwrap();
        assert!(r.p_lower <= 0.5 && r.cr == 0.0 && !r.certified);
        let best = CertificationRecord::from_count(0, q, 1000, &cfg).unwrap();
        let expected = 0.5 * phi_inverse(0.001f64.powf(1.0 / 1000.0)).unwrap();
        assert_eq!(best.cr, expected);
        assert!(best.certified);
        let zero = CertificationRecord::from_count(0, q, 1000, &CertConfig::new(0.0, 0)).unwrap();
        assert_eq!(zero.cr, 0.0);
        assert!(!zero.certified);
    }

    fn two_entity_model() -> (EmbeddingModel, FilterIndex) {
        // DistMult, d = 1: score(t) = h·r·t. Gold tail 1 wins exactly when the
        // noisy head stays positive.
        let m = EmbeddingModel::from_tables(
            Family::DistMult,
            1,
            3,
            1,
            vec![0.5, 1.0, -1.0],
            vec![1.0],
        )
        .unwrap();
        let f = FilterIndex::from_triples([Triple::new(0, 0, 1)]);
        (m, f)
    }

    #[test]
    fn zero_sigma_trials_follow_clean_prediction() {
        let (m, f) = two_entity_model();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let right = Query {
            head: 0,
            relation: 0,
            target: 1,
        };
        let wrong = Query { target: 2, ..right };
        assert!(smoothed_trial(&m, &right, &f, 0.0, &mut rng));
        assert!(!smoothed_trial(&m, &wrong, &f, 0.0, &mut rng));
    }

    #[test]
    fn success_rate_falls_with_sigma() {
        let (m, f) = two_entity_model();
        let q = Query {
            head: 0,
            relation: 0,
            target: 1,
        };
        let rates: Vec<u64> = [0.2, 0.8, 2.0, 5.0]
            .iter()
            .map(|&s| {
                let cfg = CertConfig {
                    sigma: s,
                    ..CertConfig::new(s, 1)
                };
                count_successes(&m, &q, 0, &f, &cfg)
            })
            .collect();
        assert!(rates.windows(2).all(|w| w[0] >= w[1]), "{rates:?}");
        // P(0.5 + σz > 0) = Φ(0.5/σ)
        let p = rates[1] as f64 / 1000.0;
        assert!((p - crate::stats::norm_cdf(0.5 / 0.8)).abs() < 0.05, "{p}");
    }
}
