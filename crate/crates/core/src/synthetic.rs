//! Synthetic knowledge graphs with learnable structure.
//!
//! Entities sit on a `clusters × positions` torus. Relation `r` maps
//! `(c, p)` to `((c + a_r) mod C, (p + b_r) mod P)`, so every relation is a
//! bijective translation and relation paths compose. A fraction of extra
//! random edges adds noise. Entity indices are shuffled so structure is not
//! visible in the numbering.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{KnowledgeGraph, Triple};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSpec {
    pub clusters: usize,
    pub positions: usize,
    pub relations: usize,
    /// Random extra edges as a fraction of the structured ones.
    pub noise_fraction: f64,
    pub valid_fraction: f64,
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    /// 100 entities, 10 relations, about 1000 triples.
    fn default() -> Self {
        Self {
            clusters: 10,
            positions: 10,
            relations: 10,
            noise_fraction: 0.05,
            valid_fraction: 0.1,
            test_fraction: 0.1,
            seed: 2024,
        }
    }
}

pub fn generate(spec: &SyntheticSpec) -> Result<KnowledgeGraph> {
    if spec.clusters == 0 || spec.positions == 0 || spec.relations == 0 {
        return Err(Error::InvalidConfig("synthetic graph dimensions must be positive".into()));
    }
    if spec.valid_fraction + spec.test_fraction >= 1.0 {
        return Err(Error::InvalidConfig("valid + test fractions must be < 1".into()));
    }
    let mut rng = rng::rng_for(spec.seed, &[0x5eed]);
    let n = spec.clusters * spec.positions;
    let mut ids: Vec<usize> = (0..n).collect();
    ids.shuffle(&mut rng);
    let id = |c: usize, p: usize| ids[c * spec.positions + p];

    let mut triples = Vec::new();
    let mut seen = HashSet::new();
    for r in 0..spec.relations {
        let a = rng.random_range(0..spec.clusters);
        let b = rng.random_range(1..spec.positions.max(2)) % spec.positions;
        for c in 0..spec.clusters {
            for p in 0..spec.positions {
                let t = Triple::new(
                    id(c, p),
                    r,
                    id((c + a) % spec.clusters, (p + b) % spec.positions),
                );
                if seen.insert(t) {
                    triples.push(t);
                }
            }
        }
    }
    let extra = (spec.noise_fraction * triples.len() as f64).round() as usize;
    let mut added = 0;
    while added < extra {
        let t = Triple::new(
            rng.random_range(0..n),
            rng.random_range(0..spec.relations),
            rng.random_range(0..n),
        );
        if seen.insert(t) {
            triples.push(t);
            added += 1;
        }
    }
    triples.shuffle(&mut rng);
    let n_valid = (spec.valid_fraction * triples.len() as f64).round() as usize;
    let n_test = (spec.test_fraction * triples.len() as f64).round() as usize;
    let test = triples.split_off(triples.len() - n_test);
    let valid = triples.split_off(triples.len() - n_valid);
    KnowledgeGraph::from_triples(n, spec.relations, triples, valid, test)
}
