//! Multi-hop projection queries (1p / 2p / 3p) answered by beam search.
//!
//! A path query starts at an anchor entity and follows 1 to 3 relations.
//! Scores compose additively: a path's score is the sum of its per-hop
//! scores and an entity's score is the best path reaching it.

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{rank_in_scores, EvalCondition, RankingMetrics};
use crate::error::{Error, Result};
use crate::graph::{adjacency, KnowledgeGraph, Split};
use crate::models::EmbeddingModel;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathQuery {
    pub anchor: usize,
    pub relations: Vec<usize>,
    /// Endpoint of the sampled path; the answer that is ranked.
    pub target: usize,
    /// Every entity reachable from the anchor along `relations` over all
    /// splits, sorted.
    pub answers: Vec<usize>,
}

impl PathQuery {
    pub fn hops(&self) -> usize {
        self.relations.len()
    }
}

fn reachable(
    adj: &HashMap<(usize, usize), HashSet<usize>>,
    anchor: usize,
    relations: &[usize],
) -> Vec<usize> {
    let mut frontier: HashSet<usize> = HashSet::from([anchor]);
    for &r in relations {
        let mut next = HashSet::new();
        for e in frontier {
            if let Some(ts) = adj.get(&(e, r)) {
                next.extend(ts.iter().copied());
            }
        }
        frontier = next;
    }
    let mut v: Vec<usize> = frontier.into_iter().collect();
    v.sort_unstable();
    v
}

/// Sample up to `cap` path queries of `hops` edges whose final edge lies in
/// `split`. Earlier edges may come from any split. For a held-out split the
/// target must be a hard answer: one that the graph of the earlier splits
/// (train for valid, train and valid for test) does not reach. For one hop
/// this is exactly the split's link-prediction queries, in order.
pub fn enumerate_path_queries(
    kg: &KnowledgeGraph,
    split: Split,
    hops: usize,
    cap: usize,
    seed: u64,
) -> Result<Vec<PathQuery>> {
    if !(1..=3).contains(&hops) {
        return Err(Error::InvalidConfig(format!("hops must be 1, 2 or 3, got {hops}")));
    }
    let adj = adjacency(kg.all_triples());
    let finals = kg.split(split);
    if cap == 0 || finals.is_empty() {
        return Ok(Vec::new());
    }
    if hops == 1 {
        return Ok(finals
            .iter()
            .take(cap)
            .map(|t| PathQuery {
                anchor: t.head,
                relations: vec![t.relation],
                target: t.tail,
                answers: reachable(&adj, t.head, &[t.relation]),
            })
            .collect());
    }

    // Incoming edges per entity: (source, relation).
    let mut incoming: HashMap<usize, Vec<(usize, usize)>> = HashMap::new();
    for t in kg.all_triples() {
        incoming.entry(t.tail).or_default().push((t.head, t.relation));
    }
    let easy_adj = match split {
        Split::Train => None,
        Split::Valid => Some(adjacency(kg.split(Split::Train))),
        Split::Test => Some(adjacency(kg.split(Split::Train).iter().chain(kg.split(Split::Valid)))),
    };
    let mut rng = rng::rng_for(seed, &[rng::stream::PATHS, hops as u64]);
    let mut seen: HashSet<(usize, Vec<usize>, usize)> = HashSet::new();
    let mut out = Vec::new();
    let max_attempts = cap.saturating_mul(50).max(1000);
    for _ in 0..max_attempts {
        if out.len() >= cap {
            break;
        }
        let last = finals[rng.random_range(0..finals.len())];
        let mut entities = vec![last.tail, last.head];
        let mut relations = vec![last.relation];
        let mut ok = true;
        for _ in 1..hops {
            let cur = *entities.last().unwrap();
            let Some(edges) = incoming.get(&cur).filter(|e| !e.is_empty()) else {
                ok = false;
                break;
            };
            let (src, rel) = edges[rng.random_range(0..edges.len())];
            // Reject immediate backtracking x -r-> y -r⁻¹-> x.
            let next_entity = entities[entities.len() - 2];
            if src == next_entity && kg.inverse_relation(rel) == Some(*relations.last().unwrap()) {
                ok = false;
                break;
            }
            entities.push(src);
            relations.push(rel);
        }
        if !ok {
            continue;
        }
        relations.reverse();
        let anchor = *entities.last().unwrap();
        let target = last.tail;
        if !seen.insert((anchor, relations.clone(), target)) {
            continue;
        }
        if let Some(easy) = &easy_adj {
            if reachable(easy, anchor, &relations).binary_search(&target).is_ok() {
                continue;
            }
        }
        let answers = reachable(&adj, anchor, &relations);
        debug_assert!(answers.binary_search(&target).is_ok());
        out.push(PathQuery {
            anchor,
            relations,
            target,
            answers,
        });
    }
    Ok(out)
}

fn top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    idx.truncate(k);
    idx
}

/// Beam-search scores of every entity as the answer of a path query.
///
/// Hop 1 scores all entities from the anchor; each later hop expands the
/// `beam` best intermediates, summing per-hop scores, and each entity keeps
/// the best sum over the paths that reach it.
pub fn path_scores(model: &EmbeddingModel, anchor: usize, relations: &[usize], beam: usize) -> Vec<f64> {
    assert!(!relations.is_empty(), "path query needs at least one relation");
    let beam = beam.max(1);
    let ne = model.num_entities();
    let mut cur = model.score_all_tails(model.entity(anchor), relations[0]);
    let mut buf = vec![0.0; ne];
    for &r in &relations[1..] {
        let mut next = vec![f64::NEG_INFINITY; ne];
        for m in top_k(&cur, beam) {
            model.score_all_tails_into(model.entity(m), r, &mut buf);
            let base = cur[m];
            for (n, s) in next.iter_mut().zip(&buf) {
                let v = base + s;
                if v > *n {
                    *n = v;
                }
            }
        }
        cur = next;
    }
    cur
}

/// Entities ranked by beam-search score, best first; ties by lower index.
pub fn answer_path_query(model: &EmbeddingModel, pq: &PathQuery, beam: usize) -> Vec<usize> {
    let scores = path_scores(model, pq.anchor, &pq.relations, beam);
    top_k(&scores, scores.len())
}

/// Filtered ranking metrics for one class of path queries: each query's
/// target is ranked with its other answers masked.
pub fn multihop_metrics(model: &EmbeddingModel, queries: &[PathQuery], beam: usize) -> Result<RankingMetrics> {
    if queries.is_empty() {
        return Err(Error::EmptyQueries);
    }
    let ranks: Vec<f64> = queries
        .par_iter()
        .map(|pq| {
            let scores = path_scores(model, pq.anchor, &pq.relations, beam);
            rank_in_scores(&scores, pq.target, &pq.answers)
        })
        .collect();
    RankingMetrics::from_ranks(&ranks, EvalCondition::Clean)
}
