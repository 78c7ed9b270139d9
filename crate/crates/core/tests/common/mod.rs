//! Test-side oracles shared by the integration and acceptance targets.
//! Nothing here calls into the routines it checks.

#![allow(dead_code)]

use kgd_core::graph::Triple;
use kgd_core::models::{EmbeddingModel, Family};
use kgd_core::train::{denoising_loss, original_loss, NoiseDraw};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic
        .iter()
        .zip(numeric)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / norm(analytic).max(norm(numeric)).max(1e-6)
}

/// Central differences of `f` at `x`.
pub fn numeric_gradient(x: &[f64], step: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            p[i] = x[i] + step;
            let up = f(&p);
            p[i] = x[i] - step;
            let down = f(&p);
            p[i] = x[i];
            (up - down) / (2.0 * step)
        })
        .collect()
}

/// A random model with entries in [-1, 1] (phases in [-π, π]).
pub fn random_model(family: Family, dim: usize, ne: usize, nr: usize, rng: &mut impl Rng) -> EmbeddingModel {
    let ents = (0..ne * family.entity_width(dim))
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    let rel_scale = if family == Family::RotatE { std::f64::consts::PI } else { 1.0 };
    let rels = (0..nr * family.relation_width(dim))
        .map(|_| rng.random_range(-rel_scale..rel_scale))
        .collect();
    EmbeddingModel::from_tables(family, dim, ne, nr, ents, rels).unwrap()
}

/// ∇_h E at a free head vector, by central differences of the score.
pub fn fd_energy_head(model: &EmbeddingModel, h: &[f64], r: usize, t: usize) -> Vec<f64> {
    let tail = model.entity(t).to_vec();
    numeric_gradient(h, 1e-6, |x| -model.score_vectors(x, r, &tail))
}

/// The joint loss evaluated from scratch: perturbed heads are rebuilt from
/// the current head rows so the oracle sees `h̃` move with `e_h`.
pub fn joint_loss_oracle(
    model: &EmbeddingModel,
    batch: &[Triple],
    noise: &[Option<Vec<f64>>],
    alpha: f64,
    lambda: f64,
    label_smoothing: f64,
) -> f64 {
    let lo = original_loss(model, batch, label_smoothing).unwrap();
    let mut ld = 0.0;
    for (t, n) in batch.iter().zip(noise) {
        let Some(n) = n else { continue };
        let draw = draw_from_noise(model, t.head, n, alpha);
        ld += denoising_loss(model, &draw, t.relation, t.tail).unwrap();
    }
    lo + lambda * ld / batch.len() as f64
}

pub fn draw_from_noise(model: &EmbeddingModel, entity: usize, noise: &[f64], alpha: f64) -> NoiseDraw {
    NoiseDraw {
        entity,
        noise: noise.to_vec(),
        perturbed: model
            .entity(entity)
            .iter()
            .zip(noise)
            .map(|(e, n)| e + alpha * n)
            .collect(),
        sigma: 1.0,
    }
}

/// Φ⁻¹ by bisection on an independent normal CDF.
pub fn phi_inverse_oracle(p: f64) -> f64 {
    let n = Normal::standard();
    let (mut lo, mut hi) = (-40.0f64, 40.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if n.cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    0.5 * (lo + hi)
}

fn ln_choose_table(n: u64) -> Vec<f64> {
    // ln C(n, j) for j = 0..=n from running sums of logarithms.
    let mut ln_fact = vec![0.0f64; n as usize + 1];
    for i in 1..=n as usize {
        ln_fact[i] = ln_fact[i - 1] + (i as f64).ln();
    }
    (0..=n as usize)
        .map(|j| ln_fact[n as usize] - ln_fact[j] - ln_fact[n as usize - j])
        .collect()
}

/// P(Binomial(n, p) ≥ k), summed term by term in log space.
pub fn binomial_upper_tail(n: u64, k: u64, p: f64, ln_choose: &[f64]) -> f64 {
    if p <= 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    if p >= 1.0 {
        return 1.0;
    }
    let (lp, lq) = (p.ln(), (-p).ln_1p());
    let terms: Vec<f64> = (k..=n)
        .map(|j| ln_choose[j as usize] + j as f64 * lp + (n - j) as f64 * lq)
        .collect();
    let m = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m.exp() * terms.iter().map(|t| (t - m).exp()).sum::<f64>()
}

/// Lower confidence bound by bisection on the exact binomial tail: the `p`
/// at which observing `k` or more successes has probability `1 - C`.
pub fn cp_lcb_oracle(n: u64, k: u64, confidence: f64) -> f64 {
    if k == 0 {
        return 0.0;
    }
    let table = ln_choose_table(n);
    let target = 1.0 - confidence;
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if binomial_upper_tail(n, k, mid, &table) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// A chain `0 → 1 → … → n-1` whose edges alternate between two relations,
/// reverse-augmented.
pub fn chain_graph(n: usize) -> kgd_core::KnowledgeGraph {
    let train = (0..n - 1).map(|i| Triple::new(i, i % 2, i + 1)).collect();
    kgd_core::KnowledgeGraph::from_triples(n, 2, train, vec![], vec![])
        .unwrap()
        .add_reverse_relations()
        .unwrap()
}
