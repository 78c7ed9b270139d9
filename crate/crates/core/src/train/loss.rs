//! Loss values and their parameter gradients.
//!
//! The denoising loss is a population score-matching objective made
//! empirical: for a perturbed head `h̃ = e_h + α n`, the model's prediction of
//! the injected noise is `n̂ = -∇_h̃ E(h̃, r, t)` and the loss is `‖n - n̂‖²`.
//! Backpropagating it needs `∂(∇_h E)/∂θ`, supplied in closed form by
//! [`crate::models::grad::head_grad_vjp`].

use crate::error::{Error, Result};
use crate::graph::Triple;
use crate::models::{grad, EmbeddingModel};

use super::noise::NoiseDraw;

/// Dense gradient buffers shaped like the model tables.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub entities: Vec<f64>,
    pub relations: Vec<f64>,
}

impl Gradients {
    pub fn zeros(model: &EmbeddingModel) -> Self {
        Self {
            entities: vec![0.0; model.entity_table().len()],
            relations: vec![0.0; model.relation_table().len()],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.entities.iter().chain(&self.relations).all(|x| x.is_finite())
    }

    fn add_entity_row(&mut self, width: usize, row: usize, g: &[f64]) {
        for (a, b) in self.entities[row * width..(row + 1) * width].iter_mut().zip(g) {
            *a += b;
        }
    }

    fn add_relation_row(&mut self, width: usize, row: usize, g: &[f64]) {
        for (a, b) in self.relations[row * width..(row + 1) * width].iter_mut().zip(g) {
            *a += b;
        }
    }
}

fn log_sum_exp(scores: &[f64]) -> f64 {
    let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + scores.iter().map(|s| (s - m).exp()).sum::<f64>().ln()
}

fn smoothed_target(j: usize, gold: usize, n: usize, smoothing: f64) -> f64 {
    let base = smoothing / n as f64;
    if j == gold {
        base + (1.0 - smoothing)
    } else {
        base
    }
}

/// Cross-entropy of one query against all tails, with label smoothing.
fn query_cross_entropy(scores: &[f64], gold: usize, smoothing: f64) -> f64 {
    let lse = log_sum_exp(scores);
    let n = scores.len();
    let expected: f64 = scores
        .iter()
        .enumerate()
        .map(|(j, s)| smoothed_target(j, gold, n, smoothing) * s)
        .sum();
    lse - expected
}

/// 1-vs-all cross-entropy over every tail, averaged over the batch.
pub fn original_loss(model: &EmbeddingModel, batch: &[Triple], label_smoothing: f64) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::InvalidConfig("empty batch".into()));
    }
    let total: f64 = batch
        .iter()
        .map(|t| {
            let scores = model.score_all_tails(model.entity(t.head), t.relation);
            query_cross_entropy(&scores, t.tail, label_smoothing)
        })
        .sum();
    Ok(total / batch.len() as f64)
}

/// Mean original loss over `batch`; adds `scale · ∂loss/∂θ` into `grads`.
pub(crate) fn original_loss_grad(
    model: &EmbeddingModel,
    batch: &[Triple],
    label_smoothing: f64,
    scale: f64,
    grads: &mut Gradients,
) -> f64 {
    let w = model.entity_width();
    let rw = model.relation_width();
    let ne = model.num_entities();
    let b = batch.len() as f64;
    let mut q = vec![0.0; w];
    let mut scores = vec![0.0; ne];
    let mut gq = vec![0.0; w];
    let mut gh = vec![0.0; w];
    let mut gr = vec![0.0; rw];
    let mut total = 0.0;
    for t in batch {
        let h = model.entity(t.head);
        model.combine_into(h, t.relation, &mut q);
        model.match_all_tails(&q, &mut scores);
        total += query_cross_entropy(&scores, t.tail, label_smoothing);

        let lse = log_sum_exp(&scores);
        gq.iter_mut().for_each(|x| *x = 0.0);
        for (j, &s) in scores.iter().enumerate() {
            let p = (s - lse).exp();
            let coeff = scale * (p - smoothed_target(j, t.tail, ne, label_smoothing)) / b;
            let tail = model.entity(j);
            let gt = &mut grads.entities[j * w..(j + 1) * w];
            grad::match_vjp(model.family(), &q, tail, coeff, &mut gq, gt);
        }
        gh.iter_mut().for_each(|x| *x = 0.0);
        gr.iter_mut().for_each(|x| *x = 0.0);
        grad::combine_vjp(model, h, t.relation, &gq, &mut gh, Some(&mut gr));
        grads.add_entity_row(w, t.head, &gh);
        grads.add_relation_row(rw, t.relation, &gr);
    }
    total / b
}

fn denoising_residual(model: &EmbeddingModel, draw: &NoiseDraw, r: usize, t: usize) -> Vec<f64> {
    // n - n̂ = n + ∇_h̃ E(h̃, r, t)
    let mut g = model.grad_energy_head(&draw.perturbed, r, t);
    for (g, n) in g.iter_mut().zip(&draw.noise) {
        *g += n;
    }
    g
}

/// `‖n - n̂‖²` with `n̂ = -∇_h̃ E(h̃, r, t)`.
pub fn denoising_loss(model: &EmbeddingModel, draw: &NoiseDraw, r: usize, t: usize) -> Result<f64> {
    let res = denoising_residual(model, draw, r, t);
    let loss: f64 = res.iter().map(|x| x * x).sum();
    if loss.is_finite() {
        Ok(loss)
    } else {
        Err(Error::NonFinite {
            context: format!("denoising loss for entity {}", draw.entity),
        })
    }
}

/// Denoising loss of one draw; adds `scale · ∂loss/∂θ` into `grads`. The
/// noise is held fixed, and `h̃` depends on the head row with unit Jacobian.
pub(crate) fn denoising_loss_grad(
    model: &EmbeddingModel,
    draw: &NoiseDraw,
    r: usize,
    t: usize,
    scale: f64,
    grads: &mut Gradients,
) -> f64 {
    let w = model.entity_width();
    let rw = model.relation_width();
    let res = denoising_residual(model, draw, r, t);
    let loss: f64 = res.iter().map(|x| x * x).sum();
    let v: Vec<f64> = res.iter().map(|x| 2.0 * scale * x).collect();
    let mut gh = vec![0.0; w];
    let mut gr = vec![0.0; rw];
    let mut gt = vec![0.0; w];
    grad::head_grad_vjp(
        model,
        &draw.perturbed,
        r,
        model.entity(t),
        &v,
        &mut gh,
        &mut gr,
        &mut gt,
    );
    grads.add_entity_row(w, draw.entity, &gh);
    grads.add_entity_row(w, t, &gt);
    grads.add_relation_row(rw, r, &gr);
    loss
}

/// Loss values of one batch under the joint objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchLosses {
    pub original: f64,
    pub denoising: f64,
}

/// Joint objective `L_o + λ L_d` on a batch with fixed noise draws, and its
/// full parameter gradient. `draws[i]` belongs to `batch[i]`; `None` marks a
/// triple whose head was not perturbed. Both terms are batch means.
///
/// With `lambda == 0` the denoising value is still reported but contributes
/// nothing to the gradient.
pub fn joint_objective(
    model: &EmbeddingModel,
    batch: &[Triple],
    draws: &[Option<NoiseDraw>],
    lambda: f64,
    label_smoothing: f64,
) -> (BatchLosses, Gradients) {
    assert_eq!(batch.len(), draws.len());
    let mut grads = Gradients::zeros(model);
    let original = original_loss_grad(model, batch, label_smoothing, 1.0, &mut grads);
    let b = batch.len() as f64;
    let mut denoising = 0.0;
    for (t, draw) in batch.iter().zip(draws) {
        let Some(draw) = draw else { continue };
        debug_assert_eq!(draw.entity, t.head);
        denoising += if lambda == 0.0 {
            denoising_residual(model, draw, t.relation, t.tail)
                .iter()
                .map(|x| x * x)
                .sum::<f64>()
        } else {
            denoising_loss_grad(model, draw, t.relation, t.tail, lambda / b, &mut grads)
        };
    }
    (
        BatchLosses {
            original,
            denoising: denoising / b,
        },
        grads,
    )
}
