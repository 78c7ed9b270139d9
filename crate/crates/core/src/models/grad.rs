//! Closed-form first and second derivatives of the scoring families.
//!
//! All accumulators add into their output slices (`+=`), so callers can sum
//! contributions of many triples into one gradient buffer.

use super::{EmbeddingModel, Family};

/// Accumulate `coeff · ∂s/∂q` into `gq` and `coeff · ∂s/∂t` into `gt`.
pub(crate) fn match_vjp(family: Family, q: &[f64], t: &[f64], coeff: f64, gq: &mut [f64], gt: &mut [f64]) {
    if family.is_distance() {
        let rho = q
            .iter()
            .zip(t)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        if rho == 0.0 {
            return;
        }
        let k = coeff / rho;
        for i in 0..q.len() {
            let u = q[i] - t[i];
            gq[i] -= k * u;
            gt[i] += k * u;
        }
    } else {
        for i in 0..q.len() {
            gq[i] += coeff * t[i];
            gt[i] += coeff * q[i];
        }
    }
}

/// Pull a gradient on `q = combine(h, r)` back onto `h` and the relation row.
pub(crate) fn combine_vjp(
    model: &EmbeddingModel,
    h: &[f64],
    r: usize,
    gq: &[f64],
    gh: &mut [f64],
    mut gr: Option<&mut [f64]>,
) {
    let rel = model.relation(r);
    let d = model.dim();
    match model.family() {
        Family::TransE => {
            for i in 0..d {
                gh[i] += gq[i];
            }
            if let Some(gr) = gr {
                for i in 0..d {
                    gr[i] += gq[i];
                }
            }
        }
        Family::DistMult => {
            for i in 0..d {
                gh[i] += gq[i] * rel[i];
            }
            if let Some(gr) = gr {
                for i in 0..d {
                    gr[i] += gq[i] * h[i];
                }
            }
        }
        Family::ComplEx => {
            for i in 0..d {
                let (hr, hi) = (h[i], h[d + i]);
                let (rr, ri) = (rel[i], rel[d + i]);
                let (ar, ai) = (gq[i], gq[d + i]);
                gh[i] += ar * rr + ai * ri;
                gh[d + i] += -ar * ri + ai * rr;
                if let Some(gr) = gr.as_deref_mut() {
                    gr[i] += ar * hr + ai * hi;
                    gr[d + i] += -ar * hi + ai * hr;
                }
            }
        }
        Family::RotatE => {
            for i in 0..d {
                let (hr, hi) = (h[i], h[d + i]);
                let (s, c) = rel[i].sin_cos();
                let (ar, ai) = (gq[i], gq[d + i]);
                gh[i] += c * ar + s * ai;
                gh[d + i] += -s * ar + c * ai;
                if let Some(gr) = gr.as_deref_mut() {
                    let qr = c * hr - s * hi;
                    let qi = s * hr + c * hi;
                    gr[i] += -ar * qi + ai * qr;
                }
            }
        }
    }
}

/// Write `∇_h E(h, r, t)` into `out`.
pub(crate) fn energy_head_grad(model: &EmbeddingModel, h: &[f64], r: usize, t: &[f64], out: &mut [f64]) {
    let w = model.entity_width();
    let mut q = vec![0.0; w];
    model.combine_into(h, r, &mut q);
    let mut gq = vec![0.0; w];
    let mut scratch = vec![0.0; w];
    // E = -s, so pull back -∂s/∂q.
    match_vjp(model.family(), &q, t, -1.0, &mut gq, &mut scratch);
    out.iter_mut().for_each(|x| *x = 0.0);
    combine_vjp(model, h, r, &gq, out, None);
}

/// Accumulate `vᵀ ∂(∇_h E)/∂(h, r, t)` at `(h, r, t)`.
///
/// This is the second-order term needed to backpropagate a loss defined on
/// the energy gradient itself.
#[allow(clippy::too_many_arguments)]
pub(crate) fn head_grad_vjp(
    model: &EmbeddingModel,
    h: &[f64],
    r: usize,
    t: &[f64],
    v: &[f64],
    gh: &mut [f64],
    gr: &mut [f64],
    gt: &mut [f64],
) {
    let rel = model.relation(r);
    let d = model.dim();
    match model.family() {
        Family::TransE => {
            // g = u/ρ, u = h + r - t; ∂g/∂u = (I - g gᵀ)/ρ.
            let u: Vec<f64> = (0..d).map(|i| h[i] + rel[i] - t[i]).collect();
            let rho = u.iter().map(|x| x * x).sum::<f64>().sqrt();
            if rho == 0.0 {
                return;
            }
            let gv: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>() / rho;
            for i in 0..d {
                let z = (v[i] - gv * u[i] / rho) / rho;
                gh[i] += z;
                gr[i] += z;
                gt[i] -= z;
            }
        }
        Family::DistMult => {
            // ∇_h E = -(r ⊙ t), independent of h.
            for i in 0..d {
                gr[i] -= v[i] * t[i];
                gt[i] -= v[i] * rel[i];
            }
        }
        Family::ComplEx => {
            // ∇_h E = -[rr tr + ri ti ; rr ti - ri tr], independent of h.
            for i in 0..d {
                let (rr, ri) = (rel[i], rel[d + i]);
                let (tr, ti) = (t[i], t[d + i]);
                let (vr, vi) = (v[i], v[d + i]);
                gr[i] -= vr * tr + vi * ti;
                gr[d + i] -= vr * ti - vi * tr;
                gt[i] -= vr * rr - vi * ri;
                gt[d + i] -= vr * ri + vi * rr;
            }
        }
        Family::RotatE => {
            // u = R h - t, w = u/ρ, ∇_h E = Rᵀ w, so vᵀ∇_h E = (R v)ᵀ w.
            let mut q = vec![0.0; 2 * d];
            model.combine_into(h, r, &mut q);
            let mut vp = vec![0.0; 2 * d];
            let mut sc = Vec::with_capacity(d);
            for i in 0..d {
                let (s, c) = rel[i].sin_cos();
                vp[i] = c * v[i] - s * v[d + i];
                vp[d + i] = s * v[i] + c * v[d + i];
                sc.push((s, c));
            }
            let u: Vec<f64> = q.iter().zip(t).map(|(a, b)| a - b).collect();
            let rho = u.iter().map(|x| x * x).sum::<f64>().sqrt();
            if rho == 0.0 {
                return;
            }
            let wv: f64 = u.iter().zip(&vp).map(|(a, b)| a * b).sum::<f64>() / rho;
            for i in 0..d {
                let (s, c) = sc[i];
                let (wr, wi) = (u[i] / rho, u[d + i] / rho);
                let zr = (vp[i] - wv * wr) / rho;
                let zi = (vp[d + i] - wv * wi) / rho;
                gh[i] += c * zr + s * zi;
                gh[d + i] += -s * zr + c * zi;
                gt[i] -= zr;
                gt[d + i] -= zi;
                gr[i] += -zr * q[d + i] + zi * q[i] - wr * vp[d + i] + wi * vp[i];
            }
        }
    }
}
