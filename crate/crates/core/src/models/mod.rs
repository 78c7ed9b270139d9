//! Energy-based scoring functions.
//!
//! Every family scores a triple by first combining head and relation into a
//! query vector `q`, then matching `q` against the tail:
//!
//! | family   | entity storage | relation storage | `q`              | score          |
//! |----------|----------------|------------------|------------------|----------------|
//! | TransE   | d reals        | d reals          | h + r            | -‖q - t‖₂      |
//! | DistMult | d reals        | d reals          | h ⊙ r            | ⟨q, t⟩         |
//! | ComplEx  | d complex      | d complex        | h ∘ r            | Re⟨q, conj t⟩  |
//! | RotatE   | d complex      | d phases         | h ∘ e^{iθ}       | -‖q - t‖₂      |
//!
//! Complex vectors are stored as `[re_0 .. re_{d-1}, im_0 .. im_{d-1}]`.
//! The energy is the negated score.

mod checkpoint;
pub(crate) mod grad;

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    TransE,
    DistMult,
    ComplEx,
    RotatE,
}

impl Family {
    pub const ALL: [Family; 4] = [
        Family::TransE,
        Family::DistMult,
        Family::ComplEx,
        Family::RotatE,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::TransE => "transe",
            Family::DistMult => "distmult",
            Family::ComplEx => "complex",
            Family::RotatE => "rotate",
        }
    }

    pub(crate) fn tag(self) -> u8 {
        match self {
            Family::TransE => 0,
            Family::DistMult => 1,
            Family::ComplEx => 2,
            Family::RotatE => 3,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Option<Self> {
        Family::ALL.into_iter().find(|f| f.tag() == tag)
    }

    pub fn entity_width(self, dim: usize) -> usize {
        match self {
            Family::TransE | Family::DistMult => dim,
            Family::ComplEx | Family::RotatE => 2 * dim,
        }
    }

    pub fn relation_width(self, dim: usize) -> usize {
        match self {
            Family::TransE | Family::DistMult | Family::RotatE => dim,
            Family::ComplEx => 2 * dim,
        }
    }

    /// Distance families score by `-‖q - t‖`, the others by `⟨q, t⟩`.
    pub(crate) fn is_distance(self) -> bool {
        matches!(self, Family::TransE | Family::RotatE)
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown model family `{s}`")))
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Entity and relation parameter tables for one scoring family.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingModel {
    family: Family,
    dim: usize,
    num_entities: usize,
    num_relations: usize,
    /// Row-major, `num_entities × entity_width`.
    pub(crate) entities: Vec<f64>,
    /// Row-major, `num_relations × relation_width`.
    pub(crate) relations: Vec<f64>,
}

impl EmbeddingModel {
    /// Uniform init in `[-init_scale, init_scale]`; RotatE phases are uniform
    /// in `[-π, π]` scaled by `init_scale > 0` (zero scale gives zero phases).
    pub fn init(
        family: Family,
        dim: usize,
        num_entities: usize,
        num_relations: usize,
        seed: u64,
        init_scale: f64,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidConfig("dim must be at least 1".into()));
        }
        if num_entities == 0 || num_relations == 0 {
            return Err(Error::EmptyVocabulary);
        }
        if !init_scale.is_finite() || init_scale < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "init_scale must be finite and non-negative, got {init_scale}"
            )));
        }
        let mut rng = rng::rng_for(seed, &[rng::stream::INIT]);
        let mut draw = |n: usize, scale: f64| -> Vec<f64> {
            (0..n)
                .map(|_| {
                    let u: f64 = rng.random_range(-1.0..=1.0);
                    u * scale
                })
                .collect()
        };
        let entities = draw(num_entities * family.entity_width(dim), init_scale);
        let rel_scale = match family {
            Family::RotatE if init_scale > 0.0 => PI,
            _ => init_scale,
        };
        let relations = draw(num_relations * family.relation_width(dim), rel_scale);
        Ok(Self {
            family,
            dim,
            num_entities,
            num_relations,
            entities,
            relations,
        })
    }

    /// Assemble a model from raw tables, checking shapes and finiteness.
    pub fn from_tables(
        family: Family,
        dim: usize,
        num_entities: usize,
        num_relations: usize,
        entities: Vec<f64>,
        relations: Vec<f64>,
    ) -> Result<Self> {
        if dim == 0 || num_entities == 0 || num_relations == 0 {
            return Err(Error::EmptyVocabulary);
        }
        if entities.len() != num_entities * family.entity_width(dim)
            || relations.len() != num_relations * family.relation_width(dim)
        {
            return Err(Error::InvalidConfig("table shape mismatch".into()));
        }
        let m = Self {
            family,
            dim,
            num_entities,
            num_relations,
            entities,
            relations,
        };
        m.check_finite()?;
        Ok(m)
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_entities(&self) -> usize {
        self.num_entities
    }

    pub fn num_relations(&self) -> usize {
        self.num_relations
    }

    pub fn entity_width(&self) -> usize {
        self.family.entity_width(self.dim)
    }

    pub fn relation_width(&self) -> usize {
        self.family.relation_width(self.dim)
    }

    pub fn entity_table(&self) -> &[f64] {
        &self.entities
    }

    pub fn relation_table(&self) -> &[f64] {
        &self.relations
    }

    pub fn entity_table_mut(&mut self) -> &mut [f64] {
        &mut self.entities
    }

    pub fn relation_table_mut(&mut self) -> &mut [f64] {
        &mut self.relations
    }

    pub fn entity(&self, i: usize) -> &[f64] {
        let w = self.entity_width();
        &self.entities[i * w..(i + 1) * w]
    }

    pub fn relation(&self, r: usize) -> &[f64] {
        let w = self.relation_width();
        &self.relations[r * w..(r + 1) * w]
    }

    pub fn check_finite(&self) -> Result<()> {
        if self.entities.iter().chain(&self.relations).all(|x| x.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite {
                context: "model parameters".into(),
            })
        }
    }

    fn check_entity(&self, i: usize) -> Result<()> {
        if i < self.num_entities {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange {
                what: "entity",
                index: i,
                len: self.num_entities,
            })
        }
    }

    fn check_relation(&self, r: usize) -> Result<()> {
        if r < self.num_relations {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange {
                what: "relation",
                index: r,
                len: self.num_relations,
            })
        }
    }

    /// Write the query vector `q = combine(h, r)` into `q`.
    pub(crate) fn combine_into(&self, h: &[f64], r: usize, q: &mut [f64]) {
        let rel = self.relation(r);
        let d = self.dim;
        match self.family {
            Family::TransE => {
                for ((q, h), r) in q.iter_mut().zip(h).zip(rel) {
                    *q = h + r;
                }
            }
            Family::DistMult => {
                for ((q, h), r) in q.iter_mut().zip(h).zip(rel) {
                    *q = h * r;
                }
            }
            Family::ComplEx => {
                for i in 0..d {
                    let (hr, hi) = (h[i], h[d + i]);
                    let (rr, ri) = (rel[i], rel[d + i]);
                    q[i] = hr * rr - hi * ri;
                    q[d + i] = hr * ri + hi * rr;
                }
            }
            Family::RotatE => {
                for i in 0..d {
                    let (hr, hi) = (h[i], h[d + i]);
                    let (s, c) = rel[i].sin_cos();
                    q[i] = c * hr - s * hi;
                    q[d + i] = s * hr + c * hi;
                }
            }
        }
    }

    pub(crate) fn match_tail(&self, q: &[f64], t: &[f64]) -> f64 {
        if self.family.is_distance() {
            let sq: f64 = q.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum();
            -sq.sqrt()
        } else {
            q.iter().zip(t).map(|(a, b)| a * b).sum()
        }
    }

    /// Score of `(h_vec, r, t_vec)` for arbitrary head and tail vectors.
    pub fn score_vectors(&self, h: &[f64], r: usize, t: &[f64]) -> f64 {
        let mut q = vec![0.0; self.entity_width()];
        self.combine_into(h, r, &mut q);
        self.match_tail(&q, t)
    }

    pub fn score(&self, h: usize, r: usize, t: usize) -> Result<f64> {
        self.check_entity(h)?;
        self.check_relation(r)?;
        self.check_entity(t)?;
        Ok(self.score_vectors(self.entity(h), r, self.entity(t)))
    }

    pub fn energy(&self, h: usize, r: usize, t: usize) -> Result<f64> {
        Ok(-self.score(h, r, t)?)
    }

    /// Scores of every entity as the tail of `(h_vec, r, ?)`.
    ///
    /// Entry `i` is bit-identical to `score_vectors(h_vec, r, entity(i))`.
    pub fn score_all_tails(&self, h: &[f64], r: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.num_entities];
        self.score_all_tails_into(h, r, &mut out);
        out
    }

    pub fn score_all_tails_into(&self, h: &[f64], r: usize, out: &mut [f64]) {
        let mut q = vec![0.0; self.entity_width()];
        self.combine_into(h, r, &mut q);
        self.match_all_tails(&q, out);
    }

    pub(crate) fn match_all_tails(&self, q: &[f64], out: &mut [f64]) {
        let w = self.entity_width();
        for (o, t) in out.iter_mut().zip(self.entities.chunks_exact(w)) {
            *o = self.match_tail(q, t);
        }
    }

    /// `∇_h E(h_vec, r, t)`, the energy gradient with respect to the head
    /// vector. At the TransE/RotatE singular point `q = t` this is zero.
    pub fn grad_energy_head(&self, h: &[f64], r: usize, t: usize) -> Vec<f64> {
        let mut g = vec![0.0; self.entity_width()];
        grad::energy_head_grad(self, h, r, self.entity(t), &mut g);
        g
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(family: Family, dim: usize, ents: Vec<f64>, rels: Vec<f64>) -> EmbeddingModel {
        let ne = ents.len() / family.entity_width(dim);
        let nr = rels.len() / family.relation_width(dim);
        EmbeddingModel::from_tables(family, dim, ne, nr, ents, rels).unwrap()
    }

    #[test]
    fn transe_exact_translation_scores_zero() {
        let m = model(Family::TransE, 2, vec![0.5, 1.0, 1.5, 0.0], vec![1.0, -1.0]);
        assert_eq!(m.score(0, 0, 1).unwrap(), 0.0);
        assert_eq!(m.energy(0, 0, 1).unwrap(), 0.0);
    }

    #[test]
    fn distmult_identity_relation_is_dot() {
        let m = model(Family::DistMult, 3, vec![1.0, 2.0, 3.0, -1.0, 0.5, 2.0], vec![1.0; 3]);
        assert_eq!(m.score(0, 0, 1).unwrap(), -1.0 + 1.0 + 6.0);
    }

    #[test]
    fn distmult_zero_head_zero_energy() {
        let m = model(Family::DistMult, 2, vec![0.0, 0.0, 3.0, 4.0], vec![2.0, 5.0]);
        assert_eq!(m.energy(0, 0, 1).unwrap(), 0.0);
    }

    #[test]
    fn rotate_zero_phase_identity() {
        let m = model(Family::RotatE, 2, vec![0.3, -0.2, 0.7, 0.1], vec![0.0, 0.0]);
        assert_eq!(m.score(0, 0, 0).unwrap(), 0.0);
    }

    #[test]
    fn transe_toy_all_tails() {
        let m = model(
            Family::TransE,
            2,
            vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0],
            vec![1.0, 0.0],
        );
        let s = m.score_all_tails(&[0.0, 0.0], 0);
        assert_eq!(s[1], 0.0);
        assert!((s[2] + 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn out_of_range_indices() {
        let m = EmbeddingModel::init(Family::DistMult, 2, 3, 1, 0, 0.1).unwrap();
        assert!(m.score(3, 0, 0).is_err());
        assert!(m.score(0, 1, 0).is_err());
    }

    #[test]
    fn init_determinism_and_zero_scale() {
        let a = EmbeddingModel::init(Family::RotatE, 4, 5, 2, 11, 0.3).unwrap();
        let b = EmbeddingModel::init(Family::RotatE, 4, 5, 2, 11, 0.3).unwrap();
        assert_eq!(a, b);
        let c = EmbeddingModel::init(Family::RotatE, 4, 5, 2, 12, 0.3).unwrap();
        assert_ne!(a.entity_table(), c.entity_table());
        assert!(a.relation_table().iter().all(|p| p.abs() <= PI));
        let z = EmbeddingModel::init(Family::RotatE, 4, 5, 2, 11, 0.0).unwrap();
        assert!(z.entity_table().iter().chain(z.relation_table()).all(|&x| x == 0.0));
        assert!(EmbeddingModel::init(Family::TransE, 4, 0, 2, 0, 0.1).is_err());
        assert!(EmbeddingModel::init(Family::TransE, 0, 3, 2, 0, 0.1).is_err());
    }

    #[test]
    fn family_parse() {
        assert_eq!("RotatE".parse::<Family>().unwrap(), Family::RotatE);
        assert!("conve".parse::<Family>().is_err());
    }
}
