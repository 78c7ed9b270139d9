use serde::{Deserialize, Serialize};

use super::loss::Gradients;
use crate::models::EmbeddingModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Default for OptimizerKind {
    fn default() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Default)]
struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
}

/// Dense optimizer state over both parameter tables.
#[derive(Debug)]
pub struct Optimizer {
    kind: OptimizerKind,
    learning_rate: f64,
    step: i32,
    entities: Moments,
    relations: Moments,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, learning_rate: f64, model: &EmbeddingModel) -> Self {
        let moments = |n: usize| match kind {
            OptimizerKind::Sgd => Moments::default(),
            OptimizerKind::Adam { .. } => Moments {
                m: vec![0.0; n],
                v: vec![0.0; n],
            },
        };
        Self {
            kind,
            learning_rate,
            step: 0,
            entities: moments(model.entity_table().len()),
            relations: moments(model.relation_table().len()),
        }
    }

    pub fn apply(&mut self, model: &mut EmbeddingModel, grads: &Gradients) {
        self.step += 1;
        let lr = self.learning_rate;
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in model.entities.iter_mut().zip(&grads.entities) {
                    *p -= lr * g;
                }
                for (p, g) in model.relations.iter_mut().zip(&grads.relations) {
                    *p -= lr * g;
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                let c1 = 1.0 - beta1.powi(self.step);
                let c2 = 1.0 - beta2.powi(self.step);
                let update = |params: &mut [f64], grads: &[f64], st: &mut Moments| {
                    for i in 0..params.len() {
                        let g = grads[i];
                        st.m[i] = beta1 * st.m[i] + (1.0 - beta1) * g;
                        st.v[i] = beta2 * st.v[i] + (1.0 - beta2) * g * g;
                        let mh = st.m[i] / c1;
                        let vh = st.v[i] / c2;
                        params[i] -= lr * mh / (vh.sqrt() + eps);
                    }
                };
                update(&mut model.entities, &grads.entities, &mut self.entities);
                update(&mut model.relations, &grads.relations, &mut self.relations);
            }
        }
    }
}
