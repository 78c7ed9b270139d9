mod common;

use common::*;
use kgd_core::eval::{link_prediction, EvalCondition};
use kgd_core::graph::{FilterIndex, Split};
use kgd_core::models::{read_checkpoint, write_checkpoint, Family};
use kgd_core::train::{denoising_loss, joint_step, sigma_quantile, train, train_with, Optimizer, TrainConfig};


#[test]
fn lambda_zero_ignores_alpha() {
    let kg = chain_graph(10);
    for family in Family::ALL {
        let base = TrainConfig { family, dim: 4, epochs: 5, lambda: 0.0, alpha: 0.1, ..TrainConfig::default() };
        let a = train(&kg, &base).unwrap().model;
        let b = train(&kg, &TrainConfig { alpha: 3.0, perturb_prob: 0.5, ..base }).unwrap().model;
        assert_eq!(a, b, "{family}");
    }
}

#[test]
fn training_is_reproducible_to_the_bit() {
    let kg = chain_graph(10);
    let cfg = TrainConfig { family: Family::ComplEx, dim: 6, epochs: 8, batch_size: 5, eval_every: 2, ..TrainConfig::default() };
    let (a, b) = (train(&kg, &cfg).unwrap(), train(&kg, &cfg).unwrap());
    let bytes = |m| {
        let mut v = Vec::new();
        write_checkpoint(m, &mut v).unwrap();
        v
    };
    assert_eq!(bytes(&a.model), bytes(&b.model));
    let strip = |log: &[kgd_core::train::EpochLog]| {
        log.iter().map(|r| (r.epoch, r.original.to_bits(), r.denoising.to_bits(), r.sigma.to_bits(), r.valid_mrr.map(f64::to_bits))).collect::<Vec<_>>()
    };
    assert_eq!(strip(&a.log), strip(&b.log));
    let back = read_checkpoint(&mut bytes(&a.model).as_slice()).unwrap();
    assert_eq!(back, a.model);
    let other = train(&kg, &TrainConfig { seed: 1, ..cfg }).unwrap();
    assert_ne!(other.model, a.model);
}

#[test]
fn loss_ledger_is_exact() {
    let kg = chain_graph(8);
    let cfg = TrainConfig { family: Family::TransE, dim: 4, epochs: 1, lambda: 0.37, ..TrainConfig::default() };
    let mut model = train(&kg, &TrainConfig { epochs: 0, ..cfg.clone() }).unwrap().model;
    let mut opt = Optimizer::new(cfg.optimizer, cfg.learning_rate, &model);
    let mut rng = rng(2);
    let batch = kg.split(Split::Train).to_vec();
    for step in 0..5 {
        let r = joint_step(&mut model, &mut opt, &batch, &cfg, 0.3, &mut rng, 0, step).unwrap();
        assert_eq!(r.joint - (r.original + cfg.lambda * r.denoising), 0.0);
        assert!(r.original >= 0.0 && r.denoising >= 0.0);
    }
    let log = train_with(&kg, &TrainConfig { epochs: 3, ..cfg.clone() }, |_| {}).unwrap().log;
    for r in log {
        assert_eq!(r.joint, r.original + cfg.lambda * r.denoising);
    }
}

#[test]
fn zero_alpha_leaves_head_unperturbed() {
    let mut rng = rng(4);
    let m = random_model(Family::DistMult, 3, 4, 2, &mut rng);
    let d = kgd_core::train::perturb_entity(&m, 1, 0.0, 0.8, &mut rng);
    assert_eq!(d.perturbed, m.entity(1));
    let g = m.grad_energy_head(m.entity(1), 0, 2);
    let want: f64 = d.noise.iter().zip(&g).map(|(n, g)| (n + g) * (n + g)).sum();
    assert!((denoising_loss(&m, &d, 0, 2).unwrap() - want).abs() < 1e-12);
}

#[test]
fn distmult_toy_denoising_loss() {
    let m = kgd_core::EmbeddingModel::from_tables(Family::DistMult, 1, 2, 1, vec![1.0, 1.0], vec![1.0]).unwrap();
    let d = draw_from_noise(&m, 0, &[0.5], 1.0);
    assert_eq!(denoising_loss(&m, &d, 0, 1).unwrap(), 0.25);
}

#[test]
fn chain_memorization() {
    let kg = chain_graph(20);
    let filter = FilterIndex::build(&kg).unwrap();
    let queries = kg.queries(Split::Train).unwrap();
    for family in Family::ALL {
        let cfg = TrainConfig { family, epochs: 200, lambda: 0.2, alpha: 0.5, ..TrainConfig::default() };
        let model = train(&kg, &cfg).unwrap().model;
        let m = link_prediction(&model, &queries, &filter, &EvalCondition::Clean).unwrap();
        assert!(m.hits1 >= 0.9, "{family}: {m:?}");
        assert!(sigma_quantile(model.entity_table()).unwrap() > 0.0);
    }
}

#[test]
fn perturbed_evaluation_is_seeded() {
    let kg = chain_graph(10);
    let model = train(&kg, &TrainConfig { dim: 4, epochs: 3, ..TrainConfig::default() }).unwrap().model;
    let filter = FilterIndex::build(&kg).unwrap();
    let q = kg.queries(Split::Train).unwrap();
    let c = EvalCondition::Perturbed { alpha: 2.0, seed: 5 };
    assert_eq!(link_prediction(&model, &q, &filter, &c).unwrap(), link_prediction(&model, &q, &filter, &c).unwrap());
}
