mod common;

use common::*;
use kgd_core::certify::{certify_queries, report_from_records, robustness_report, CertConfig, CertificationRecord};
use kgd_core::graph::{FilterIndex, Query, Split};
use kgd_core::models::Family;
use kgd_core::train::{sigma_quantile, train, TrainConfig};

fn rec(cr: f64) -> CertificationRecord {
    CertificationRecord {
        query_id: 0,
        query: Query { head: 0, relation: 0, target: 1 },
        count: 0,
        n0: 100,
        p_lower: 0.0,
        cr,
        certified: cr > 0.0,
    }
}

#[test]
fn aggregate_identities_and_corners() {
    let radii: Vec<f64> = (0..=20).map(|i| i as f64 * 0.1).collect();
    let zeros = vec![rec(0.0); 5];
    let r = report_from_records(&zeros, 2.0, &radii).unwrap();
    assert_eq!((r.acr, r.acr_over_sigma, r.ca0), (0.0, 0.0, 0.0));
    assert!(r.ca_curve.iter().all(|&(_, ca)| ca == 0.0));

    let max = vec![rec(3.0); 4];
    let r = report_from_records(&max, 2.0, &radii).unwrap();
    assert_eq!((r.acr, r.acr_over_sigma, r.ca0), (3.0, 1.5, 1.0));
    assert!(r.ca_curve.iter().all(|&(_, ca)| ca == 1.0));

    let single = report_from_records(&[rec(0.55)], 1.0, &radii).unwrap();
    for &(radius, ca) in &single.ca_curve {
        assert_eq!(ca, if radius < 0.55 { 1.0 } else { 0.0 });
    }
    let at_boundary = report_from_records(&[rec(0.5)], 1.0, &[0.5]).unwrap();
    assert_eq!(at_boundary.ca_curve[0].1, 0.0);
}

#[test]
fn sigma_zero_certifies_nothing() {
    let mut rng = rng(1);
    let m = random_model(Family::ComplEx, 4, 6, 2, &mut rng);
    let queries: Vec<Query> = (0..6).map(|h| Query { head: h, relation: h % 2, target: (h + 1) % 6 }).collect();
    let filter = FilterIndex::from_triples(std::iter::empty());
    let (recs, rep) = robustness_report(&m, &queries, &filter, &CertConfig::new(0.0, 3), &[0.0]).unwrap();
    assert!(recs.iter().all(|r| r.cr == 0.0 && !r.certified));
    assert_eq!(rep.acr, 0.0);
}

#[test]
fn certification_is_deterministic_and_thread_independent() {
    let kg = chain_graph(12);
    let cfg = TrainConfig { family: Family::RotatE, dim: 8, epochs: 30, ..TrainConfig::default() };
    let model = train(&kg, &cfg).unwrap().model;
    let filter = FilterIndex::build(&kg).unwrap();
    let queries = kg.queries(Split::Train).unwrap();
    let sigma = sigma_quantile(model.entity_table()).unwrap();
    let cc = CertConfig { n0: 200, ..CertConfig::new(sigma, 9) };
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| certify_queries(&model, &queries, &filter, &cc).unwrap())
    };
    let one = run(1);
    assert_eq!(one, run(4));
    assert_eq!(one, run(1));
    let counts: Vec<u64> = one.iter().map(|r| r.count).collect();
    assert!(counts.iter().any(|&c| c > 0));
}
