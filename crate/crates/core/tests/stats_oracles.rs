mod common;

use common::*;
use kgd_core::stats::{clopper_pearson_lcb, norm_cdf, phi_inverse};
use rand::Rng;
use rand_distr::{Binomial, Distribution};

#[test]
fn phi_inverse_on_grid() {
    for i in 1..=999 {
        let p = i as f64 / 1000.0;
        let (got, want) = (phi_inverse(p).unwrap(), phi_inverse_oracle(p));
        assert!((got - want).abs() < 1e-8, "p={p}: {got} vs {want}");
    }
}

#[test]
fn phi_inverse_spec_value() {
    assert!((phi_inverse(0.9).unwrap() - 1.2815516).abs() < 1e-7);
}

#[test]
fn phi_inverse_inverts_cdf() {
    let mut z = -5.0;
    let mut prev = f64::NEG_INFINITY;
    while z <= 5.0 {
        let back = phi_inverse(norm_cdf(z)).unwrap();
        assert!((back - z).abs() < 1e-8, "z={z}: {back}");
        assert!(back > prev);
        prev = back;
        z += 0.01;
    }
}

#[test]
fn lcb_matches_binomial_tail_oracle() {
    let mut rng = rng(7);
    for case in 0..200 {
        let n = rng.random_range(1..=2000u64);
        let k = rng.random_range(0..=n);
        let c = if case % 2 == 0 { 0.95 } else { 0.999 };
        let (got, want) = (clopper_pearson_lcb(n, k, c).unwrap(), cp_lcb_oracle(n, k, c));
        assert!((got - want).abs() < 1e-8, "n={n} k={k} C={c}: {got} vs {want}");
    }
    let (got, want) = (clopper_pearson_lcb(1000, 990, 0.999).unwrap(), cp_lcb_oracle(1000, 990, 0.999));
    assert!((got - want).abs() < 1e-8);
}

#[test]
fn lcb_coverage() {
    let mut rng = rng(99);
    for c in [0.95, 0.999] {
        let sims = 10_000;
        let mut covered = 0;
        for _ in 0..sims {
            let n = rng.random_range(10..=1000u64);
            let p: f64 = rng.random_range(0.01..0.99);
            let k = Binomial::new(n, p).unwrap().sample(&mut rng);
            covered += (clopper_pearson_lcb(n, k, c).unwrap() <= p) as usize;
        }
        let rate = covered as f64 / sims as f64;
        assert!(rate >= c - 0.01, "C={c}: coverage {rate}");
    }
}
