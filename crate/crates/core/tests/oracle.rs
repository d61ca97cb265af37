mod common;

use common::{oracle_consistent, oracle_crude, oracle_kernel, oracle_policy, oracle_v, utilities_for, Utilities};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use seqsearch::likelihood::{
    compute_v, consumer_likelihoods, crude_likelihood, kernel_likelihood, log_likelihood, DrawSet, Smoothing, CRUDE_FLOOR,
};
use seqsearch::model::{apply_policy, simulate_consumer, simulate_dataset, ConsumerDraws, ConsumerRecord, Dataset, Parameters};
use seqsearch::reservation::solve_m_newton;
use seqsearch::stats::RngStream;

fn random_record(rng: &mut ChaCha8Rng, j: usize) -> ConsumerRecord {
    let mut order: Vec<usize> = (1..=j).collect();
    order.shuffle(rng);
    let k = rng.gen_range(0..=j);
    let searched = order[..k].to_vec();
    let purchase = if k == 0 || rng.gen_bool(0.3) { 0 } else { searched[rng.gen_range(0..k)] };
    ConsumerRecord {
        searched,
        purchase,
        xi: vec![0.0; j],
    }
}

fn random_utilities(rng: &mut ChaCha8Rng, j: usize) -> Utilities {
    let z: Vec<f64> = (0..j).map(|_| rng.sample(StandardNormal)).collect();
    let u: Vec<f64> = (0..j).map(|_| rng.sample(StandardNormal)).collect();
    let u0 = rng.sample(StandardNormal);
    Utilities { z, u, u0 }
}

#[test]
fn compute_v_matches_oracle_bitwise() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..1000 {
        let j = rng.gen_range(1..=6);
        let rec = random_record(&mut rng, j);
        let w = random_utilities(&mut rng, j);
        let v = compute_v(&rec, &w.z, &w.u, w.u0).unwrap();
        let (v1, v2, v3, v4) = oracle_v(&rec.searched, rec.purchase, &w);
        assert_eq!(v.v1, v1);
        assert_eq!(v.v2, v2);
        assert_eq!(v.v3.to_bits(), v3.to_bits());
        assert_eq!(v.v4.to_bits(), v4.to_bits());
        assert_eq!(v.all_nonnegative(), oracle_consistent(&rec.searched, rec.purchase, &w));
    }
}

#[test]
fn policy_output_is_consistent_and_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..5000 {
        let j = rng.gen_range(1..=6);
        let w = random_utilities(&mut rng, j);
        let (s, y) = apply_policy(&w.z, &w.u, w.u0);
        assert_eq!((s.clone(), y), oracle_policy(&w));
        assert!(oracle_consistent(&s, y, &w));
    }
}

/// A five-consumer dataset whose records are drawn from the model, so both
/// zero and positive crude frequencies occur.
fn small_problem() -> (Dataset, DrawSet, Parameters, f64) {
    let theta = Parameters::reference();
    let m = solve_m_newton(theta.cost(), 1e-12).unwrap();
    let data = simulate_dataset(&theta, 5, &RngStream::new(3).substream(0)).unwrap();
    let draws = DrawSet::generate(&RngStream::new(3).substream(1), 5, 4, 50);
    (data, draws, theta, m)
}

#[test]
fn crude_likelihood_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let theta = Parameters::reference();
    let m = 1.1;
    let draws = DrawSet::generate(&RngStream::new(5), 200, 4, 20);
    for i in 0..200 {
        let rec = random_record(&mut rng, 4);
        let slice = draws.consumer(i);
        let ws = utilities_for(&theta.beta, &slice, m);
        let ours = crude_likelihood(&rec, &theta, &slice, m).unwrap();
        assert_eq!(ours.to_bits(), oracle_crude(&rec.searched, rec.purchase, &ws).to_bits());
        let k = kernel_likelihood(&rec, &theta, &slice, m, 7.0).unwrap();
        assert!((k - oracle_kernel(&rec.searched, rec.purchase, &ws, 7.0)).abs() <= 1e-14);
    }
}

#[test]
fn log_likelihood_matches_oracle_sum() {
    let (data, draws, theta, m) = small_problem();
    let mut crude = 0.0;
    let mut kernel = 0.0;
    let mut any_positive = false;
    for (i, rec) in data.consumers.iter().enumerate() {
        let ws = utilities_for(&theta.beta, &draws.consumer(i), m);
        let l = oracle_crude(&rec.searched, rec.purchase, &ws);
        any_positive |= l > 0.0;
        crude += l.max(CRUDE_FLOOR).ln();
        kernel += oracle_kernel(&rec.searched, rec.purchase, &ws, 10.0).ln();
    }
    assert!(any_positive);
    let ours = log_likelihood(&data, &theta, &draws, m, Smoothing::Crude).unwrap();
    assert!((ours - crude).abs() <= 1e-12 * crude.abs().max(1.0));
    let ours = log_likelihood(&data, &theta, &draws, m, Smoothing::kernel(10.0)).unwrap();
    assert!((ours - kernel).abs() <= 1e-12 * kernel.abs().max(1.0));
}

#[test]
fn true_draws_always_explain_the_record() {
    // The draws that generated a record give it crude likelihood one.
    let theta = Parameters::reference();
    let m = solve_m_newton(theta.cost(), 1e-12).unwrap();
    let stream = RngStream::new(21);
    let mut consumers = Vec::new();
    let mut parts = Vec::new();
    for i in 0..300u64 {
        let d = ConsumerDraws::from_stream(&stream.substream(i), 4);
        consumers.push(simulate_consumer(&theta, &d, m));
        parts.push(vec![(d.mu.clone(), d.eps.clone(), d.eps0)]);
    }
    let data = Dataset::new(consumers, 4).unwrap();
    let draws = DrawSet::from_parts(4, &parts).unwrap();
    let ls = consumer_likelihoods(&data, &theta, &draws, m, Smoothing::Crude, Default::default()).unwrap();
    assert!(ls.iter().all(|&l| l == 1.0));
}

proptest! {
    #[test]
    fn simulated_records_match_oracle_policy(seed in any::<u64>(), log_c in -6.0f64..-0.95) {
        let theta = Parameters::new(vec![0.4, -0.2, 0.9], log_c);
        let m = solve_m_newton(theta.cost(), 1e-12).unwrap();
        let d = ConsumerDraws::from_stream(&RngStream::new(seed), 3);
        let rec = simulate_consumer(&theta, &d, m);
        let w = Utilities::from_consumer(&theta, &d, m);
        prop_assert_eq!((rec.searched, rec.purchase), oracle_policy(&w));
    }
}
