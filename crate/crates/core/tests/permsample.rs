use std::collections::HashMap;

use proptest::prelude::*;
use quasitest::rng::{stream_rng, Stream};
use quasitest::{
    enumerate_exact_pw, estimate_pair_probs, exact_pair_probs, log_perm_weight, mh_swap_step, sample_permutations_mcmc,
    sis_sample, McmcConfig, Permutation, SisScheme, WeightMatrix,
};
use rand::{Rng, SeedableRng};

fn w2() -> WeightMatrix {
    WeightMatrix::from_rows(&[vec![3.0, 5.0], vec![5.0, 7.0]]).unwrap()
}

fn random_positive(n: usize, rng: &mut impl Rng) -> WeightMatrix {
    WeightMatrix::new(n, (0..n * n).map(|_| rng.random_range(0.1..3.0)).collect()).unwrap()
}

#[test]
fn swap_step_examples() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        let mut pi = Permutation::identity(2);
        assert!(mh_swap_step(&w2(), &mut pi, &mut rng));
        assert!(!pi.is_identity());
    }
    let ones = WeightMatrix::new(5, vec![1.0; 25]).unwrap();
    let mut pi = Permutation::identity(5);
    for _ in 0..100 {
        assert!(mh_swap_step(&ones, &mut pi, &mut rng));
    }
    let diag = WeightMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
    let mut pi = Permutation::identity(2);
    for _ in 0..100 {
        assert!(!mh_swap_step(&diag, &mut pi, &mut rng));
    }
}

#[test]
fn acceptance_ratio_matches_law_ratio() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
    for _ in 0..1000 {
        let n = rng.random_range(2..8);
        let w = random_positive(n, &mut rng);
        let mut v: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            v.swap(i, rng.random_range(0..=i));
        }
        let pi = Permutation::from_vec(v.clone()).unwrap();
        let i = rng.random_range(0..n - 1);
        let j = rng.random_range(i + 1..n);
        let ratio = w.get(i, v[j]) * w.get(j, v[i]) / (w.get(i, v[i]) * w.get(j, v[j]));
        v.swap(i, j);
        let swapped = Permutation::from_vec(v).unwrap();
        let law = log_perm_weight(&w, &swapped).unwrap().ln() - log_perm_weight(&w, &pi).unwrap().ln();
        assert!((ratio.ln() - law).abs() < 1e-10);
    }
}

fn frequencies(perms: &[Permutation]) -> HashMap<Vec<usize>, f64> {
    let mut m = HashMap::new();
    for p in perms {
        *m.entry(p.as_slice().to_vec()).or_insert(0.0) += 1.0 / perms.len() as f64;
    }
    m
}

#[test]
fn mcmc_uniform_on_s4() {
    let w = WeightMatrix::new(4, vec![1.0; 16]).unwrap();
    let cfg = McmcConfig { m: Some(8), ..McmcConfig::new(100_000, 11) };
    let draws = sample_permutations_mcmc(&w, &cfg).unwrap();
    let f = frequencies(&draws.permutations);
    assert_eq!(f.len(), 24);
    for v in f.values() {
        assert!((v - 1.0 / 24.0).abs() < 0.01, "{v}");
    }
    assert!((draws.acceptance_rate.unwrap() - 0.75).abs() < 0.01);
}

#[test]
fn strict_chain_is_periodic_on_constant_weights() {
    let w = WeightMatrix::new(4, vec![1.0; 16]).unwrap();
    let cfg = McmcConfig { m: Some(8), lazy: false, ..McmcConfig::new(2_000, 11) };
    let draws = sample_permutations_mcmc(&w, &cfg).unwrap();
    assert_eq!(frequencies(&draws.permutations).len(), 12);
    assert_eq!(draws.acceptance_rate, Some(1.0));
}

#[test]
fn mcmc_two_by_two_law() {
    let draws = sample_permutations_mcmc(&w2(), &McmcConfig::new(100_000, 5)).unwrap();
    let f = frequencies(&draws.permutations);
    assert!((f[&vec![0, 1]] - 21.0 / 46.0).abs() < 0.01);
    assert!(draws.permutations[0].is_identity());
}

#[test]
fn mcmc_single_draw_is_identity() {
    let draws = sample_permutations_mcmc(&w2(), &McmcConfig::new(1, 5)).unwrap();
    assert_eq!(draws.len(), 1);
    assert!(draws.permutations[0].is_identity());
    let p = estimate_pair_probs(&draws).unwrap();
    assert_eq!(p, quasitest::PairAssignmentProbs::identity(2));
}

#[test]
fn mcmc_is_deterministic_and_feasible() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
    let n = 12;
    let mut e: Vec<f64> = (0..n * n).map(|_| rng.random_range(0.0..2.0)).collect();
    for i in 0..n {
        for j in 0..n {
            if j + 2 < i {
                e[i * n + j] = 0.0;
            }
        }
        e[i * n + i] = 1.0;
    }
    let w = WeightMatrix::new(n, e).unwrap();
    let a = sample_permutations_mcmc(&w, &McmcConfig::new(500, 3)).unwrap();
    let b = sample_permutations_mcmc(&w, &McmcConfig::new(500, 3)).unwrap();
    assert_eq!(a.permutations, b.permutations);
    assert!(a.log_target.iter().all(|l| l.is_finite()));
}

#[test]
fn mcmc_rejects_infeasible_identity() {
    let w = WeightMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 1.0]]).unwrap();
    assert!(sample_permutations_mcmc(&w, &McmcConfig::new(10, 1)).is_err());
}

#[test]
fn all_state_accumulation_matches_exact() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
    let w = random_positive(5, &mut rng);
    let exact = exact_pair_probs(&w).unwrap();
    let draws = sample_permutations_mcmc(&w, &McmcConfig::new(20_000, 8)).unwrap();
    let est = estimate_pair_probs(&draws).unwrap();
    assert!(est.max_margin_error() < 1e-9);
    for (a, b) in est.as_slice().iter().zip(exact.as_slice()) {
        assert!((a - b).abs() < 0.01, "{a} vs {b}");
    }
    let retained_only = McmcConfig { accumulate_all_states: false, ..McmcConfig::new(20_000, 8) };
    let est2 = estimate_pair_probs(&sample_permutations_mcmc(&w, &retained_only).unwrap()).unwrap();
    for (a, b) in est2.as_slice().iter().zip(exact.as_slice()) {
        assert!((a - b).abs() < 0.02, "{a} vs {b}");
    }
}

#[test]
fn pair_probs_margins_at_scale() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(12);
    let w = random_positive(20, &mut rng);
    let cfg = McmcConfig { accumulate_all_states: false, ..McmcConfig::new(10_000, 1) };
    let est = estimate_pair_probs(&sample_permutations_mcmc(&w, &cfg).unwrap()).unwrap();
    assert!(est.max_margin_error() < 0.05);
}

#[test]
fn exact_pair_prob_examples() {
    let ones = WeightMatrix::new(2, vec![1.0; 4]).unwrap();
    assert_eq!(exact_pair_probs(&ones).unwrap().as_slice(), &[0.5; 4]);
    let p = exact_pair_probs(&w2()).unwrap();
    let expect = [21.0 / 46.0, 25.0 / 46.0, 25.0 / 46.0, 21.0 / 46.0];
    for (a, b) in p.as_slice().iter().zip(expect) {
        assert!((a - b).abs() < 1e-15);
    }
    let diag = WeightMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
    assert_eq!(exact_pair_probs(&diag).unwrap(), quasitest::PairAssignmentProbs::identity(2));
}

#[test]
fn uniform_scheme_log_proposal() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
    let w = random_positive(6, &mut rng);
    let d = sis_sample(&w, SisScheme::Uniform, 50, 1).unwrap();
    let lf = (720f64).ln();
    assert!(d.log_proposal.as_ref().unwrap().iter().all(|l| (l + lf).abs() < 1e-12));
    assert!(d.permutations[0].is_identity());
}

#[test]
fn monotone_constant_weights_is_uniform() {
    let w = WeightMatrix::new(5, vec![1.0; 25]).unwrap();
    let d = sis_sample(&w, SisScheme::Monotone, 100, 2).unwrap();
    let lf = (120f64).ln();
    assert!(d.log_proposal.as_ref().unwrap().iter().all(|l| (l + lf).abs() < 1e-12));
}

#[test]
fn every_scheme_recovers_two_by_two_law() {
    for scheme in
        [SisScheme::Uniform, SisScheme::Monotone, SisScheme::Grid, SisScheme::KouMcCullagh, SisScheme::ExactLaw]
    {
        let d = sis_sample(&w2(), scheme, 100_000, 3).unwrap();
        let wts = d.normalized_weights().unwrap();
        let p: f64 = d.permutations.iter().zip(&wts).filter(|(p, _)| p.is_identity()).map(|(_, w)| w).sum();
        assert!((p - 21.0 / 46.0).abs() < 0.02, "{scheme}: {p}");
    }
}

#[test]
fn sis_pair_probs_converge_for_every_scheme() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    for n in [3, 5] {
        let w = random_positive(n, &mut rng);
        let exact = exact_pair_probs(&w).unwrap();
        for scheme in [SisScheme::Uniform, SisScheme::Monotone, SisScheme::Grid, SisScheme::KouMcCullagh] {
            let d = sis_sample(&w, scheme, 100_000, n as u64).unwrap();
            let est = estimate_pair_probs(&d).unwrap();
            for (a, b) in est.as_slice().iter().zip(exact.as_slice()) {
                assert!((a - b).abs() < 0.02, "{scheme} n={n}: {a} vs {b}");
            }
            assert!(d.weight_cv().unwrap().is_finite());
        }
    }
}

#[test]
fn sis_dead_ends_get_zero_weight() {
    // upper-triangular support: only the identity is feasible
    let w = WeightMatrix::from_rows(&[vec![1.0, 1.0, 1.0], vec![0.0, 1.0, 1.0], vec![0.0, 0.0, 1.0]]).unwrap();
    for scheme in [SisScheme::Uniform, SisScheme::Monotone, SisScheme::Grid, SisScheme::KouMcCullagh] {
        let d = sis_sample(&w, scheme, 500, 4).unwrap();
        let wts = d.normalized_weights().unwrap();
        for (p, wt) in d.permutations.iter().zip(&wts) {
            if !p.is_identity() {
                assert_eq!(*wt, 0.0, "{scheme}");
            }
        }
        assert!(d.permutations.iter().all(|p| Permutation::from_vec(p.as_slice().to_vec()).is_ok()));
    }
}

#[test]
fn kou_mccullagh_floors_dominated_columns() {
    let w = WeightMatrix::from_rows(&[vec![1.0, 1e-30], vec![1e-30, 1.0]]).unwrap();
    let d = sis_sample(&w, SisScheme::KouMcCullagh, 200, 1).unwrap();
    assert!(d.floored_steps > 0);
    assert!(d.log_proposal.unwrap().iter().all(|l| l.is_finite()));
}

#[test]
fn draws_csv_dump() {
    let d = sis_sample(&w2(), SisScheme::Monotone, 3, 1).unwrap();
    let mut buf = Vec::new();
    d.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("draw_index,log_target,log_proposal,acceptance_rate"));
    assert_eq!(lines.count(), 3);
}

#[test]
fn exact_scheme_weights_are_constant() {
    let mut rng = stream_rng(5, Stream::Data);
    let w = random_positive(5, &mut rng);
    let d = sis_sample(&w, SisScheme::ExactLaw, 50_000, 9).unwrap();
    let wts = d.normalized_weights().unwrap();
    assert!(wts.iter().all(|&x| x == wts[0]));
    let law = enumerate_exact_pw(&w).unwrap();
    let f = frequencies(&d.permutations[1..]);
    let tv: f64 = law.entries.iter().map(|(p, q)| (f.get(p.as_slice()).unwrap_or(&0.0) - q).abs()).sum::<f64>() / 2.0;
    assert!(tv < 0.05, "{tv}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn retained_mcmc_states_are_feasible(seed in any::<u64>(), n in 2usize..15) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut e: Vec<f64> = (0..n * n).map(|_| if rng.random_bool(0.4) { 0.0 } else { rng.random_range(0.1..2.0) }).collect();
        for i in 0..n { e[i * n + i] = 1.0; }
        let w = WeightMatrix::new(n, e).unwrap();
        let d = sample_permutations_mcmc(&w, &McmcConfig::new(50, seed)).unwrap();
        for p in &d.permutations {
            prop_assert!(log_perm_weight(&w, p).unwrap().ln() > f64::NEG_INFINITY);
        }
    }
}
