use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use permci::balanced::fast_interval_exact;
use permci::exactdist::{binomial, exact_pvalue};
use permci::montecarlo::{mc_interval_balanced, mc_test, required_k_balanced, sample_split, McConfig};
use permci::unbalanced::{step_summary, unbalanced_interval_mc, AssignmentSummary};
use permci::validation::random_balanced_obs;
use permci::{Arithmetic, CountVector, Design, ObservedCounts, Prob};

fn prob(s: &str) -> Prob {
    s.parse().unwrap()
}

fn chi2_sf(counts: &HashMap<[u64; 4], u64>, expected: &HashMap<[u64; 4], f64>, draws: u64) -> f64 {
    let mut stat = 0.0;
    for (key, p) in expected {
        let e = p * draws as f64;
        let o = counts.get(key).copied().unwrap_or(0) as f64;
        stat += (o - e).powi(2) / e;
    }
    assert!(counts.keys().all(|k| expected.contains_key(k)), "draw outside the support");
    ChiSquared::new(expected.len() as f64 - 1.0).unwrap().sf(stat)
}

/// Multivariate hypergeometric split probabilities computed from binomials.
fn split_law(v: &CountVector, d: &Design) -> HashMap<[u64; 4], f64> {
    let total = binomial(d.n(), d.m());
    let mut law = HashMap::new();
    for a in 0..=v.v11 {
        for b in 0..=v.v10 {
            for c in 0..=v.v01 {
                let Some(rest) = d.m().checked_sub(a + b + c) else { continue };
                if rest > v.v00 {
                    continue;
                }
                let w = binomial(v.v11, a) * binomial(v.v10, b) * binomial(v.v01, c) * binomial(v.v00, rest);
                let p = permci::exactdist::to_f64(&num_rational::BigRational::new(w.into(), total.clone().into()));
                law.insert([a, b, c, rest], p);
            }
        }
    }
    law
}

#[test]
fn sampled_splits_follow_the_hypergeometric_law() {
    let d = Design::new(9, 4).unwrap();
    let v = CountVector::new(2, 3, 1, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let draws = 200_000;
    let mut counts = HashMap::new();
    for _ in 0..draws {
        let x = sample_split(&v, &d, &mut rng);
        *counts.entry([x.x11, x.x10, x.x01, x.x00]).or_insert(0) += 1;
    }
    assert!(chi2_sf(&counts, &split_law(&v, &d), draws) >= 0.001);
}

#[test]
fn stepped_splits_follow_the_law_of_the_stepped_table() {
    let d = Design::new(7, 3).unwrap();
    let v = CountVector::new(3, 1, 2, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let draws = 100_000;
    let mut counts = HashMap::new();
    for _ in 0..draws {
        let x = sample_split(&v, &d, &mut rng);
        let q = step_summary(&AssignmentSummary::from_split(&v, &x), &mut rng).unwrap();
        let y = q.split();
        *counts.entry([y.x11, y.x10, y.x01, y.x00]).or_insert(0) += 1;
    }
    let stepped = CountVector::new(2, 2, 3, 0);
    assert!(chi2_sf(&counts, &split_law(&stepped, &d), draws) >= 0.001);
}

/// Estimates stray from the exact p-value by more than eps no more often
/// than Hoeffding allows, up to binomial noise.
#[test]
fn estimates_concentrate_as_hoeffding_predicts() {
    let o = ObservedCounts::new(5, 3, 2, 6);
    let v = CountVector::new(4, 3, 1, 8);
    let p = exact_pvalue(&v, &o, Arithmetic::Rational).unwrap().to_f64();
    let (k, eps, reps) = (2_000u64, 0.03, 400u64);
    let bound = 2.0 * (-2.0 * k as f64 * eps * eps).exp();
    let mut far = 0;
    for seed in 0..reps {
        let cfg = McConfig::new(prob("0.5"), prob("0.01"), k, seed).unwrap();
        if (mc_test(&cfg, &v, &o).unwrap().estimate() - p).abs() > eps {
            far += 1;
        }
    }
    let rate = far as f64 / reps as f64;
    assert!(rate <= bound + 3.0 * (bound * (1.0 - bound) / reps as f64).sqrt(), "rate {rate} bound {bound}");
}

/// The Monte Carlo interval at level alpha - eps stays inside the exact
/// interval at alpha - 3 eps.
#[test]
fn mc_interval_inside_the_wider_exact_interval() {
    let (alpha, eps) = (prob("0.05"), prob("0.01"));
    let level = alpha.checked_sub(&eps).unwrap();
    let outer = prob("0.02");
    let k = required_k_balanced(eps, 16).k;
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut escapes = 0;
    let reps = 60;
    for rep in 0..reps {
        let o = random_balanced_obs(16, &mut rng);
        let cfg = McConfig::new(level, eps, k, rep).unwrap();
        let mc = mc_interval_balanced(&cfg, &o).unwrap().interval;
        let wide = fast_interval_exact(outer, &o, Arithmetic::Rational).unwrap().interval;
        if !mc.is_subset_of(&wide) {
            escapes += 1;
        }
    }
    // The failure probability bound is below 1e-3 per replication.
    assert!(escapes <= 1, "{escapes} of {reps} escaped");
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let o = ObservedCounts::new(12, 18, 9, 21);
    let cfg = McConfig::new(prob("0.05"), prob("0.01"), 30_000, 0xfeed).unwrap();
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| (mc_interval_balanced(&cfg, &o).unwrap(), mc_test(&cfg, &CountVector::new(20, 10, 10, 20), &o).unwrap()))
    };
    let one = run(1);
    assert_eq!(one, run(3));
    assert_eq!(one, run(8));

    let u = ObservedCounts::new(4, 3, 6, 8);
    let small = McConfig::new(prob("0.05"), prob("0.01"), 4_000, 3).unwrap();
    let unb = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| unbalanced_interval_mc(&small, &u).unwrap())
    };
    assert_eq!(unb(1), unb(4));
}

#[test]
fn different_seeds_give_different_estimates() {
    let o = ObservedCounts::new(5, 3, 2, 6);
    let v = CountVector::new(4, 3, 1, 8);
    let a = mc_test(&McConfig::new(prob("0.05"), prob("0.01"), 5_000, 1).unwrap(), &v, &o).unwrap();
    let b = mc_test(&McConfig::new(prob("0.05"), prob("0.01"), 5_000, 2).unwrap(), &v, &o).unwrap();
    assert_ne!(a.extreme, b.extreme);
}
