//! Coverage by enumeration, and the sweeps and reproductions used to check
//! the interval constructions against their guarantees.

use std::collections::HashMap;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::balanced::fast_interval_exact;
use crate::baseline::rh_interval_exact;
use crate::error::{Error, Result};
use crate::exactdist::{binomial, Arithmetic, TreatmentSplit};
use crate::missing::{missing_interval, MaskedObservations};
use crate::model::{CountVector, Design, Interval, ObservedCounts, Prob};
use crate::montecarlo::{mc_interval_balanced, required_k_balanced, McConfig};
use crate::tester::SearchOutcome;
use crate::unbalanced::unbalanced_interval_exact;

/// Largest `n` accepted by the exhaustive coverage routines.
pub const EXHAUSTIVE_MAX_N: u64 = 24;

/// Interval construction used by the validation routines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Method {
    Rh,
    Fast,
    Unbalanced,
}

/// Runs `method` with exact rational tests.
pub fn interval_for(method: Method, alpha: Prob, obs: &ObservedCounts) -> Result<SearchOutcome> {
    match method {
        Method::Rh => rh_interval_exact(alpha, obs, Arithmetic::Rational),
        Method::Fast => fast_interval_exact(alpha, obs, Arithmetic::Rational),
        Method::Unbalanced => unbalanced_interval_exact(alpha, obs, Arithmetic::Rational),
    }
}

/// Calls `f` with every class split of `y` under `d` and the number of
/// assignments producing it.
pub fn for_each_split(y: &CountVector, d: &Design, mut f: impl FnMut(TreatmentSplit, BigUint)) {
    let m = d.m();
    for x11 in 0..=y.v11.min(m) {
        for x10 in 0..=y.v10.min(m - x11) {
            for x01 in 0..=y.v01.min(m - x11 - x10) {
                let x00 = m - x11 - x10 - x01;
                if x00 > y.v00 {
                    continue;
                }
                let w = binomial(y.v11, x11) * binomial(y.v10, x10) * binomial(y.v01, x01) * binomial(y.v00, x00);
                f(TreatmentSplit::new(x11, x10, x01, x00), w);
            }
        }
    }
}

fn check_exhaustive(y: &CountVector, d: &Design) -> Result<()> {
    if y.total() != d.n() {
        return Err(Error::InvalidCounts(format!("table {y} does not have {} subjects", d.n())));
    }
    if d.n() > EXHAUSTIVE_MAX_N {
        return Err(Error::Capacity(format!(
            "exhaustive coverage is limited to n <= {EXHAUSTIVE_MAX_N}; estimate coverage by replication instead"
        )));
    }
    Ok(())
}

/// Exact probability, over a uniformly random assignment, that the interval
/// computed by `method` contains the effect of `y`.
pub fn coverage_exhaustive(y: &CountVector, alpha: Prob, d: &Design, method: Method) -> Result<BigRational> {
    check_exhaustive(y, d)?;
    let target = y.tau();
    let mut memo: HashMap<ObservedCounts, bool> = HashMap::new();
    let mut hit = BigUint::zero();
    let mut err = None;
    for_each_split(y, d, |x, w| {
        let obs = x.observed(y);
        let covered = match memo.get(&obs) {
            Some(&c) => c,
            None => match interval_for(method, alpha, &obs) {
                Ok(out) => *memo.entry(obs).or_insert(out.interval.contains(target)),
                Err(e) => {
                    err.get_or_insert(e);
                    false
                }
            },
        };
        if covered {
            hit += w;
        }
    });
    if let Some(e) = err {
        return Err(e);
    }
    Ok(BigRational::new(BigInt::from(hit), BigInt::from(binomial(d.n(), d.m()))))
}

/// Masked data for table `y` under split `x`: each (class, group) cell is
/// hidden when `rule(treated, y1, y0)` is true.
pub fn mask_split(
    y: &CountVector,
    x: &TreatmentSplit,
    rule: &impl Fn(bool, bool, bool) -> bool,
) -> MaskedObservations {
    let mut data = MaskedObservations::default();
    let classes = [
        (true, true, y.v11, x.x11),
        (true, false, y.v10, x.x10),
        (false, true, y.v01, x.x01),
        (false, false, y.v00, x.x00),
    ];
    for (y1, y0, total, treated) in classes {
        for (z, count, outcome) in [(true, treated, y1), (false, total - treated, y0)] {
            let shown = (!rule(z, y1, y0)).then_some(outcome);
            data.push_many(z, shown, count);
        }
    }
    data
}

/// Coverage of the missing-data interval when outcomes are hidden by a
/// deterministic rule of each subject's group and potential outcomes.
pub fn missing_coverage_exhaustive(
    y: &CountVector,
    alpha: Prob,
    d: &Design,
    rule: impl Fn(bool, bool, bool) -> bool,
) -> Result<BigRational> {
    check_exhaustive(y, d)?;
    let target = y.tau();
    let mut hit = BigUint::zero();
    let mut err = None;
    for_each_split(y, d, |x, w| {
        let data = mask_split(y, &x, &rule);
        match missing_interval(alpha, &data, Arithmetic::Rational) {
            Ok(out) if out.interval.contains(target) => hit += w,
            Ok(_) => {}
            Err(e) => {
                err.get_or_insert(e);
            }
        }
    });
    if let Some(e) = err {
        return Err(e);
    }
    Ok(BigRational::new(BigInt::from(hit), BigInt::from(binomial(d.n(), d.m()))))
}

/// `true` iff `p >= 1 - alpha`.
pub fn meets_confidence(p: &BigRational, alpha: Prob) -> bool {
    p >= &(BigRational::one() - alpha.to_big())
}

/// A table of `n` subjects with classes drawn uniformly and independently.
pub fn random_table<R: Rng + ?Sized>(n: u64, rng: &mut R) -> CountVector {
    let mut c = [0u64; 4];
    for _ in 0..n {
        c[rng.random_range(0..4)] += 1;
    }
    CountVector::new(c[0], c[1], c[2], c[3])
}

/// `count` tables from [`random_table`], reproducible from `seed`.
pub fn random_tables(n: u64, count: usize, seed: u64) -> Vec<CountVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| random_table(n, &mut rng)).collect()
}

/// Observed counts of a balanced design with `n11` and `n01` uniform.
pub fn random_balanced_obs<R: Rng + ?Sized>(n: u64, rng: &mut R) -> ObservedCounts {
    let m = n / 2;
    let n11 = rng.random_range(0..=m);
    let n01 = rng.random_range(0..=m);
    ObservedCounts::new(n11, m - n11, n01, m - n01)
}

/// `sqrt(32 ln(2/alpha) / n)`, the length bound in effect units.
pub fn length_bound(alpha: Prob, n: u64) -> f64 {
    (32.0 * (2.0 / alpha.value()).ln() / n as f64).sqrt()
}

/// `4 n log2 n`.
pub fn test_count_bound(n: u64) -> f64 {
    let n = n as f64;
    4.0 * n * n.log2()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LengthRow {
    pub n: u64,
    pub samples: usize,
    /// Longest interval seen, in effect units.
    pub max_length: f64,
    pub bound: f64,
    pub violations: usize,
}

/// Fast-search interval lengths for `per_n` random balanced observations at
/// each `n`, against [`length_bound`].
pub fn length_bound_sweep(alpha: Prob, ns: &[u64], per_n: usize, seed: u64, mode: Arithmetic) -> Result<Vec<LengthRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    for &n in ns {
        let bound = length_bound(alpha, n);
        let mut row = LengthRow { n, samples: per_n, max_length: 0.0, bound, violations: 0 };
        for _ in 0..per_n {
            let obs = random_balanced_obs(n, &mut rng);
            let out = fast_interval_exact(alpha, &obs, mode)?;
            let len = out.interval.length_scaled().unwrap_or(0) as f64 / n as f64;
            row.max_length = row.max_length.max(len);
            if len > bound {
                row.violations += 1;
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CountRow {
    pub n: u64,
    pub samples: usize,
    pub max_tests: u64,
    pub bound: f64,
    pub violations: usize,
}

/// Fast-search test counts for `per_n` random balanced observations at each
/// `n`, against [`test_count_bound`].
pub fn count_bound_sweep(alpha: Prob, ns: &[u64], per_n: usize, seed: u64) -> Result<Vec<CountRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    for &n in ns {
        let bound = test_count_bound(n);
        let mut row = CountRow { n, samples: per_n, max_tests: 0, bound, violations: 0 };
        for _ in 0..per_n {
            let obs = random_balanced_obs(n, &mut rng);
            let out = fast_interval_exact(alpha, &obs, Arithmetic::Rational)?;
            row.max_tests = row.max_tests.max(out.tests);
            if out.tests as f64 > bound {
                row.violations += 1;
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

/// The three worked data sets used throughout the tests.
pub const TABLE1_OBS: [ObservedCounts; 3] = [
    ObservedCounts { n11: 2, n10: 6, n01: 8, n00: 0 },
    ObservedCounts { n11: 6, n10: 4, n01: 4, n00: 6 },
    ObservedCounts { n11: 8, n10: 4, n01: 5, n00: 7 },
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Table1Row {
    pub obs: ObservedCounts,
    pub rh: SearchOutcome,
    pub fast: SearchOutcome,
    pub mc: SearchOutcome,
    pub mc_k: u64,
}

/// Runs the worked data sets at `alpha = 0.05` through the exhaustive search,
/// the fast exact search, and the fast Monte Carlo search with `eps = 0.005`
/// and the recommended sample size.
pub fn table1_repro(seed: u64) -> Result<Vec<Table1Row>> {
    let alpha: Prob = "0.05".parse()?;
    let eps: Prob = "0.005".parse()?;
    TABLE1_OBS
        .iter()
        .map(|obs| {
            let k = required_k_balanced(eps, obs.total()).k;
            let cfg = McConfig::new(alpha, eps, k, seed)?;
            Ok(Table1Row {
                obs: *obs,
                rh: rh_interval_exact(alpha, obs, Arithmetic::Rational)?,
                fast: fast_interval_exact(alpha, obs, Arithmetic::Rational)?,
                mc: mc_interval_balanced(&cfg, obs)?,
                mc_k: k,
            })
        })
        .collect()
}

/// Endpoints expected for [`TABLE1_OBS`] at `alpha = 0.05`.
pub fn table1_expected() -> [Interval; 3] {
    [Interval::scaled(-14, -5), Interval::scaled(-4, 10), Interval::scaled(-3, 13)]
}
