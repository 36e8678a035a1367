//! Fast interval search for balanced designs.
//!
//! Compatibility of an effect is decided by scanning one table per value of
//! `j = v11 + v10`, and the endpoints are located by binary search.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::exactdist::Arithmetic;
use crate::feasibility::{family_vector, feasible_v10_range};
use crate::model::{c_set, neyman, Interval, ObservedCounts, Prob, ScaledEffect};
use crate::tester::{ExactTest, PermutationTest, SearchOutcome};

/// Locates the threshold of a step predicate.
///
/// `f` must be `0` up to some `r` and `1` above it, with `r` somewhere in
/// `[k1 - 1, k2]`; the return value is `r`. At most
/// `floor(log2(k2 - k1 + 1)) + 2` evaluations are made. A predicate that is
/// not a step function is not detected and yields an arbitrary point.
pub fn binary_search<F: FnMut(i64) -> bool>(mut f: F, k1: i64, k2: i64) -> i64 {
    assert!(k1 <= k2, "empty search range [{k1}, {k2}]");
    if k1 == k2 {
        return if f(k1) { k1 - 1 } else { k1 };
    }
    let (mut a, mut b) = (k1, k2);
    while b - a > 1 {
        let c = a + (b - a) / 2;
        if f(c) {
            b = c;
        } else {
            a = c;
        }
    }
    match (a == k1, b == k2) {
        (false, false) => a,
        (true, false) => {
            if f(k1) {
                k1 - 1
            } else {
                k1
            }
        }
        (false, true) => {
            if f(k2) {
                a
            } else {
                k2
            }
        }
        (true, true) => {
            if !f(k2) {
                k2
            } else if !f(k1) {
                k1
            } else {
                k1 - 1
            }
        }
    }
}

/// Decides whether some possible table with effect `tau0` is accepted.
///
/// For `j = 0..=n` the table with the smallest feasible `v10` is tested; the
/// scan stops at the first acceptance. A rejected table with
/// `v10 = v01 = 0` is followed by a test of its `v10 = 1` neighbour. Returns
/// the decision and the number of tests requested.
pub fn is_compatible_balanced<T: PermutationTest + ?Sized>(
    tau0: ScaledEffect,
    obs: &ObservedCounts,
    tester: &mut T,
) -> (bool, u64) {
    let n = obs.total();
    let mut tests = 0;
    for j in 0..=n as i64 {
        let Some(range) = feasible_v10_range(j, tau0, obs) else {
            continue;
        };
        let v10 = *range.start();
        let v = family_vector(n, j, v10, tau0).expect("feasible range yields a table");
        tests += 1;
        if tester.accepts(&v) {
            return (true, tests);
        }
        if v.v10 == 0 && v.v01 == 0 && range.contains(&1) {
            let w = family_vector(n, j, 1, tau0).expect("feasible range yields a table");
            tests += 1;
            if tester.accepts(&w) {
                return (true, tests);
            }
        }
    }
    (false, tests)
}

/// Interval for a balanced design by binary search on each side of the
/// estimate. `tests` counts tests run by distinct compatibility scans.
pub fn fast_interval_balanced<T: PermutationTest>(
    obs: &ObservedCounts,
    mut tester: T,
) -> Result<SearchOutcome> {
    let design = tester.design();
    obs.check(&design)?;
    if !design.is_balanced() {
        return Err(Error::InvalidDesign(format!(
            "fast search needs a balanced design, got n = {}, m = {}",
            design.n(),
            design.m()
        )));
    }
    let n = design.n() as i64;
    let estimate = neyman(obs, &design)?.scaled(design.n());
    // n·T is an integer in a balanced design: 2(n11 - n01).
    let start = *estimate.numer();
    debug_assert_eq!(*estimate.denom(), 1);
    let c = c_set(obs);
    debug_assert!(c.contains(&start) && start.abs() <= n);

    let mut memo: HashMap<i64, bool> = HashMap::new();
    let mut tests = 0u64;
    let mut incompatible = |s: i64| -> bool {
        *memo.entry(s).or_insert_with(|| {
            let (ok, t) = is_compatible_balanced(ScaledEffect(s), obs, &mut tester);
            tests += t;
            !ok
        })
    };
    let upper = binary_search(&mut incompatible, start, *c.end());
    let lower = -binary_search(|y| incompatible(-y), -start, -*c.start());
    drop(incompatible);

    Ok(SearchOutcome {
        interval: Interval::new(ScaledEffect(lower), ScaledEffect(upper)),
        tests,
        evaluations: tester.evaluations(),
        line_points: 0,
    })
}

/// [`fast_interval_balanced`] with exact permutation tests.
pub fn fast_interval_exact(alpha: Prob, obs: &ObservedCounts, mode: Arithmetic) -> Result<SearchOutcome> {
    let tester = ExactTest::new(alpha, obs, mode)?;
    fast_interval_balanced(obs, tester)
}
