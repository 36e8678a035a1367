//! Interval by exhaustive imputation: every table possible given the observed
//! counts is permutation tested, and the interval spans the accepted effects.
//!
//! This is the `O(n⁴)`-test reference construction. It works for any design
//! and serves as the oracle for the faster searches.

use crate::error::Result;
use crate::exactdist::Arithmetic;
use crate::model::{CountVector, Interval, ObservedCounts, Prob, ScaledEffect};
use crate::tester::{ExactTest, PermutationTest, SearchOutcome};

/// The table obtained by imputing ones for `i` of the treated ones, `j` of the
/// treated zeros, `k` of the control ones and `l` of the control zeros.
pub fn imputed_vector(obs: &ObservedCounts, i: u64, j: u64, k: u64, l: u64) -> CountVector {
    CountVector::new(i + k, obs.n11 - i + l, obs.n01 - k + j, obs.n10 + obs.n00 - j - l)
}

/// Number of imputation tuples, `(n11+1)(n10+1)(n01+1)(n00+1)`.
pub fn tuple_count(obs: &ObservedCounts) -> u64 {
    (obs.n11 + 1) * (obs.n10 + 1) * (obs.n01 + 1) * (obs.n00 + 1)
}

/// Tests every imputation tuple with `tester` and returns the hull of the
/// accepted effects. `tests` counts tuples, so duplicated tables are counted
/// once per tuple even though the tester evaluates them once.
pub fn rh_interval<T: PermutationTest>(obs: &ObservedCounts, mut tester: T) -> Result<SearchOutcome> {
    obs.check(&tester.design())?;
    let mut accepted: Option<(i64, i64)> = None;
    let mut tests = 0u64;
    for i in 0..=obs.n11 {
        for j in 0..=obs.n10 {
            for k in 0..=obs.n01 {
                for l in 0..=obs.n00 {
                    let v = imputed_vector(obs, i, j, k, l);
                    tests += 1;
                    if tester.accepts(&v) {
                        let s = v.tau().0;
                        accepted = Some(match accepted {
                            None => (s, s),
                            Some((lo, hi)) => (lo.min(s), hi.max(s)),
                        });
                    }
                }
            }
        }
    }
    let interval = accepted
        .map(|(lo, hi)| Interval::new(ScaledEffect(lo), ScaledEffect(hi)))
        .unwrap_or_else(Interval::empty);
    Ok(SearchOutcome { interval, tests, evaluations: tester.evaluations(), line_points: 0 })
}

/// [`rh_interval`] with exact permutation tests.
pub fn rh_interval_exact(alpha: Prob, obs: &ObservedCounts, mode: Arithmetic) -> Result<SearchOutcome> {
    let tester = ExactTest::new(alpha, obs, mode)?;
    rh_interval(obs, tester)
}
