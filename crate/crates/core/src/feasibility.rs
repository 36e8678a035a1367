//! Which hypothesized tables could have produced the observed counts.

use std::ops::RangeInclusive;

use crate::model::{CountVector, ObservedCounts, ScaledEffect};

/// Closed-form feasibility test for `v` given `obs`.
///
/// `v` is possible iff some number `t` of treated `(1,1)` subjects satisfies
/// every bound implied by the observed margins.
pub fn is_possible(v: &CountVector, obs: &ObservedCounts) -> bool {
    if v.total() != obs.total() {
        return false;
    }
    let [v11, v10, v01, _] = v.signed();
    let [n11, n10, n01, _] = obs.signed();
    let n = obs.total() as i64;
    let lower = 0.max(n11 - v10).max(v11 - n01).max(v11 + v01 - n10 - n01);
    let upper = v11.min(n11).min(v11 + v01 - n01).min(n - v10 - n01 - n10);
    lower <= upper
}

/// Feasibility by searching every treatment split; the oracle for
/// [`is_possible`].
pub fn is_possible_bruteforce(v: &CountVector, obs: &ObservedCounts) -> bool {
    if v.total() != obs.total() {
        return false;
    }
    let m = obs.treated();
    for x11 in 0..=v.v11.min(m) {
        for x10 in 0..=v.v10.min(m - x11) {
            for x01 in 0..=v.v01.min(m - x11 - x10) {
                let x00 = m - x11 - x10 - x01;
                if x00 > v.v00 {
                    continue;
                }
                if x11 + x10 == obs.n11 && (v.v11 - x11) + (v.v01 - x01) == obs.n01 {
                    return true;
                }
            }
        }
    }
    false
}

/// The table on the `(j, v10)` family with effect `tau0`:
/// `(j - v10, v10, v10 - nτ0, n - j - v10 + nτ0)`, or `None` if a component
/// is negative.
pub fn family_vector(n: u64, j: i64, v10: i64, tau0: ScaledEffect) -> Option<CountVector> {
    let s = tau0.0;
    CountVector::from_signed([j - v10, v10, v10 - s, n as i64 - j - v10 + s])
}

/// Values of `v10` for which [`family_vector`] is possible given `obs`.
///
/// The four necessary conditions on `j` are checked first; the range is
/// `None` when they fail or when the bounds cross.
pub fn feasible_v10_range(
    j: i64,
    tau0: ScaledEffect,
    obs: &ObservedCounts,
) -> Option<RangeInclusive<i64>> {
    let [n11, n10, n01, n00] = obs.signed();
    let n = obs.total() as i64;
    let s = tau0.0;
    if j < 0 || j > n {
        return None;
    }
    if j < s + n01 || j < n11 || n < j + n10 || n11 + s + n10 + n01 < j {
        return None;
    }
    let lo = 0.max(s).max(j - n11 - n01).max(n11 + n01 + s - j);
    let hi = j.min(n11 + n00).min(n10 + n01 + s).min(n + s - j);
    (lo <= hi).then_some(lo..=hi)
}
