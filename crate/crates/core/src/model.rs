//! Domain types shared by every interval construction.
//!
//! Effects are kept on their natural lattices: a treatment effect `τ` is an
//! integer multiple of `1/n` ([`ScaledEffect`]), and the Neyman estimator is an
//! integer multiple of `1/(m(n-m))` ([`ExactStat`]). Every accept/reject
//! comparison in the crate is carried out on these integers.

use std::fmt;
use std::ops::RangeInclusive;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::{BigRational, Ratio};
use num_traits::{CheckedSub, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported number of subjects. Keeps `n * m * (n - m)` inside `i64`.
pub const MAX_SUBJECTS: u64 = 1_000_000;

/// Group sizes of a completely randomized experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Design {
    n: u64,
    m: u64,
}

impl Design {
    /// `n` subjects, `m` of them treated. Requires `1 <= m <= n - 1`.
    pub fn new(n: u64, m: u64) -> Result<Self> {
        if n > MAX_SUBJECTS {
            return Err(Error::Capacity(format!(
                "{n} subjects exceeds the supported maximum of {MAX_SUBJECTS}"
            )));
        }
        if m == 0 || m >= n {
            return Err(Error::InvalidDesign(format!(
                "need 1 <= m <= n - 1, got n = {n}, m = {m}"
            )));
        }
        Ok(Self { n, m })
    }

    pub fn balanced(m: u64) -> Result<Self> {
        Self::new(2 * m, m)
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    /// Treatment group size.
    pub fn m(&self) -> u64 {
        self.m
    }

    /// Control group size.
    pub fn controls(&self) -> u64 {
        self.n - self.m
    }

    pub fn is_balanced(&self) -> bool {
        self.n == 2 * self.m
    }

    /// Denominator `m(n-m)` of [`ExactStat`] values.
    pub fn stat_denominator(&self) -> i64 {
        (self.m * (self.n - self.m)) as i64
    }

    /// `|T - τ|` over the common denominator `n m (n-m)`, where the statistic
    /// has numerator `stat_num` and the effect is `s / n`.
    pub fn discrepancy(&self, stat_num: i64, s: ScaledEffect) -> i64 {
        (self.n as i64 * stat_num - s.0 * self.stat_denominator()).abs()
    }
}

impl fmt::Display for Design {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n = {}, m = {}", self.n, self.m)
    }
}

/// Observed 2x2 summary: `n_zy` counts subjects in group `z` with outcome `y`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ObservedCounts {
    pub n11: u64,
    pub n10: u64,
    pub n01: u64,
    pub n00: u64,
}

impl ObservedCounts {
    pub fn new(n11: u64, n10: u64, n01: u64, n00: u64) -> Self {
        Self { n11, n10, n01, n00 }
    }

    pub fn total(&self) -> u64 {
        self.n11 + self.n10 + self.n01 + self.n00
    }

    pub fn treated(&self) -> u64 {
        self.n11 + self.n10
    }

    pub fn controls(&self) -> u64 {
        self.n01 + self.n00
    }

    /// The design implied by the group sizes.
    pub fn design(&self) -> Result<Design> {
        Design::new(self.total(), self.treated()).map_err(|e| match e {
            Error::InvalidDesign(_) => Error::InvalidCounts(format!(
                "{self} does not describe two nonempty groups"
            )),
            other => other,
        })
    }

    pub fn check(&self, d: &Design) -> Result<()> {
        if self.treated() != d.m() || self.controls() != d.controls() {
            return Err(Error::InvalidCounts(format!(
                "{self} is inconsistent with design ({d})"
            )));
        }
        Ok(())
    }

    pub(crate) fn signed(&self) -> [i64; 4] {
        [self.n11 as i64, self.n10 as i64, self.n01 as i64, self.n00 as i64]
    }
}

impl fmt::Display for ObservedCounts {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{},{})", self.n11, self.n10, self.n01, self.n00)
    }
}

impl FromStr for ObservedCounts {
    type Err = Error;

    /// Parses `n11,n10,n01,n00`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 4 {
            return Err(Error::InvalidCounts(format!(
                "expected four comma-separated counts, got {s:?}"
            )));
        }
        let mut vals = [0u64; 4];
        for (slot, p) in vals.iter_mut().zip(&parts) {
            *slot = p
                .parse()
                .map_err(|_| Error::InvalidCounts(format!("{p:?} is not a nonnegative integer")))?;
        }
        Ok(Self::new(vals[0], vals[1], vals[2], vals[3]))
    }
}

/// Potential-outcome class counts `(v11, v10, v01, v00)`.
///
/// The first index is the outcome under treatment and the second the outcome
/// under control, so `v10` counts subjects helped by treatment and
/// `τ(v) = (v10 - v01) / n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CountVector {
    pub v11: u64,
    pub v10: u64,
    pub v01: u64,
    pub v00: u64,
}

impl CountVector {
    pub fn new(v11: u64, v10: u64, v01: u64, v00: u64) -> Self {
        Self { v11, v10, v01, v00 }
    }

    /// Builds a vector from signed components, or `None` if any is negative.
    pub fn from_signed(c: [i64; 4]) -> Option<Self> {
        if c.iter().any(|&x| x < 0) {
            return None;
        }
        Some(Self::new(c[0] as u64, c[1] as u64, c[2] as u64, c[3] as u64))
    }

    pub fn total(&self) -> u64 {
        self.v11 + self.v10 + self.v01 + self.v00
    }

    pub fn as_array(&self) -> [u64; 4] {
        [self.v11, self.v10, self.v01, self.v00]
    }

    pub(crate) fn signed(&self) -> [i64; 4] {
        [self.v11 as i64, self.v10 as i64, self.v01 as i64, self.v00 as i64]
    }

    pub fn tau(&self) -> ScaledEffect {
        tau(self)
    }
}

impl fmt::Display for CountVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{},{})", self.v11, self.v10, self.v01, self.v00)
    }
}

/// An effect `τ = s / n`, stored as the integer `s`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ScaledEffect(pub i64);

impl ScaledEffect {
    pub fn to_tau(self, n: u64) -> f64 {
        self.0 as f64 / n as f64
    }
}

impl fmt::Display for ScaledEffect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A Neyman estimator value `num / (m(n-m))`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ExactStat {
    num: i64,
    den: i64,
}

impl ExactStat {
    pub fn new(num: i64, d: &Design) -> Self {
        Self { num, den: d.stat_denominator() }
    }

    pub fn numerator(&self) -> i64 {
        self.num
    }

    pub fn denominator(&self) -> i64 {
        self.den
    }

    pub fn to_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    pub fn to_ratio(&self) -> Ratio<i64> {
        Ratio::new(self.num, self.den)
    }

    /// `n * T`, the estimate on the effect scale. Not an integer in general.
    pub fn scaled(&self, n: u64) -> Ratio<i64> {
        Ratio::new(self.num * n as i64, self.den)
    }
}

impl PartialOrd for ExactStat {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ExactStat {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.num as i128 * other.den as i128).cmp(&(other.num as i128 * self.den as i128))
    }
}

impl fmt::Display for ExactStat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_ratio())
    }
}

/// A closed interval of effects in [`ScaledEffect`] units, possibly empty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Interval {
    bounds: Option<(ScaledEffect, ScaledEffect)>,
}

impl Interval {
    /// `[lower, upper]`; empty when `lower > upper`.
    pub fn new(lower: ScaledEffect, upper: ScaledEffect) -> Self {
        if lower > upper {
            Self::empty()
        } else {
            Self { bounds: Some((lower, upper)) }
        }
    }

    pub fn scaled(lower: i64, upper: i64) -> Self {
        Self::new(ScaledEffect(lower), ScaledEffect(upper))
    }

    pub fn empty() -> Self {
        Self { bounds: None }
    }

    pub fn is_empty(&self) -> bool {
        self.bounds.is_none()
    }

    pub fn bounds(&self) -> Option<(ScaledEffect, ScaledEffect)> {
        self.bounds
    }

    pub fn lower(&self) -> Option<ScaledEffect> {
        self.bounds.map(|b| b.0)
    }

    pub fn upper(&self) -> Option<ScaledEffect> {
        self.bounds.map(|b| b.1)
    }

    pub fn contains(&self, s: ScaledEffect) -> bool {
        matches!(self.bounds, Some((lo, hi)) if lo <= s && s <= hi)
    }

    /// Whether the rational effect `num / den` (already on the `n` scale,
    /// i.e. `n * τ = num / den`) lies in the interval.
    pub fn contains_ratio(&self, num: i64, den: i64) -> bool {
        debug_assert!(den > 0);
        matches!(self.bounds, Some((lo, hi)) if lo.0 * den <= num && num <= hi.0 * den)
    }

    pub fn is_subset_of(&self, other: &Interval) -> bool {
        match (self.bounds, other.bounds) {
            (None, _) => true,
            (Some(_), None) => false,
            (Some((a, b)), Some((c, d))) => c <= a && b <= d,
        }
    }

    /// `U - L` in scaled units.
    pub fn length_scaled(&self) -> Option<i64> {
        self.bounds.map(|(lo, hi)| hi.0 - lo.0)
    }

    pub fn to_tau(&self, n: u64) -> Option<(f64, f64)> {
        self.bounds.map(|(lo, hi)| (lo.to_tau(n), hi.to_tau(n)))
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.bounds {
            Some((lo, hi)) => write!(f, "[{lo}, {hi}]"),
            None => write!(f, "(empty)"),
        }
    }
}

/// A probability held as an exact fraction, used for significance levels and
/// Monte Carlo tolerances.
///
/// Decimal inputs such as `0.05` are kept exactly (as `1/20`), so a p-value
/// equal to the level is accepted as intended rather than lost to binary
/// rounding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Prob(Ratio<u64>);

impl Prob {
    /// `num / den`, required to lie strictly inside `(0, 1)`.
    pub fn new(num: u64, den: u64) -> Result<Self> {
        if den == 0 || num == 0 || num >= den {
            return Err(Error::InvalidProbability(format!(
                "{num}/{den} is not strictly between 0 and 1"
            )));
        }
        Ok(Self(Ratio::new(num, den)))
    }

    /// Converts through the shortest decimal that round-trips to `x`.
    pub fn from_f64(x: f64) -> Result<Self> {
        if !x.is_finite() {
            return Err(Error::InvalidProbability(format!("{x} is not finite")));
        }
        format!("{x}").parse()
    }

    pub fn numer(&self) -> u64 {
        *self.0.numer()
    }

    pub fn denom(&self) -> u64 {
        *self.0.denom()
    }

    pub fn value(&self) -> f64 {
        self.numer() as f64 / self.denom() as f64
    }

    pub fn to_big(&self) -> BigRational {
        BigRational::new(BigInt::from(self.numer()), BigInt::from(self.denom()))
    }

    /// `self - other`, if the difference is still a valid probability.
    pub fn checked_sub(&self, other: &Prob) -> Option<Prob> {
        let diff = self.0.checked_sub(&other.0)?;
        if diff.is_zero() {
            return None;
        }
        Some(Prob(diff))
    }

    /// `k * self` for a positive integer `k`, if still inside `(0, 1)`.
    pub fn checked_mul_int(&self, k: u64) -> Option<Prob> {
        let num = self.numer().checked_mul(k)?;
        Prob::new(num, self.denom()).ok()
    }
}

impl fmt::Display for Prob {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Exact decimal when the denominator divides a power of ten.
        let mut den = self.denom();
        let mut digits = 0u32;
        while den % 10 == 0 {
            den /= 10;
            digits += 1;
        }
        let (mut twos, mut fives) = (0u32, 0u32);
        while den % 2 == 0 {
            den /= 2;
            twos += 1;
        }
        while den % 5 == 0 {
            den /= 5;
            fives += 1;
        }
        if den != 1 {
            return write!(f, "{}/{}", self.numer(), self.denom());
        }
        let total = digits + twos.max(fives);
        match 10u64.checked_pow(total).and_then(|p| {
            self.numer().checked_mul(p / self.denom())
        }) {
            Some(scaled) => {
                let s = format!("{:0>width$}", scaled, width = total as usize + 1);
                let (int, frac) = s.split_at(s.len() - total as usize);
                if frac.is_empty() {
                    write!(f, "{int}")
                } else {
                    write!(f, "{int}.{frac}")
                }
            }
            None => write!(f, "{}/{}", self.numer(), self.denom()),
        }
    }
}

impl FromStr for Prob {
    type Err = Error;

    /// Accepts a plain decimal (`0.05`) or a fraction (`1/20`).
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::InvalidProbability(format!("cannot parse {s:?} as a probability"));
        if let Some((a, b)) = s.split_once('/') {
            let num = a.trim().parse().map_err(|_| bad())?;
            let den = b.trim().parse().map_err(|_| bad())?;
            return Prob::new(num, den);
        }
        let (int, frac) = s.split_once('.').unwrap_or((s, ""));
        if (int.is_empty() && frac.is_empty())
            || !int.chars().all(|c| c.is_ascii_digit())
            || !frac.chars().all(|c| c.is_ascii_digit())
        {
            return Err(bad());
        }
        let frac = frac.trim_end_matches('0');
        if frac.len() > 18 {
            return Err(Error::InvalidProbability(format!(
                "{s:?} has more than 18 decimal places"
            )));
        }
        let den = 10u64.pow(frac.len() as u32);
        let int_val: u64 = if int.is_empty() { 0 } else { int.parse().map_err(|_| bad())? };
        let frac_val: u64 = if frac.is_empty() { 0 } else { frac.parse().map_err(|_| bad())? };
        let num = int_val
            .checked_mul(den)
            .and_then(|x| x.checked_add(frac_val))
            .ok_or_else(bad)?;
        Prob::new(num, den)
    }
}

impl Serialize for Prob {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_f64(self.value())
    }
}

/// Sample average treatment effect of a hypothesized table, scaled by `n`.
pub fn tau(v: &CountVector) -> ScaledEffect {
    ScaledEffect(v.v10 as i64 - v.v01 as i64)
}

/// Neyman estimator `n11/m - n01/(n-m)`, exactly.
pub fn neyman(obs: &ObservedCounts, d: &Design) -> Result<ExactStat> {
    obs.check(d)?;
    let num = d.controls() as i64 * obs.n11 as i64 - d.m() as i64 * obs.n01 as i64;
    Ok(ExactStat::new(num, d))
}

/// Effects (scaled by `n`) of all tables that are possible given `obs`:
/// the `n + 1` consecutive integers starting at `n11 - n01 - m`.
pub fn c_set(obs: &ObservedCounts) -> RangeInclusive<i64> {
    let lo = obs.n11 as i64 - obs.n01 as i64 - obs.treated() as i64;
    lo..=lo + obs.total() as i64
}

/// Rounds a scaled estimate up or down onto the `1/n` lattice.
pub(crate) fn floor_ratio(r: Ratio<i64>) -> i64 {
    r.floor().to_integer()
}

pub(crate) fn ceil_ratio(r: Ratio<i64>) -> i64 {
    r.ceil().to_integer()
}

pub(crate) fn ratio_to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tau_examples() {
        assert_eq!(tau(&CountVector::new(0, 16, 0, 0)), ScaledEffect(16));
        assert_eq!(tau(&CountVector::new(16, 0, 0, 0)), ScaledEffect(0));
        assert_eq!(tau(&CountVector::new(2, 6, 8, 0)), ScaledEffect(-2));
    }

    #[test]
    fn neyman_examples() {
        let d = Design::new(2, 1).unwrap();
        let t = neyman(&ObservedCounts::new(1, 0, 0, 1), &d).unwrap();
        assert_eq!(t.to_ratio(), Ratio::from_integer(1));
        let t = neyman(&ObservedCounts::new(0, 1, 1, 0), &d).unwrap();
        assert_eq!(t.to_ratio(), Ratio::from_integer(-1));
        let d = Design::balanced(8).unwrap();
        let t = neyman(&ObservedCounts::new(2, 6, 8, 0), &d).unwrap();
        assert_eq!(t.to_ratio(), Ratio::new(-3, 4));
    }

    #[test]
    fn neyman_rejects_inconsistent_counts() {
        let d = Design::new(4, 2).unwrap();
        assert!(matches!(
            neyman(&ObservedCounts::new(2, 1, 0, 1), &d),
            Err(Error::InvalidCounts(_))
        ));
    }

    #[test]
    fn c_set_examples() {
        assert_eq!(c_set(&ObservedCounts::new(1, 0, 0, 1)), 0..=2);
        assert_eq!(c_set(&ObservedCounts::new(0, 1, 1, 0)), -2..=0);
        let r = c_set(&ObservedCounts::new(2, 6, 8, 0));
        assert_eq!(r.clone().count(), 17);
    }

    #[test]
    fn design_validation() {
        assert!(Design::new(4, 0).is_err());
        assert!(Design::new(4, 4).is_err());
        assert!(matches!(Design::new(MAX_SUBJECTS + 2, 3), Err(Error::Capacity(_))));
        assert!(Design::new(2, 1).unwrap().is_balanced());
        assert!(!Design::new(5, 2).unwrap().is_balanced());
        assert!(ObservedCounts::new(0, 0, 0, 0).design().is_err());
    }

    #[test]
    fn prob_parsing() {
        let a: Prob = "0.05".parse().unwrap();
        assert_eq!((a.numer(), a.denom()), (1, 20));
        assert_eq!(Prob::from_f64(0.05).unwrap(), a);
        assert_eq!("1/20".parse::<Prob>().unwrap(), a);
        assert_eq!(a.to_string(), "0.05");
        assert_eq!(Prob::new(1, 3).unwrap().to_string(), "1/3");
        assert!("0".parse::<Prob>().is_err());
        assert!("1.0".parse::<Prob>().is_err());
        assert!("-0.1".parse::<Prob>().is_err());
        assert!("abc".parse::<Prob>().is_err());
        let e: Prob = "0.01".parse().unwrap();
        assert_eq!(a.checked_sub(&e).unwrap(), "0.04".parse().unwrap());
        assert!(e.checked_sub(&a).is_none());
    }

    #[test]
    fn interval_algebra() {
        let a = Interval::scaled(-3, 5);
        let b = Interval::scaled(-4, 5);
        assert!(a.is_subset_of(&b));
        assert!(!b.is_subset_of(&a));
        assert!(Interval::empty().is_subset_of(&a));
        assert!(Interval::scaled(2, 1).is_empty());
        assert!(a.contains_ratio(9, 2));
        assert!(!a.contains_ratio(11, 2));
        assert_eq!(a.length_scaled(), Some(8));
    }

    #[test]
    fn counts_parse() {
        let c: ObservedCounts = "2, 6,8,0".parse().unwrap();
        assert_eq!(c, ObservedCounts::new(2, 6, 8, 0));
        assert!("1,2,3".parse::<ObservedCounts>().is_err());
        assert!("1,2,3,x".parse::<ObservedCounts>().is_err());
    }
}
