//! Exact randomization distribution of the Neyman estimator.
//!
//! Under complete randomization the estimator depends on the assignment only
//! through the treatment split `x` (how many subjects of each potential-outcome
//! class are treated), and `x` is multivariate hypergeometric with weights
//! `∏ C(v_ab, x_ab) / C(n, m)`. Enumerating splits instead of the `C(n, m)`
//! assignments gives the same distribution at polynomial cost. In balanced
//! designs the `(1,0)` and `(0,1)` classes enter the statistic with the same
//! coefficient and are pooled, which makes a p-value `O(n²)`.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_factorial;

use crate::error::{Error, Result};
use crate::model::{
    neyman, ratio_to_f64, CountVector, Design, ExactStat, ObservedCounts, Prob, ScaledEffect,
};

/// Largest `n` accepted in exact big-rational mode.
pub const RATIONAL_MAX_N: u64 = 4096;

/// Float-mode p-values within this distance of the level count as meeting it.
pub const FLOAT_TOLERANCE: f64 = 1e-12;

/// Below this distance from the level, a rational-mode decision made in
/// floating point is re-checked with big integers.
const HYBRID_GUARD: f64 = 1e-9;

/// Arithmetic used for probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arithmetic {
    /// Exact integer weights; probabilities are big rationals.
    #[default]
    Rational,
    /// Log-space binomials with compensated summation.
    Float,
}

impl std::str::FromStr for Arithmetic {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rational" | "exact" => Ok(Self::Rational),
            "float" => Ok(Self::Float),
            _ => Err(Error::InvalidConfig(format!("unknown arithmetic mode {s:?}"))),
        }
    }
}

/// Number of subjects of each potential-outcome class assigned to treatment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TreatmentSplit {
    pub x11: u64,
    pub x10: u64,
    pub x01: u64,
    pub x00: u64,
}

impl TreatmentSplit {
    pub fn new(x11: u64, x10: u64, x01: u64, x00: u64) -> Self {
        Self { x11, x10, x01, x00 }
    }

    pub fn treated(&self) -> u64 {
        self.x11 + self.x10 + self.x01 + self.x00
    }

    pub fn fits(&self, v: &CountVector) -> bool {
        self.x11 <= v.v11 && self.x10 <= v.v10 && self.x01 <= v.v01 && self.x00 <= v.v00
    }

    /// Observed counts produced when `v` is randomized with this split.
    pub fn observed(&self, v: &CountVector) -> ObservedCounts {
        ObservedCounts::new(
            self.x11 + self.x10,
            self.x01 + self.x00,
            (v.v11 - self.x11) + (v.v01 - self.x01),
            (v.v10 - self.x10) + (v.v00 - self.x00),
        )
    }

    /// Neyman estimator for this split.
    pub fn statistic(&self, v: &CountVector, d: &Design) -> ExactStat {
        ExactStat::new(split_stat_numerator(self, v, d), d)
    }
}

pub(crate) fn split_stat_numerator(x: &TreatmentSplit, v: &CountVector, d: &Design) -> i64 {
    let (n, m) = (d.n() as i64, d.m() as i64);
    n * x.x11 as i64 + (n - m) * x.x10 as i64 + m * x.x01 as i64 - m * (v.v11 + v.v01) as i64
}

/// A probability in either arithmetic mode.
#[derive(Debug, Clone, PartialEq)]
pub enum Probability {
    Exact(BigRational),
    Approx(f64),
}

impl Probability {
    pub fn to_f64(&self) -> f64 {
        match self {
            Probability::Exact(r) => ratio_to_f64(r),
            Probability::Approx(x) => *x,
        }
    }

    /// `p >= alpha`. Float values within [`FLOAT_TOLERANCE`] below the level
    /// are accepted.
    pub fn at_least(&self, alpha: &Prob) -> bool {
        match self {
            Probability::Exact(r) => *r >= alpha.to_big(),
            Probability::Approx(x) => *x >= alpha.value() - FLOAT_TOLERANCE,
        }
    }

    pub fn as_exact(&self) -> Option<&BigRational> {
        match self {
            Probability::Exact(r) => Some(r),
            Probability::Approx(_) => None,
        }
    }
}

impl fmt::Display for Probability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Probability::Exact(r) => write!(f, "{r}"),
            Probability::Approx(x) => write!(f, "{x}"),
        }
    }
}

/// Distribution of the Neyman estimator for a hypothesized table.
#[derive(Debug, Clone)]
pub struct StatPmf {
    design: Design,
    entries: Vec<(ExactStat, Probability)>,
}

impl StatPmf {
    pub fn design(&self) -> &Design {
        &self.design
    }

    /// Support points in increasing order with their probabilities.
    pub fn entries(&self) -> &[(ExactStat, Probability)] {
        &self.entries
    }

    pub fn probability_of(&self, stat_num: i64) -> Option<&Probability> {
        self.entries
            .binary_search_by_key(&stat_num, |(s, _)| s.numerator())
            .ok()
            .map(|i| &self.entries[i].1)
    }

    /// Total mass, exactly when in rational mode.
    pub fn total(&self) -> Probability {
        match self.entries.first().map(|e| &e.1) {
            Some(Probability::Exact(_)) => Probability::Exact(
                self.entries
                    .iter()
                    .filter_map(|(_, p)| p.as_exact())
                    .fold(BigRational::zero(), |acc, p| acc + p),
            ),
            _ => {
                let mut acc = Neumaier::default();
                for (_, p) in &self.entries {
                    acc.add(p.to_f64());
                }
                Probability::Approx(acc.sum())
            }
        }
    }

    /// Mean of the statistic, exactly when in rational mode.
    pub fn mean(&self) -> Probability {
        match self.entries.first().map(|e| &e.1) {
            Some(Probability::Exact(_)) => {
                let mut acc = BigRational::zero();
                for (s, p) in &self.entries {
                    let value =
                        BigRational::new(BigInt::from(s.numerator()), BigInt::from(s.denominator()));
                    acc += value * p.as_exact().expect("uniform mode");
                }
                Probability::Exact(acc)
            }
            _ => {
                let mut acc = Neumaier::default();
                for (s, p) in &self.entries {
                    acc.add(s.to_f64() * p.to_f64());
                }
                Probability::Approx(acc.sum())
            }
        }
    }
}

/// Compensated summation.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn sum(&self) -> f64 {
        self.sum + self.comp
    }
}

/// `ln k!` for `k <= n`.
#[derive(Debug, Clone)]
pub(crate) struct LnFactorials(Vec<f64>);

impl LnFactorials {
    pub(crate) fn new(n: u64) -> Self {
        Self((0..=n).map(ln_factorial).collect())
    }

    #[inline]
    pub(crate) fn ln_choose(&self, k: u64, j: u64) -> f64 {
        self.0[k as usize] - self.0[j as usize] - self.0[(k - j) as usize]
    }
}

/// `C(n, k)` as a big integer; zero when `k > n`.
pub fn binomial(n: u64, k: u64) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigUint::one();
    for i in 0..k {
        acc *= n - i;
        acc /= i + 1;
    }
    acc
}

/// Pascal triangle in `u128`, saturating. Entries that fit are exact.
#[derive(Debug, Clone)]
struct Pascal(Vec<Vec<u128>>);

impl Pascal {
    fn new(n: u64) -> Self {
        let mut rows: Vec<Vec<u128>> = Vec::with_capacity(n as usize + 1);
        rows.push(vec![1]);
        for k in 1..=n as usize {
            let prev = &rows[k - 1];
            let mut row = vec![1u128; k + 1];
            for j in 1..k {
                row[j] = prev[j - 1].saturating_add(prev[j]);
            }
            rows.push(row);
        }
        Self(rows)
    }
}

/// Split classes whose sizes and statistic coefficients drive enumeration.
///
/// Balanced designs pool `(1,0)` and `(0,1)`; the statistic numerator is
/// `Σ coef_i x_i + offset` in either case.
struct ClassLayout {
    sizes: [u64; 4],
    coefs: [i64; 4],
    len: usize,
    offset: i64,
}

impl ClassLayout {
    fn new(v: &CountVector, d: &Design) -> Self {
        let (n, m) = (d.n() as i64, d.m() as i64);
        let offset = -m * (v.v11 + v.v01) as i64;
        if d.is_balanced() {
            Self {
                sizes: [v.v11, v.v10 + v.v01, v.v00, 0],
                coefs: [n, m, 0, 0],
                len: 3,
                offset,
            }
        } else {
            Self {
                sizes: [v.v11, v.v10, v.v01, v.v00],
                coefs: [n, n - m, m, 0],
                len: 4,
                offset,
            }
        }
    }

    /// Calls `f(stat_num, xs)` for every feasible split of the classes.
    #[inline]
    fn for_each(&self, m: u64, mut f: impl FnMut(i64, &[u64; 4])) {
        let s = &self.sizes;
        let c = &self.coefs;
        let mut xs = [0u64; 4];
        if self.len == 3 {
            for x0 in 0..=s[0].min(m) {
                let rest = m - x0;
                let lo = rest.saturating_sub(s[2]);
                let hi = s[1].min(rest);
                if lo > hi {
                    continue;
                }
                for x1 in lo..=hi {
                    xs[0] = x0;
                    xs[1] = x1;
                    xs[2] = rest - x1;
                    let stat = c[0] * x0 as i64 + c[1] * x1 as i64 + self.offset;
                    f(stat, &xs);
                }
            }
        } else {
            for x0 in 0..=s[0].min(m) {
                for x1 in 0..=s[1].min(m - x0) {
                    let rest = m - x0 - x1;
                    let lo = rest.saturating_sub(s[3]);
                    let hi = s[2].min(rest);
                    if lo > hi {
                        continue;
                    }
                    for x2 in lo..=hi {
                        xs[0] = x0;
                        xs[1] = x1;
                        xs[2] = x2;
                        xs[3] = rest - x2;
                        let stat = c[0] * x0 as i64 + c[1] * x1 as i64 + c[2] * x2 as i64
                            + self.offset;
                        f(stat, &xs);
                    }
                }
            }
        }
    }
}

/// Computes randomization distributions and p-values for one design.
///
/// Rational mode uses `u128` weights when `C(n, m)` fits, and otherwise makes
/// each accept/reject decision in floating point, falling back to big
/// integers only when the float p-value is too close to the level to be
/// trusted.
#[derive(Debug, Clone)]
pub struct ExactEngine {
    design: Design,
    mode: Arithmetic,
    pascal: Option<Pascal>,
    ln_fact: LnFactorials,
}

impl ExactEngine {
    pub fn new(design: Design, mode: Arithmetic) -> Result<Self> {
        if mode == Arithmetic::Rational && design.n() > RATIONAL_MAX_N {
            return Err(Error::Capacity(format!(
                "rational mode supports at most {RATIONAL_MAX_N} subjects, got {}; use float mode",
                design.n()
            )));
        }
        let pascal = (mode == Arithmetic::Rational
            && binomial(design.n(), design.m()).bits() <= 126)
            .then(|| Pascal::new(design.n()));
        Ok(Self { design, mode, pascal, ln_fact: LnFactorials::new(design.n()) })
    }

    pub fn design(&self) -> &Design {
        &self.design
    }

    pub fn mode(&self) -> Arithmetic {
        self.mode
    }

    fn check(&self, v: &CountVector) -> Result<()> {
        if v.total() != self.design.n() {
            return Err(Error::InvalidCounts(format!(
                "count vector {v} does not sum to n = {}",
                self.design.n()
            )));
        }
        Ok(())
    }

    /// Full pmf of the estimator for table `v`.
    pub fn pmf(&self, v: &CountVector) -> Result<StatPmf> {
        self.check(v)?;
        let d = self.design;
        let layout = ClassLayout::new(v, &d);
        let entries = match self.mode {
            Arithmetic::Rational => {
                let rows = big_rows(&layout);
                let mut acc: BTreeMap<i64, BigUint> = BTreeMap::new();
                layout.for_each(d.m(), |stat, xs| {
                    let w = big_term(&rows, xs, layout.len);
                    *acc.entry(stat).or_default() += w;
                });
                let total = BigInt::from(binomial(d.n(), d.m()));
                acc.into_iter()
                    .map(|(s, w)| {
                        let p = BigRational::new(BigInt::from(w), total.clone());
                        (ExactStat::new(s, &d), Probability::Exact(p))
                    })
                    .collect()
            }
            Arithmetic::Float => {
                let norm = self.ln_fact.ln_choose(d.n(), d.m());
                let mut acc: BTreeMap<i64, Neumaier> = BTreeMap::new();
                let mut total = Neumaier::default();
                layout.for_each(d.m(), |stat, xs| {
                    let w = self.float_term(&layout, xs, norm);
                    acc.entry(stat).or_default().add(w);
                    total.add(w);
                });
                let total = total.sum();
                acc.into_iter()
                    .map(|(s, w)| (ExactStat::new(s, &d), Probability::Approx(w.sum() / total)))
                    .collect()
            }
        };
        Ok(StatPmf { design: d, entries })
    }

    /// `P(|T̃ - τ(v)| >= |T(obs) - τ(v)|)` for table `v`, given the observed
    /// statistic numerator.
    pub fn pvalue_for_stat(&self, v: &CountVector, obs_stat: i64) -> Result<Probability> {
        self.check(v)?;
        Ok(match self.mode {
            Arithmetic::Float => Probability::Approx(self.float_pvalue(v, obs_stat)),
            Arithmetic::Rational => match &self.pascal {
                Some(p) => {
                    let (hit, total) = self.small_pvalue(p, v, obs_stat);
                    Probability::Exact(BigRational::new(
                        BigInt::from(hit),
                        BigInt::from(total),
                    ))
                }
                None => {
                    let (hit, total) = self.big_pvalue(v, obs_stat);
                    Probability::Exact(BigRational::new(BigInt::from(hit), BigInt::from(total)))
                }
            },
        })
    }

    pub fn pvalue(&self, v: &CountVector, obs: &ObservedCounts) -> Result<Probability> {
        let t = neyman(obs, &self.design)?;
        self.pvalue_for_stat(v, t.numerator())
    }

    /// Whether the exact permutation test accepts `v` at level `alpha`.
    pub fn accepts(&self, v: &CountVector, obs_stat: i64, alpha: &Prob) -> Result<bool> {
        self.check(v)?;
        match (self.mode, &self.pascal) {
            (Arithmetic::Float, _) => {
                Ok(self.float_pvalue(v, obs_stat) >= alpha.value() - FLOAT_TOLERANCE)
            }
            (Arithmetic::Rational, Some(p)) => {
                let (hit, total) = self.small_pvalue(p, v, obs_stat);
                Ok(meets_level(&BigUint::from(hit), &BigUint::from(total), alpha))
            }
            (Arithmetic::Rational, None) => {
                let approx = self.float_pvalue(v, obs_stat);
                let a = alpha.value();
                if approx >= a + HYBRID_GUARD {
                    Ok(true)
                } else if approx <= a - HYBRID_GUARD {
                    Ok(false)
                } else {
                    let (hit, total) = self.big_pvalue(v, obs_stat);
                    Ok(meets_level(&hit, &total, alpha))
                }
            }
        }
    }

    fn small_pvalue(&self, pascal: &Pascal, v: &CountVector, obs_stat: i64) -> (u128, u128) {
        let d = self.design;
        let s = v.tau();
        let threshold = d.discrepancy(obs_stat, s);
        let layout = ClassLayout::new(v, &d);
        let rows: Vec<&[u128]> =
            layout.sizes[..layout.len].iter().map(|&k| pascal.0[k as usize].as_slice()).collect();
        let (mut hit, mut total) = (0u128, 0u128);
        layout.for_each(d.m(), |stat, xs| {
            let mut w = 1u128;
            for (row, &x) in rows.iter().zip(xs) {
                w *= row[x as usize];
            }
            total += w;
            if d.discrepancy(stat, s) >= threshold {
                hit += w;
            }
        });
        (hit, total)
    }

    fn big_pvalue(&self, v: &CountVector, obs_stat: i64) -> (BigUint, BigUint) {
        let d = self.design;
        let s = v.tau();
        let threshold = d.discrepancy(obs_stat, s);
        let layout = ClassLayout::new(v, &d);
        let rows = big_rows(&layout);
        let (mut hit, mut total) = (BigUint::zero(), BigUint::zero());
        layout.for_each(d.m(), |stat, xs| {
            let w = big_term(&rows, xs, layout.len);
            if d.discrepancy(stat, s) >= threshold {
                hit += &w;
            }
            total += w;
        });
        (hit, total)
    }

    fn float_pvalue(&self, v: &CountVector, obs_stat: i64) -> f64 {
        let d = self.design;
        let s = v.tau();
        let threshold = d.discrepancy(obs_stat, s);
        let layout = ClassLayout::new(v, &d);
        let norm = self.ln_fact.ln_choose(d.n(), d.m());
        let (mut hit, mut total) = (Neumaier::default(), Neumaier::default());
        layout.for_each(d.m(), |stat, xs| {
            let w = self.float_term(&layout, xs, norm);
            total.add(w);
            if d.discrepancy(stat, s) >= threshold {
                hit.add(w);
            }
        });
        (hit.sum() / total.sum()).min(1.0)
    }

    #[inline]
    fn float_term(&self, layout: &ClassLayout, xs: &[u64; 4], norm: f64) -> f64 {
        let mut ln = -norm;
        for i in 0..layout.len {
            ln += self.ln_fact.ln_choose(layout.sizes[i], xs[i]);
        }
        ln.exp()
    }
}

fn big_rows(layout: &ClassLayout) -> Vec<Vec<BigUint>> {
    layout.sizes[..layout.len]
        .iter()
        .map(|&k| {
            let mut row = Vec::with_capacity(k as usize + 1);
            let mut c = BigUint::one();
            row.push(c.clone());
            for j in 0..k {
                c = c * (k - j) / (j + 1);
                row.push(c.clone());
            }
            row
        })
        .collect()
}

#[inline]
fn big_term(rows: &[Vec<BigUint>], xs: &[u64; 4], len: usize) -> BigUint {
    let mut w = rows[0][xs[0] as usize].clone();
    for i in 1..len {
        w *= &rows[i][xs[i] as usize];
    }
    w
}

/// `hit / total >= alpha`, exactly.
pub(crate) fn meets_level(hit: &BigUint, total: &BigUint, alpha: &Prob) -> bool {
    hit * BigUint::from(alpha.denom()) >= total * BigUint::from(alpha.numer())
}

/// Pmf of `T(w, Z̃)` for a table with counts `v` under design `d`.
pub fn exact_pmf(v: &CountVector, d: &Design, mode: Arithmetic) -> Result<StatPmf> {
    ExactEngine::new(*d, mode)?.pmf(v)
}

/// Exact permutation p-value of table `v` given observed counts `obs`.
pub fn exact_pvalue(v: &CountVector, obs: &ObservedCounts, mode: Arithmetic) -> Result<Probability> {
    let d = obs.design()?;
    ExactEngine::new(d, mode)?.pvalue(v, obs)
}

/// Probability that a uniform assignment of `v` yields `s1` treated subjects
/// with outcome one and `s0` control subjects with outcome one.
pub fn copas_pmf_term(
    v: &CountVector,
    d: &Design,
    s1: u64,
    s0: u64,
    mode: Arithmetic,
) -> Result<Probability> {
    if v.total() != d.n() {
        return Err(Error::InvalidCounts(format!("count vector {v} does not sum to n = {}", d.n())));
    }
    let m = d.m() as i64;
    let [v11, v10, v01, v00] = v.signed();
    let (s1, s0) = (s1 as i64, s0 as i64);
    // Each x is the number of treated (1,1) subjects; the other three class
    // counts follow from s1, s0 and the group size.
    let picks = |x: i64| -> Option<[(i64, i64); 4]> {
        let args = [(v11, x), (v10, s1 - x), (v01, v11 + v01 - s0 - x), (v00, m - v11 - s1 - v01 + s0 + x)];
        args.iter().all(|&(k, j)| j >= 0 && j <= k).then_some(args)
    };
    match mode {
        Arithmetic::Rational => {
            let mut acc = BigUint::zero();
            for x in 0..=v11 {
                if let Some(args) = picks(x) {
                    acc += args
                        .iter()
                        .map(|&(k, j)| binomial(k as u64, j as u64))
                        .fold(BigUint::one(), |a, b| a * b);
                }
            }
            Ok(Probability::Exact(BigRational::new(
                BigInt::from(acc),
                BigInt::from(binomial(d.n(), d.m())),
            )))
        }
        Arithmetic::Float => {
            let lf = LnFactorials::new(d.n());
            let norm = lf.ln_choose(d.n(), d.m());
            let mut acc = Neumaier::default();
            for x in 0..=v11 {
                if let Some(args) = picks(x) {
                    let ln: f64 = args.iter().map(|&(k, j)| lf.ln_choose(k as u64, j as u64)).sum();
                    acc.add((ln - norm).exp());
                }
            }
            Ok(Probability::Approx(acc.sum()))
        }
    }
}

/// Statistic value as an exact rational.
pub fn stat_value(s: &ExactStat) -> BigRational {
    BigRational::new(BigInt::from(s.numerator()), BigInt::from(s.denominator()))
}

/// Effect `τ = s / n` as an exact rational.
pub fn effect_value(s: ScaledEffect, n: u64) -> BigRational {
    BigRational::new(BigInt::from(s.0), BigInt::from(n))
}

/// Lossy conversion used only for display.
pub fn to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Ratio;

    fn q(a: i64, b: i64) -> BigRational {
        BigRational::new(BigInt::from(a), BigInt::from(b))
    }

    /// Enumerates all C(n, m) assignments of the table with counts `v`.
    fn brute_force_pmf(v: &CountVector, d: &Design) -> BTreeMap<i64, (u64, u64)> {
        let n = d.n() as usize;
        let mut table = Vec::with_capacity(n);
        for (class, &count) in [(1, 1), (1, 0), (0, 1), (0, 0)].iter().zip(&v.as_array()) {
            table.extend(std::iter::repeat_n(*class, count as usize));
        }
        let mut out: BTreeMap<i64, (u64, u64)> = BTreeMap::new();
        let mut total = 0u64;
        for mask in 0u32..(1 << n) {
            if mask.count_ones() as u64 != d.m() {
                continue;
            }
            total += 1;
            let (mut t1, mut c1) = (0i64, 0i64);
            for (i, &(y1, y0)) in table.iter().enumerate() {
                if mask >> i & 1 == 1 {
                    t1 += y1;
                } else {
                    c1 += y0;
                }
            }
            let num = (d.n() - d.m()) as i64 * t1 - d.m() as i64 * c1;
            out.entry(num).or_default().0 += 1;
        }
        for e in out.values_mut() {
            e.1 = total;
        }
        out
    }

    fn all_vectors(n: u64) -> impl Iterator<Item = CountVector> {
        (0..=n).flat_map(move |a| {
            (0..=n - a).flat_map(move |b| {
                (0..=n - a - b).map(move |c| CountVector::new(a, b, c, n - a - b - c))
            })
        })
    }

    #[test]
    fn pmf_two_subjects() {
        let d = Design::new(2, 1).unwrap();
        let pmf = exact_pmf(&CountVector::new(1, 0, 0, 1), &d, Arithmetic::Rational).unwrap();
        let e = pmf.entries();
        assert_eq!(e.len(), 2);
        assert_eq!(e[0].0.to_ratio(), Ratio::from_integer(-1));
        assert_eq!(e[0].1, Probability::Exact(q(1, 2)));
        assert_eq!(e[1].0.to_ratio(), Ratio::from_integer(1));
        assert_eq!(e[1].1, Probability::Exact(q(1, 2)));
    }

    #[test]
    fn pmf_degenerate_table() {
        let d = Design::new(2, 1).unwrap();
        let pmf = exact_pmf(&CountVector::new(0, 2, 0, 0), &d, Arithmetic::Rational).unwrap();
        assert_eq!(pmf.entries().len(), 1);
        assert_eq!(pmf.entries()[0].0.to_ratio(), Ratio::from_integer(1));
        assert_eq!(pmf.entries()[0].1, Probability::Exact(q(1, 1)));
    }

    #[test]
    fn pmf_parity_example() {
        // v = (2,0,0,2), n = 4: T = (2 x11 - 2) / 2 in {-1, 0, 1}, i.e. on the
        // even sublattice of (1/2)Z.
        let d = Design::balanced(2).unwrap();
        let pmf = exact_pmf(&CountVector::new(2, 0, 0, 2), &d, Arithmetic::Rational).unwrap();
        let support: Vec<_> = pmf.entries().iter().map(|(s, _)| s.to_ratio()).collect();
        assert_eq!(support, vec![Ratio::from_integer(-1), Ratio::from_integer(0), Ratio::from_integer(1)]);
        assert_eq!(pmf.probability_of(0).cloned(), Some(Probability::Exact(q(4, 6))));
        for (s, _) in pmf.entries() {
            assert_eq!((s.numerator() / 2).rem_euclid(2), 0, "m T must be even");
        }
    }

    #[test]
    fn pmf_matches_assignment_enumeration() {
        for n in 2..=10u64 {
            for m in 1..n {
                let d = Design::new(n, m).unwrap();
                let engine = ExactEngine::new(d, Arithmetic::Rational).unwrap();
                for v in all_vectors(n) {
                    let brute = brute_force_pmf(&v, &d);
                    let pmf = engine.pmf(&v).unwrap();
                    assert_eq!(pmf.entries().len(), brute.len(), "support size for {v} {d}");
                    for (s, p) in pmf.entries() {
                        let (hits, total) = brute[&s.numerator()];
                        assert_eq!(p, &Probability::Exact(q(hits as i64, total as i64)), "{v} {d}");
                    }
                }
            }
        }
    }

    #[test]
    fn pvalue_examples() {
        let obs = ObservedCounts::new(1, 0, 0, 1);
        let p = exact_pvalue(&CountVector::new(1, 0, 0, 1), &obs, Arithmetic::Rational).unwrap();
        assert_eq!(p, Probability::Exact(q(1, 1)));

        // τ(v) = T(obs): every draw is at least as extreme.
        let obs = ObservedCounts::new(2, 6, 8, 0);
        let witness = CountVector::new(0, 2, 14, 0);
        assert_eq!(witness.tau().0, -12);
        let p = exact_pvalue(&witness, &obs, Arithmetic::Rational).unwrap();
        assert_eq!(p, Probability::Exact(q(1, 1)));

        // All subjects identical: T ≡ 0 = τ, never as extreme as a nonzero T.
        let p = exact_pvalue(&CountVector::new(16, 0, 0, 0), &obs, Arithmetic::Rational).unwrap();
        assert_eq!(p, Probability::Exact(q(0, 1)));
    }

    #[test]
    fn float_mode_agrees_with_rational() {
        let d = Design::new(9, 4).unwrap();
        let exact = ExactEngine::new(d, Arithmetic::Rational).unwrap();
        let float = ExactEngine::new(d, Arithmetic::Float).unwrap();
        let obs = ObservedCounts::new(3, 1, 1, 4);
        for v in all_vectors(9) {
            let a = exact.pvalue(&v, &obs).unwrap().to_f64();
            let b = float.pvalue(&v, &obs).unwrap().to_f64();
            assert!((a - b).abs() < 1e-12, "{v}: {a} vs {b}");
            let total = float.pmf(&v).unwrap().total().to_f64();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn big_integer_path_matches_u128_path() {
        // n = 140 does not fit u128 weights; compare the hybrid decision and
        // exact p-value against float and against the level directly.
        let d = Design::balanced(70).unwrap();
        let engine = ExactEngine::new(d, Arithmetic::Rational).unwrap();
        assert!(engine.pascal.is_none());
        let float = ExactEngine::new(d, Arithmetic::Float).unwrap();
        let obs = ObservedCounts::new(40, 30, 25, 45);
        let alpha: Prob = "0.05".parse().unwrap();
        let t = neyman(&obs, &d).unwrap().numerator();
        for v in [
            CountVector::new(20, 40, 25, 55),
            CountVector::new(30, 30, 20, 60),
            CountVector::new(0, 70, 60, 10),
        ] {
            let p = engine.pvalue_for_stat(&v, t).unwrap();
            let f = float.pvalue_for_stat(&v, t).unwrap().to_f64();
            assert!((p.to_f64() - f).abs() < 1e-10);
            assert_eq!(engine.accepts(&v, t, &alpha).unwrap(), p.at_least(&alpha));
        }
    }

    #[test]
    fn copas_examples() {
        let d = Design::new(4, 2).unwrap();
        let p = copas_pmf_term(&CountVector::new(0, 4, 0, 0), &d, 2, 0, Arithmetic::Rational).unwrap();
        assert_eq!(p, Probability::Exact(q(1, 1)));
        let d2 = Design::new(2, 1).unwrap();
        let v = CountVector::new(1, 0, 0, 1);
        assert_eq!(copas_pmf_term(&v, &d2, 1, 0, Arithmetic::Rational).unwrap(), Probability::Exact(q(1, 2)));
        assert_eq!(copas_pmf_term(&v, &d2, 0, 1, Arithmetic::Rational).unwrap(), Probability::Exact(q(1, 2)));
        assert_eq!(copas_pmf_term(&v, &d2, 1, 1, Arithmetic::Rational).unwrap(), Probability::Exact(q(0, 1)));
    }

    #[test]
    fn copas_aggregates_to_pmf() {
        for (n, m) in [(4u64, 2u64), (5, 2), (6, 3), (7, 4)] {
            let d = Design::new(n, m).unwrap();
            for v in all_vectors(n) {
                let pmf = exact_pmf(&v, &d, Arithmetic::Rational).unwrap();
                let mut agg: BTreeMap<i64, BigRational> = BTreeMap::new();
                for s1 in 0..=m {
                    for s0 in 0..=v.v11 + v.v01 {
                        let p = copas_pmf_term(&v, &d, s1, s0, Arithmetic::Rational).unwrap();
                        let num = (n - m) as i64 * s1 as i64 - m as i64 * s0 as i64;
                        *agg.entry(num).or_insert_with(BigRational::zero) += p.as_exact().unwrap();
                    }
                }
                agg.retain(|_, p| !p.is_zero());
                assert_eq!(agg.len(), pmf.entries().len());
                for (s, p) in pmf.entries() {
                    assert_eq!(&agg[&s.numerator()], p.as_exact().unwrap());
                }
                let f = copas_pmf_term(&v, &d, m.min(v.v11 + v.v10), 0, Arithmetic::Float).unwrap();
                let e = copas_pmf_term(&v, &d, m.min(v.v11 + v.v10), 0, Arithmetic::Rational).unwrap();
                assert!((f.to_f64() - e.to_f64()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn capacity_error_in_rational_mode() {
        let d = Design::balanced(RATIONAL_MAX_N / 2 + 1).unwrap();
        assert!(matches!(ExactEngine::new(d, Arithmetic::Rational), Err(Error::Capacity(_))));
        assert!(ExactEngine::new(d, Arithmetic::Float).is_ok());
    }

    #[test]
    fn wrong_total_is_rejected() {
        let d = Design::new(4, 2).unwrap();
        assert!(exact_pmf(&CountVector::new(1, 1, 1, 0), &d, Arithmetic::Rational).is_err());
    }

    #[test]
    fn binomial_values() {
        assert_eq!(binomial(16, 8), BigUint::from(12870u32));
        assert_eq!(binomial(3, 5), BigUint::zero());
        assert_eq!(binomial(0, 0), BigUint::one());
    }
}
