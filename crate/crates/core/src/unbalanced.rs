//! Interval search for arbitrary designs.
//!
//! Effects are scanned linearly inward from both ends of the candidate set.
//! For a fixed effect `s` and `j = v11 + v10`, the possible tables form a
//! segment `base + k·(-1,+1,+1,-1)`, `k = 0..len`. In Monte Carlo mode the
//! samples drawn for `base` are carried along the segment by converting one
//! `(0,0)` and one `(1,1)` subject per step, so the whole segment costs one
//! set of draws.

use rand::RngCore;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exactdist::Arithmetic;
use crate::feasibility::{family_vector, feasible_v10_range};
use crate::model::{c_set, neyman, CountVector, Design, ExactStat, Interval, ObservedCounts, Prob, ScaledEffect};
use crate::montecarlo::{seek_sample, table_stream, McConfig, SplitSampler, CHUNK};
use crate::tester::{ExactTest, PermutationTest, SearchOutcome};
use crate::exactdist::TreatmentSplit;

/// Per-class group counts of one assignment: `q[c][z]` is the number of
/// subjects of class `c` (ordered 11, 10, 01, 00) in group `z` (0 control,
/// 1 treated).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct AssignmentSummary {
    pub q: [[u32; 2]; 4],
}

const C11: usize = 0;
const C10: usize = 1;
const C01: usize = 2;
const C00: usize = 3;

impl AssignmentSummary {
    pub fn from_split(v: &CountVector, x: &TreatmentSplit) -> Self {
        let pair = |total: u64, treated: u64| [(total - treated) as u32, treated as u32];
        Self {
            q: [pair(v.v11, x.x11), pair(v.v10, x.x10), pair(v.v01, x.x01), pair(v.v00, x.x00)],
        }
    }

    pub fn table(&self) -> CountVector {
        let t = |c: usize| (self.q[c][0] + self.q[c][1]) as u64;
        CountVector::new(t(C11), t(C10), t(C01), t(C00))
    }

    pub fn split(&self) -> TreatmentSplit {
        let t = |c: usize| self.q[c][1] as u64;
        TreatmentSplit::new(t(C11), t(C10), t(C01), t(C00))
    }

    /// Numerator of the estimator over `m(n - m)`.
    #[inline]
    fn stat_numerator(&self, d: &Design) -> i64 {
        let treated_ones = (self.q[C11][1] + self.q[C10][1]) as i64;
        let control_ones = (self.q[C11][0] + self.q[C01][0]) as i64;
        d.controls() as i64 * treated_ones - d.m() as i64 * control_ones
    }

    /// One step along the segment: a `(0,0)` subject becomes `(0,1)` and a
    /// `(1,1)` subject becomes `(1,0)`. Each converted subject is chosen
    /// uniformly within its class using one word.
    #[inline]
    fn step_with(&mut self, w00: u64, w11: u64) {
        let pick = |q: [u32; 2], w: u64| -> usize {
            let idx = ((w as u128 * (q[0] + q[1]) as u128) >> 64) as u32;
            if idx < q[0] {
                0
            } else {
                1
            }
        };
        let z = pick(self.q[C00], w00);
        self.q[C00][z] -= 1;
        self.q[C01][z] += 1;
        let z = pick(self.q[C11], w11);
        self.q[C11][z] -= 1;
        self.q[C10][z] += 1;
    }
}

/// The estimator for the assignment summarized by `q`.
pub fn stat_from_summary(q: &AssignmentSummary, d: &Design) -> ExactStat {
    ExactStat::new(q.stat_numerator(d), d)
}

/// Moves `q` one step along `(-1,+1,+1,-1)`, drawing two words from `rng`.
/// If `q` is a uniformly random assignment of its table, the result is a
/// uniformly random assignment of the stepped table.
pub fn step_summary<R: RngCore + ?Sized>(q: &AssignmentSummary, rng: &mut R) -> Result<AssignmentSummary> {
    let v = q.table();
    if v.v00 == 0 || v.v11 == 0 {
        return Err(Error::InvalidCounts(format!("cannot step table {v}: needs v11 >= 1 and v00 >= 1")));
    }
    let mut out = *q;
    out.step_with(rng.next_u64(), rng.next_u64());
    Ok(out)
}

/// A segment of possible tables sharing one effect.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LineSegment {
    pub base: CountVector,
    /// Number of steps after `base`; the segment has `len + 1` tables.
    pub len: u64,
}

impl LineSegment {
    pub fn point(&self, k: u64) -> CountVector {
        assert!(k <= self.len && k <= self.base.v11 && k <= self.base.v00);
        CountVector::new(self.base.v11 - k, self.base.v10 + k, self.base.v01 + k, self.base.v00 - k)
    }

    /// The segment at effect `s` and `j = v11 + v10`, if any table on it is
    /// possible.
    pub fn at(obs: &ObservedCounts, s: ScaledEffect, j: i64) -> Option<Self> {
        let r = feasible_v10_range(j, s, obs)?;
        let base = family_vector(obs.total(), j, *r.start(), s)?;
        let len = (r.end() - r.start()) as u64;
        debug_assert!(len <= base.v11 && len <= base.v00);
        Some(Self { base, len })
    }
}

/// Which test the unbalanced search runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchMode {
    /// Exact tests at every point of every segment.
    Exact(Arithmetic),
    /// Monte Carlo tests with samples reused along each segment.
    MonteCarlo,
}

/// Words of the step stream reserved per sample.
fn step_stride(n: u64) -> u128 {
    4 * (n as u128 + 1)
}

/// Extreme counts at each point of `seg` over samples `range`.
fn segment_counts(
    sampler: &SplitSampler,
    seg: &LineSegment,
    seed: u64,
    obs_stat: i64,
    range: std::ops::Range<u64>,
) -> Vec<u64> {
    let d = *sampler.design();
    debug_assert_eq!(sampler.table(), &seg.base);
    let s = seg.base.tau();
    let threshold = d.discrepancy(obs_stat, s);
    let mut split_rng = table_stream(seed, &seg.base);
    seek_sample(&mut split_rng, range.start);
    let mut step_rng: ChaCha8Rng = table_stream(seed, &seg.base);
    step_rng.set_stream(1);
    let stride = step_stride(d.n());
    let mut counts = vec![0u64; seg.len as usize + 1];
    for i in range {
        let x = sampler.sample(&mut split_rng);
        let mut q = AssignmentSummary::from_split(&seg.base, &x);
        step_rng.set_word_pos(i as u128 * stride);
        for (t, c) in counts.iter_mut().enumerate() {
            if t > 0 {
                q.step_with(step_rng.next_u64(), step_rng.next_u64());
            }
            if d.discrepancy(q.stat_numerator(&d), s) >= threshold {
                *c += 1;
            }
        }
    }
    counts
}

#[inline]
fn meets(extreme: u64, k: u64, level: &Prob) -> bool {
    extreme as u128 * level.denom() as u128 >= k as u128 * level.numer() as u128
}

/// Monte Carlo scan of a segment: true iff some point has `S + eps >= alpha`.
/// Stops early once the answer is settled, which gives the same result as
/// drawing every sample.
pub fn scan_line(cfg: &McConfig, seg: &LineSegment, obs: &ObservedCounts) -> Result<bool> {
    let d = obs.design()?;
    let obs_stat = neyman(obs, &d)?.numerator();
    Ok(scan_line_with(cfg, &cfg.effective_level(), &d, seg, obs_stat))
}

fn scan_line_with(cfg: &McConfig, level: &Prob, d: &Design, seg: &LineSegment, obs_stat: i64) -> bool {
    let k = cfg.k;
    let sampler = &SplitSampler::new(*d, &seg.base);
    let chunks = k.div_ceil(CHUNK);
    let batch = rayon::current_num_threads().max(1) as u64;
    let mut counts = vec![0u64; seg.len as usize + 1];
    let mut c = 0;
    while c < chunks {
        let end = (c + batch).min(chunks);
        let part: Vec<Vec<u64>> = (c..end)
            .into_par_iter()
            .map(|i| segment_counts(sampler, seg, cfg.seed, obs_stat, i * CHUNK..((i + 1) * CHUNK).min(k)))
            .collect();
        for p in part {
            for (a, b) in counts.iter_mut().zip(p) {
                *a += b;
            }
        }
        let left = k - (end * CHUNK).min(k);
        if counts.iter().any(|&x| meets(x, k, level)) {
            return true;
        }
        if counts.iter().all(|&x| !meets(x + left, k, level)) {
            return false;
        }
        c = end;
    }
    false
}

struct Scanner<'a> {
    obs: &'a ObservedCounts,
    tests: u64,
    line_points: u64,
    kind: ScanKind,
}

enum ScanKind {
    Exact(ExactTest),
    Mc { cfg: McConfig, level: Prob, design: Design, obs_stat: i64 },
}

impl Scanner<'_> {
    fn compatible(&mut self, s: i64) -> bool {
        let n = self.obs.total() as i64;
        for j in 0..=n {
            let Some(seg) = LineSegment::at(self.obs, ScaledEffect(s), j) else {
                continue;
            };
            self.tests += 1;
            self.line_points += seg.len;
            let hit = match &mut self.kind {
                ScanKind::Exact(t) => (0..=seg.len).any(|k| t.accepts(&seg.point(k))),
                ScanKind::Mc { cfg, level, design, obs_stat } => {
                    scan_line_with(cfg, level, design, &seg, *obs_stat)
                }
            };
            if hit {
                return true;
            }
        }
        false
    }

    fn evaluations(&self) -> u64 {
        match &self.kind {
            ScanKind::Exact(t) => t.evaluations(),
            ScanKind::Mc { .. } => self.tests,
        }
    }
}

fn search(obs: &ObservedCounts, kind: ScanKind) -> Result<SearchOutcome> {
    let c = c_set(obs);
    let mut sc = Scanner { obs, tests: 0, line_points: 0, kind };
    let upper = c.clone().rev().find(|&s| sc.compatible(s));
    let interval = match upper {
        None => Interval::empty(),
        Some(u) => {
            let lower = (*c.start()..=u)
                .find(|&s| s == u || sc.compatible(s))
                .expect("u itself terminates the scan");
            Interval::new(ScaledEffect(lower), ScaledEffect(u))
        }
    };
    Ok(SearchOutcome { interval, tests: sc.tests, evaluations: sc.evaluations(), line_points: sc.line_points })
}

/// Interval with exact tests at every possible table along each segment.
/// `tests` counts segments examined and `line_points` the extra tables on
/// them.
pub fn unbalanced_interval_exact(alpha: Prob, obs: &ObservedCounts, mode: Arithmetic) -> Result<SearchOutcome> {
    search(obs, ScanKind::Exact(ExactTest::new(alpha, obs, mode)?))
}

/// Interval with Monte Carlo tests and sample reuse along segments.
pub fn unbalanced_interval_mc(cfg: &McConfig, obs: &ObservedCounts) -> Result<SearchOutcome> {
    let d = obs.design()?;
    let obs_stat = neyman(obs, &d)?.numerator();
    search(
        obs,
        ScanKind::Mc { cfg: *cfg, level: cfg.effective_level(), design: d, obs_stat },
    )
}

/// Dispatches on `mode`; the exact search runs at level `cfg.alpha`.
pub fn unbalanced_interval(cfg: &McConfig, obs: &ObservedCounts, mode: SearchMode) -> Result<SearchOutcome> {
    match mode {
        SearchMode::Exact(a) => unbalanced_interval_exact(cfg.alpha, obs, a),
        SearchMode::MonteCarlo => unbalanced_interval_mc(cfg, obs),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baseline::rh_interval_exact;
    use rand::SeedableRng;

    fn prob(s: &str) -> Prob {
        s.parse().unwrap()
    }

    #[test]
    fn degenerate_steps() {
        // (0,0): two in control, none treated; (1,1): one treated.
        let q = AssignmentSummary { q: [[0, 1], [0, 0], [0, 0], [2, 0]] };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = step_summary(&q, &mut rng).unwrap();
        assert_eq!(r.q[C00], [1, 0]);
        assert_eq!(r.q[C01], [1, 0]);
        assert_eq!(r.q[C11], [0, 0]);
        assert_eq!(r.q[C10], [0, 1]);
        assert_eq!(r.table(), CountVector::new(0, 1, 1, 1));
        assert!(step_summary(&r, &mut rng).is_err());
    }

    #[test]
    fn summary_statistic() {
        let d = Design::new(2, 1).unwrap();
        let v = CountVector::new(1, 0, 0, 1);
        let q = AssignmentSummary::from_split(&v, &TreatmentSplit::new(1, 0, 0, 0));
        let t = stat_from_summary(&q, &d);
        assert_eq!(t.to_f64(), 1.0);
        let x = TreatmentSplit::new(2, 1, 0, 1);
        let v = CountVector::new(3, 2, 2, 3);
        let d = Design::new(10, 4).unwrap();
        let q = AssignmentSummary::from_split(&v, &x);
        assert_eq!(stat_from_summary(&q, &d), x.statistic(&v, &d));
        assert_eq!(q.split(), x);
    }

    #[test]
    fn segments_keep_the_effect() {
        let obs = ObservedCounts::new(3, 2, 2, 4);
        for s in c_set(&obs) {
            for j in 0..=11 {
                if let Some(seg) = LineSegment::at(&obs, ScaledEffect(s), j) {
                    for k in 0..=seg.len {
                        let v = seg.point(k);
                        assert_eq!(v.tau().0, s);
                        assert!(crate::feasibility::is_possible(&v, &obs));
                    }
                }
            }
        }
    }

    #[test]
    fn exact_mode_matches_table_one() {
        let obs = ObservedCounts::new(2, 6, 8, 0);
        let out = unbalanced_interval_exact(prob("0.05"), &obs, Arithmetic::Rational).unwrap();
        assert_eq!(out.interval, Interval::scaled(-14, -5));
    }

    #[test]
    fn exact_mode_small_unbalanced() {
        let obs = ObservedCounts::new(1, 0, 1, 1);
        let a = unbalanced_interval_exact(prob("0.05"), &obs, Arithmetic::Rational).unwrap();
        let b = rh_interval_exact(prob("0.05"), &obs, Arithmetic::Rational).unwrap();
        assert_eq!(a.interval, b.interval);
    }

    #[test]
    fn mc_mode_is_deterministic() {
        let obs = ObservedCounts::new(4, 1, 2, 4);
        let cfg = McConfig::new(prob("0.1"), prob("0.02"), 3000, 42).unwrap();
        let a = unbalanced_interval_mc(&cfg, &obs).unwrap();
        let b = unbalanced_interval_mc(&cfg, &obs).unwrap();
        assert_eq!(a, b);
        let n = obs.total();
        assert!(a.tests <= (n + 1) * (n + 1));
    }

    #[test]
    fn scan_of_single_point_agrees_with_mc_test() {
        let obs = ObservedCounts::new(4, 1, 2, 4);
        let cfg = McConfig::new(prob("0.1"), prob("0.02"), 5000, 3).unwrap();
        for s in c_set(&obs) {
            for j in 0..=11 {
                if let Some(seg) = LineSegment::at(&obs, ScaledEffect(s), j) {
                    if seg.len == 0 {
                        let direct = crate::montecarlo::mc_test(&cfg, &seg.base, &obs).unwrap().accept;
                        assert_eq!(scan_line(&cfg, &seg, &obs).unwrap(), direct);
                    }
                }
            }
        }
    }
}
