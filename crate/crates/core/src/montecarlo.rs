//! Monte Carlo permutation tests and the intervals built from them.
//!
//! Sample `i` of the test of table `v` is drawn from a ChaCha8 stream keyed by
//! `(seed, v11, v10, v01)` at a fixed offset, so results do not depend on how
//! samples are split between threads.

use std::collections::HashMap;
use std::sync::OnceLock;

use rand::{Rng, RngCore};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::balanced::fast_interval_balanced;
use crate::error::{Error, Result};
use crate::exactdist::{split_stat_numerator, TreatmentSplit};
use crate::model::{neyman, CountVector, Design, ObservedCounts, Prob};
use crate::tester::{PermutationTest, SearchOutcome};

/// Samples drawn per work item.
pub const CHUNK: u64 = 8192;

/// ChaCha words (`u32`) consumed by one sampled split.
const WORDS_PER_SAMPLE: u128 = 6;

/// Parameters of a Monte Carlo test: accept iff `S + eps >= alpha`, where `S`
/// is the fraction of `k` sampled splits at least as extreme as observed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct McConfig {
    pub alpha: Prob,
    pub eps: Prob,
    pub k: u64,
    pub seed: u64,
}

impl McConfig {
    pub fn new(alpha: Prob, eps: Prob, k: u64, seed: u64) -> Result<Self> {
        if eps >= alpha {
            return Err(Error::InvalidConfig(format!("eps = {eps} must be below alpha = {alpha}")));
        }
        if k == 0 {
            return Err(Error::InvalidConfig("the sample count K must be positive".into()));
        }
        Ok(Self { alpha, eps, k, seed })
    }

    /// The level `alpha - eps` that `S` is compared against.
    pub fn effective_level(&self) -> Prob {
        self.alpha.checked_sub(&self.eps).expect("eps < alpha is checked on construction")
    }
}

/// A sample-size recommendation and whether its derivation's assumptions hold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct KBound {
    pub k: u64,
    pub precondition_met: bool,
}

fn ceil_positive(x: f64) -> u64 {
    (x.ceil() as u64).max(1)
}

/// `ceil(ln(8 n log2(n) / eps) / eps²)`. The bound is derived for `n >= 15`;
/// smaller `n` still gets a value, flagged through `precondition_met`.
pub fn required_k_balanced(eps: Prob, n: u64) -> KBound {
    let e = eps.value();
    let nf = n.max(2) as f64;
    let k = ceil_positive((8.0 * nf * nf.log2() / e).ln() / (e * e));
    KBound { k, precondition_met: n >= 15 }
}

/// `ceil(ln(4 n³ / eps) / eps²)`, for the unbalanced search.
pub fn required_k_unbalanced(eps: Prob, n: u64) -> KBound {
    let e = eps.value();
    let nf = n as f64;
    let k = ceil_positive((4.0 * nf * nf * nf / e).ln() / (e * e));
    KBound { k, precondition_met: n >= 2 }
}

/// Weights below this fraction of the mode's are dropped from sampling
/// tables; the discarded mass is far below the resolution of a `f64`.
const TAIL_CUTOFF: f64 = 1e-20;

/// Alias table over `lo..lo + len` driven by a single `u64` per draw.
#[derive(Debug, Clone)]
pub struct AliasTable {
    lo: u64,
    entries: Vec<AliasEntry>,
}

/// Slot `i` yields `lo + i` when the fractional part of the draw is below
/// `keep`, and `other` otherwise.
#[derive(Debug, Clone, Copy)]
struct AliasEntry {
    keep: u64,
    other: u64,
}

impl AliasTable {
    /// Table for unnormalized weights of `lo, lo + 1, ...`.
    pub fn from_weights(lo: u64, weights: &[f64]) -> Self {
        let len = weights.len();
        assert!(len > 0 && len < u32::MAX as usize);
        let total: f64 = weights.iter().sum();
        let mut scaled: Vec<f64> = weights.iter().map(|w| w * len as f64 / total).collect();
        let mut keep = vec![u64::MAX; len];
        let mut alias: Vec<u32> = (0..len as u32).collect();
        let (mut small, mut large): (Vec<usize>, Vec<usize>) = (0..len).partition(|&i| scaled[i] < 1.0);
        while let (Some(&s), Some(&l)) = (small.last(), large.last()) {
            small.pop();
            keep[s] = (scaled[s] * 2f64.powi(64)) as u64;
            alias[s] = l as u32;
            scaled[l] -= 1.0 - scaled[s];
            if scaled[l] < 1.0 {
                large.pop();
                small.push(l);
            }
        }
        // Leftovers are 1 up to rounding and keep their own index.
        let entries = keep.iter().zip(&alias).map(|(&keep, &a)| AliasEntry { keep, other: lo + a as u64 }).collect();
        Self { lo, entries }
    }

    /// Hypergeometric: successes among `draws` items taken without
    /// replacement from `pop` items of which `succ` are successes.
    pub fn hypergeometric(pop: u64, succ: u64, draws: u64) -> Self {
        let fail = pop - succ;
        let lo = draws.saturating_sub(fail);
        let hi = succ.min(draws);
        let mode = (((draws + 1) as u128 * (succ + 1) as u128 / (pop + 2) as u128) as u64).clamp(lo, hi);
        let (s, f, d) = (succ as f64, fail as f64, draws as f64);
        let mut below = Vec::new();
        let mut w = 1.0;
        let mut k = mode;
        while k > lo {
            let kf = k as f64;
            w *= kf * (f - d + kf) / ((s - kf + 1.0) * (d - kf + 1.0));
            if w < TAIL_CUTOFF {
                break;
            }
            below.push(w);
            k -= 1;
        }
        let start = mode - below.len() as u64;
        below.reverse();
        below.push(1.0);
        let mut w = 1.0;
        let mut k = mode;
        while k < hi {
            let kf = k as f64;
            w *= (s - kf) * (d - kf) / ((kf + 1.0) * (f - d + kf + 1.0));
            if w < TAIL_CUTOFF {
                break;
            }
            below.push(w);
            k += 1;
        }
        Self::from_weights(start, &below)
    }

    #[inline]
    pub fn sample(&self, word: u64) -> u64 {
        let prod = word as u128 * self.entries.len() as u128;
        let idx = (prod >> 64) as usize;
        let e = self.entries[idx];
        let here = self.lo + idx as u64;
        if (prod as u64) < e.keep {
            here
        } else {
            e.other
        }
    }
}

/// Draws the class split of a uniformly random assignment of one table by
/// three sequential hypergeometric draws, one `u64` each. Tables for the
/// later draws depend on the earlier outcomes and are built on first use.
#[derive(Debug)]
pub struct SplitSampler {
    design: Design,
    v: CountVector,
    first: AliasTable,
    second: Vec<OnceLock<AliasTable>>,
    third: Vec<OnceLock<AliasTable>>,
}

impl SplitSampler {
    pub fn new(design: Design, v: &CountVector) -> Self {
        assert_eq!(v.total(), design.n(), "table {v} does not match {design}");
        let slots = || (0..=design.m()).map(|_| OnceLock::new()).collect();
        Self {
            design,
            v: *v,
            first: AliasTable::hypergeometric(design.n(), v.v11, design.m()),
            second: slots(),
            third: slots(),
        }
    }

    pub fn design(&self) -> &Design {
        &self.design
    }

    pub fn table(&self) -> &CountVector {
        &self.v
    }

    /// One split, consuming exactly three words of `rng`.
    #[inline]
    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> TreatmentSplit {
        self.from_words([rng.next_u64(), rng.next_u64(), rng.next_u64()])
    }

    /// The split selected by three uniform words.
    #[inline]
    pub fn from_words(&self, w: [u64; 3]) -> TreatmentSplit {
        let m = self.design.m();
        let x11 = self.first.sample(w[0]);
        let r2 = m - x11;
        let x10 = self.second(r2).sample(w[1]);
        let r3 = r2 - x10;
        let x01 = self.third(r3).sample(w[2]);
        TreatmentSplit::new(x11, x10, x01, r3 - x01)
    }

    #[inline]
    fn second(&self, r2: u64) -> &AliasTable {
        let slot = &self.second[r2 as usize];
        slot.get().unwrap_or_else(|| self.build(slot, self.design.n() - self.v.v11, self.v.v10, r2))
    }

    #[inline]
    fn third(&self, r3: u64) -> &AliasTable {
        let slot = &self.third[r3 as usize];
        slot.get().unwrap_or_else(|| self.build(slot, self.design.n() - self.v.v11 - self.v.v10, self.v.v01, r3))
    }

    #[cold]
    fn build<'a>(&self, slot: &'a OnceLock<AliasTable>, pop: u64, succ: u64, draws: u64) -> &'a AliasTable {
        slot.get_or_init(|| AliasTable::hypergeometric(pop, succ, draws))
    }
}

/// One split of `v` drawn like a uniformly random assignment under `d`.
pub fn sample_split<R: RngCore + ?Sized>(v: &CountVector, d: &Design, rng: &mut R) -> TreatmentSplit {
    SplitSampler::new(*d, v).sample(rng)
}

/// The stream holding the samples for table `v` under `seed`.
pub fn table_stream(seed: u64, v: &CountVector) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&v.v11.to_le_bytes());
    key[16..24].copy_from_slice(&v.v10.to_le_bytes());
    key[24..].copy_from_slice(&v.v01.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// Positions `rng` at the start of sample `i`.
pub fn seek_sample(rng: &mut ChaCha8Rng, i: u64) {
    rng.set_word_pos(i as u128 * WORDS_PER_SAMPLE);
}

/// Outcome of one Monte Carlo test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct McDecision {
    pub accept: bool,
    /// Samples at least as extreme as the observed statistic.
    pub extreme: u64,
    pub k: u64,
}

impl McDecision {
    /// The approximate p-value `S = extreme / k`.
    pub fn estimate(&self) -> f64 {
        self.extreme as f64 / self.k as f64
    }
}

/// Whether `extreme` of `k` samples meets `level`, exactly.
#[inline]
fn meets(extreme: u64, k: u64, level: &Prob) -> bool {
    extreme as u128 * level.denom() as u128 >= k as u128 * level.numer() as u128
}

/// Samples drawn per block of stream words.
const BLOCK: usize = 256;

fn count_extreme(sampler: &SplitSampler, seed: u64, obs_stat: i64, range: std::ops::Range<u64>) -> u64 {
    let d = sampler.design();
    let v = sampler.table();
    let s = v.tau();
    let threshold = d.discrepancy(obs_stat, s);
    let mut rng = table_stream(seed, v);
    seek_sample(&mut rng, range.start);
    let mut words = [0u64; 3 * BLOCK];
    let mut hits = 0;
    let mut left = range.end - range.start;
    while left > 0 {
        let take = (left as usize).min(BLOCK);
        rng.fill(&mut words[..3 * take]);
        for w in words[..3 * take].chunks_exact(3) {
            let x = sampler.from_words([w[0], w[1], w[2]]);
            hits += u64::from(d.discrepancy(split_stat_numerator(&x, v, d), s) >= threshold);
        }
        left -= take as u64;
    }
    hits
}

fn chunk_range(c: u64, k: u64) -> std::ops::Range<u64> {
    c * CHUNK..((c + 1) * CHUNK).min(k)
}

/// Monte Carlo test of table `v` against `obs`, drawing all `cfg.k` samples.
pub fn mc_test(cfg: &McConfig, v: &CountVector, obs: &ObservedCounts) -> Result<McDecision> {
    let d = obs.design()?;
    if v.total() != d.n() {
        return Err(Error::InvalidCounts(format!("table {v} does not have {} subjects", d.n())));
    }
    let obs_stat = neyman(obs, &d)?.numerator();
    let sampler = SplitSampler::new(d, v);
    let chunks = cfg.k.div_ceil(CHUNK);
    let extreme = (0..chunks)
        .into_par_iter()
        .map(|c| count_extreme(&sampler, cfg.seed, obs_stat, chunk_range(c, cfg.k)))
        .sum();
    Ok(McDecision { accept: meets(extreme, cfg.k, &cfg.effective_level()), extreme, k: cfg.k })
}

/// Monte Carlo test strategy for the interval searches. A decision is
/// returned as soon as the remaining samples cannot change it, which gives
/// the same answer as drawing all `k`.
#[derive(Debug, Clone)]
pub struct McTest {
    cfg: McConfig,
    level: Prob,
    obs_stat: i64,
    design: Design,
    cache: HashMap<CountVector, bool>,
}

impl McTest {
    pub fn new(cfg: McConfig, obs: &ObservedCounts) -> Result<Self> {
        let d = obs.design()?;
        Ok(Self {
            level: cfg.effective_level(),
            cfg,
            obs_stat: neyman(obs, &d)?.numerator(),
            design: d,
            cache: HashMap::new(),
        })
    }

    pub fn config(&self) -> &McConfig {
        &self.cfg
    }

    fn decide(&self, v: &CountVector) -> bool {
        let k = self.cfg.k;
        let sampler = SplitSampler::new(self.design, v);
        let chunks = k.div_ceil(CHUNK);
        let batch = rayon::current_num_threads().max(1) as u64;
        let mut extreme = 0u64;
        let mut done = 0u64;
        let mut c = 0;
        while c < chunks {
            let end = (c + batch).min(chunks);
            extreme += (c..end)
                .into_par_iter()
                .map(|i| count_extreme(&sampler, self.cfg.seed, self.obs_stat, chunk_range(i, k)))
                .sum::<u64>();
            done = (end * CHUNK).min(k);
            if meets(extreme, k, &self.level) {
                return true;
            }
            if !meets(extreme + (k - done), k, &self.level) {
                return false;
            }
            c = end;
        }
        debug_assert_eq!(done, k);
        false
    }
}

impl PermutationTest for McTest {
    fn accepts(&mut self, v: &CountVector) -> bool {
        if let Some(&hit) = self.cache.get(v) {
            return hit;
        }
        let decision = self.decide(v);
        self.cache.insert(*v, decision);
        decision
    }

    fn evaluations(&self) -> u64 {
        self.cache.len() as u64
    }

    fn design(&self) -> Design {
        self.design
    }
}

/// Balanced-design interval with Monte Carlo tests.
pub fn mc_interval_balanced(cfg: &McConfig, obs: &ObservedCounts) -> Result<SearchOutcome> {
    fast_interval_balanced(obs, McTest::new(*cfg, obs)?)
}
