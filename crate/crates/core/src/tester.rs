//! Permutation-test strategies consumed by the interval searches.

use std::collections::HashMap;

use crate::error::Result;
use crate::exactdist::{Arithmetic, ExactEngine, Probability};
use crate::model::{neyman, CountVector, Design, Interval, ObservedCounts, Prob};

/// Result of an interval construction together with its cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct SearchOutcome {
    pub interval: Interval,
    /// Permutation tests requested by the search, counting repeats.
    pub tests: u64,
    /// Distinct count vectors the tester actually evaluated.
    pub evaluations: u64,
    /// Extra line points examined by the unbalanced search's sample reuse.
    pub line_points: u64,
}

/// An accept/reject test of the sharp null `y = w` for tables with counts `v`,
/// against fixed observed data.
pub trait PermutationTest {
    /// Whether the table is compatible with the observed data.
    fn accepts(&mut self, v: &CountVector) -> bool;

    /// Number of distinct count vectors actually evaluated.
    fn evaluations(&self) -> u64;

    /// Design of the observed data.
    fn design(&self) -> Design;
}

impl<T: PermutationTest + ?Sized> PermutationTest for &mut T {
    fn accepts(&mut self, v: &CountVector) -> bool {
        (**self).accepts(v)
    }

    fn evaluations(&self) -> u64 {
        (**self).evaluations()
    }

    fn design(&self) -> Design {
        (**self).design()
    }
}

/// The exact permutation test: accept iff `p(v, obs) >= alpha`.
///
/// Decisions are memoized per count vector, so a table reached through
/// several imputations is only evaluated once.
#[derive(Debug, Clone)]
pub struct ExactTest {
    engine: ExactEngine,
    alpha: Prob,
    obs: ObservedCounts,
    obs_stat: i64,
    cache: HashMap<CountVector, bool>,
}

impl ExactTest {
    pub fn new(alpha: Prob, obs: &ObservedCounts, mode: Arithmetic) -> Result<Self> {
        let design = obs.design()?;
        let obs_stat = neyman(obs, &design)?.numerator();
        Ok(Self {
            engine: ExactEngine::new(design, mode)?,
            alpha,
            obs: *obs,
            obs_stat,
            cache: HashMap::new(),
        })
    }

    pub fn alpha(&self) -> Prob {
        self.alpha
    }

    pub fn observed(&self) -> &ObservedCounts {
        &self.obs
    }

    pub fn pvalue(&self, v: &CountVector) -> Result<Probability> {
        self.engine.pvalue_for_stat(v, self.obs_stat)
    }
}

impl PermutationTest for ExactTest {
    fn accepts(&mut self, v: &CountVector) -> bool {
        if let Some(&hit) = self.cache.get(v) {
            return hit;
        }
        let decision = self
            .engine
            .accepts(v, self.obs_stat, &self.alpha)
            .expect("tested vectors share the observed total");
        self.cache.insert(*v, decision);
        decision
    }

    fn evaluations(&self) -> u64 {
        self.cache.len() as u64
    }

    fn design(&self) -> Design {
        *self.engine.design()
    }
}
