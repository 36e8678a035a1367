//! Exact and Monte Carlo confidence intervals for the average treatment
//! effect in a completely randomized experiment with binary outcomes,
//! obtained by inverting permutation tests of sharp null hypotheses.

pub mod balanced;
pub mod baseline;
pub mod error;
pub mod exactdist;
pub mod feasibility;
pub mod missing;
pub mod model;
pub mod montecarlo;
pub mod tester;
pub mod unbalanced;
pub mod validation;

pub use error::{Error, Result};
pub use exactdist::Arithmetic;
pub use model::{CountVector, Design, ExactStat, Interval, ObservedCounts, Prob, ScaledEffect};
pub use tester::{ExactTest, PermutationTest, SearchOutcome};
