//! Intervals when some outcomes are unobserved.
//!
//! Missing outcomes are filled in both ways that push the estimate to an
//! extreme, and the interval runs from the lower endpoint under the
//! pessimistic filling to the upper endpoint under the optimistic one. No
//! assumption is made about why outcomes are missing.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::balanced::fast_interval_exact;
use crate::error::{Error, Result};
use crate::exactdist::Arithmetic;
use crate::model::{ceil_ratio, floor_ratio, neyman, Interval, ObservedCounts, Prob, ScaledEffect};
use crate::unbalanced::unbalanced_interval_exact;

/// One subject: group and outcome, if observed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct Subject {
    pub treated: bool,
    pub outcome: Option<bool>,
}

/// Subject-level data with possibly missing outcomes.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct MaskedObservations {
    subjects: Vec<Subject>,
}

impl MaskedObservations {
    pub fn new(subjects: Vec<Subject>) -> Self {
        Self { subjects }
    }

    /// Appends `count` identical subjects.
    pub fn push_many(&mut self, treated: bool, outcome: Option<bool>, count: u64) {
        for _ in 0..count {
            self.subjects.push(Subject { treated, outcome });
        }
    }

    pub fn subjects(&self) -> &[Subject] {
        &self.subjects
    }

    pub fn len(&self) -> usize {
        self.subjects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }

    pub fn treated(&self) -> u64 {
        self.subjects.iter().filter(|s| s.treated).count() as u64
    }

    pub fn controls(&self) -> u64 {
        self.len() as u64 - self.treated()
    }

    pub fn missing(&self) -> u64 {
        self.subjects.iter().filter(|s| s.outcome.is_none()).count() as u64
    }

    /// Counts after filling missing treated outcomes with `treated_fill` and
    /// missing control outcomes with `control_fill`.
    fn filled(&self, treated_fill: bool, control_fill: bool) -> ObservedCounts {
        let mut c = ObservedCounts::new(0, 0, 0, 0);
        for s in &self.subjects {
            let y = s.outcome.unwrap_or(if s.treated { treated_fill } else { control_fill });
            match (s.treated, y) {
                (true, true) => c.n11 += 1,
                (true, false) => c.n10 += 1,
                (false, true) => c.n01 += 1,
                (false, false) => c.n00 += 1,
            }
        }
        c
    }
}

/// Parses the subject-level text format: a header line, then one `z,y`
/// record per line with `z` in {0,1} and `y` in {0,1,NA}. Blank lines are
/// skipped.
impl FromStr for MaskedObservations {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut lines = s.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let Some((_, header)) = lines.next() else {
            return Err(Error::InvalidData("empty input: expected a header line".into()));
        };
        let cols: Vec<_> = header.split(',').map(str::trim).collect();
        if cols.len() != 2 || cols.iter().any(|c| c.parse::<u8>().is_ok()) {
            return Err(Error::InvalidData(format!("expected a two-column header such as `z,y`, got `{header}`")));
        }
        let mut subjects = Vec::new();
        for (i, line) in lines {
            let fields: Vec<_> = line.split(',').map(str::trim).collect();
            let bad = || Error::InvalidData(format!("line {}: expected `z,y`, got `{line}`", i + 1));
            if fields.len() != 2 {
                return Err(bad());
            }
            let treated = match fields[0] {
                "1" => true,
                "0" => false,
                _ => return Err(bad()),
            };
            let outcome = match fields[1] {
                "1" => Some(true),
                "0" => Some(false),
                "NA" | "na" => None,
                _ => return Err(bad()),
            };
            subjects.push(Subject { treated, outcome });
        }
        Ok(Self { subjects })
    }
}

impl fmt::Display for MaskedObservations {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "z,y")?;
        for s in &self.subjects {
            let y = match s.outcome {
                Some(true) => "1",
                Some(false) => "0",
                None => "NA",
            };
            writeln!(f, "{},{}", u8::from(s.treated), y)?;
        }
        Ok(())
    }
}

/// The two extreme fillings: `plus` sets missing treated outcomes to 1 and
/// missing control outcomes to 0, `minus` does the opposite.
pub fn impute_extremes(data: &MaskedObservations) -> (ObservedCounts, ObservedCounts) {
    (data.filled(true, false), data.filled(false, true))
}

/// Interval under missing data plus the pieces it is built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MissingOutcome {
    pub interval: Interval,
    pub plus: ObservedCounts,
    pub minus: ObservedCounts,
    /// Interval computed from the optimistic filling.
    pub plus_interval: Interval,
    /// Interval computed from the pessimistic filling.
    pub minus_interval: Interval,
    pub tests: u64,
}

/// Interval for data with missing outcomes.
///
/// Balanced designs use the fast search on both fillings. Other designs use
/// the exact unbalanced search and widen the endpoints to include the
/// estimates of the respective fillings; endpoints are rounded outward onto
/// the `1/n` grid, which loses no grid point.
pub fn missing_interval(alpha: Prob, data: &MaskedObservations, mode: Arithmetic) -> Result<MissingOutcome> {
    let (plus, minus) = impute_extremes(data);
    let d = plus.design()?;
    let (hi, lo, tests) = if d.is_balanced() {
        let p = fast_interval_exact(alpha, &plus, mode)?;
        let q = fast_interval_exact(alpha, &minus, mode)?;
        (p, q, p.tests + q.tests)
    } else {
        let p = unbalanced_interval_exact(alpha, &plus, mode)?;
        let q = unbalanced_interval_exact(alpha, &minus, mode)?;
        (p, q, p.tests + q.tests)
    };
    let mut upper = hi.interval.upper().map(|s| s.0);
    let mut lower = lo.interval.lower().map(|s| s.0);
    if !d.is_balanced() {
        let t_plus = floor_ratio(neyman(&plus, &d)?.scaled(d.n()));
        let t_minus = ceil_ratio(neyman(&minus, &d)?.scaled(d.n()));
        upper = Some(upper.map_or(t_plus, |u| u.max(t_plus)));
        lower = Some(lower.map_or(t_minus, |l| l.min(t_minus)));
    }
    let interval = match (lower, upper) {
        (Some(l), Some(u)) => Interval::new(ScaledEffect(l), ScaledEffect(u)),
        _ => Interval::empty(),
    };
    Ok(MissingOutcome {
        interval,
        plus,
        minus,
        plus_interval: hi.interval,
        minus_interval: lo.interval,
        tests,
    })
}

/// Makes an odd-sized data set with group sizes differing by one balanced by
/// adding one subject with a missing outcome to the smaller group.
pub fn pad_odd(data: &MaskedObservations) -> Result<MaskedObservations> {
    if data.len() % 2 == 0 {
        return Err(Error::InvalidData(format!("padding needs an odd number of subjects, got {}", data.len())));
    }
    let (t, c) = (data.treated(), data.controls());
    if t.abs_diff(c) != 1 {
        return Err(Error::InvalidData(format!(
            "padding needs group sizes differing by one, got {t} treated and {c} controls"
        )));
    }
    let mut out = data.clone();
    out.subjects.push(Subject { treated: t < c, outcome: None });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::balanced::fast_interval_exact;

    fn data(rows: &[(u8, Option<u8>)]) -> MaskedObservations {
        MaskedObservations::new(
            rows.iter().map(|&(z, y)| Subject { treated: z == 1, outcome: y.map(|y| y == 1) }).collect(),
        )
    }

    #[test]
    fn fillings() {
        let d = data(&[(1, Some(1)), (1, None), (0, None), (0, Some(0))]);
        let (plus, minus) = impute_extremes(&d);
        assert_eq!(plus, ObservedCounts::new(2, 0, 0, 2));
        assert_eq!(minus, ObservedCounts::new(1, 1, 1, 1));
    }

    #[test]
    fn all_missing() {
        let d = data(&[(1, None), (1, None), (1, None), (0, None), (0, None)]);
        let (plus, minus) = impute_extremes(&d);
        assert_eq!(plus, ObservedCounts::new(3, 0, 0, 2));
        assert_eq!(minus, ObservedCounts::new(0, 3, 2, 0));
    }

    #[test]
    fn nothing_missing_gives_the_ordinary_interval() {
        let d = data(&[(1, Some(1)), (1, Some(0)), (1, Some(1)), (0, Some(0)), (0, Some(1)), (0, Some(0))]);
        let (plus, minus) = impute_extremes(&d);
        assert_eq!(plus, minus);
        let a: Prob = "0.1".parse().unwrap();
        let out = missing_interval(a, &d, Arithmetic::Rational).unwrap();
        assert_eq!(out.interval, fast_interval_exact(a, &plus, Arithmetic::Rational).unwrap().interval);
    }

    #[test]
    fn parse_and_print() {
        let text = "z,y\n1,1\n1,NA\n0,0\n\n0,1\n";
        let d: MaskedObservations = text.parse().unwrap();
        assert_eq!(d.len(), 4);
        assert_eq!(d.missing(), 1);
        assert_eq!(d.to_string().parse::<MaskedObservations>().unwrap(), d);
        assert!("1,1\n0,0\n".parse::<MaskedObservations>().is_err());
        assert!("z,y\n2,1\n".parse::<MaskedObservations>().is_err());
        assert!("z,y\n1,x\n".parse::<MaskedObservations>().is_err());
        assert!("".parse::<MaskedObservations>().is_err());
    }

    #[test]
    fn padding() {
        let d = data(&[(1, Some(1)), (1, Some(0)), (0, Some(1))]);
        let p = pad_odd(&d).unwrap();
        assert_eq!(p.len(), 4);
        assert_eq!(p.subjects()[3], Subject { treated: false, outcome: None });
        assert!(pad_odd(&p).is_err());
        let lopsided = data(&[(1, Some(1)), (1, Some(0)), (1, Some(1))]);
        assert!(pad_odd(&lopsided).is_err());
    }
}
