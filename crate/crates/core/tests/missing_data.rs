use num_rational::BigRational;
use num_traits::One;

use permci::missing::{missing_interval, pad_odd, MaskedObservations, Subject};
use permci::validation::missing_coverage_exhaustive;
use permci::{Arithmetic, CountVector, Design, Prob};

fn tables(n: u64) -> Vec<CountVector> {
    let mut out = Vec::new();
    for a in 0..=n {
        for b in 0..=n - a {
            for c in 0..=n - a - b {
                out.push(CountVector::new(a, b, c, n - a - b - c));
            }
        }
    }
    out
}

/// Five real subjects plus one fictitious subject, split 3/3 at random. The
/// padded interval should cover the five-subject effect with the nominal
/// probability.
#[test]
fn padding_an_odd_group_keeps_coverage() {
    let alpha: Prob = "0.1".parse().unwrap();
    for y in tables(5) {
        let mut people = Vec::new();
        for (count, y1, y0) in [(y.v11, true, true), (y.v10, true, false), (y.v01, false, true), (y.v00, false, false)] {
            people.extend(std::iter::repeat_n((y1, y0), count as usize));
        }
        let (mut hit, mut total) = (0u32, 0u32);
        for mask in 0u32..64 {
            if mask.count_ones() != 3 {
                continue;
            }
            total += 1;
            let real: Vec<Subject> = people
                .iter()
                .enumerate()
                .map(|(i, &(y1, y0))| {
                    let treated = mask >> i & 1 == 1;
                    Subject { treated, outcome: Some(if treated { y1 } else { y0 }) }
                })
                .collect();
            let padded = pad_odd(&MaskedObservations::new(real.clone())).unwrap();
            let mut direct = real;
            direct.push(Subject { treated: mask >> 5 & 1 == 1, outcome: None });
            assert_eq!(padded, MaskedObservations::new(direct));
            let interval = missing_interval(alpha, &padded, Arithmetic::Rational).unwrap().interval;
            // The interval is on the six-subject scale: 6 * (v10 - v01) / 5.
            if interval.contains_ratio(6 * (y.v10 as i64 - y.v01 as i64), 5) {
                hit += 1;
            }
        }
        assert!(10 * hit >= 9 * total, "table {y}: {hit} of {total}");
    }
}

#[test]
fn coverage_under_several_masking_rules() {
    let alpha: Prob = "0.05".parse().unwrap();
    let bar = BigRational::one() - alpha.to_big();
    let rules: [fn(bool, bool, bool) -> bool; 3] = [
        |_, _, _| false,
        |z, y1, y0| if z { y1 } else { !y0 },
        |z, y1, y0| !z && y1 && !y0,
    ];
    for rule in rules {
        for n in [6u64, 7] {
            let d = Design::new(n, n / 2).unwrap();
            for y in tables(n) {
                let c = missing_coverage_exhaustive(&y, alpha, &d, rule).unwrap();
                assert!(c >= bar, "n {n} table {y}: coverage {c}");
            }
        }
    }
}

#[test]
fn everything_missing_gives_a_wide_interval() {
    let mut data = MaskedObservations::default();
    data.push_many(true, None, 4);
    data.push_many(false, None, 4);
    let out = missing_interval("0.05".parse().unwrap(), &data, Arithmetic::Rational).unwrap();
    assert!(out.interval.contains(permci::ScaledEffect(-8)));
    assert!(out.interval.contains(permci::ScaledEffect(8)));
    assert_eq!(out.plus, permci::ObservedCounts::new(4, 0, 0, 4));
    assert_eq!(out.minus, permci::ObservedCounts::new(0, 4, 4, 0));
}
