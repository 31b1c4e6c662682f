//! Evaluation harness: greedy nearest-first seed↔truth matching, the F₁
//! score, and the FD_ΔN fractional distribution of per-object count errors.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{real, Real};

/// Ground-truth centers, one list per object id.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TruthSet<T> {
    pub objects: BTreeMap<u32, Vec<Vec<T>>>,
}

/// One-to-one matching result for an object (or an aggregate).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchOutcome {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    /// Matched (seed index, truth index) pairs.
    pub assignment: Vec<(usize, usize)>,
}

impl MatchOutcome {
    /// ΔN = FP − FN: the signed seed-count error.
    pub fn delta_n(&self) -> i64 {
        self.fp as i64 - self.fn_ as i64
    }
}

fn euclidean<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x - y) * (x - y))
        .fold(T::zero(), |acc, v| acc + v)
        .sqrt()
}

/// Greedy one-to-one matching on globally distance-sorted seed-truth pairs
/// within `delta_r`; ties break by (seed index, truth index). Unmatched
/// seeds are FP, unmatched truths FN.
pub fn match_seeds<T: Real>(seeds: &[Vec<T>], truths: &[Vec<T>], delta_r: T) -> MatchOutcome {
    assert!(delta_r > T::zero(), "delta_r must be positive");
    let mut pairs: Vec<(T, usize, usize)> = Vec::new();
    for (si, s) in seeds.iter().enumerate() {
        for (ti, t) in truths.iter().enumerate() {
            let d = euclidean(s, t);
            if d <= delta_r {
                pairs.push((d, si, ti));
            }
        }
    }
    pairs.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap()
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    let mut seed_used = vec![false; seeds.len()];
    let mut truth_used = vec![false; truths.len()];
    let mut assignment = Vec::new();
    for (_, si, ti) in pairs {
        if !seed_used[si] && !truth_used[ti] {
            seed_used[si] = true;
            truth_used[ti] = true;
            assignment.push((si, ti));
        }
    }
    let tp = assignment.len();
    MatchOutcome {
        tp,
        fp: seeds.len() - tp,
        fn_: truths.len() - tp,
        assignment,
    }
}

/// Sum TP/FP/FN over outcomes (the assignment is dropped).
pub fn aggregate(outcomes: &[MatchOutcome]) -> MatchOutcome {
    let mut agg = MatchOutcome {
        tp: 0,
        fp: 0,
        fn_: 0,
        assignment: Vec::new(),
    };
    for o in outcomes {
        agg.tp += o.tp;
        agg.fp += o.fp;
        agg.fn_ += o.fn_;
    }
    agg
}

/// F₁ = 2TP / (2TP + FN + FP).
pub fn f1<T: Real>(outcome: &MatchOutcome) -> Result<T> {
    let denom = 2 * outcome.tp + outcome.fn_ + outcome.fp;
    if denom == 0 {
        return Err(Error::InvalidParameter(
            "F1 undefined with no seeds and no truths".into(),
        ));
    }
    Ok(real::<T>(2.0 * outcome.tp as f64) / real::<T>(denom as f64))
}

/// Fraction of objects at each ΔN = FP − FN. Every ΔN inside `range` is
/// present (zero-filled); observed values outside the range are kept, so
/// the fractions always sum to 1.
pub fn fd_histogram<T: Real>(
    outcomes: &[MatchOutcome],
    range: (i64, i64),
) -> BTreeMap<i64, T> {
    assert!(!outcomes.is_empty(), "FD needs at least one object");
    let mut hist: BTreeMap<i64, T> = (range.0..=range.1).map(|d| (d, T::zero())).collect();
    let frac = T::one() / real::<T>(outcomes.len() as f64);
    for o in outcomes {
        *hist.entry(o.delta_n()).or_insert_with(T::zero) += frac;
    }
    hist
}

/// F₁ over a list of matching radii, aggregated across per-object
/// (seeds, truths) pairs. Non-decreasing in δr.
pub fn f1_curve<T: Real>(
    objects: &[(Vec<Vec<T>>, Vec<Vec<T>>)],
    delta_rs: &[T],
) -> Vec<(T, T)> {
    delta_rs
        .iter()
        .map(|&dr| {
            let outcomes: Vec<MatchOutcome> = objects
                .iter()
                .map(|(seeds, truths)| match_seeds(seeds, truths, dr))
                .collect();
            let score = f1(&aggregate(&outcomes)).unwrap_or_else(|_| T::zero());
            (dr, score)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(x: f64, y: f64) -> Vec<f64> {
        vec![x, y]
    }

    #[test]
    fn exact_hit_is_tp() {
        let out = match_seeds(&[p(1.0, 1.0)], &[p(1.0, 1.0)], 3.0);
        assert_eq!((out.tp, out.fp, out.fn_), (1, 0, 0));
    }

    #[test]
    fn nearer_of_two_seeds_wins() {
        // Two seeds within δr of one truth: the closer is TP, the other FP.
        let out = match_seeds(&[p(0.0, 2.0), p(0.0, 1.0)], &[p(0.0, 0.0)], 3.0);
        assert_eq!((out.tp, out.fp, out.fn_), (1, 1, 0));
        assert_eq!(out.assignment, vec![(1, 0)]);
    }

    #[test]
    fn unmatched_truth_is_fn() {
        let out = match_seeds(&[p(0.0, 0.0)], &[p(0.0, 0.0), p(50.0, 0.0)], 3.0);
        assert_eq!((out.tp, out.fp, out.fn_), (1, 0, 1));
    }

    #[test]
    fn f1_golden_values() {
        let o = MatchOutcome {
            tp: 2,
            fp: 1,
            fn_: 1,
            assignment: vec![],
        };
        assert!((f1::<f64>(&o).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        let perfect = MatchOutcome {
            tp: 5,
            fp: 0,
            fn_: 0,
            assignment: vec![],
        };
        assert_eq!(f1::<f64>(&perfect).unwrap(), 1.0);
        let zero = MatchOutcome {
            tp: 0,
            fp: 2,
            fn_: 1,
            assignment: vec![],
        };
        assert_eq!(f1::<f64>(&zero).unwrap(), 0.0);
        let empty = MatchOutcome {
            tp: 0,
            fp: 0,
            fn_: 0,
            assignment: vec![],
        };
        assert!(f1::<f64>(&empty).is_err());
    }

    #[test]
    fn fd_three_object_example() {
        // One correct, one missing, one extra → thirds at -1, 0, +1.
        let outcomes = vec![
            MatchOutcome { tp: 2, fp: 0, fn_: 0, assignment: vec![] },
            MatchOutcome { tp: 1, fp: 0, fn_: 1, assignment: vec![] },
            MatchOutcome { tp: 2, fp: 1, fn_: 0, assignment: vec![] },
        ];
        let hist = fd_histogram::<f64>(&outcomes, (-2, 2));
        assert!((hist[&-1] - 1.0 / 3.0).abs() < 1e-12);
        assert!((hist[&0] - 1.0 / 3.0).abs() < 1e-12);
        assert!((hist[&1] - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(hist[&2], 0.0);
        let total: f64 = hist.values().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fd_all_perfect() {
        let outcomes = vec![
            MatchOutcome { tp: 3, fp: 0, fn_: 0, assignment: vec![] };
            4
        ];
        let hist = fd_histogram::<f64>(&outcomes, (-1, 1));
        assert_eq!(hist[&0], 1.0);
    }

    #[test]
    fn fd_single_object_net_plus_one() {
        let outcomes = vec![MatchOutcome {
            tp: 1,
            fp: 2,
            fn_: 1,
            assignment: vec![],
        }];
        let hist = fd_histogram::<f64>(&outcomes, (-1, 1));
        assert_eq!(hist[&1], 1.0);
    }

    #[test]
    fn curve_hits_zero_and_one() {
        let objects = vec![(
            vec![p(0.0, 0.0), p(10.0, 0.0)],
            vec![p(0.5, 0.0), p(10.5, 0.0)],
        )];
        let curve = f1_curve(&objects, &[0.1, 5.0]);
        assert_eq!(curve[0].1, 0.0);
        assert_eq!(curve[1].1, 1.0);
    }

    #[test]
    fn matching_is_translation_invariant() {
        let seeds = vec![p(1.0, 2.0), p(4.0, 1.0), p(9.0, 9.0)];
        let truths = vec![p(1.5, 2.0), p(8.5, 9.0)];
        let a = match_seeds(&seeds, &truths, 2.0);
        let shift = |v: &Vec<f64>| vec![v[0] + 13.0, v[1] - 7.0];
        let b = match_seeds(
            &seeds.iter().map(shift).collect::<Vec<_>>(),
            &truths.iter().map(shift).collect::<Vec<_>>(),
            2.0,
        );
        assert_eq!(a, b);
    }
}
