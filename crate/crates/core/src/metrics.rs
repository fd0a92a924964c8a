//! Selection scoring, the Wilcoxon rank-sum test and Benjamini-Hochberg.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

/// Confusion counts of `selected` against the differential set `truth`,
/// over the taxa in `all`. Ids outside `all` are ignored.
pub fn confusion<S: AsRef<str>>(selected: &[S], truth: &[S], all: &[S]) -> Confusion {
    let sel: HashSet<&str> = selected.iter().map(|s| s.as_ref()).collect();
    let tru: HashSet<&str> = truth.iter().map(|s| s.as_ref()).collect();
    let mut c = Confusion::default();
    for id in all.iter().map(|s| s.as_ref()).collect::<HashSet<&str>>() {
        match (sel.contains(id), tru.contains(id)) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    c
}

/// Recall, precision, F1 and type I error; `None` marks a zero denominator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Performance {
    pub recall: Option<f64>,
    pub precision: Option<f64>,
    pub f1: Option<f64>,
    pub type1: Option<f64>,
}

impl Performance {
    pub const NAMES: [&'static str; 4] = ["recall", "precision", "f1", "type1"];

    pub fn values(&self) -> [Option<f64>; 4] {
        [self.recall, self.precision, self.f1, self.type1]
    }
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// F1 is computed as `2TP / (2TP + FP + FN)`, which equals the harmonic mean
/// of recall and precision whenever both are defined.
pub fn performance_metrics(c: &Confusion) -> Performance {
    Performance {
        recall: ratio(c.tp, c.tp + c.fn_),
        precision: ratio(c.tp, c.tp + c.fp),
        f1: ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn_),
        type1: ratio(c.fp, c.fp + c.tn),
    }
}

/// Largest pooled sample size handled by exact enumeration.
pub const WILCOXON_EXACT_MAX: usize = 12;

/// Average ranks (1-based) with ties sharing their mean rank.
fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Two-sided Wilcoxon rank-sum p-value for a shift between `a` and `b`.
///
/// Exact (enumerating all group assignments of the midranks) when the pooled
/// size is at most [`WILCOXON_EXACT_MAX`], otherwise the normal approximation
/// with tie and continuity corrections.
pub fn wilcoxon_rank_sum(a: &[f64], b: &[f64]) -> f64 {
    assert!(!a.is_empty() && !b.is_empty(), "both samples must be nonempty");
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = midranks(&pooled);
    let (na, nb) = (a.len(), b.len());
    let n = na + nb;
    let w: f64 = ranks[..na].iter().sum();
    let mean = na as f64 * (n as f64 + 1.0) / 2.0;
    if n <= WILCOXON_EXACT_MAX {
        let observed = (w - mean).abs();
        let (mut extreme, mut total) = (0u64, 0u64);
        for mask in 0u32..(1 << n) {
            if mask.count_ones() as usize != na {
                continue;
            }
            let s: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
            total += 1;
            if (s - mean).abs() >= observed - 1e-9 {
                extreme += 1;
            }
        }
        return extreme as f64 / total as f64;
    }
    let ties: f64 = {
        let mut sorted = pooled.clone();
        sorted.sort_by(f64::total_cmp);
        let mut acc = 0.0;
        let mut i = 0;
        while i < sorted.len() {
            let mut j = i;
            while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
                j += 1;
            }
            let t = (j - i + 1) as f64;
            acc += t * t * t - t;
            i = j + 1;
        }
        acc
    };
    let nf = n as f64;
    let var = na as f64 * nb as f64 / 12.0 * ((nf + 1.0) - ties / (nf * (nf - 1.0)));
    if var <= 0.0 {
        return 1.0;
    }
    let z = ((w - mean).abs() - 0.5).max(0.0) / var.sqrt();
    erfc(z / std::f64::consts::SQRT_2).min(1.0)
}

/// Indices selected by the Benjamini-Hochberg step-up procedure at level `q`,
/// in increasing order.
pub fn bh_adjust(p_values: &[f64], q: f64) -> Vec<usize> {
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p_values[a].total_cmp(&p_values[b]).then(a.cmp(&b)));
    let cutoff = (1..=m).rev().find(|&i| p_values[order[i - 1]] <= i as f64 * q / m as f64);
    let mut selected: Vec<usize> = cutoff.map(|k| order[..k].to_vec()).unwrap_or_default();
    selected.sort_unstable();
    selected
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ids(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn confusion_examples() {
        let all = ids(&["a", "b", "c", "d"]);
        assert_eq!(confusion(&all, &all, &all), Confusion { tp: 4, fp: 0, fn_: 0, tn: 0 });
        assert_eq!(confusion(&[], &[], &all), Confusion { tp: 0, fp: 0, fn_: 0, tn: 4 });
        let c = confusion(&ids(&["a", "b"]), &ids(&["b", "c"]), &all);
        assert_eq!(c, Confusion { tp: 1, fp: 1, fn_: 1, tn: 1 });
        assert_eq!(c.total(), 4);
    }

    #[test]
    fn metric_examples() {
        let m = performance_metrics(&Confusion { tp: 75, fp: 25, fn_: 25, tn: 375 });
        assert_eq!(m.recall, Some(0.75));
        assert_eq!(m.precision, Some(0.75));
        assert_eq!(m.f1, Some(0.75));
        assert_eq!(m.type1, Some(0.0625));
        let perfect = performance_metrics(&Confusion { tp: 5, fp: 0, fn_: 0, tn: 5 });
        assert_eq!(perfect.values(), [Some(1.0), Some(1.0), Some(1.0), Some(0.0)]);
        let none = performance_metrics(&Confusion { tp: 0, fp: 0, fn_: 0, tn: 5 });
        assert_eq!((none.recall, none.precision, none.f1), (None, None, None));
        let half = performance_metrics(&Confusion { tp: 1, fp: 1, fn_: 1, tn: 0 });
        assert_eq!(half.f1, Some(0.5));
        assert_eq!(half.type1, Some(1.0));
    }

    proptest! {
        #[test]
        fn f1_between_harmonic_bounds(tp in 1usize..200, fp in 0usize..200, fn_ in 0usize..200, tn in 0usize..200) {
            let m = performance_metrics(&Confusion { tp, fp, fn_, tn });
            let (r, p, f) = (m.recall.unwrap(), m.precision.unwrap(), m.f1.unwrap());
            let harmonic = 2.0 * r * p / (r + p);
            prop_assert!((f - harmonic).abs() < 1e-12);
            prop_assert!(r.min(p) <= f + 1e-12);
            prop_assert!(f <= (r * p).sqrt() + 1e-12);
            prop_assert!((r * p).sqrt() <= (r + p) / 2.0 + 1e-12);
        }

        #[test]
        fn wilcoxon_monotone_invariant(a in prop::collection::vec(-5.0f64..5.0, 1..10), b in prop::collection::vec(-5.0f64..5.0, 1..10)) {
            let f = |v: &Vec<f64>| v.iter().map(|x| x.exp() * 2.0).collect::<Vec<_>>();
            prop_assert_eq!(wilcoxon_rank_sum(&a, &b), wilcoxon_rank_sum(&f(&a), &f(&b)));
        }

        #[test]
        fn bh_is_monotone(p in prop::collection::vec(0.0f64..1.0, 1..30), idx in 0usize..30, factor in 0.0f64..1.0) {
            let before = bh_adjust(&p, 0.2);
            let mut lowered = p.clone();
            let i = idx % p.len();
            lowered[i] *= factor;
            let after = bh_adjust(&lowered, 0.2);
            prop_assert!(before.iter().all(|k| after.contains(k)));
        }
    }

    /// Exact p-value by listing rank sums of all size-2 subsets of {1,2,3,4}.
    #[test]
    fn exact_small_example() {
        let p = wilcoxon_rank_sum(&[1.0, 2.0], &[3.0, 4.0]);
        assert!((p - 1.0 / 3.0).abs() < 1e-12);
        assert!((wilcoxon_rank_sum(&[3.0, 4.0], &[1.0, 2.0]) - p).abs() < 1e-12);
        assert_eq!(wilcoxon_rank_sum(&[1.0], &[1.0]), 1.0);
    }

    #[test]
    fn identical_samples_not_significant() {
        let a: Vec<f64> = (0..20).map(|i| (i % 7) as f64).collect();
        assert!(wilcoxon_rank_sum(&a, &a) >= 0.99);
        assert_eq!(wilcoxon_rank_sum(&[0.0; 10], &[0.0; 15]), 1.0);
    }

    #[test]
    fn large_shift_is_significant() {
        let a: Vec<f64> = (0..20).map(|i| i as f64 * 0.37 % 5.0).collect();
        let b: Vec<f64> = a.iter().map(|v| v + 1000.0).collect();
        let p = wilcoxon_rank_sum(&a, &b);
        // complete separation, n = 20 per group: z = (200 - 0.5) / sqrt(20*20*41/12)
        let z: f64 = 199.5 / (20.0 * 20.0 * 41.0 / 12.0f64).sqrt();
        assert!((p - erfc(z / std::f64::consts::SQRT_2)).abs() < 1e-15);
        assert!(p < 1e-5);
    }

    #[test]
    fn normal_path_matches_hand_computation_with_ties() {
        // a = (1,1,2,3,5,8,13), b = (1,2,2,4,6,7); N = 13
        let a = [1.0, 1.0, 2.0, 3.0, 5.0, 8.0, 13.0];
        let b = [1.0, 2.0, 2.0, 4.0, 6.0, 7.0];
        // midranks: 1 -> 2, 2 -> 5, 3 -> 7, 4 -> 8, 5 -> 9, 6 -> 10, 7 -> 11, 8 -> 12, 13 -> 13
        let w: f64 = 2.0 + 2.0 + 5.0 + 7.0 + 9.0 + 12.0 + 13.0;
        let mean: f64 = 7.0 * 14.0 / 2.0;
        let ties = 2.0 * (27.0 - 3.0);
        let var: f64 = 7.0 * 6.0 / 12.0 * (14.0 - ties / (13.0 * 12.0));
        let z: f64 = (w - mean).abs();
        let z = (z - 0.5) / var.sqrt();
        let expect = erfc(z / std::f64::consts::SQRT_2);
        assert!((wilcoxon_rank_sum(&a, &b) - expect).abs() < 1e-15);
    }

    #[test]
    fn bh_examples() {
        assert_eq!(bh_adjust(&[0.0; 4], 0.2), vec![0, 1, 2, 3]);
        assert!(bh_adjust(&[1.0; 4], 0.2).is_empty());
        assert_eq!(bh_adjust(&[0.01, 0.02, 0.20, 0.90], 0.2), vec![0, 1]);
        // step-up: p_(3) = 0.14 <= 3 * 0.2 / 4 rescues p_(2) = 0.12 > 2 * 0.2 / 4
        assert_eq!(bh_adjust(&[0.9, 0.14, 0.01, 0.12], 0.2), vec![1, 2, 3]);
    }
}
