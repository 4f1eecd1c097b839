//! Partition agreement: adjusted Rand index, normalized mutual information, purity.

use std::collections::{BTreeSet, HashMap};
use std::hash::Hash;

use serde::Serialize;

use super::ClusterError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Agreement {
    pub ari: f64,
    /// Mutual information over the arithmetic mean of the two entropies.
    pub nmi: f64,
    /// Fraction of points whose cluster's majority truth label is their own.
    pub purity: f64,
}

fn dense<L: Eq + Hash + Clone>(labels: &[L]) -> (Vec<usize>, usize) {
    let mut ids: HashMap<L, usize> = HashMap::new();
    let dense = labels
        .iter()
        .map(|l| {
            let next = ids.len();
            *ids.entry(l.clone()).or_insert(next)
        })
        .collect();
    (dense, ids.len())
}

fn choose2(x: f64) -> f64 {
    x * (x - 1.0) / 2.0
}

fn entropy(counts: &[f64], n: f64) -> f64 {
    counts.iter().filter(|&&c| c > 0.0).map(|&c| -(c / n) * (c / n).ln()).sum()
}

/// Agreement of `predicted` with `truth`, matched by position.
///
/// # Panics
/// If the slices differ in length.
pub fn agreement<A, B>(predicted: &[A], truth: &[B]) -> Agreement
where
    A: Eq + Hash + Clone,
    B: Eq + Hash + Clone,
{
    assert_eq!(predicted.len(), truth.len(), "partitions must cover the same points");
    let n = predicted.len();
    if n == 0 {
        return Agreement { ari: 1.0, nmi: 1.0, purity: 1.0 };
    }
    let (p, kp) = dense(predicted);
    let (t, kt) = dense(truth);
    let mut table = vec![0f64; kp * kt];
    for (&a, &b) in p.iter().zip(&t) {
        table[a * kt + b] += 1.0;
    }
    let rows: Vec<f64> = (0..kp).map(|i| table[i * kt..(i + 1) * kt].iter().sum()).collect();
    let cols: Vec<f64> = (0..kt).map(|j| (0..kp).map(|i| table[i * kt + j]).sum()).collect();
    let nf = n as f64;

    let index: f64 = table.iter().map(|&c| choose2(c)).sum();
    let sum_rows: f64 = rows.iter().map(|&c| choose2(c)).sum();
    let sum_cols: f64 = cols.iter().map(|&c| choose2(c)).sum();
    let expected = sum_rows * sum_cols / choose2(nf).max(f64::MIN_POSITIVE);
    let max_index = 0.5 * (sum_rows + sum_cols);
    let ari = if max_index == expected { 1.0 } else { (index - expected) / (max_index - expected) };

    let (hp, ht) = (entropy(&rows, nf), entropy(&cols, nf));
    let nmi = if hp == 0.0 && ht == 0.0 {
        1.0
    } else {
        let mut mi = 0.0;
        for i in 0..kp {
            for j in 0..kt {
                let c = table[i * kt + j];
                if c > 0.0 {
                    mi += c / nf * (c * nf / (rows[i] * cols[j])).ln();
                }
            }
        }
        (mi / (0.5 * (hp + ht))).clamp(0.0, 1.0)
    };

    let purity = (0..kp)
        .map(|i| table[i * kt..(i + 1) * kt].iter().copied().fold(0.0, f64::max))
        .sum::<f64>()
        / nf;
    Agreement { ari, nmi, purity }
}

/// Agreement of two keyed labelings; both must cover exactly the same keys.
pub fn agreement_keyed<A, B>(predicted: &[(String, A)], truth: &[(String, B)]) -> Result<Agreement, ClusterError>
where
    A: Eq + Hash + Clone,
    B: Eq + Hash + Clone,
{
    let truth_map: HashMap<&str, &B> = truth.iter().map(|(k, v)| (k.as_str(), v)).collect();
    let pred_keys: BTreeSet<&str> = predicted.iter().map(|(k, _)| k.as_str()).collect();
    if pred_keys.len() != predicted.len() || truth_map.len() != truth.len() {
        return Err(ClusterError::KeyMismatch("duplicate keys".into()));
    }
    if let Some(missing) = pred_keys.iter().find(|k| !truth_map.contains_key(*k)) {
        return Err(ClusterError::KeyMismatch(format!("{missing} has no truth label")));
    }
    if let Some((missing, _)) = truth.iter().find(|(k, _)| !pred_keys.contains(k.as_str())) {
        return Err(ClusterError::KeyMismatch(format!("{missing} was not clustered")));
    }
    let a: Vec<A> = predicted.iter().map(|(_, v)| v.clone()).collect();
    let b: Vec<B> = predicted.iter().map(|(k, _)| truth_map[k.as_str()].clone()).collect();
    Ok(agreement(&a, &b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// ARI from the pair-counting definition: over all point pairs, count agreements.
    fn ari_by_pairs(a: &[usize], b: &[usize]) -> f64 {
        let n = a.len();
        let (mut both, mut only_a, mut only_b, mut neither) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..n {
            for j in i + 1..n {
                match (a[i] == a[j], b[i] == b[j]) {
                    (true, true) => both += 1.0,
                    (true, false) => only_a += 1.0,
                    (false, true) => only_b += 1.0,
                    (false, false) => neither += 1.0,
                }
            }
        }
        let total: f64 = both + only_a + only_b + neither;
        let expected = (both + only_a) * (both + only_b) / total;
        let max = 0.5 * (2.0 * both + only_a + only_b);
        if max == expected {
            1.0
        } else {
            (both - expected) / (max - expected)
        }
    }

    #[test]
    fn identical_partitions() {
        let a = [0, 0, 1, 1, 2];
        assert_eq!(agreement(&a, &a), Agreement { ari: 1.0, nmi: 1.0, purity: 1.0 });
    }

    #[test]
    fn singletons_against_one_cluster() {
        let s = agreement(&[0, 1, 2, 3], &["x"; 4]);
        assert_eq!(s.ari, 0.0);
        assert_eq!(s.nmi, 0.0);
        assert_eq!(s.purity, 1.0);
        assert_eq!(agreement(&["x"; 4], &[0, 1, 2, 3]).purity, 0.25);
    }

    #[test]
    fn hand_computed_example() {
        // contingency [[2,1],[0,3]]: index 1+3=4, rows 3+3=6, cols 1+6=7, C(6,2)=15
        let s = agreement(&[0, 0, 0, 1, 1, 1], &[0, 0, 1, 1, 1, 1]);
        let expected = 6.0 * 7.0 / 15.0;
        assert!((s.ari - (4.0 - expected) / (6.5 - expected)).abs() < 1e-12);
        assert!((s.purity - 5.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn keyed_requires_equal_key_sets() {
        let p = vec![("a".to_string(), 0), ("b".to_string(), 1)];
        let t = vec![("b".to_string(), "y"), ("a".to_string(), "x")];
        assert_eq!(agreement_keyed(&p, &t).unwrap().ari, 1.0);
        let short = vec![("a".to_string(), "x")];
        assert!(matches!(agreement_keyed(&p, &short), Err(ClusterError::KeyMismatch(_))));
        let other = vec![("a".to_string(), "x"), ("c".to_string(), "x")];
        assert!(matches!(agreement_keyed(&p, &other), Err(ClusterError::KeyMismatch(_))));
    }

    proptest! {
        #[test]
        fn scores_bounded_and_permutation_invariant(
            pairs in proptest::collection::vec((0usize..4, 0usize..4), 2..40),
            perm in Just([2usize, 0, 3, 1]).prop_shuffle(),
        ) {
            let (a, b): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
            let s = agreement(&a, &b);
            prop_assert!((-1.0..=1.0).contains(&s.ari));
            prop_assert!((0.0..=1.0).contains(&s.nmi));
            prop_assert!(s.purity > 0.0 && s.purity <= 1.0);
            prop_assert!((s.ari - ari_by_pairs(&a, &b)).abs() < 1e-9);
            let relabeled: Vec<usize> = a.iter().map(|&x| perm[x]).collect();
            let r = agreement(&relabeled, &b);
            prop_assert!((r.ari - s.ari).abs() < 1e-12);
            prop_assert!((r.nmi - s.nmi).abs() < 1e-12);
            prop_assert!((r.purity - s.purity).abs() < 1e-12);
        }
    }
}
