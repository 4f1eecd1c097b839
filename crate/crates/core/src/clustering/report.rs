//! Per-cluster listings with a representative member for manual inspection.

use std::collections::BTreeMap;
use std::fmt;

use ndarray::ArrayView2;
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportCluster {
    pub id: usize,
    pub members: Vec<String>,
    /// Member closest to the cluster mean (lowest key on ties).
    pub representative: String,
    /// The representative's raw text, cut to the byte budget on a character boundary.
    pub excerpt: String,
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterReport {
    /// Ascending by cluster id.
    pub clusters: Vec<ReportCluster>,
}

fn truncate(text: &str, budget: usize) -> (&str, bool) {
    if text.len() <= budget {
        return (text, false);
    }
    let mut end = budget;
    while !text.is_char_boundary(end) {
        end -= 1;
    }
    (&text[..end], true)
}

/// Groups `keys` by `assignment` and picks each cluster's representative from `embeddings`
/// (one row per key); `texts` holds the raw material excerpted for the representative.
///
/// # Panics
/// If `keys`, `assignment`, `embeddings` rows and `texts` differ in length.
pub fn make_report(
    keys: &[String],
    assignment: &[usize],
    embeddings: ArrayView2<f64>,
    texts: &[String],
    excerpt_bytes: usize,
) -> ClusterReport {
    let n = keys.len();
    assert!(assignment.len() == n && embeddings.nrows() == n && texts.len() == n);
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &c) in assignment.iter().enumerate() {
        groups.entry(c).or_default().push(i);
    }
    let clusters = groups
        .into_iter()
        .map(|(id, idx)| {
            let d = embeddings.ncols();
            let mut mean = vec![0.0; d];
            for &i in &idx {
                for (m, v) in mean.iter_mut().zip(embeddings.row(i)) {
                    *m += v;
                }
            }
            mean.iter_mut().for_each(|m| *m /= idx.len() as f64);
            let rep = idx
                .iter()
                .map(|&i| {
                    let dist: f64 = embeddings.row(i).iter().zip(&mean).map(|(a, b)| (a - b).powi(2)).sum();
                    (dist, i)
                })
                .min_by(|a, b| a.0.total_cmp(&b.0).then_with(|| keys[a.1].cmp(&keys[b.1])))
                .unwrap()
                .1;
            let (excerpt, truncated) = truncate(&texts[rep], excerpt_bytes);
            ReportCluster {
                id,
                members: idx.iter().map(|&i| keys[i].clone()).collect(),
                representative: keys[rep].clone(),
                excerpt: excerpt.to_string(),
                truncated,
            }
        })
        .collect();
    ClusterReport { clusters }
}

impl fmt::Display for ClusterReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.clusters {
            writeln!(f, "=== cluster {} ({} members) ===", c.id, c.members.len())?;
            writeln!(f, "representative: {}", c.representative)?;
            for line in c.excerpt.lines() {
                writeln!(f, "    {line}")?;
            }
            if c.truncated {
                writeln!(f, "    [...]")?;
            }
            writeln!(f, "members: {}", c.members.join(" "))?;
            writeln!(f)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use proptest::prelude::*;

    fn keys(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("k{i}")).collect()
    }

    #[test]
    fn singleton_cluster_represents_itself() {
        let r = make_report(&keys(1), &[4], array![[1.0, 2.0]].view(), &["ls -la".into()], 100);
        assert_eq!(r.clusters.len(), 1);
        assert_eq!(r.clusters[0].id, 4);
        assert_eq!(r.clusters[0].representative, "k0");
        assert_eq!(r.clusters[0].excerpt, "ls -la");
    }

    #[test]
    fn identical_members_pick_lowest_key() {
        let ks = vec!["b".to_string(), "a".to_string(), "c".to_string()];
        let emb = array![[1.0], [1.0], [1.0]];
        let texts = vec!["x".to_string(); 3];
        let r = make_report(&ks, &[0, 0, 0], emb.view(), &texts, 10);
        assert_eq!(r.clusters[0].representative, "a");
    }

    #[test]
    fn representative_is_nearest_to_mean() {
        let emb = array![[0.0], [4.0], [5.0], [100.0]];
        let texts = vec![String::new(); 4];
        let r = make_report(&keys(4), &[0, 0, 0, 1], emb.view(), &texts, 10);
        assert_eq!(r.clusters[0].representative, "k1");
        assert_eq!(r.clusters[1].representative, "k3");
    }

    #[test]
    fn excerpt_respects_char_boundaries() {
        let text = "échoé".to_string();
        let r = make_report(&keys(1), &[0], array![[0.0]].view(), &[text], 2);
        assert_eq!(r.clusters[0].excerpt, "é");
        assert!(r.clusters[0].truncated);
        assert!(r.to_string().contains("[...]"));
    }

    proptest! {
        #[test]
        fn clusters_partition_keys(assign in proptest::collection::vec(0usize..5, 1..30)) {
            let n = assign.len();
            let emb = Array2::from_shape_fn((n, 2), |(i, j)| (i * 7 + j * 3) as f64 % 5.0);
            let texts = vec!["t".to_string(); n];
            let r = make_report(&keys(n), &assign, emb.view(), &texts, 8);
            let mut seen: Vec<String> = r.clusters.iter().flat_map(|c| c.members.clone()).collect();
            seen.sort();
            let mut expected = keys(n);
            expected.sort();
            prop_assert_eq!(seen, expected);
            for c in &r.clusters {
                prop_assert!(c.members.contains(&c.representative));
            }
        }
    }
}
