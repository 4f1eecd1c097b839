//! Per-IP time series of session embeddings.
//!
//! A [`Signal`] is the time-ordered sequence of embeddings of one source's sessions. Its
//! [`DistanceSeries`] tracks how far each session lies from the first one, which makes
//! repetitive behaviour (flat runs) and switches between behaviours (level changes) visible.
//! [`co_activity`] and [`shared_signature_count`] compare two sources by when they are
//! active and by which distance levels they revisit.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use rayon::prelude::*;
use thiserror::Error;

use crate::embedding::SessionEmbedding;

#[derive(Debug, Error)]
pub enum SignalError {
    #[error("signal for {0} has no sessions")]
    EmptySignal(String),
    #[error("unknown ip {0}")]
    UnknownIp(String),
    #[error("bin width and quantization step must be positive")]
    NonPositiveStep,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignalPoint {
    pub ts: u64,
    /// Session index within its IP, as in the session key.
    pub index: usize,
    pub y: Vec<f64>,
    pub cluster: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    pub ip: String,
    /// Non-decreasing in `ts`.
    pub points: Vec<SignalPoint>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceSeries {
    pub ip: String,
    /// `(ts, ‖y − y_first‖)`.
    pub points: Vec<(u64, f64)>,
}

/// Groups embeddings by IP (ascending) and orders each group by timestamp, then session
/// index. `clusters`, when given, labels each embedding by position.
///
/// # Panics
/// If `clusters` has a different length than `embeddings`.
pub fn build_signals(embeddings: &[SessionEmbedding], clusters: Option<&[usize]>) -> Vec<Signal> {
    if let Some(c) = clusters {
        assert_eq!(c.len(), embeddings.len());
    }
    let mut by_ip: BTreeMap<&str, Vec<SignalPoint>> = BTreeMap::new();
    for (i, e) in embeddings.iter().enumerate() {
        by_ip.entry(e.key.ip.as_str()).or_default().push(SignalPoint {
            ts: e.ts,
            index: e.key.index,
            y: e.y.clone(),
            cluster: clusters.map(|c| c[i]),
        });
    }
    by_ip
        .into_iter()
        .map(|(ip, mut points)| {
            points.sort_by_key(|p| (p.ts, p.index));
            Signal { ip: ip.to_string(), points }
        })
        .collect()
}

pub fn find_signal<'a>(signals: &'a [Signal], ip: &str) -> Result<&'a Signal, SignalError> {
    signals
        .iter()
        .find(|s| s.ip == ip)
        .ok_or_else(|| SignalError::UnknownIp(ip.to_string()))
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

pub fn distance_series(signal: &Signal) -> Result<DistanceSeries, SignalError> {
    let first = signal
        .points
        .first()
        .ok_or_else(|| SignalError::EmptySignal(signal.ip.clone()))?;
    Ok(DistanceSeries {
        ip: signal.ip.clone(),
        points: signal.points.iter().map(|p| (p.ts, euclidean(&p.y, &first.y))).collect(),
    })
}

/// Distance series of every signal, in input order.
pub fn distance_series_all(signals: &[Signal]) -> Result<Vec<DistanceSeries>, SignalError> {
    signals.par_iter().map(distance_series).collect()
}

fn active_bins(signal: &Signal, bin: u64) -> BTreeSet<u64> {
    signal.points.iter().map(|p| p.ts / bin).collect()
}

/// Jaccard similarity of the sets of `bin`-second windows in which each source is active.
pub fn co_activity(a: &Signal, b: &Signal, bin: u64) -> Result<f64, SignalError> {
    if bin == 0 {
        return Err(SignalError::NonPositiveStep);
    }
    let (ba, bb) = (active_bins(a, bin), active_bins(b, bin));
    let union = ba.union(&bb).count();
    if union == 0 {
        return Ok(0.0);
    }
    Ok(ba.intersection(&bb).count() as f64 / union as f64)
}

/// Symmetric matrix of pairwise [`co_activity`] scores.
pub fn co_activity_matrix(signals: &[&Signal], bin: u64) -> Result<Vec<Vec<f64>>, SignalError> {
    if bin == 0 {
        return Err(SignalError::NonPositiveStep);
    }
    let bins: Vec<BTreeSet<u64>> = signals.iter().map(|s| active_bins(s, bin)).collect();
    Ok((0..signals.len())
        .map(|i| {
            (0..signals.len())
                .map(|j| {
                    let union = bins[i].union(&bins[j]).count();
                    if union == 0 {
                        0.0
                    } else {
                        bins[i].intersection(&bins[j]).count() as f64 / union as f64
                    }
                })
                .collect()
        })
        .collect())
}

fn levels(series: &DistanceSeries, q: f64) -> BTreeSet<i64> {
    series.points.iter().map(|&(_, d)| (d / q).round() as i64).collect()
}

/// Number of quantized distance levels, `round(d / q)`, visited by both series.
pub fn shared_signature_count(a: &DistanceSeries, b: &DistanceSeries, q: f64) -> Result<usize, SignalError> {
    if !(q > 0.0) {
        return Err(SignalError::NonPositiveStep);
    }
    Ok(levels(a, q).intersection(&levels(b, q)).count())
}

/// `ts,d` rows with a header.
pub fn write_distance_csv<W: Write>(mut w: W, series: &DistanceSeries) -> std::io::Result<()> {
    writeln!(w, "ts,d")?;
    for (ts, d) in &series.points {
        writeln!(w, "{ts},{d}")?;
    }
    Ok(())
}

/// Square matrix with the IPs as header row and first column.
pub fn write_co_activity_csv<W: Write>(mut w: W, ips: &[&str], matrix: &[Vec<f64>]) -> std::io::Result<()> {
    writeln!(w, "ip,{}", ips.join(","))?;
    for (ip, row) in ips.iter().zip(matrix) {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{ip},{}", cells.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::SessionId;
    use proptest::prelude::*;

    fn emb(ip: &str, index: usize, ts: u64, y: Vec<f64>) -> SessionEmbedding {
        SessionEmbedding { key: SessionId { ip: ip.into(), index }, ts, y }
    }

    fn signal_at(ts: &[u64]) -> Signal {
        Signal {
            ip: "x".into(),
            points: ts.iter().map(|&t| SignalPoint { ts: t, index: 0, y: vec![0.0], cluster: None }).collect(),
        }
    }

    #[test]
    fn grouping_and_ordering() {
        let e = vec![
            emb("b", 0, 30, vec![0.0]),
            emb("a", 0, 20, vec![1.0]),
            emb("b", 1, 10, vec![2.0]),
            emb("a", 1, 5, vec![3.0]),
            emb("b", 2, 20, vec![4.0]),
        ];
        let s = build_signals(&e, Some(&[0, 1, 2, 3, 4]));
        assert_eq!(s.len(), 2);
        assert_eq!((s[0].ip.as_str(), s[0].points.len()), ("a", 2));
        assert_eq!((s[1].ip.as_str(), s[1].points.len()), ("b", 3));
        let ts: Vec<u64> = s[1].points.iter().map(|p| p.ts).collect();
        assert_eq!(ts, vec![10, 20, 30]);
        assert_eq!(s[1].points[0].cluster, Some(2));
        assert!(build_signals(&[], None).is_empty());
    }

    #[test]
    fn distances() {
        let s = build_signals(&[emb("a", 0, 1, vec![0.0, 0.0]), emb("a", 1, 2, vec![3.0, 4.0])], None);
        assert_eq!(distance_series(&s[0]).unwrap().points, vec![(1, 0.0), (2, 5.0)]);
        let single = build_signals(&[emb("a", 0, 7, vec![1.5, -2.0])], None);
        assert_eq!(distance_series(&single[0]).unwrap().points, vec![(7, 0.0)]);
        let same = build_signals(&(0..4).map(|i| emb("a", i, i as u64, vec![2.0, 1.0])).collect::<Vec<_>>(), None);
        assert!(distance_series(&same[0]).unwrap().points.iter().all(|p| p.1 == 0.0));
        let empty = Signal { ip: "z".into(), points: vec![] };
        assert!(matches!(distance_series(&empty), Err(SignalError::EmptySignal(_))));
        assert!(matches!(find_signal(&s, "q"), Err(SignalError::UnknownIp(_))));
    }

    #[test]
    fn co_activity_fractions() {
        let bin = 10;
        let a = signal_at(&[10, 25]);
        let b = signal_at(&[30, 45]);
        let c = signal_at(&[20, 35]);
        assert_eq!(co_activity(&a, &b, bin).unwrap(), 0.0);
        assert_eq!(co_activity(&a, &a, bin).unwrap(), 1.0);
        assert_eq!(co_activity(&a, &c, bin).unwrap(), 1.0 / 3.0);
        assert_eq!(co_activity(&signal_at(&[]), &signal_at(&[]), bin).unwrap(), 0.0);
        assert!(co_activity(&a, &b, 0).is_err());
        let m = co_activity_matrix(&[&a, &b, &c], bin).unwrap();
        assert_eq!(m[0][2], 1.0 / 3.0);
        assert_eq!(m[2][0], m[0][2]);
    }

    #[test]
    fn signature_levels() {
        let a = DistanceSeries { ip: "a".into(), points: vec![(0, 0.0), (1, 1.0), (2, 2.1), (3, 1.05)] };
        assert_eq!(shared_signature_count(&a, &a, 1.0).unwrap(), 3);
        let far = DistanceSeries { ip: "b".into(), points: vec![(0, 7.0), (1, 9.0)] };
        let zero = DistanceSeries { ip: "c".into(), points: vec![(0, 0.0), (1, 0.0)] };
        assert_eq!(shared_signature_count(&zero, &far, 1.0).unwrap(), 0);
        assert!(shared_signature_count(&a, &a, 0.0).is_err());
    }

    #[test]
    fn csv_output() {
        let s = DistanceSeries { ip: "a".into(), points: vec![(1, 0.0), (2, 5.0)] };
        let mut buf = Vec::new();
        write_distance_csv(&mut buf, &s).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "ts,d\n1,0\n2,5\n");
        let mut buf = Vec::new();
        write_co_activity_csv(&mut buf, &["a", "b"], &[vec![1.0, 0.5], vec![0.5, 1.0]]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "ip,a,b\na,1,0.5\nb,0.5,1\n");
    }

    fn rotate(y: &[f64], angle: f64, shift: &[f64]) -> Vec<f64> {
        // Givens rotation on consecutive coordinate pairs, then translation
        let (c, s) = (angle.cos(), angle.sin());
        let mut out = y.to_vec();
        for i in (0..y.len() - 1).step_by(2) {
            out[i] = c * y[i] - s * y[i + 1];
            out[i + 1] = s * y[i] + c * y[i + 1];
        }
        out.iter().zip(shift).map(|(a, b)| a + b).collect()
    }

    proptest! {
        #[test]
        fn isometry_invariance(
            ys in proptest::collection::vec(proptest::collection::vec(-5.0f64..5.0, 4), 1..12),
            angle in 0.0f64..std::f64::consts::TAU,
            shift in proptest::collection::vec(-100.0f64..100.0, 4),
        ) {
            let e: Vec<SessionEmbedding> = ys.iter().enumerate().map(|(i, y)| emb("a", i, i as u64, y.clone())).collect();
            let moved: Vec<SessionEmbedding> = ys.iter().enumerate()
                .map(|(i, y)| emb("a", i, i as u64, rotate(y, angle, &shift)))
                .collect();
            let d0 = distance_series(&build_signals(&e, None)[0]).unwrap();
            let d1 = distance_series(&build_signals(&moved, None)[0]).unwrap();
            prop_assert_eq!(d1.points[0].1, 0.0);
            for (a, b) in d0.points.iter().zip(&d1.points) {
                prop_assert!((a.1 - b.1).abs() < 1e-9 * (1.0 + a.1));
            }
        }

        #[test]
        fn co_activity_symmetric_and_bounded(
            a in proptest::collection::vec(0u64..1000, 0..20),
            b in proptest::collection::vec(0u64..1000, 0..20),
            bin in 1u64..200,
        ) {
            let (sa, sb) = (signal_at(&a), signal_at(&b));
            let ab = co_activity(&sa, &sb, bin).unwrap();
            prop_assert_eq!(ab, co_activity(&sb, &sa, bin).unwrap());
            prop_assert!((0.0..=1.0).contains(&ab));
        }

        #[test]
        fn same_cluster_distances_within_diameter(
            ys in proptest::collection::vec(proptest::collection::vec(-3.0f64..3.0, 3), 2..15),
            labels in proptest::collection::vec(0usize..3, 15),
        ) {
            let n = ys.len();
            let e: Vec<SessionEmbedding> = ys.iter().enumerate().map(|(i, y)| emb("a", i, i as u64, y.clone())).collect();
            let sig = &build_signals(&e, Some(&labels[..n]))[0];
            let ds = distance_series(sig).unwrap();
            let mut diameter = [0.0f64; 3];
            for i in 0..n {
                for j in 0..n {
                    if labels[i] == labels[j] {
                        diameter[labels[i]] = diameter[labels[i]].max(euclidean(&ys[i], &ys[j]));
                    }
                }
            }
            for i in 0..n {
                for j in 0..n {
                    let (pi, pj) = (&sig.points[i], &sig.points[j]);
                    if pi.cluster == pj.cluster {
                        let c = pi.cluster.unwrap();
                        prop_assert!((ds.points[i].1 - ds.points[j].1).abs() <= diameter[c] + 1e-12);
                    }
                }
            }
        }
    }
}
