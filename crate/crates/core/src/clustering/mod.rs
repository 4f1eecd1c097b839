//! Clustering of embedded documents and sessions, agreement scores against ground truth,
//! and human-readable cluster listings.

mod kmeans;
mod linalg;
mod metrics;
mod report;
mod vdgmm;

use std::io::{BufRead, Write};

use thiserror::Error;

pub use kmeans::{kmeans, KMeansConfig, KMeansResult};
pub use metrics::{agreement, agreement_keyed, Agreement};
pub use report::{make_report, ClusterReport, ReportCluster};
pub use vdgmm::{vdgmm, CovarianceType, VdgmmConfig, VdgmmResult, VdgmmWarning};

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("key sets differ: {0}")]
    KeyMismatch(String),
    #[error("assignment file line {0}: {1}")]
    BadAssignment(usize, String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// `key,cluster_id` with a header row.
pub fn write_assignments<W: Write>(mut w: W, keys: &[String], clusters: &[usize]) -> std::io::Result<()> {
    writeln!(w, "key,cluster_id")?;
    for (k, c) in keys.iter().zip(clusters) {
        writeln!(w, "{k},{c}")?;
    }
    Ok(())
}

/// Reads a two-or-more column CSV with a header row as `(key, label)` pairs, taking the
/// label from column `column` (1-based after the key).
pub fn read_labels<R: BufRead>(r: R, column: usize) -> Result<Vec<(String, String)>, ClusterError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if i == 0 || line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        let label = cols
            .get(column)
            .ok_or_else(|| ClusterError::BadAssignment(i + 1, format!("missing column {column}")))?;
        out.push((cols[0].to_string(), label.to_string()));
    }
    Ok(out)
}
