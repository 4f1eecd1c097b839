//! k-means: k-means++ seeding, Lloyd iterations with single-point refinement, a bounded
//! centroid swap search, and best-of-restarts selection.

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use super::ClusterError;
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansConfig {
    pub k: usize,
    pub max_iters: usize,
    pub restarts: usize,
    /// Trial centroid relocations per restart after the first descent; 0 disables the
    /// swap search.
    pub swap_budget: usize,
    pub seed: u64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        KMeansConfig { k: 200, max_iters: 300, restarts: 5, swap_budget: 256, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub k: usize,
    /// `k × d`.
    pub centroids: Array2<f64>,
    pub assignment: Vec<usize>,
    /// Sum of squared distances from each point to its centroid.
    pub inertia: f64,
    /// Lloyd iterations of the selected restart.
    pub iterations: usize,
    /// Inertia after every assignment step of the selected restart.
    pub inertia_trace: Vec<f64>,
}

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Nearest centroid of every point (ties to the lowest id) and the squared distance to it.
fn assign(points: ArrayView2<f64>, centroids: &Array2<f64>) -> (Vec<usize>, Vec<f64>) {
    (0..points.nrows())
        .into_par_iter()
        .map(|i| {
            let p = points.row(i);
            let mut best = (0, f64::INFINITY);
            for (j, c) in centroids.rows().into_iter().enumerate() {
                let d = sq_dist(p, c);
                if d < best.1 {
                    best = (j, d);
                }
            }
            best
        })
        .unzip()
}

fn plus_plus(points: ArrayView2<f64>, k: usize, rng: &mut rng::StageRng) -> Array2<f64> {
    let n = points.nrows();
    let mut centroids = Array2::zeros((k, points.ncols()));
    centroids.row_mut(0).assign(&points.row(rng.random_range(0..n)));
    let mut nearest: Vec<f64> = (0..n).map(|i| sq_dist(points.row(i), centroids.row(0))).collect();
    for c in 1..k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut idx = n - 1;
            for (i, &d) in nearest.iter().enumerate() {
                if u < d {
                    idx = i;
                    break;
                }
                u -= d;
            }
            idx
        } else {
            rng.random_range(0..n)
        };
        centroids.row_mut(c).assign(&points.row(pick));
        for (i, d) in nearest.iter_mut().enumerate() {
            *d = d.min(sq_dist(points.row(i), centroids.row(c)));
        }
    }
    centroids
}

/// Centroids as member means. An empty cluster takes over the point farthest from its
/// own centroid among clusters with at least two members.
fn update(points: ArrayView2<f64>, assignment: &mut [usize], k: usize) -> Array2<f64> {
    let d = points.ncols();
    let mut sums = Array2::<f64>::zeros((k, d));
    let mut counts = vec![0usize; k];
    for (i, &a) in assignment.iter().enumerate() {
        let mut row = sums.row_mut(a);
        row += &points.row(i);
        counts[a] += 1;
    }
    for j in 0..k {
        if counts[j] > 0 {
            sums.row_mut(j).mapv_inplace(|x| x / counts[j] as f64);
        }
    }
    for j in 0..k {
        if counts[j] > 0 {
            continue;
        }
        let far = (0..points.nrows())
            .filter(|&i| counts[assignment[i]] > 1)
            .map(|i| (i, sq_dist(points.row(i), sums.row(assignment[i]))))
            .fold(None, |best: Option<(usize, f64)>, (i, dist)| match best {
                Some((_, bd)) if bd >= dist => best,
                _ => Some((i, dist)),
            });
        if let Some((i, _)) = far {
            counts[assignment[i]] -= 1;
            assignment[i] = j;
            counts[j] = 1;
            sums.row_mut(j).assign(&points.row(i));
        }
    }
    sums
}

/// One sweep of single-point moves: a point leaves its cluster whenever joining another
/// lowers the total within-cluster sum of squares. Never empties a cluster. Returns whether
/// anything moved.
fn hartigan_pass(points: ArrayView2<f64>, assignment: &mut [usize], k: usize) -> bool {
    let d = points.ncols();
    let mut sums = Array2::<f64>::zeros((k, d));
    let mut counts = vec![0usize; k];
    for (i, &a) in assignment.iter().enumerate() {
        let mut row = sums.row_mut(a);
        row += &points.row(i);
        counts[a] += 1;
    }
    let dist_to = |sums: &Array2<f64>, counts: &[usize], j: usize, i: usize| -> f64 {
        let n = counts[j] as f64;
        points.row(i).iter().zip(sums.row(j)).map(|(x, s)| (x - s / n).powi(2)).sum()
    };
    let mut moved = false;
    for i in 0..points.nrows() {
        let a = assignment[i];
        if counts[a] < 2 {
            continue;
        }
        let na = counts[a] as f64;
        let leave = na / (na - 1.0) * dist_to(&sums, &counts, a, i);
        let mut best = (a, leave);
        for j in (0..k).filter(|&j| j != a && counts[j] > 0) {
            let nj = counts[j] as f64;
            let join = nj / (nj + 1.0) * dist_to(&sums, &counts, j, i);
            // strict relative margin so rounding cannot cycle
            if join < best.1 * (1.0 - 1e-12) {
                best = (j, join);
            }
        }
        if best.0 != a {
            let b = best.0;
            let mut ra = sums.row_mut(a);
            ra -= &points.row(i);
            let mut rb = sums.row_mut(b);
            rb += &points.row(i);
            counts[a] -= 1;
            counts[b] += 1;
            assignment[i] = b;
            moved = true;
        }
    }
    moved
}

/// Lloyd iterations to a fixed point, then single-point refinement, repeated until neither
/// changes the partition.
fn descend(points: ArrayView2<f64>, mut centroids: Array2<f64>, k: usize, max_iters: usize) -> KMeansResult {
    let mut trace = Vec::new();
    let mut previous: Option<Vec<usize>> = None;
    let mut iterations = 0;
    loop {
        let (mut assignment, dists) = assign(points, &centroids);
        let inertia: f64 = dists.iter().sum();
        trace.push(inertia);
        let stable = previous.as_ref() == Some(&assignment);
        if stable && iterations < max_iters && hartigan_pass(points, &mut assignment, k) {
            centroids = update(points, &mut assignment, k);
            iterations += 1;
            previous = Some(assignment);
            continue;
        }
        if stable || iterations == max_iters {
            return KMeansResult {
                k,
                centroids,
                assignment,
                inertia,
                iterations,
                inertia_trace: trace,
            };
        }
        let mut next = assignment;
        centroids = update(points, &mut next, k);
        iterations += 1;
        previous = Some(next);
    }
}

/// One restart: k-means++ seeding and descent, then swap search — move one centroid onto a
/// data point, descend again, keep the result if it lowers inertia — until no swap helps or
/// `swap_budget` trial swaps have been spent. The trace continues with the inertia after
/// every accepted swap.
fn restart(points: ArrayView2<f64>, cfg: &KMeansConfig, seed: u64) -> KMeansResult {
    let mut rng = rng::seeded(seed);
    let k = cfg.k;
    let mut best = descend(points, plus_plus(points, k, &mut rng), k, cfg.max_iters);
    let mut budget = cfg.swap_budget;
    let mut candidates: Vec<(usize, usize)> =
        (0..k).flat_map(|j| (0..points.nrows()).map(move |i| (j, i))).collect();
    'search: while budget > 0 && k > 1 {
        candidates.shuffle(&mut rng);
        for &(j, i) in &candidates {
            if budget == 0 {
                break 'search;
            }
            budget -= 1;
            let mut c = best.centroids.clone();
            c.row_mut(j).assign(&points.row(i));
            let trial = descend(points, c, k, cfg.max_iters);
            if trial.inertia < best.inertia * (1.0 - 1e-12) {
                let mut trace = std::mem::take(&mut best.inertia_trace);
                trace.push(trial.inertia);
                best = KMeansResult { inertia_trace: trace, iterations: best.iterations + trial.iterations, ..trial };
                continue 'search;
            }
        }
        break;
    }
    best
}

/// Clusters the rows of `points` into `cfg.k` groups, keeping the restart with the lowest
/// inertia (earliest on ties).
pub fn kmeans(points: ArrayView2<f64>, cfg: &KMeansConfig) -> Result<KMeansResult, ClusterError> {
    let n = points.nrows();
    if cfg.k == 0 {
        return Err(ClusterError::Config("k must be at least 1".into()));
    }
    if n < cfg.k {
        return Err(ClusterError::TooFewPoints { needed: cfg.k, got: n });
    }
    let mut best: Option<KMeansResult> = None;
    for r in 0..cfg.restarts.max(1) {
        let run = restart(points, cfg, rng::derive_indexed(cfg.seed, r as u64));
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.unwrap())
}
