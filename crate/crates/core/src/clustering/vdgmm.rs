//! Variational Bayesian Gaussian mixture with a truncated number of components.
//!
//! Mixture weights carry a symmetric Dirichlet prior and each component a Normal–Wishart
//! prior centred on the data mean. Coordinate ascent alternates the closed-form updates of
//! the responsibilities and of the component posteriors; the evidence lower bound is
//! evaluated after every parameter update and never decreases. Components whose share of the
//! responsibility mass falls below a threshold are reported as pruned, which is how the
//! number of clusters is learned.
//!
//! Diagonal covariances are handled as a product of one-dimensional Normal–Wishart
//! (Normal–Gamma) blocks sharing the responsibilities, so both covariance types run through
//! the same block-wise equations.

use std::f64::consts::PI;

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{digamma, ln_gamma};

use super::kmeans::{kmeans, KMeansConfig};
use super::linalg::{cholesky, inverse_from_cholesky, log_det_from_cholesky, quad_form, trace_product};
use super::ClusterError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovarianceType {
    Full,
    Diagonal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VdgmmConfig {
    pub kmax: usize,
    /// Dirichlet concentration per component; `None` means `1/kmax`.
    pub alpha0: Option<f64>,
    /// Precision scaling of the prior on component means.
    pub beta0: f64,
    /// `None` picks full covariances below 32 dimensions and diagonal ones otherwise.
    pub covariance: Option<CovarianceType>,
    /// Stop once the bound improves by less than this.
    pub tol: f64,
    pub max_iters: usize,
    /// Components holding less than this fraction of the total responsibility are pruned;
    /// `None` means `1/(2·kmax)`.
    pub prune_fraction: Option<f64>,
    pub seed: u64,
}

impl Default for VdgmmConfig {
    fn default() -> Self {
        VdgmmConfig {
            kmax: 150,
            alpha0: None,
            beta0: 1.0,
            covariance: None,
            tol: 1e-4,
            max_iters: 1000,
            prune_fraction: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum VdgmmWarning {
    /// The empirical covariance was singular; the prior scale matrix was floored.
    SingularUpdate { floor: f64 },
    NotConverged { iters: usize },
}

#[derive(Debug, Clone)]
pub struct VdgmmResult {
    pub kmax: usize,
    pub covariance: CovarianceType,
    /// `E[π_k]`.
    pub weights: Vec<f64>,
    /// Posterior mean of each component mean, `kmax × d`.
    pub means: Array2<f64>,
    /// `(ν_k W_k)⁻¹`, the inverse of the expected precision, per component (`d × d`;
    /// diagonal when `covariance` is diagonal).
    pub covariances: Vec<Array2<f64>>,
    /// `n × kmax`, rows sum to one.
    pub responsibilities: Array2<f64>,
    /// Components that survive pruning.
    pub active: Vec<bool>,
    pub effective_k: usize,
    pub elbo_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub warnings: Vec<VdgmmWarning>,
}

impl VdgmmResult {
    /// Most responsible component of every point.
    pub fn assignment(&self) -> Vec<usize> {
        self.responsibilities
            .rows()
            .into_iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |b, (j, &v)| if v > b.1 { (j, v) } else { b })
                    .0
            })
            .collect()
    }

    pub fn final_elbo(&self) -> f64 {
        self.elbo_trace.last().copied().unwrap_or(f64::NAN)
    }
}

/// Coordinates modelled jointly by one Normal–Wishart factor.
struct Block {
    idx: Vec<usize>,
    m0: Vec<f64>,
    /// Prior scale matrix inverse `W₀⁻¹`.
    w0_inv: Vec<f64>,
    nu0: f64,
    ln_b0: f64,
}

/// Posterior of one block of one component.
#[derive(Clone)]
struct BlockPosterior {
    m: Vec<f64>,
    /// `W_k` and `ln|W_k|`.
    w: Vec<f64>,
    ln_det_w: f64,
    nu: f64,
    e_ln_lambda: f64,
}

/// Sufficient statistics of one block of one component.
struct BlockStats {
    xbar: Vec<f64>,
    /// `N_k S_k`.
    scatter: Vec<f64>,
}

fn ln_wishart_norm(ln_det_w: f64, nu: f64, d: usize) -> f64 {
    let df = d as f64;
    -0.5 * nu * ln_det_w
        - (0.5 * nu * df * 2f64.ln()
            + 0.25 * df * (df - 1.0) * PI.ln()
            + (1..=d).map(|i| ln_gamma(0.5 * (nu + 1.0 - i as f64))).sum::<f64>())
}

fn expected_ln_det(ln_det_w: f64, nu: f64, d: usize) -> f64 {
    (1..=d).map(|i| digamma(0.5 * (nu + 1.0 - i as f64))).sum::<f64>()
        + d as f64 * 2f64.ln()
        + ln_det_w
}

fn ln_dirichlet_norm(alpha: &[f64]) -> f64 {
    ln_gamma(alpha.iter().sum()) - alpha.iter().map(|&a| ln_gamma(a)).sum::<f64>()
}

struct State<'a> {
    x: ArrayView2<'a, f64>,
    blocks: Vec<Block>,
    kmax: usize,
    alpha0: f64,
    beta0: f64,
    resp: Array2<f64>,
    nk: Vec<f64>,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    /// `post[k][b]`.
    post: Vec<Vec<BlockPosterior>>,
    stats: Vec<Vec<BlockStats>>,
}

impl State<'_> {
    fn e_ln_pi(&self) -> Vec<f64> {
        let total = digamma(self.alpha.iter().sum());
        self.alpha.iter().map(|&a| digamma(a) - total).collect()
    }

    fn m_step(&mut self) {
        let n = self.x.nrows();
        self.nk = (0..self.kmax).map(|k| self.resp.column(k).sum()).collect();
        for k in 0..self.kmax {
            let nk = self.nk[k];
            self.alpha[k] = self.alpha0 + nk;
            self.beta[k] = self.beta0 + nk;
            for (b, block) in self.blocks.iter().enumerate() {
                let d = block.idx.len();
                let mut xbar = vec![0.0; d];
                for i in 0..n {
                    let r = self.resp[[i, k]];
                    if r == 0.0 {
                        continue;
                    }
                    for (a, &c) in block.idx.iter().enumerate() {
                        xbar[a] += r * self.x[[i, c]];
                    }
                }
                if nk > 0.0 {
                    xbar.iter_mut().for_each(|v| *v /= nk);
                } else {
                    xbar.clone_from(&block.m0);
                }
                let mut scatter = vec![0.0; d * d];
                let mut diff = vec![0.0; d];
                for i in 0..n {
                    let r = self.resp[[i, k]];
                    if r == 0.0 {
                        continue;
                    }
                    for (a, &c) in block.idx.iter().enumerate() {
                        diff[a] = self.x[[i, c]] - xbar[a];
                    }
                    for a in 0..d {
                        for c in 0..=a {
                            scatter[a * d + c] += r * diff[a] * diff[c];
                        }
                    }
                }
                for a in 0..d {
                    for c in 0..a {
                        scatter[c * d + a] = scatter[a * d + c];
                    }
                }

                let beta = self.beta[k];
                let m: Vec<f64> = (0..d)
                    .map(|a| (self.beta0 * block.m0[a] + nk * xbar[a]) / beta)
                    .collect();
                let shrink = self.beta0 * nk / (self.beta0 + nk);
                let mut w_inv = block.w0_inv.clone();
                for a in 0..d {
                    for c in 0..d {
                        w_inv[a * d + c] += scatter[a * d + c]
                            + shrink * (xbar[a] - block.m0[a]) * (xbar[c] - block.m0[c]);
                    }
                }
                let l = cholesky(&w_inv, d).expect("W⁻¹ = W₀⁻¹ + PSD terms is positive definite");
                let ln_det_w = -log_det_from_cholesky(&l, d);
                let nu = block.nu0 + nk;
                self.post[k][b] = BlockPosterior {
                    m,
                    w: inverse_from_cholesky(&l, d),
                    ln_det_w,
                    nu,
                    e_ln_lambda: expected_ln_det(ln_det_w, nu, d),
                };
                self.stats[k][b] = BlockStats { xbar, scatter };
            }
        }
    }

    fn e_step(&mut self) {
        let e_ln_pi = self.e_ln_pi();
        let kmax = self.kmax;
        let rows: Vec<Vec<f64>> = (0..self.x.nrows())
            .into_par_iter()
            .map(|i| {
                let mut ln_rho: Vec<f64> = (0..kmax)
                    .map(|k| {
                        let mut v = e_ln_pi[k];
                        for (b, block) in self.blocks.iter().enumerate() {
                            let p = &self.post[k][b];
                            let d = block.idx.len() as f64;
                            let diff: Vec<f64> =
                                block.idx.iter().zip(&p.m).map(|(&c, &m)| self.x[[i, c]] - m).collect();
                            v += 0.5 * p.e_ln_lambda
                                - 0.5 * d * (2.0 * PI).ln()
                                - 0.5 * (d / self.beta[k] + p.nu * quad_form(&p.w, &diff));
                        }
                        v
                    })
                    .collect();
                let max = ln_rho.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let s: f64 = ln_rho.iter().map(|v| (v - max).exp()).sum();
                let ln_norm = max + s.ln();
                ln_rho.iter_mut().for_each(|v| *v = (*v - ln_norm).exp());
                ln_rho
            })
            .collect();
        for (i, row) in rows.into_iter().enumerate() {
            for (k, r) in row.into_iter().enumerate() {
                self.resp[[i, k]] = r;
            }
        }
    }

    fn elbo(&self) -> f64 {
        let e_ln_pi = self.e_ln_pi();
        let mut lb = 0.0;
        for (b, block) in self.blocks.iter().enumerate() {
            let d = block.idx.len();
            let df = d as f64;
            for k in 0..self.kmax {
                let p = &self.post[k][b];
                let s = &self.stats[k][b];
                let beta = self.beta[k];
                let nk = self.nk[k];
                // E[ln p(X | Z, μ, Λ)], with N_k S_k = scatter
                let dx: Vec<f64> = s.xbar.iter().zip(&p.m).map(|(a, b)| a - b).collect();
                lb += 0.5
                    * (nk * (p.e_ln_lambda - df / beta - df * (2.0 * PI).ln())
                        - p.nu * trace_product(&s.scatter, &p.w)
                        - nk * p.nu * quad_form(&p.w, &dx));
                // E[ln p(μ, Λ)]
                let dm: Vec<f64> = p.m.iter().zip(&block.m0).map(|(a, b)| a - b).collect();
                lb += 0.5
                    * (df * (self.beta0 / (2.0 * PI)).ln() + p.e_ln_lambda
                        - df * self.beta0 / beta
                        - self.beta0 * p.nu * quad_form(&p.w, &dm));
                lb += block.ln_b0 + 0.5 * (block.nu0 - df - 1.0) * p.e_ln_lambda
                    - 0.5 * p.nu * trace_product(&block.w0_inv, &p.w);
                // −E[ln q(μ, Λ)]
                let entropy = -ln_wishart_norm(p.ln_det_w, p.nu, d)
                    - 0.5 * (p.nu - df - 1.0) * p.e_ln_lambda
                    + 0.5 * p.nu * df;
                lb -= 0.5 * p.e_ln_lambda + 0.5 * df * (beta / (2.0 * PI)).ln() - 0.5 * df - entropy;
            }
        }
        // E[ln p(Z | π)] − E[ln q(Z)]
        for row in self.resp.rows() {
            for (k, &r) in row.iter().enumerate() {
                if r > 0.0 {
                    lb += r * (e_ln_pi[k] - r.ln());
                }
            }
        }
        // E[ln p(π)] − E[ln q(π)]
        lb += ln_dirichlet_norm(&vec![self.alpha0; self.kmax])
            + (self.alpha0 - 1.0) * e_ln_pi.iter().sum::<f64>();
        lb -= ln_dirichlet_norm(&self.alpha)
            + self.alpha.iter().zip(&e_ln_pi).map(|(a, e)| (a - 1.0) * e).sum::<f64>();
        lb
    }
}

/// Fits a variational Gaussian mixture with at most `cfg.kmax` components to the rows of
/// `points`. Responsibilities start from a k-means partition.
pub fn vdgmm(points: ArrayView2<f64>, cfg: &VdgmmConfig) -> Result<VdgmmResult, ClusterError> {
    let (n, d) = points.dim();
    if n < 2 {
        return Err(ClusterError::TooFewPoints { needed: 2, got: n });
    }
    if cfg.kmax == 0 || d == 0 {
        return Err(ClusterError::Config("kmax and the dimension must be positive".into()));
    }
    if !(cfg.beta0 > 0.0) || cfg.alpha0.is_some_and(|a| !(a > 0.0)) {
        return Err(ClusterError::Config("alpha0 and beta0 must be positive".into()));
    }
    let kmax = cfg.kmax;
    let covariance = cfg.covariance.unwrap_or(if d < 32 {
        CovarianceType::Full
    } else {
        CovarianceType::Diagonal
    });
    let mut warnings = Vec::new();

    let mean: Vec<f64> = (0..d).map(|c| points.column(c).mean().unwrap()).collect();
    let groups: Vec<Vec<usize>> = match covariance {
        CovarianceType::Full => vec![(0..d).collect()],
        CovarianceType::Diagonal => (0..d).map(|c| vec![c]).collect(),
    };
    let mut floor_used = None;
    let blocks: Vec<Block> = groups
        .into_iter()
        .map(|idx| {
            let bd = idx.len();
            let mut cov = vec![0.0; bd * bd];
            for i in 0..n {
                for a in 0..bd {
                    for c in 0..bd {
                        cov[a * bd + c] +=
                            (points[[i, idx[a]]] - mean[idx[a]]) * (points[[i, idx[c]]] - mean[idx[c]]);
                    }
                }
            }
            cov.iter_mut().for_each(|v| *v /= n as f64);
            let scale = (0..bd).map(|a| cov[a * bd + a]).sum::<f64>() / bd as f64;
            let well_posed = cholesky(&cov, bd)
                .is_some_and(|l| (0..bd).all(|a| l[a * bd + a] > 1e-6 * scale.sqrt()));
            if !well_posed {
                let floor = 1e-6 * scale.max(1e-6);
                for a in 0..bd {
                    cov[a * bd + a] += floor;
                }
                floor_used = Some(floor_used.map_or(floor, |f: f64| f.max(floor)));
            }
            let l = cholesky(&cov, bd).expect("floored covariance is positive definite");
            let nu0 = bd as f64;
            Block {
                m0: idx.iter().map(|&c| mean[c]).collect(),
                ln_b0: ln_wishart_norm(-log_det_from_cholesky(&l, bd), nu0, bd),
                w0_inv: cov,
                nu0,
                idx,
            }
        })
        .collect();
    if let Some(floor) = floor_used {
        log::warn!("singular empirical covariance; prior scale floored by {floor:e}");
        warnings.push(VdgmmWarning::SingularUpdate { floor });
    }

    let init_k = kmax.min(n);
    let init = kmeans(
        points,
        &KMeansConfig { k: init_k, max_iters: 50, restarts: 1, swap_budget: 0, seed: cfg.seed },
    )?;
    let mut resp = Array2::zeros((n, kmax));
    for (i, &a) in init.assignment.iter().enumerate() {
        resp[[i, a]] = 1.0;
    }

    let empty_post = |b: &Block| BlockPosterior {
        m: b.m0.clone(),
        w: vec![0.0; b.idx.len().pow(2)],
        ln_det_w: 0.0,
        nu: b.nu0,
        e_ln_lambda: 0.0,
    };
    let mut state = State {
        x: points,
        kmax,
        alpha0: cfg.alpha0.unwrap_or(1.0 / kmax as f64),
        beta0: cfg.beta0,
        resp,
        nk: vec![0.0; kmax],
        alpha: vec![0.0; kmax],
        beta: vec![0.0; kmax],
        post: (0..kmax).map(|_| blocks.iter().map(empty_post).collect()).collect(),
        stats: (0..kmax)
            .map(|_| {
                blocks
                    .iter()
                    .map(|b| BlockStats { xbar: vec![0.0; b.idx.len()], scatter: vec![] })
                    .collect()
            })
            .collect(),
        blocks,
    };

    let mut elbo_trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..cfg.max_iters.max(1) {
        state.m_step();
        let lb = state.elbo();
        iterations = it + 1;
        let done = elbo_trace.last().is_some_and(|&prev: &f64| lb - prev < cfg.tol);
        elbo_trace.push(lb);
        if done {
            converged = true;
            break;
        }
        state.e_step();
    }
    if !converged {
        warnings.push(VdgmmWarning::NotConverged { iters: iterations });
    }

    let prune = cfg.prune_fraction.unwrap_or(1.0 / (2.0 * kmax as f64));
    let total: f64 = state.nk.iter().sum();
    let active: Vec<bool> = state.nk.iter().map(|&nk| nk >= prune * total).collect();
    let alpha_sum: f64 = state.alpha.iter().sum();
    let mut means = Array2::zeros((kmax, d));
    let mut covariances = Vec::with_capacity(kmax);
    for k in 0..kmax {
        let mut cov = Array2::zeros((d, d));
        for (b, block) in state.blocks.iter().enumerate() {
            let p = &state.post[k][b];
            let bd = block.idx.len();
            let l = cholesky(&p.w, bd).expect("W_k is positive definite");
            let w_inv = inverse_from_cholesky(&l, bd);
            for a in 0..bd {
                means[[k, block.idx[a]]] = p.m[a];
                for c in 0..bd {
                    cov[[block.idx[a], block.idx[c]]] = w_inv[a * bd + c] / p.nu;
                }
            }
        }
        covariances.push(cov);
    }
    Ok(VdgmmResult {
        kmax,
        covariance,
        weights: state.alpha.iter().map(|a| a / alpha_sum).collect(),
        means,
        covariances,
        responsibilities: state.resp,
        effective_k: active.iter().filter(|&&a| a).count(),
        active,
        elbo_trace,
        iterations,
        converged,
        warnings,
    })
}
