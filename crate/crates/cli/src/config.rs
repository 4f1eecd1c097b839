//! Flat pipeline configuration: one TOML table, every hyperparameter defaulted.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use hc_core::clustering::{CovarianceType, KMeansConfig, VdgmmConfig};
use hc_core::embedding::{AeConfig, AeDims, W2VConfig};
use hc_core::lda::{InferConfig, LdaConfig};
use hc_core::rng::derive_seed;
use hc_core::VocabularyMode;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::PipelineError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pipeline {
    Lda,
    Autoencoder,
    Signals,
    Synth,
}

impl fmt::Display for Pipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Pipeline::Lda => "lda",
            Pipeline::Autoencoder => "autoencoder",
            Pipeline::Signals => "signals",
            Pipeline::Synth => "synth",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Covariance {
    Auto,
    Full,
    Diagonal,
}

impl Covariance {
    fn resolve(self) -> Option<CovarianceType> {
        match self {
            Covariance::Auto => None,
            Covariance::Full => Some(CovarianceType::Full),
            Covariance::Diagonal => Some(CovarianceType::Diagonal),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SynthPreset {
    Default,
    ThreeFamily,
}

impl FromStr for SynthPreset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "default" => Ok(SynthPreset::Default),
            "three-family" => Ok(SynthPreset::ThreeFamily),
            other => Err(format!("unknown preset {other:?} (expected default|three-family)")),
        }
    }
}

/// Everything a pipeline run depends on. Field names are the TOML keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub pipeline: Pipeline,
    /// Session JSON-lines for `lda`/`autoencoder`, `embeddings.bemb` for `signals`, an
    /// optional family-spec JSON for `synth`.
    pub input: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: u64,
    pub strict: bool,
    /// `full` or `hapax`.
    pub vocab_mode: VocabularyMode,
    /// Optional ground-truth CSV (`key,label`); when set, `score.json` is written.
    pub truth: Option<PathBuf>,

    pub topics: usize,
    pub alpha: Option<f64>,
    pub beta: f64,
    pub lda_iters: usize,
    pub infer_iters: usize,
    /// Fraction of trailing inference sweeps θ is averaged over; 0 uses the last sweep.
    pub infer_average_tail: f64,

    pub clusters: usize,
    pub kmeans_restarts: usize,
    pub kmeans_max_iters: usize,
    pub kmeans_swap_budget: usize,

    pub w2v_dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub w2v_lr: f64,

    pub session_len: usize,
    pub filters: usize,
    pub embedding_dim: usize,
    pub ae_lr: f64,
    pub ae_batch: usize,
    pub ae_steps: usize,

    pub kmax: usize,
    pub vdgmm_alpha0: Option<f64>,
    pub vdgmm_beta0: f64,
    pub covariance: Covariance,
    pub vdgmm_tol: f64,
    pub vdgmm_max_iters: usize,
    /// Inclusive lower bound on session timestamps clustered by VDGMM.
    pub window_from: Option<u64>,
    /// Exclusive upper bound.
    pub window_to: Option<u64>,

    pub excerpt_bytes: usize,

    /// IPs to analyse; empty means all.
    pub ips: Vec<String>,
    pub bin_seconds: u64,
    pub signature_step: f64,

    pub preset: SynthPreset,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let lda = LdaConfig::default();
        let km = KMeansConfig::default();
        let w2v = W2VConfig::default();
        let ae = AeConfig::default();
        let vd = VdgmmConfig::default();
        PipelineConfig {
            pipeline: Pipeline::Lda,
            input: None,
            out: PathBuf::from("out"),
            seed: 0,
            strict: false,
            vocab_mode: VocabularyMode::Full,
            truth: None,
            topics: lda.k,
            alpha: lda.alpha,
            beta: lda.beta,
            lda_iters: lda.iters,
            infer_iters: InferConfig::default().iters,
            infer_average_tail: 0.0,
            clusters: km.k,
            kmeans_restarts: km.restarts,
            kmeans_max_iters: km.max_iters,
            kmeans_swap_budget: km.swap_budget,
            w2v_dim: w2v.dim,
            window: w2v.window,
            negatives: w2v.negatives,
            epochs: w2v.epochs,
            w2v_lr: w2v.lr,
            session_len: ae.dims.n,
            filters: ae.dims.f,
            embedding_dim: ae.dims.m,
            ae_lr: ae.lr,
            ae_batch: ae.batch,
            ae_steps: ae.steps,
            kmax: vd.kmax,
            vdgmm_alpha0: vd.alpha0,
            vdgmm_beta0: vd.beta0,
            covariance: Covariance::Auto,
            vdgmm_tol: vd.tol,
            vdgmm_max_iters: vd.max_iters,
            window_from: None,
            window_to: None,
            excerpt_bytes: 400,
            ips: Vec::new(),
            bin_seconds: 86_400,
            signature_step: 0.1,
            preset: SynthPreset::Default,
        }
    }
}

/// Parses a `key=value` override; the value is read as a TOML value when it parses as one
/// and as a bare string otherwise.
pub fn parse_override(s: &str) -> Result<(String, toml::Value), PipelineError> {
    let (key, raw) = s
        .split_once('=')
        .ok_or_else(|| PipelineError::Config(format!("override {s:?} is not key=value")))?;
    let key = key.trim().to_string();
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    Ok((key, value))
}

impl PipelineConfig {
    /// Parses a config document, applying `overrides` on top before validation.
    pub fn from_toml_str(text: &str, overrides: &[(String, toml::Value)]) -> Result<Self, PipelineError> {
        let mut table: toml::Table =
            text.parse().map_err(|e: toml::de::Error| PipelineError::Config(e.to_string()))?;
        for (k, v) in overrides {
            table.insert(k.clone(), v.clone());
        }
        let cfg: PipelineConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| PipelineError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[(String, toml::Value)]) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text, overrides)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: &str| Err(PipelineError::Config(m.to_string()));
        if self.pipeline != Pipeline::Synth && self.input.is_none() {
            return bad("`input` is required for this pipeline");
        }
        if let (Some(a), Some(b)) = (self.window_from, self.window_to) {
            if a >= b {
                return bad("window_from must be below window_to");
            }
        }
        if !(0.0..1.0).contains(&self.infer_average_tail) {
            return bad("infer_average_tail must be in [0, 1)");
        }
        if self.bin_seconds == 0 || !(self.signature_step > 0.0) {
            return bad("bin_seconds and signature_step must be positive");
        }
        Ok(())
    }

    /// The effective configuration as a TOML document.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of [`PipelineConfig::to_toml`].
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn lda(&self) -> LdaConfig {
        LdaConfig {
            k: self.topics,
            alpha: self.alpha,
            beta: self.beta,
            iters: self.lda_iters,
            seed: derive_seed(self.seed, "lda"),
        }
    }

    pub fn infer(&self) -> InferConfig {
        InferConfig {
            iters: self.infer_iters,
            seed: derive_seed(self.seed, "theta"),
            average_tail: (self.infer_average_tail > 0.0).then_some(self.infer_average_tail),
        }
    }

    pub fn kmeans(&self) -> KMeansConfig {
        KMeansConfig {
            k: self.clusters,
            max_iters: self.kmeans_max_iters,
            restarts: self.kmeans_restarts,
            swap_budget: self.kmeans_swap_budget,
            seed: derive_seed(self.seed, "kmeans"),
        }
    }

    pub fn w2v(&self) -> W2VConfig {
        W2VConfig {
            dim: self.w2v_dim,
            window: self.window,
            negatives: self.negatives,
            epochs: self.epochs,
            lr: self.w2v_lr,
            seed: derive_seed(self.seed, "w2v"),
        }
    }

    pub fn ae(&self) -> AeConfig {
        AeConfig {
            dims: AeDims { n: self.session_len, h: self.w2v_dim, f: self.filters, m: self.embedding_dim },
            linear: false,
            lr: self.ae_lr,
            batch: self.ae_batch,
            steps: self.ae_steps,
            seed: derive_seed(self.seed, "autoencoder"),
            eval_every: None,
        }
    }

    pub fn vdgmm(&self) -> VdgmmConfig {
        VdgmmConfig {
            kmax: self.kmax,
            alpha0: self.vdgmm_alpha0,
            beta0: self.vdgmm_beta0,
            covariance: self.covariance.resolve(),
            tol: self.vdgmm_tol,
            max_iters: self.vdgmm_max_iters,
            prune_fraction: None,
            seed: derive_seed(self.seed, "vdgmm"),
        }
    }

    /// Whether `ts` falls in the `[window_from, window_to)` range.
    pub fn in_window(&self, ts: u64) -> bool {
        self.window_from.map_or(true, |a| ts >= a) && self.window_to.map_or(true, |b| ts < b)
    }
}
