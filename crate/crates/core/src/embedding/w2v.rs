//! Skip-gram with negative sampling.

use std::io::{Read, Write};

use rand::Rng;

use super::EmbeddingError;
use crate::binio::{self, FormatError};
use crate::corpus::PAD_ID;
use crate::rng::{self, StageRng};

#[derive(Debug, Clone, PartialEq)]
pub struct W2VConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    /// Initial learning rate, decayed linearly towards `lr * 1e-4`.
    pub lr: f64,
    pub seed: u64,
}

impl Default for W2VConfig {
    fn default() -> Self {
        W2VConfig { dim: 128, window: 2, negatives: 4, epochs: 4, lr: 0.025, seed: 0 }
    }
}

/// Input (word) and output (context) embedding matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct W2VModel {
    vocab_size: usize,
    dim: usize,
    /// `vocab_size × dim`; row `w` is `W(w)`. Row [`PAD_ID`] is always zero.
    input: Vec<f32>,
    output: Vec<f32>,
}

#[derive(Debug, Clone)]
pub struct W2VFit {
    pub model: W2VModel,
    /// Mean training loss per epoch.
    pub epoch_loss: Vec<f64>,
}

impl W2VModel {
    /// Untrained model: input rows uniform in `±0.5/dim`, output rows zero.
    pub fn initial(vocab_size: usize, cfg: &W2VConfig) -> Self {
        let dim = cfg.dim;
        let mut rng = rng::substream(cfg.seed, "w2v-init");
        let scale = 0.5 / dim as f32;
        let mut input: Vec<f32> =
            (0..vocab_size * dim).map(|_| (rng.random::<f32>() * 2.0 - 1.0) * scale).collect();
        let pad = dim.min(input.len());
        input[..pad].fill(0.0);
        W2VModel { vocab_size, dim, input, output: vec![0.0; vocab_size * dim] }
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `W(id)`, or `None` for ids outside the vocabulary.
    pub fn vector(&self, id: u32) -> Option<&[f32]> {
        let i = id as usize;
        (i < self.vocab_size).then(|| &self.input[i * self.dim..(i + 1) * self.dim])
    }

    pub fn context_vector(&self, id: u32) -> Option<&[f32]> {
        let i = id as usize;
        (i < self.vocab_size).then(|| &self.output[i * self.dim..(i + 1) * self.dim])
    }

    pub fn cosine(&self, a: u32, b: u32) -> Option<f64> {
        let (u, v) = (self.vector(a)?, self.vector(b)?);
        let dot: f64 = u.iter().zip(v).map(|(&x, &y)| f64::from(x) * f64::from(y)).sum();
        let nu: f64 = u.iter().map(|&x| f64::from(x).powi(2)).sum::<f64>().sqrt();
        let nv: f64 = v.iter().map(|&x| f64::from(x).powi(2)).sum::<f64>().sqrt();
        Some(if nu == 0.0 || nv == 0.0 { 0.0 } else { dot / (nu * nv) })
    }

    pub fn is_finite(&self) -> bool {
        self.input.iter().chain(&self.output).all(|x| x.is_finite())
    }

    /// Mean SGNS loss over every (center, context) pair of `corpus`, with negatives drawn
    /// from the corpus unigram^0.75 distribution by a generator seeded with `seed`.
    pub fn mean_loss(&self, corpus: &[Vec<u32>], window: usize, negatives: usize, seed: u64) -> f64 {
        let Ok(table) = NegativeTable::new(corpus, self.vocab_size) else {
            return 0.0;
        };
        let mut rng = rng::seeded(seed);
        let (mut total, mut count) = (0.0, 0usize);
        let to64 = |s: &[f32]| s.iter().map(|&x| f64::from(x)).collect::<Vec<_>>();
        for sentence in corpus {
            for (c, o) in extract_pairs(sentence, window) {
                let u = to64(self.vector(c).unwrap());
                let v = to64(self.context_vector(o).unwrap());
                let negs: Vec<Vec<f64>> = (0..negatives)
                    .map(|_| table.sample(&mut rng))
                    .filter(|&n| n != o)
                    .map(|n| to64(self.context_vector(n).unwrap()))
                    .collect();
                let neg_refs: Vec<&[f64]> = negs.iter().map(Vec::as_slice).collect();
                total += sgns_loss(&u, &v, &neg_refs);
                count += 1;
            }
        }
        if count == 0 {
            0.0
        } else {
            total / count as f64
        }
    }

    /// `"W2V1"`, u32 V, u32 h, then the input and output matrices as f32 row-major.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), FormatError> {
        binio::write_magic(&mut w, b"W2V1")?;
        binio::write_u32(&mut w, self.vocab_size as u32)?;
        binio::write_u32(&mut w, self.dim as u32)?;
        binio::write_f32s(&mut w, &self.input)?;
        binio::write_f32s(&mut w, &self.output)?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, FormatError> {
        binio::read_magic(&mut r, b"W2V1")?;
        let v = binio::read_u32(&mut r)?;
        let h = binio::read_u32(&mut r)?;
        let n = binio::checked_len(&[v, h], "word matrix")?;
        let input = binio::read_f32s(&mut r, n)?;
        let output = binio::read_f32s(&mut r, n)?;
        Ok(W2VModel { vocab_size: v as usize, dim: h as usize, input, output })
    }
}

/// Skip-gram (center, context) pairs in scan order: for each position, every other position
/// within `window`. Pairs touching [`PAD_ID`] are skipped.
pub fn extract_pairs(tokens: &[u32], window: usize) -> Vec<(u32, u32)> {
    let mut pairs = Vec::new();
    for (i, &center) in tokens.iter().enumerate() {
        if center == PAD_ID {
            continue;
        }
        let lo = i.saturating_sub(window);
        let hi = (i + window).min(tokens.len().saturating_sub(1));
        for (j, &ctx) in tokens.iter().enumerate().take(hi + 1).skip(lo) {
            if j != i && ctx != PAD_ID {
                pairs.push((center, ctx));
            }
        }
    }
    pairs
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `−ln σ(u·v) − Σᵢ ln σ(−u·nᵢ)`.
pub fn sgns_loss(u: &[f64], v: &[f64], negatives: &[&[f64]]) -> f64 {
    softplus(-dot(u, v)) + negatives.iter().map(|n| softplus(dot(u, n))).sum::<f64>()
}

/// Sampler for the unigram^0.75 noise distribution.
struct NegativeTable {
    cumulative: Vec<f64>,
}

impl NegativeTable {
    fn new(corpus: &[Vec<u32>], vocab_size: usize) -> Result<Self, EmbeddingError> {
        let mut counts = vec![0u64; vocab_size];
        for &t in corpus.iter().flatten() {
            let slot = counts
                .get_mut(t as usize)
                .ok_or(EmbeddingError::TokenOutOfRange(t, vocab_size))?;
            *slot += 1;
        }
        if let Some(pad) = counts.get_mut(PAD_ID as usize) {
            *pad = 0;
        }
        let mut acc = 0.0;
        let cumulative: Vec<f64> = counts
            .iter()
            .map(|&c| {
                acc += (c as f64).powf(0.75);
                acc
            })
            .collect();
        if acc == 0.0 {
            return Err(EmbeddingError::EmptyCorpus);
        }
        Ok(NegativeTable { cumulative })
    }

    fn sample(&self, rng: &mut StageRng) -> u32 {
        let total = *self.cumulative.last().unwrap();
        let u = rng.random::<f64>() * total;
        let i = self.cumulative.partition_point(|&c| c <= u);
        i.min(self.cumulative.len() - 1) as u32
    }
}

/// Trains skip-gram word vectors over `corpus` (token-id sentences below `vocab_size`).
///
/// Single-threaded plain SGD in corpus order with linearly decaying learning rate, so a
/// given seed always reproduces the same matrices.
pub fn train_sgns(
    corpus: &[Vec<u32>],
    vocab_size: usize,
    cfg: &W2VConfig,
) -> Result<W2VFit, EmbeddingError> {
    if cfg.dim == 0 || cfg.window == 0 || cfg.epochs == 0 || !(cfg.lr > 0.0) {
        return Err(EmbeddingError::Config(
            "dim, window and epochs must be positive and lr > 0".into(),
        ));
    }
    if corpus.is_empty() {
        return Err(EmbeddingError::EmptyCorpus);
    }
    let table = NegativeTable::new(corpus, vocab_size)?;
    let mut model = W2VModel::initial(vocab_size, cfg);
    let mut rng = rng::substream(cfg.seed, "w2v-train");

    let pairs_per_epoch: usize =
        corpus.iter().map(|s| extract_pairs(s, cfg.window).len()).sum();
    let total_pairs = (pairs_per_epoch * cfg.epochs).max(1) as f64;
    let h = cfg.dim;
    let mut grad_u = vec![0.0f32; h];
    let mut seen = 0usize;
    let mut epoch_loss = Vec::with_capacity(cfg.epochs);

    for _ in 0..cfg.epochs {
        let mut loss = 0.0;
        for sentence in corpus {
            for (center, ctx) in extract_pairs(sentence, cfg.window) {
                let lr = (cfg.lr * (1.0 - seen as f64 / total_pairs)).max(cfg.lr * 1e-4) as f32;
                seen += 1;
                grad_u.fill(0.0);
                let c = center as usize * h;
                let targets = std::iter::once((ctx, 1.0f32)).chain(
                    (0..cfg.negatives).filter_map(|_| {
                        let n = table.sample(&mut rng);
                        (n != ctx).then_some((n, 0.0))
                    }),
                );
                for (target, label) in targets.collect::<Vec<_>>() {
                    let o = target as usize * h;
                    let u = &model.input[c..c + h];
                    let v = &model.output[o..o + h];
                    let score: f32 = u.iter().zip(v).map(|(a, b)| a * b).sum();
                    let s = f64::from(score);
                    loss += if label > 0.5 { softplus(-s) } else { softplus(s) };
                    let g = (label - sigmoid(s) as f32) * lr;
                    for k in 0..h {
                        grad_u[k] += g * model.output[o + k];
                        model.output[o + k] += g * model.input[c + k];
                    }
                }
                for (w, g) in model.input[c..c + h].iter_mut().zip(&grad_u) {
                    *w += g;
                }
            }
        }
        epoch_loss.push(loss / pairs_per_epoch.max(1) as f64);
    }
    Ok(W2VFit { model, epoch_loss })
}
