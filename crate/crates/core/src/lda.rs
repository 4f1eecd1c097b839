//! Latent Dirichlet allocation trained by collapsed Gibbs sampling.
//!
//! Documents are bags of words over a vocabulary of size `V`. Training returns the smoothed
//! topic-word matrix `phi` of the final sampler state; documents are then embedded as their
//! posterior topic mixture θ by Gibbs sampling topic assignments against the frozen `phi`.

use std::io::{BufRead, Read, Write};

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use thiserror::Error;

use crate::binio::{self, FormatError};
use crate::corpus::Bow;
use crate::rng::{self, StageRng};

#[derive(Debug, Error)]
pub enum LdaError {
    #[error("corpus contains no documents")]
    EmptyCorpus,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("word id {0} outside vocabulary of size {1}")]
    WordOutOfRange(u32, usize),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("theta file line {0}: {1}")]
    BadTheta(usize, String),
}

/// Non-fatal conditions noticed during training.
#[derive(Debug, Clone, PartialEq)]
pub enum LdaWarning {
    /// More topics than documents; most topics cannot be identified.
    KExceedsUsefulRange { k: usize, documents: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LdaConfig {
    pub k: usize,
    /// Symmetric document-topic concentration; `None` means `1/k`.
    pub alpha: Option<f64>,
    pub beta: f64,
    pub iters: usize,
    pub seed: u64,
}

impl Default for LdaConfig {
    fn default() -> Self {
        LdaConfig { k: 200, alpha: None, beta: 0.01, iters: 200, seed: 0 }
    }
}

impl LdaConfig {
    pub fn alpha(&self) -> f64 {
        self.alpha.unwrap_or(1.0 / self.k as f64)
    }
}

/// Trained topics plus the Dirichlet concentrations they were trained with.
#[derive(Debug, Clone, PartialEq)]
pub struct LdaModel {
    k: usize,
    vocab_size: usize,
    pub alpha: f64,
    pub beta: f64,
    /// `k × vocab_size`, row-major; row `j` is p(w | topic j).
    phi: Vec<f64>,
    /// Seed of the training run; not stored in the model file.
    pub seed: Option<u64>,
}

impl LdaModel {
    /// Builds a model from explicit topic rows. Rows must be probability vectors.
    pub fn from_topics(topics: Vec<Vec<f64>>, alpha: f64, beta: f64) -> Result<Self, LdaError> {
        let k = topics.len();
        let v = topics.first().map_or(0, Vec::len);
        if k == 0 || v == 0 || topics.iter().any(|r| r.len() != v) {
            return Err(LdaError::Config("topics must form a non-empty rectangular matrix".into()));
        }
        for row in &topics {
            let s: f64 = row.iter().sum();
            if row.iter().any(|&p| !(p >= 0.0)) || (s - 1.0).abs() > 1e-9 {
                return Err(LdaError::Config("topic rows must be probability vectors".into()));
            }
        }
        if !(alpha > 0.0 && beta > 0.0) {
            return Err(LdaError::Config("alpha and beta must be positive".into()));
        }
        Ok(LdaModel { k, vocab_size: v, alpha, beta, phi: topics.concat(), seed: None })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn topic(&self, j: usize) -> &[f64] {
        &self.phi[j * self.vocab_size..(j + 1) * self.vocab_size]
    }

    pub fn topics(&self) -> impl Iterator<Item = &[f64]> {
        self.phi.chunks(self.vocab_size)
    }

    fn phi_at(&self, j: usize, w: usize) -> f64 {
        self.phi[j * self.vocab_size + w]
    }

    /// `"LDA1"`, u32 K, u32 V, f64 alpha, f64 beta, then K·V f64 row-major, little-endian.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), FormatError> {
        binio::write_magic(&mut w, b"LDA1")?;
        binio::write_u32(&mut w, self.k as u32)?;
        binio::write_u32(&mut w, self.vocab_size as u32)?;
        binio::write_f64s(&mut w, &[self.alpha, self.beta])?;
        binio::write_f64s(&mut w, &self.phi)?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, FormatError> {
        binio::read_magic(&mut r, b"LDA1")?;
        let k = binio::read_u32(&mut r)?;
        let v = binio::read_u32(&mut r)?;
        let n = binio::checked_len(&[k, v], "phi")?;
        let ab = binio::read_f64s(&mut r, 2)?;
        let phi = binio::read_f64s(&mut r, n)?;
        if k == 0 || v == 0 {
            return Err(FormatError::Header("K and V must be positive".into()));
        }
        Ok(LdaModel {
            k: k as usize,
            vocab_size: v as usize,
            alpha: ab[0],
            beta: ab[1],
            phi,
            seed: None,
        })
    }
}

#[derive(Debug)]
pub struct LdaFit {
    pub model: LdaModel,
    pub warnings: Vec<LdaWarning>,
}

/// Collapsed Gibbs sampler state over a fixed corpus.
pub(crate) struct GibbsState {
    k: usize,
    v: usize,
    alpha: f64,
    beta: f64,
    /// Word id of every token, documents concatenated.
    words: Vec<u32>,
    /// Topic of every token.
    topics: Vec<u32>,
    /// Token range of each document within `words`.
    doc_ranges: Vec<(usize, usize)>,
    doc_topic: Vec<u32>,
    topic_word: Vec<u32>,
    topic_total: Vec<u64>,
    rng: StageRng,
    weights: Vec<f64>,
}

impl GibbsState {
    pub(crate) fn new(docs: &[Bow], v: usize, cfg: &LdaConfig) -> Result<Self, LdaError> {
        let k = cfg.k;
        let mut rng = rng::seeded(cfg.seed);
        let mut words = Vec::new();
        let mut doc_ranges = Vec::with_capacity(docs.len());
        for bow in docs {
            let start = words.len();
            for (&w, &c) in bow {
                if w as usize >= v {
                    return Err(LdaError::WordOutOfRange(w, v));
                }
                words.extend(std::iter::repeat_n(w, c as usize));
            }
            doc_ranges.push((start, words.len()));
        }
        let mut state = GibbsState {
            k,
            v,
            alpha: cfg.alpha(),
            beta: cfg.beta,
            topics: Vec::with_capacity(words.len()),
            words,
            doc_ranges,
            doc_topic: vec![0; docs.len() * k],
            topic_word: vec![0; k * v],
            topic_total: vec![0; k],
            rng: rng::seeded(0),
            weights: vec![0.0; k],
        };
        for (d, &(s, e)) in state.doc_ranges.iter().enumerate() {
            for i in s..e {
                let z = rng.random_range(0..k);
                state.topics.push(z as u32);
                let w = state.words[i] as usize;
                state.doc_topic[d * k + z] += 1;
                state.topic_word[z * v + w] += 1;
                state.topic_total[z] += 1;
            }
        }
        state.rng = rng;
        Ok(state)
    }

    pub(crate) fn sweep(&mut self) {
        let (k, v) = (self.k, self.v);
        let vbeta = v as f64 * self.beta;
        for d in 0..self.doc_ranges.len() {
            let (s, e) = self.doc_ranges[d];
            for i in s..e {
                let w = self.words[i] as usize;
                let old = self.topics[i] as usize;
                self.doc_topic[d * k + old] -= 1;
                self.topic_word[old * v + w] -= 1;
                self.topic_total[old] -= 1;

                let mut total = 0.0;
                for j in 0..k {
                    let p = (f64::from(self.doc_topic[d * k + j]) + self.alpha)
                        * (f64::from(self.topic_word[j * v + w]) + self.beta)
                        / (self.topic_total[j] as f64 + vbeta);
                    total += p;
                    self.weights[j] = total;
                }
                let new = sample_cumulative(&self.weights, self.rng.random::<f64>() * total);

                self.topics[i] = new as u32;
                self.doc_topic[d * k + new] += 1;
                self.topic_word[new * v + w] += 1;
                self.topic_total[new] += 1;
            }
        }
    }

    /// Topic counts of document `d`.
    #[cfg(test)]
    fn doc_counts(&self, d: usize) -> &[u32] {
        &self.doc_topic[d * self.k..(d + 1) * self.k]
    }

    #[cfg(test)]
    fn doc_len(&self, d: usize) -> usize {
        let (s, e) = self.doc_ranges[d];
        e - s
    }

    fn phi(&self) -> Vec<f64> {
        let vbeta = self.v as f64 * self.beta;
        let mut phi = Vec::with_capacity(self.k * self.v);
        for j in 0..self.k {
            let denom = self.topic_total[j] as f64 + vbeta;
            phi.extend(
                self.topic_word[j * self.v..(j + 1) * self.v]
                    .iter()
                    .map(|&c| (f64::from(c) + self.beta) / denom),
            );
        }
        phi
    }
}

/// Index of the first cumulative weight exceeding `u`.
fn sample_cumulative(cumulative: &[f64], u: f64) -> usize {
    cumulative
        .iter()
        .position(|&c| u < c)
        .unwrap_or(cumulative.len() - 1)
}

/// Trains an LDA model on bag-of-words documents with word ids below `vocab_size`.
///
/// `phi[j][w] = (n_jw + beta) / (n_j + V·beta)` from the sampler state after `cfg.iters`
/// sweeps. Identical inputs and seed give bitwise-identical output.
pub fn train_lda(docs: &[Bow], vocab_size: usize, cfg: &LdaConfig) -> Result<LdaFit, LdaError> {
    if docs.is_empty() {
        return Err(LdaError::EmptyCorpus);
    }
    validate(cfg, vocab_size)?;
    let mut warnings = Vec::new();
    if cfg.k > docs.len() {
        log::warn!("K = {} exceeds the number of documents ({})", cfg.k, docs.len());
        warnings.push(LdaWarning::KExceedsUsefulRange { k: cfg.k, documents: docs.len() });
    }
    let mut state = GibbsState::new(docs, vocab_size, cfg)?;
    for _ in 0..cfg.iters {
        state.sweep();
    }
    let model = LdaModel {
        k: cfg.k,
        vocab_size,
        alpha: cfg.alpha(),
        beta: cfg.beta,
        phi: state.phi(),
        seed: Some(cfg.seed),
    };
    Ok(LdaFit { model, warnings })
}

fn validate(cfg: &LdaConfig, vocab_size: usize) -> Result<(), LdaError> {
    if cfg.k == 0 {
        return Err(LdaError::Config("K must be at least 1".into()));
    }
    if cfg.iters == 0 {
        return Err(LdaError::Config("iters must be at least 1".into()));
    }
    if vocab_size == 0 {
        return Err(LdaError::Config("vocabulary is empty".into()));
    }
    if !(cfg.alpha() > 0.0 && cfg.beta > 0.0) {
        return Err(LdaError::Config("alpha and beta must be positive".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferConfig {
    pub iters: usize,
    pub seed: u64,
    /// When set, θ is averaged over this trailing fraction of sweeps instead of taken from
    /// the last one.
    pub average_tail: Option<f64>,
}

impl Default for InferConfig {
    fn default() -> Self {
        InferConfig { iters: 50, seed: 0, average_tail: None }
    }
}

/// A document's inferred topic mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaEmbedding {
    pub key: String,
    pub theta: Vec<f64>,
}

/// Posterior topic mixture of one document under a frozen model.
///
/// Unknown word ids are skipped; an empty document returns the prior mean `1/K`.
pub fn infer_theta(model: &LdaModel, bow: &Bow, cfg: &InferConfig) -> Vec<f64> {
    let k = model.k;
    let alpha = model.alpha;
    let words: Vec<usize> = bow
        .iter()
        .filter(|(&w, _)| (w as usize) < model.vocab_size)
        .flat_map(|(&w, &c)| std::iter::repeat_n(w as usize, c as usize))
        .collect();
    let n = words.len() as f64;
    let normalize = |counts: &[u32]| -> Vec<f64> {
        counts
            .iter()
            .map(|&c| (f64::from(c) + alpha) / (n + k as f64 * alpha))
            .collect()
    };
    if words.is_empty() {
        return vec![1.0 / k as f64; k];
    }

    let mut rng = rng::seeded(cfg.seed);
    let mut counts = vec![0u32; k];
    let mut topics: Vec<usize> = words
        .iter()
        .map(|_| {
            let z = rng.random_range(0..k);
            counts[z] += 1;
            z
        })
        .collect();
    let iters = cfg.iters.max(1);
    let tail = cfg
        .average_tail
        .map(|f| ((f.clamp(0.0, 1.0) * iters as f64).ceil() as usize).clamp(1, iters));
    let mut acc = vec![0.0; k];
    let mut weights = vec![0.0; k];
    for sweep in 0..iters {
        for (i, &w) in words.iter().enumerate() {
            counts[topics[i]] -= 1;
            let mut total = 0.0;
            for j in 0..k {
                total += (f64::from(counts[j]) + alpha) * model.phi_at(j, w);
                weights[j] = total;
            }
            let z = if total > 0.0 {
                sample_cumulative(&weights, rng.random::<f64>() * total)
            } else {
                rng.random_range(0..k)
            };
            topics[i] = z;
            counts[z] += 1;
        }
        if let Some(t) = tail {
            if sweep >= iters - t {
                for (a, th) in acc.iter_mut().zip(normalize(&counts)) {
                    *a += th;
                }
            }
        }
    }
    let theta = match tail {
        Some(t) => acc.into_iter().map(|a| a / t as f64).collect(),
        None => normalize(&counts),
    };
    renormalize(theta)
}

fn renormalize(mut v: Vec<f64>) -> Vec<f64> {
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
    v
}

fn bow_seed(seed: u64, bow: &Bow) -> u64 {
    bow.iter().fold(rng::derive_seed(seed, "infer"), |h, (&w, &c)| {
        rng::derive_indexed(h, (u64::from(w) << 32) | u64::from(c))
    })
}

/// Embeds every document. Each document's sampler is seeded from `cfg.seed` and the
/// document's own content, so identical documents get identical θ regardless of position or
/// thread count.
pub fn embed_corpus(model: &LdaModel, docs: &[(String, Bow)], cfg: &InferConfig) -> Vec<ThetaEmbedding> {
    docs.par_iter()
        .map(|(key, bow)| {
            let c = InferConfig { seed: bow_seed(cfg.seed, bow), ..cfg.clone() };
            ThetaEmbedding { key: key.clone(), theta: infer_theta(model, bow, &c) }
        })
        .collect()
}

/// Samples a document of `n` words: θ ~ Dirichlet(alpha), then per word a topic from θ and
/// a word from that topic.
pub fn generate_document(model: &LdaModel, n: usize, seed: u64) -> Vec<u32> {
    let mut rng = rng::seeded(seed);
    let theta = sample_dirichlet(model.k, model.alpha, &mut rng);
    let topic_cdf = cumulative(&theta);
    let word_cdfs: Vec<Vec<f64>> = model.topics().map(cumulative).collect();
    (0..n)
        .map(|_| {
            let t = sample_cumulative(&topic_cdf, rng.random::<f64>() * topic_cdf[model.k - 1]);
            let cdf = &word_cdfs[t];
            sample_cumulative(cdf, rng.random::<f64>() * cdf[cdf.len() - 1]) as u32
        })
        .collect()
}

fn cumulative(p: &[f64]) -> Vec<f64> {
    p.iter()
        .scan(0.0, |acc, &x| {
            *acc += x;
            Some(*acc)
        })
        .collect()
}

fn sample_dirichlet(k: usize, alpha: f64, rng: &mut StageRng) -> Vec<f64> {
    if k == 1 {
        return vec![1.0];
    }
    let gamma = Gamma::new(alpha, 1.0).expect("alpha > 0");
    let draws: Vec<f64> = (0..k).map(|_| gamma.sample(rng)).collect();
    let s: f64 = draws.iter().sum();
    if s > 0.0 && s.is_finite() {
        draws.into_iter().map(|g| g / s).collect()
    } else {
        // every gamma draw underflowed (tiny alpha): the limit is a point mass on one topic
        let mut theta = vec![0.0; k];
        theta[rng.random_range(0..k)] = 1.0;
        theta
    }
}

/// `key,theta_0,…,theta_{K-1}` with a header row.
pub fn write_theta_csv<W: Write>(mut w: W, rows: &[ThetaEmbedding]) -> std::io::Result<()> {
    let k = rows.first().map_or(0, |r| r.theta.len());
    write!(w, "key")?;
    for j in 0..k {
        write!(w, ",theta_{j}")?;
    }
    writeln!(w)?;
    for r in rows {
        write!(w, "{}", r.key)?;
        for x in &r.theta {
            write!(w, ",{x}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn read_theta_csv<R: BufRead>(r: R) -> Result<Vec<ThetaEmbedding>, LdaError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(FormatError::from)?;
        if i == 0 || line.is_empty() {
            continue;
        }
        let mut cols = line.split(',');
        let key = cols.next().unwrap_or_default().to_string();
        let theta = cols
            .map(|c| c.parse::<f64>().map_err(|e| LdaError::BadTheta(i + 1, e.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        out.push(ThetaEmbedding { key, theta });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::bow_of_ids;
    use proptest::prelude::*;

    fn assert_simplex(v: &[f64]) {
        assert!(v.iter().all(|&x| x >= 0.0));
        assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    fn small_corpus() -> Vec<Bow> {
        vec![
            bow_of_ids(&[0, 1, 1, 2, 5]),
            bow_of_ids(&[3, 4, 4, 5]),
            bow_of_ids(&[0, 0, 2]),
            bow_of_ids(&[]),
        ]
    }

    #[test]
    fn single_topic_is_smoothed_word_frequency() {
        let docs = small_corpus();
        let cfg = LdaConfig { k: 1, iters: 3, seed: 1, ..Default::default() };
        let model = train_lda(&docs, 6, &cfg).unwrap().model;
        let counts = [3.0, 2.0, 2.0, 1.0, 2.0, 2.0];
        let total: f64 = counts.iter().sum();
        for (w, &c) in counts.iter().enumerate() {
            let expected = (c + 0.01) / (total + 6.0 * 0.01);
            assert!((model.topic(0)[w] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn training_is_deterministic() {
        let docs = small_corpus();
        let cfg = LdaConfig { k: 3, iters: 20, seed: 9, ..Default::default() };
        let a = train_lda(&docs, 6, &cfg).unwrap().model;
        let b = train_lda(&docs, 6, &cfg).unwrap().model;
        let bits = |m: &LdaModel| m.phi.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        for row in a.topics() {
            assert_simplex(row);
        }
    }

    #[test]
    fn rejects_bad_input() {
        let cfg = LdaConfig { k: 2, iters: 1, ..Default::default() };
        assert!(matches!(train_lda(&[], 6, &cfg), Err(LdaError::EmptyCorpus)));
        let bad = [bow_of_ids(&[9])];
        assert!(matches!(train_lda(&bad, 6, &cfg), Err(LdaError::WordOutOfRange(9, 6))));
        let zero_k = LdaConfig { k: 0, ..cfg.clone() };
        assert!(matches!(train_lda(&small_corpus(), 6, &zero_k), Err(LdaError::Config(_))));
    }

    #[test]
    fn warns_when_k_exceeds_documents() {
        let cfg = LdaConfig { k: 10, iters: 1, ..Default::default() };
        let fit = train_lda(&small_corpus(), 6, &cfg).unwrap();
        assert_eq!(
            fit.warnings,
            vec![LdaWarning::KExceedsUsefulRange { k: 10, documents: 4 }]
        );
    }

    #[test]
    fn sampler_conserves_document_counts() {
        let docs = small_corpus();
        let cfg = LdaConfig { k: 4, iters: 1, seed: 3, ..Default::default() };
        let mut state = GibbsState::new(&docs, 6, &cfg).unwrap();
        for _ in 0..25 {
            state.sweep();
            for d in 0..docs.len() {
                let s: u32 = state.doc_counts(d).iter().sum();
                assert_eq!(s as usize, state.doc_len(d));
            }
            assert_eq!(state.topic_total.iter().sum::<u64>() as usize, state.words.len());
        }
    }

    #[test]
    fn empty_document_gets_prior_mean() {
        let model = LdaModel::from_topics(vec![vec![0.5, 0.5]; 4], 0.25, 0.01).unwrap();
        let theta = infer_theta(&model, &Bow::new(), &InferConfig::default());
        assert_eq!(theta, vec![0.25; 4]);
    }

    #[test]
    fn tail_averaging_stays_on_simplex() {
        let model =
            LdaModel::from_topics(vec![vec![0.7, 0.3], vec![0.2, 0.8]], 0.5, 0.01).unwrap();
        let cfg = InferConfig { iters: 30, seed: 2, average_tail: Some(0.2) };
        assert_simplex(&infer_theta(&model, &bow_of_ids(&[0, 0, 1]), &cfg));
    }

    #[test]
    fn degenerate_generator() {
        let mut row = vec![0.0; 8];
        row[7] = 1.0;
        let model = LdaModel::from_topics(vec![row], 1.0, 0.01).unwrap();
        assert_eq!(generate_document(&model, 5, 3), vec![7; 5]);
        assert!(generate_document(&model, 0, 3).is_empty());
    }

    #[test]
    fn embed_corpus_maps_keys_and_dedups_by_content() {
        let model =
            LdaModel::from_topics(vec![vec![0.6, 0.4], vec![0.1, 0.9]], 0.5, 0.01).unwrap();
        let keys = ["a", "b", "c"];
        let input: Vec<(String, Bow)> = keys
            .iter()
            .zip([vec![0, 1, 1], vec![0, 0], vec![0, 1, 1]])
            .map(|(k, ids)| (k.to_string(), bow_of_ids(&ids)))
            .collect();
        let out = embed_corpus(&model, &input, &InferConfig::default());
        assert_eq!(out.iter().map(|e| e.key.as_str()).collect::<Vec<_>>(), keys);
        assert_eq!(out[0].theta, out[2].theta);
    }

    #[test]
    fn model_file_round_trip() {
        let model = train_lda(&small_corpus(), 6, &LdaConfig { k: 2, iters: 5, ..Default::default() })
            .unwrap()
            .model;
        let mut buf = Vec::new();
        model.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"LDA1");
        assert_eq!(buf.len(), 4 + 8 + 16 + 2 * 6 * 8);
        let back = LdaModel::read_from(&buf[..]).unwrap();
        assert_eq!(back.phi, model.phi);
        assert_eq!((back.k(), back.vocab_size(), back.alpha), (2, 6, 0.5));
        assert!(LdaModel::read_from(&b"XXXX"[..]).is_err());
    }

    #[test]
    fn theta_csv_round_trip() {
        let rows = vec![ThetaEmbedding { key: "10.0.0.1".into(), theta: vec![0.25, 0.75] }];
        let mut buf = Vec::new();
        write_theta_csv(&mut buf, &rows).unwrap();
        assert!(buf.starts_with(b"key,theta_0,theta_1\n"));
        assert_eq!(read_theta_csv(&buf[..]).unwrap(), rows);
    }

    proptest! {
        #[test]
        fn theta_is_a_probability_vector(ids in proptest::collection::vec(0u32..6, 0..40), seed in any::<u64>()) {
            let model = LdaModel::from_topics(
                vec![vec![0.3, 0.3, 0.1, 0.1, 0.1, 0.1], vec![0.05, 0.05, 0.1, 0.2, 0.3, 0.3], vec![1.0 / 6.0; 6]],
                1.0 / 3.0,
                0.01,
            ).unwrap();
            let theta = infer_theta(&model, &bow_of_ids(&ids), &InferConfig { iters: 10, seed, average_tail: None });
            prop_assert_eq!(theta.len(), 3);
            prop_assert!(theta.iter().all(|&x| x >= 0.0));
            prop_assert!((theta.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn word_order_does_not_matter(mut ids in proptest::collection::vec(0u32..6, 1..30), seed in any::<u64>()) {
            let model = LdaModel::from_topics(
                vec![vec![0.5, 0.3, 0.1, 0.05, 0.03, 0.02], vec![0.02, 0.03, 0.05, 0.1, 0.3, 0.5]],
                0.5,
                0.01,
            ).unwrap();
            let cfg = InferConfig { iters: 10, seed, average_tail: None };
            let a = infer_theta(&model, &bow_of_ids(&ids), &cfg);
            ids.reverse();
            let b = infer_theta(&model, &bow_of_ids(&ids), &cfg);
            prop_assert_eq!(a, b);
        }
    }
}
