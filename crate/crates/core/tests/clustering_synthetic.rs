use hc_core::clustering::{agreement, agreement_keyed, kmeans, vdgmm, KMeansConfig, VdgmmConfig};
use hc_core::corpus::{aggregate_by_ip, to_bow, Vocabulary, VocabularyMode};
use hc_core::lda::{embed_corpus, train_lda, InferConfig, LdaConfig};
use hc_core::rng;
use hc_core::synth::{default_spec, generate};
use ndarray::Array2;
use rand_distr::{Distribution, Normal};

fn blobs(seed: u64) -> (Array2<f64>, Vec<usize>) {
    let mut r = rng::seeded(seed);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let centers = [[0.0, 0.0, 0.0], [8.0, 0.0, 2.0], [0.0, 8.0, -2.0]];
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for (c, center) in centers.iter().enumerate() {
        for _ in 0..80 {
            data.extend(center.iter().map(|m| m + noise.sample(&mut r)));
            labels.push(c);
        }
    }
    (Array2::from_shape_vec((240, 3), data).unwrap(), labels)
}

#[test]
fn vdgmm_finds_three_gaussians() {
    let mut hits = 0;
    for seed in 0..10 {
        let (pts, labels) = blobs(seed);
        let res = vdgmm(pts.view(), &VdgmmConfig { kmax: 20, seed, ..Default::default() }).unwrap();
        for w in res.elbo_trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-8, "seed {seed}: {} -> {}", w[0], w[1]);
        }
        for row in res.responsibilities.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-9);
        }
        if res.effective_k == 3 {
            hits += 1;
            assert!(agreement(&res.assignment(), &labels).ari > 0.95);
        }
    }
    assert!(hits >= 9, "effective K = 3 in {hits}/10 runs");
}

#[test]
fn disjoint_families_separate_perfectly_through_lda() {
    let spec = default_spec()[..2].to_vec();
    let corpus = generate(&spec, 21).unwrap();
    let docs = aggregate_by_ip(&corpus.records);
    let vocab = Vocabulary::build(&docs, VocabularyMode::Full).unwrap();
    let bows: Vec<_> = docs.iter().map(|d| to_bow(&d.tokens, &vocab)).collect();
    let fit = train_lda(&bows, vocab.len(), &LdaConfig { k: 4, iters: 100, seed: 21, ..Default::default() }).unwrap();
    let keyed: Vec<(String, _)> = docs.iter().map(|d| d.key.clone()).zip(bows).collect();
    let theta = embed_corpus(&fit.model, &keyed, &InferConfig { seed: 21, ..Default::default() });
    let pts = Array2::from_shape_fn((theta.len(), 4), |(i, j)| theta[i].theta[j]);
    let km = kmeans(pts.view(), &KMeansConfig { k: 2, seed: 21, ..Default::default() }).unwrap();
    let predicted: Vec<(String, usize)> = theta.iter().map(|t| t.key.clone()).zip(km.assignment).collect();
    let truth: Vec<(String, String)> = corpus.truth.into_iter().collect();
    assert_eq!(agreement_keyed(&predicted, &truth).unwrap().ari, 1.0);
}
