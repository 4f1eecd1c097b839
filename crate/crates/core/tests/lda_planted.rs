use hc_core::corpus::bow_of_ids;
use hc_core::lda::{generate_document, infer_theta, train_lda, InferConfig, LdaConfig};
use hc_core::LdaModel;
use statrs::distribution::{ChiSquared, ContinuousCDF};

const TOPIC_A: [f64; 6] = [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 0.0, 0.0, 0.0];
const TOPIC_B: [f64; 6] = [0.0, 0.0, 0.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0];

/// 100 pure topic-A documents followed by 100 pure topic-B documents of 50 words.
fn planted_corpus(seed: u64) -> Vec<Vec<u32>> {
    let a = LdaModel::from_topics(vec![TOPIC_A.to_vec()], 1.0, 0.01).unwrap();
    let b = LdaModel::from_topics(vec![TOPIC_B.to_vec()], 1.0, 0.01).unwrap();
    (0..200u64)
        .map(|d| generate_document(if d < 100 { &a } else { &b }, 50, seed * 1000 + d))
        .collect()
}

fn tv(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

#[test]
fn recovers_planted_topics() {
    for seed in 0..3 {
        let docs = planted_corpus(seed);
        let bows: Vec<_> = docs.iter().map(|d| bow_of_ids(d)).collect();
        let fit = train_lda(&bows, 6, &LdaConfig { k: 2, iters: 200, seed, ..Default::default() }).unwrap();
        let m = &fit.model;
        for row in m.topics() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        // align by the cheaper of the two matchings
        let straight = tv(m.topic(0), &TOPIC_A).max(tv(m.topic(1), &TOPIC_B));
        let crossed = tv(m.topic(1), &TOPIC_A).max(tv(m.topic(0), &TOPIC_B));
        let (err, a_topic) = if straight <= crossed { (straight, 0) } else { (crossed, 1) };
        assert!(err < 0.1, "seed {seed}: tv {err}");

        let icfg = InferConfig { seed, ..Default::default() };
        let theta = infer_theta(m, &bow_of_ids(&[0, 1, 2, 0, 1, 2, 2, 1]), &icfg);
        assert!(theta[a_topic] > 0.8, "{theta:?}");
        // every training document is separated by its dominant topic
        for (d, bow) in bows.iter().enumerate() {
            let t = infer_theta(m, bow, &InferConfig { seed: d as u64, ..Default::default() });
            assert!((t.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            let expected = if d < 100 { a_topic } else { 1 - a_topic };
            assert!(t[expected] > 0.5, "doc {d}: {t:?}");
        }
    }
}

#[test]
fn generated_unigrams_follow_mixture_marginal() {
    let topics = vec![vec![0.4, 0.3, 0.1, 0.1, 0.05, 0.05], vec![0.05, 0.05, 0.1, 0.2, 0.3, 0.3]];
    let model = LdaModel::from_topics(topics.clone(), 0.5, 0.01).unwrap();
    // one-word documents are independent draws from Σ_j E[θ_j] φ_j with E[θ_j] = 1/K
    let n = 10_000;
    let mut counts = [0f64; 6];
    for s in 0..n {
        let doc = generate_document(&model, 1, s as u64);
        counts[doc[0] as usize] += 1.0;
    }
    let chi2: f64 = (0..6)
        .map(|w| {
            let expected = n as f64 * 0.5 * (topics[0][w] + topics[1][w]);
            (counts[w] - expected).powi(2) / expected
        })
        .sum();
    let p = 1.0 - ChiSquared::new(5.0).unwrap().cdf(chi2);
    assert!(p > 0.01, "chi2 {chi2}, p {p}");
}
