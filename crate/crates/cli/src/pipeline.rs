//! The end-to-end pipelines and the per-stage helpers the subcommands share with them.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use hc_core::clustering::{
    self, agreement_keyed, kmeans, make_report, read_labels, vdgmm, Agreement, CovarianceType, KMeansConfig,
    VdgmmConfig, VdgmmResult, VdgmmWarning,
};
use hc_core::corpus::{self, encode_documents, parse_records, read_documents, write_documents, write_records};
use hc_core::embedding::{
    self, embed_session_matrix, encode_corpus, train_autoencoder, train_sgns, AeConfig, W2VConfig,
};
use hc_core::lda::{self, embed_corpus, train_lda, InferConfig, LdaConfig};
use hc_core::signals::{self, build_signals, co_activity_matrix, distance_series, shared_signature_count};
use hc_core::synth::{self, FamilySpec, LabeledCorpus};
use hc_core::{
    AutoencoderParams, Document, LdaModel, SessionEmbedding, SessionMatrix, SessionRecord, Signal,
    ThetaEmbedding, Vocabulary, VocabularyMode, W2VModel,
};
use ndarray::Array2;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Pipeline, PipelineConfig, SynthPreset};
use crate::error::{BoxError, PipelineError};
use crate::manifest::{create, names, write_file, RunOutcome, Runner};

pub const VOCAB: &str = "vocab.tsv";
pub const DOCUMENTS: &str = "documents.jsonl";
pub const LDA_MODEL: &str = "lda.model";
pub const THETA: &str = "theta.csv";
pub const ASSIGNMENTS: &str = "assignments.csv";
pub const REPORT: &str = "report.txt";
pub const SCORE: &str = "score.json";
pub const W2V: &str = "w2v.bin";
pub const AE: &str = "ae.bin";
pub const AE_LOSS: &str = "ae_loss.csv";
pub const EMBEDDINGS: &str = "embeddings.bemb";
pub const EMBEDDINGS_SIDECAR: &str = "embeddings.csv";
pub const VDGMM: &str = "vdgmm.json";
pub const COACTIVITY: &str = "coactivity.csv";
pub const SIGNATURES: &str = "signatures.csv";
pub const SESSIONS: &str = "sessions.jsonl";
pub const TRUTH: &str = "truth.csv";
pub const SESSION_TRUTH: &str = "session_truth.csv";

/// Granularity of documents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Level {
    Ip,
    Session,
}

pub fn read_sessions(path: &Path, strict: bool) -> Result<Vec<SessionRecord>, BoxError> {
    let parsed = parse_records(BufReader::new(File::open(path)?), strict)?;
    for m in &parsed.malformed {
        log::warn!("{}:{}: skipped malformed record: {}", path.display(), m.line, m.reason);
    }
    Ok(parsed.records)
}

pub fn build_corpus(
    records: &[SessionRecord],
    level: Level,
    mode: VocabularyMode,
) -> Result<(Vocabulary, Vec<Document>), BoxError> {
    let token_docs = match level {
        Level::Ip => corpus::aggregate_by_ip(records),
        Level::Session => corpus::sessions_as_documents(records),
    };
    let vocab = Vocabulary::build(&token_docs, mode)?;
    let docs = encode_documents(&token_docs, &vocab);
    Ok((vocab, docs))
}

pub fn write_corpus(dir: &Path, vocab: &Vocabulary, docs: &[Document]) -> Result<(), BoxError> {
    let mut w = create(dir, VOCAB)?;
    vocab.write_tsv(&mut w)?;
    w.flush()?;
    let mut w = create(dir, DOCUMENTS)?;
    write_documents(&mut w, docs)?;
    w.flush()?;
    Ok(())
}

pub fn read_vocab(path: &Path) -> Result<Vocabulary, BoxError> {
    Ok(Vocabulary::read_tsv(BufReader::new(File::open(path)?))?)
}

pub fn read_docs(path: &Path) -> Result<Vec<Document>, BoxError> {
    Ok(read_documents(BufReader::new(File::open(path)?))?)
}

pub fn read_corpus(dir: &Path) -> Result<(Vocabulary, Vec<Document>), BoxError> {
    Ok((read_vocab(&dir.join(VOCAB))?, read_docs(&dir.join(DOCUMENTS))?))
}

pub fn train_lda_model(docs: &[Document], vocab_size: usize, cfg: &LdaConfig) -> Result<LdaModel, BoxError> {
    let bows: Vec<_> = docs.iter().map(Document::bow).collect();
    let fit = train_lda(&bows, vocab_size, cfg)?;
    Ok(fit.model)
}

pub fn write_lda_model(dir: &Path, name: &str, model: &LdaModel) -> Result<(), BoxError> {
    let mut w = create(dir, name)?;
    model.write_to(&mut w)?;
    w.flush()?;
    Ok(())
}

pub fn read_lda_model(path: &Path) -> Result<LdaModel, BoxError> {
    Ok(LdaModel::read_from(BufReader::new(File::open(path)?))?)
}

pub fn embed_theta(model: &LdaModel, docs: &[Document], cfg: &InferConfig) -> Vec<ThetaEmbedding> {
    let keyed: Vec<_> = docs.iter().map(|d| (d.key.clone(), d.bow())).collect();
    embed_corpus(model, &keyed, cfg)
}

pub fn write_theta(dir: &Path, name: &str, rows: &[ThetaEmbedding]) -> Result<(), BoxError> {
    let mut w = create(dir, name)?;
    lda::write_theta_csv(&mut w, rows)?;
    w.flush()?;
    Ok(())
}

pub fn read_theta(path: &Path) -> Result<Vec<ThetaEmbedding>, BoxError> {
    Ok(lda::read_theta_csv(BufReader::new(File::open(path)?))?)
}

/// Stacks equal-length rows into a matrix.
pub fn matrix(rows: &[&[f64]]) -> Result<Array2<f64>, BoxError> {
    let d = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != d) {
        return Err("rows of unequal length".into());
    }
    Ok(Array2::from_shape_fn((rows.len(), d), |(i, j)| rows[i][j]))
}

pub fn theta_matrix(rows: &[ThetaEmbedding]) -> Result<Array2<f64>, BoxError> {
    matrix(&rows.iter().map(|r| r.theta.as_slice()).collect::<Vec<_>>())
}

pub fn write_assignments(dir: &Path, name: &str, keys: &[String], clusters: &[usize]) -> Result<(), BoxError> {
    let mut w = create(dir, name)?;
    clustering::write_assignments(&mut w, keys, clusters)?;
    w.flush()?;
    Ok(())
}

pub fn read_assignments(path: &Path) -> Result<Vec<(String, usize)>, BoxError> {
    read_labels(BufReader::new(File::open(path)?), 1)?
        .into_iter()
        .map(|(k, c)| Ok((k, c.parse::<usize>().map_err(|e| format!("cluster id {c:?}: {e}"))?)))
        .collect()
}

/// Agreement of an assignment with the labels in column `column` of a truth CSV.
pub fn score(assignment: &[(String, usize)], truth: &Path, column: usize) -> Result<Agreement, BoxError> {
    let labels = read_labels(BufReader::new(File::open(truth)?), column)?;
    Ok(agreement_keyed(assignment, &labels)?)
}

pub fn train_w2v(docs: &[Document], vocab_size: usize, cfg: &W2VConfig) -> Result<W2VModel, BoxError> {
    let sentences: Vec<Vec<u32>> = docs.iter().map(|d| d.tokens.clone()).collect();
    let fit = train_sgns(&sentences, vocab_size, cfg)?;
    if let Some(l) = fit.epoch_loss.last() {
        log::info!("w2v: final epoch loss {l:.4}");
    }
    Ok(fit.model)
}

pub fn write_w2v(dir: &Path, name: &str, model: &W2VModel) -> Result<(), BoxError> {
    let mut w = create(dir, name)?;
    model.write_to(&mut w)?;
    w.flush()?;
    Ok(())
}

pub fn read_w2v(path: &Path) -> Result<W2VModel, BoxError> {
    Ok(W2VModel::read_from(BufReader::new(File::open(path)?))?)
}

pub fn session_matrices(w2v: &W2VModel, docs: &[Document], n: usize) -> Vec<SessionMatrix> {
    docs.par_iter().map(|d| embed_session_matrix(w2v, &d.key, &d.tokens, n)).collect()
}

/// Trains the autoencoder and writes the parameters plus a `step,loss` trace.
pub fn train_ae(dir: &Path, sessions: &[SessionMatrix], cfg: &AeConfig) -> Result<AutoencoderParams, BoxError> {
    let fit = train_autoencoder(sessions, cfg)?;
    log::info!("autoencoder: masked MSE {:.6} -> {:.6}", fit.initial_loss, fit.final_loss);
    let mut w = create(dir, AE)?;
    fit.params.write_to(&mut w)?;
    w.flush()?;
    let mut w = create(dir, AE_LOSS)?;
    writeln!(w, "step,loss")?;
    for (i, l) in fit.loss_trace.iter().enumerate() {
        writeln!(w, "{},{l}", i + 1)?;
    }
    w.flush()?;
    Ok(fit.params)
}

pub fn read_ae(path: &Path) -> Result<AutoencoderParams, BoxError> {
    Ok(AutoencoderParams::read_from(BufReader::new(File::open(path)?))?)
}

/// Writes `embeddings.bemb` and its sidecar, and rounds `rows` to the stored precision so
/// later stages see the same numbers whether or not they reload the files.
pub fn write_embeddings(dir: &Path, rows: &mut [SessionEmbedding]) -> Result<(), BoxError> {
    let mut bemb = create(dir, EMBEDDINGS)?;
    let mut sidecar = create(dir, EMBEDDINGS_SIDECAR)?;
    embedding::write_embeddings(&mut bemb, &mut sidecar, rows)?;
    bemb.flush()?;
    sidecar.flush()?;
    for r in rows.iter_mut() {
        r.y.iter_mut().for_each(|x| *x = f64::from(*x as f32));
    }
    Ok(())
}

/// Reads an embeddings file and the `.csv` sidecar next to it.
pub fn read_embeddings(bemb: &Path) -> Result<Vec<SessionEmbedding>, BoxError> {
    let sidecar = bemb.with_extension("csv");
    Ok(embedding::read_embeddings(
        BufReader::new(File::open(bemb)?),
        BufReader::new(File::open(&sidecar).map_err(|e| format!("{}: {e}", sidecar.display()))?),
    )?)
}

pub fn embedding_matrix(rows: &[SessionEmbedding]) -> Result<Array2<f64>, BoxError> {
    matrix(&rows.iter().map(|r| r.y.as_slice()).collect::<Vec<_>>())
}

#[derive(Debug, Clone, Serialize)]
pub struct VdgmmSummary {
    pub kmax: usize,
    pub covariance: CovarianceType,
    #[serde(rename = "effective_K")]
    pub effective_k: usize,
    pub final_elbo: f64,
    pub iterations: usize,
    pub converged: bool,
    pub sessions: usize,
    pub window_from: Option<u64>,
    pub window_to: Option<u64>,
    pub weights: Vec<f64>,
    pub active: Vec<bool>,
    pub means: Vec<Vec<f64>>,
    pub warnings: Vec<String>,
}

impl VdgmmSummary {
    pub fn new(r: &VdgmmResult, window_from: Option<u64>, window_to: Option<u64>) -> Self {
        VdgmmSummary {
            kmax: r.kmax,
            covariance: r.covariance,
            effective_k: r.effective_k,
            final_elbo: r.final_elbo(),
            iterations: r.iterations,
            converged: r.converged,
            sessions: r.responsibilities.nrows(),
            window_from,
            window_to,
            weights: r.weights.clone(),
            active: r.active.clone(),
            means: r.means.rows().into_iter().map(|m| m.to_vec()).collect(),
            warnings: r
                .warnings
                .iter()
                .map(|w| match w {
                    VdgmmWarning::SingularUpdate { floor } => format!("singular covariance floored by {floor}"),
                    VdgmmWarning::NotConverged { iters } => format!("not converged after {iters} iterations"),
                })
                .collect(),
        }
    }
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<(), BoxError> {
    let json = serde_json::to_string_pretty(value)?;
    write_file(dir, name, format!("{json}\n").as_bytes())?;
    Ok(())
}

/// Each IP's commands in session time order, one line per command.
pub fn ip_texts(records: &[SessionRecord]) -> HashMap<String, String> {
    let mut order: Vec<&SessionRecord> = records.iter().collect();
    order.sort_by_key(|r| r.ts);
    let mut out: HashMap<String, String> = HashMap::new();
    for r in order {
        let text = out.entry(r.ip.clone()).or_default();
        for c in &r.commands {
            text.push_str(c);
            text.push('\n');
        }
    }
    out
}

/// Each session's commands, keyed by session id.
pub fn session_texts(records: &[SessionRecord]) -> HashMap<String, String> {
    corpus::session_ids(records)
        .into_iter()
        .zip(records)
        .map(|(id, r)| (id.to_string(), r.commands.join("\n")))
        .collect()
}

/// Writes the per-cluster listing for `keys` clustered by `assignment`.
pub fn write_report(
    dir: &Path,
    keys: &[String],
    assignment: &[usize],
    points: &Array2<f64>,
    texts: &HashMap<String, String>,
    excerpt_bytes: usize,
) -> Result<(), BoxError> {
    let raw: Vec<String> = keys.iter().map(|k| texts.get(k).cloned().unwrap_or_default()).collect();
    let report = make_report(keys, assignment, points.view(), &raw, excerpt_bytes);
    write_file(dir, REPORT, report.to_string().as_bytes())?;
    Ok(())
}

/// File name of an IP's distance series.
pub fn distance_file(ip: &str) -> String {
    let safe: String =
        ip.chars().map(|c| if c.is_ascii_alphanumeric() || ".-_".contains(c) { c } else { '_' }).collect();
    format!("distances/{safe}.csv")
}

/// Signals for `ips` (all when empty), in the requested order.
pub fn select_signals<'a>(all: &'a [Signal], ips: &[String]) -> Result<Vec<&'a Signal>, PipelineError> {
    if ips.is_empty() {
        return Ok(all.iter().collect());
    }
    ips.iter()
        .map(|ip| signals::find_signal(all, ip).map_err(|_| PipelineError::UnknownIp(ip.clone())))
        .collect()
}

pub fn write_distances(dir: &Path, selected: &[&Signal]) -> Result<(), BoxError> {
    for s in selected {
        let series = distance_series(s)?;
        let mut w = create(dir, &distance_file(&s.ip))?;
        signals::write_distance_csv(&mut w, &series)?;
        w.flush()?;
    }
    Ok(())
}

pub fn write_co_activity(dir: &Path, selected: &[&Signal], bin: u64) -> Result<(), BoxError> {
    let ips: Vec<&str> = selected.iter().map(|s| s.ip.as_str()).collect();
    let m = co_activity_matrix(selected, bin)?;
    let mut w = create(dir, COACTIVITY)?;
    signals::write_co_activity_csv(&mut w, &ips, &m)?;
    w.flush()?;
    Ok(())
}

/// Pairwise counts of shared quantized distance levels, in the co-activity matrix layout.
pub fn write_signatures(dir: &Path, selected: &[&Signal], step: f64) -> Result<(), BoxError> {
    let series = selected.iter().map(|s| distance_series(s)).collect::<Result<Vec<_>, _>>()?;
    let ips: Vec<&str> = selected.iter().map(|s| s.ip.as_str()).collect();
    let mut m = vec![vec![0.0; series.len()]; series.len()];
    for i in 0..series.len() {
        for j in 0..series.len() {
            m[i][j] = shared_signature_count(&series[i], &series[j], step)? as f64;
        }
    }
    let mut w = create(dir, SIGNATURES)?;
    signals::write_co_activity_csv(&mut w, &ips, &m)?;
    w.flush()?;
    Ok(())
}

pub fn synth_specs(spec: Option<&Path>, preset: SynthPreset) -> Result<Vec<FamilySpec>, BoxError> {
    match spec {
        Some(p) => Ok(serde_json::from_reader(BufReader::new(File::open(p)?))?),
        None => Ok(match preset {
            SynthPreset::Default => synth::default_spec(),
            SynthPreset::ThreeFamily => synth::three_family_spec(),
        }),
    }
}

pub fn write_labeled_corpus(dir: &Path, corpus: &LabeledCorpus) -> Result<(), BoxError> {
    let mut w = create(dir, SESSIONS)?;
    write_records(&mut w, &corpus.records)?;
    w.flush()?;
    let mut w = create(dir, TRUTH)?;
    synth::write_truth(&mut w, corpus)?;
    w.flush()?;
    let mut w = create(dir, SESSION_TRUTH)?;
    synth::write_session_truth(&mut w, corpus)?;
    w.flush()?;
    Ok(())
}

/// What a pipeline run produced.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub outcome: RunOutcome,
    /// Agreement with `truth`, when configured.
    pub score: Option<Agreement>,
    /// Surviving VDGMM components (autoencoder pipeline).
    pub effective_k: Option<usize>,
}

impl RunSummary {
    pub fn out(&self) -> &Path {
        &self.outcome.out
    }
}

fn input_path(cfg: &PipelineConfig) -> PathBuf {
    cfg.input.clone().expect("validated config has an input")
}

fn inputs<'a>(cfg: &'a PipelineConfig, main: &'a Path) -> Vec<(&'static str, &'a Path)> {
    let mut v = vec![("input", main)];
    if let Some(t) = &cfg.truth {
        v.push(("truth", t.as_path()));
    }
    v
}

fn score_stage(
    runner: &mut Runner,
    cfg: &PipelineConfig,
    assignment: &[(String, usize)],
    column: usize,
) -> Result<Option<Agreement>, PipelineError> {
    let Some(truth) = cfg.truth.clone() else {
        return Ok(None);
    };
    let s = runner.stage(
        "score",
        &format!("column={column}"),
        &[ASSIGNMENTS, "truth"],
        &names(&[SCORE]),
        |out| {
            let s = score(assignment, &truth, column)?;
            write_json(out, SCORE, &s)?;
            Ok(s)
        },
        |_| score(assignment, &truth, column),
    )?;
    log::info!("agreement with truth: ARI {:.4} NMI {:.4} purity {:.4}", s.ari, s.nmi, s.purity);
    Ok(Some(s))
}

/// Dispatches on `cfg.pipeline`.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunSummary, PipelineError> {
    cfg.validate()?;
    match cfg.pipeline {
        Pipeline::Lda => run_lda_pipeline(cfg),
        Pipeline::Autoencoder => run_autoencoder_pipeline(cfg),
        Pipeline::Signals => run_signals(cfg),
        Pipeline::Synth => run_synth(cfg),
    }
}

/// Per-IP documents → vocabulary → LDA → θ → k-means → report.
pub fn run_lda_pipeline(cfg: &PipelineConfig) -> Result<RunSummary, PipelineError> {
    let input = input_path(cfg);
    let mut runner = Runner::start(cfg, &inputs(cfg, &input))?;
    let records = read_sessions(&input, cfg.strict).map_err(PipelineError::stage("corpus"))?;

    let (vocab, docs) = runner.stage(
        "corpus",
        &format!("level=ip mode={} strict={}", cfg.vocab_mode, cfg.strict),
        &["input"],
        &names(&[VOCAB, DOCUMENTS]),
        |out| {
            let (vocab, docs) = build_corpus(&records, Level::Ip, cfg.vocab_mode)?;
            write_corpus(out, &vocab, &docs)?;
            Ok((vocab, docs))
        },
        read_corpus,
    )?;
    log::info!("corpus: {} documents, {} vocabulary ids", docs.len(), vocab.len());

    let lda_cfg = cfg.lda();
    let model = runner.stage(
        "lda",
        &format!("{lda_cfg:?}"),
        &[VOCAB, DOCUMENTS],
        &names(&[LDA_MODEL]),
        |out| {
            let model = train_lda_model(&docs, vocab.len(), &lda_cfg)?;
            write_lda_model(out, LDA_MODEL, &model)?;
            Ok(model)
        },
        |out| read_lda_model(&out.join(LDA_MODEL)),
    )?;

    let infer = cfg.infer();
    let theta = runner.stage(
        "theta",
        &format!("{infer:?}"),
        &[LDA_MODEL, DOCUMENTS],
        &names(&[THETA]),
        |out| {
            let theta = embed_theta(&model, &docs, &infer);
            write_theta(out, THETA, &theta)?;
            Ok(theta)
        },
        |out| read_theta(&out.join(THETA)),
    )?;
    let points = theta_matrix(&theta).map_err(PipelineError::stage("theta"))?;
    let keys: Vec<String> = theta.iter().map(|t| t.key.clone()).collect();

    let km: KMeansConfig = cfg.kmeans();
    let assignment = runner.stage(
        "kmeans",
        &format!("{km:?}"),
        &[THETA],
        &names(&[ASSIGNMENTS]),
        |out| {
            let r = kmeans(points.view(), &km)?;
            log::info!("kmeans: inertia {:.6} after {} iterations", r.inertia, r.iterations);
            write_assignments(out, ASSIGNMENTS, &keys, &r.assignment)?;
            Ok(r.assignment)
        },
        |out| Ok(read_assignments(&out.join(ASSIGNMENTS))?.into_iter().map(|(_, c)| c).collect()),
    )?;

    let texts = ip_texts(&records);
    runner.stage(
        "report",
        &format!("excerpt_bytes={}", cfg.excerpt_bytes),
        &["input", THETA, ASSIGNMENTS],
        &names(&[REPORT]),
        |out| write_report(out, &keys, &assignment, &points, &texts, cfg.excerpt_bytes),
        |_| Ok(()),
    )?;

    let keyed: Vec<(String, usize)> = keys.iter().cloned().zip(assignment.iter().copied()).collect();
    let score = score_stage(&mut runner, cfg, &keyed, 1)?;
    Ok(RunSummary { outcome: runner.finish(), score, effective_k: None })
}

/// Per-session documents → word2vec → autoencoder → session embeddings → VDGMM → report.
pub fn run_autoencoder_pipeline(cfg: &PipelineConfig) -> Result<RunSummary, PipelineError> {
    let input = input_path(cfg);
    let mut runner = Runner::start(cfg, &inputs(cfg, &input))?;
    let records = read_sessions(&input, cfg.strict).map_err(PipelineError::stage("corpus"))?;

    let (vocab, docs) = runner.stage(
        "corpus",
        &format!("level=session mode={} strict={}", cfg.vocab_mode, cfg.strict),
        &["input"],
        &names(&[VOCAB, DOCUMENTS]),
        |out| {
            let (vocab, docs) = build_corpus(&records, Level::Session, cfg.vocab_mode)?;
            write_corpus(out, &vocab, &docs)?;
            Ok((vocab, docs))
        },
        read_corpus,
    )?;
    log::info!("corpus: {} sessions, {} vocabulary ids", docs.len(), vocab.len());

    let w2v_cfg = cfg.w2v();
    let w2v = runner.stage(
        "w2v",
        &format!("{w2v_cfg:?}"),
        &[VOCAB, DOCUMENTS],
        &names(&[W2V]),
        |out| {
            let model = train_w2v(&docs, vocab.len(), &w2v_cfg)?;
            write_w2v(out, W2V, &model)?;
            Ok(model)
        },
        |out| read_w2v(&out.join(W2V)),
    )?;

    let ae_cfg = cfg.ae();
    let params = runner.stage(
        "autoencoder",
        &format!("{ae_cfg:?}"),
        &[W2V, DOCUMENTS],
        &names(&[AE, AE_LOSS]),
        |out| train_ae(out, &session_matrices(&w2v, &docs, ae_cfg.dims.n), &ae_cfg),
        |out| read_ae(&out.join(AE)),
    )?;

    let embeddings = runner.stage(
        "encode",
        "",
        &[W2V, AE, DOCUMENTS],
        &names(&[EMBEDDINGS, EMBEDDINGS_SIDECAR]),
        |out| {
            let mut rows = encode_corpus(&w2v, &params, &docs)?;
            write_embeddings(out, &mut rows)?;
            Ok(rows)
        },
        |out| read_embeddings(&out.join(EMBEDDINGS)),
    )?;

    let window: Vec<&SessionEmbedding> = embeddings.iter().filter(|e| cfg.in_window(e.ts)).collect();
    if window.is_empty() {
        return Err(PipelineError::EmptyWindow { from: cfg.window_from, to: cfg.window_to });
    }
    let keys: Vec<String> = window.iter().map(|e| e.key.to_string()).collect();
    let points = matrix(&window.iter().map(|e| e.y.as_slice()).collect::<Vec<_>>())
        .map_err(PipelineError::stage("vdgmm"))?;

    let vd: VdgmmConfig = cfg.vdgmm();
    let (assignment, effective_k) = runner.stage(
        "vdgmm",
        &format!("{vd:?} window={:?}..{:?}", cfg.window_from, cfg.window_to),
        &[EMBEDDINGS, EMBEDDINGS_SIDECAR],
        &names(&[VDGMM, ASSIGNMENTS]),
        |out| {
            let r = vdgmm(points.view(), &vd)?;
            log::info!("vdgmm: effective K {} after {} iterations", r.effective_k, r.iterations);
            write_json(out, VDGMM, &VdgmmSummary::new(&r, cfg.window_from, cfg.window_to))?;
            let a = r.assignment();
            write_assignments(out, ASSIGNMENTS, &keys, &a)?;
            Ok((a, r.effective_k))
        },
        |out| {
            let a = read_assignments(&out.join(ASSIGNMENTS))?.into_iter().map(|(_, c)| c).collect();
            let summary: serde_json::Value = serde_json::from_reader(BufReader::new(File::open(out.join(VDGMM))?))?;
            let k = summary["effective_K"].as_u64().ok_or("vdgmm.json lacks effective_K")? as usize;
            Ok((a, k))
        },
    )?;

    let texts = session_texts(&records);
    runner.stage(
        "report",
        &format!("excerpt_bytes={}", cfg.excerpt_bytes),
        &["input", EMBEDDINGS, ASSIGNMENTS],
        &names(&[REPORT]),
        |out| write_report(out, &keys, &assignment, &points, &texts, cfg.excerpt_bytes),
        |_| Ok(()),
    )?;

    let keyed: Vec<(String, usize)> = keys.iter().cloned().zip(assignment.iter().copied()).collect();
    let score = score_stage(&mut runner, cfg, &keyed, 1)?;
    Ok(RunSummary { outcome: runner.finish(), score, effective_k: Some(effective_k) })
}

/// Distance-to-first series per IP, plus co-activity and shared-signature matrices over the
/// selected IPs.
pub fn run_signals(cfg: &PipelineConfig) -> Result<RunSummary, PipelineError> {
    let input = input_path(cfg);
    let sidecar = input.with_extension("csv");
    let mut runner = Runner::start(cfg, &[("input", &input), ("sidecar", &sidecar)])?;
    let embeddings = read_embeddings(&input).map_err(PipelineError::stage("signals"))?;
    let all = build_signals(&embeddings, None);
    let selected = select_signals(&all, &cfg.ips)?;
    let files: Vec<String> = selected.iter().map(|s| distance_file(&s.ip)).collect();
    let ip_list = selected.iter().map(|s| s.ip.as_str()).collect::<Vec<_>>().join(",");

    runner.stage(
        "distances",
        &format!("ips={ip_list}"),
        &["input", "sidecar"],
        &files,
        |out| write_distances(out, &selected),
        |_| Ok(()),
    )?;
    runner.stage(
        "coactivity",
        &format!("ips={ip_list} bin={} step={}", cfg.bin_seconds, cfg.signature_step),
        &["input", "sidecar"],
        &names(&[COACTIVITY, SIGNATURES]),
        |out| {
            write_co_activity(out, &selected, cfg.bin_seconds)?;
            write_signatures(out, &selected, cfg.signature_step)
        },
        |_| Ok(()),
    )?;
    Ok(RunSummary { outcome: runner.finish(), score: None, effective_k: None })
}

/// Generates a labelled corpus from the configured spec file or preset.
pub fn run_synth(cfg: &PipelineConfig) -> Result<RunSummary, PipelineError> {
    let spec = cfg.input.clone();
    let ins: Vec<(&str, &Path)> = spec.iter().map(|p| ("input", p.as_path())).collect();
    let mut runner = Runner::start(cfg, &ins)?;
    let reads: &[&str] = if spec.is_some() { &["input"] } else { &[] };
    runner.stage(
        "generate",
        &format!("preset={:?} seed={}", cfg.preset, cfg.seed),
        reads,
        &names(&[SESSIONS, TRUTH, SESSION_TRUTH]),
        |out| {
            let specs = synth_specs(spec.as_deref(), cfg.preset)?;
            let corpus = synth::generate(&specs, cfg.seed)?;
            log::info!("synth: {} sessions from {} ips", corpus.records.len(), corpus.truth.len());
            write_labeled_corpus(out, &corpus)
        },
        |_| Ok(()),
    )?;
    Ok(RunSummary { outcome: runner.finish(), score: None, effective_k: None })
}

/// Truth labels keyed like `assignments.csv`, for tests and scoring helpers.
pub fn truth_map(path: &Path, column: usize) -> Result<BTreeMap<String, String>, BoxError> {
    Ok(read_labels(BufReader::new(File::open(path)?), column)?.into_iter().collect())
}
