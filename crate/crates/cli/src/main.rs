use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use hc_cli::config::{parse_override, Covariance, PipelineConfig, SynthPreset};
use hc_cli::error::BoxError;
use hc_cli::pipeline::{self as p, Level};
use hc_cli::{run_pipeline, with_threads};
use hc_core::clustering::{kmeans, vdgmm};
use hc_core::embedding::{gradient_check, AutoencoderParams};
use hc_core::signals::build_signals;
use hc_core::{synth, VocabularyMode};
use ndarray::Array2;

#[derive(Parser)]
#[command(name = "hc", version, about = "Cluster honeypot shell sessions and analyse per-IP behaviour over time")]
struct Cli {
    /// Worker threads for parallel stages; 1 gives bitwise-reproducible output.
    #[arg(long, global = true, env = "HC_THREADS")]
    threads: Option<usize>,
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    /// Only warnings and errors.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tokenize sessions into a vocabulary and documents.
    #[command(subcommand)]
    Corpus(CorpusCmd),
    /// Train an LDA topic model and embed documents as topic mixtures.
    #[command(subcommand)]
    Lda(LdaCmd),
    /// Train skip-gram word vectors.
    #[command(subcommand)]
    W2v(W2vCmd),
    /// Train, apply and check the session autoencoder.
    #[command(subcommand)]
    Ae(AeCmd),
    /// Cluster embeddings, score and report clusters.
    #[command(subcommand)]
    Cluster(ClusterCmd),
    /// Per-IP session time series.
    #[command(subcommand)]
    Signals(SignalsCmd),
    /// Labelled synthetic corpora.
    #[command(subcommand)]
    Synth(SynthCmd),
    /// Whole pipelines driven by a config file.
    #[command(subcommand)]
    Pipeline(PipelineCmd),
}

#[derive(Clone, Copy, ValueEnum)]
enum LevelArg {
    Ip,
    Session,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Full,
    Hapax,
}

#[derive(Clone, Copy, ValueEnum)]
enum CovArg {
    Auto,
    Full,
    Diagonal,
}

#[derive(Subcommand)]
enum CorpusCmd {
    Build {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "full")]
        mode: ModeArg,
        #[arg(long, value_enum, default_value = "ip")]
        level: LevelArg,
        /// Abort on the first malformed line instead of skipping it.
        #[arg(long)]
        strict: bool,
        #[arg(long)]
        out: PathBuf,
    },
}

/// A directory holding `vocab.tsv` and `documents.jsonl`.
#[derive(Args)]
struct CorpusDir {
    #[arg(long)]
    corpus: PathBuf,
}

#[derive(Subcommand)]
enum LdaCmd {
    Train {
        #[command(flatten)]
        corpus: CorpusDir,
        #[arg(long, default_value_t = 200)]
        k: usize,
        #[arg(long, default_value_t = 200)]
        iters: usize,
        /// Document-topic concentration (default 1/k).
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long, default_value_t = 0.01)]
        beta: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    Embed {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        corpus: CorpusDir,
        #[arg(long, default_value_t = 50)]
        iters: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum W2vCmd {
    Train {
        #[command(flatten)]
        corpus: CorpusDir,
        #[arg(long, default_value_t = 128)]
        dim: usize,
        #[arg(long, default_value_t = 2)]
        window: usize,
        #[arg(long, default_value_t = 4)]
        negatives: usize,
        #[arg(long, default_value_t = 4)]
        epochs: usize,
        #[arg(long, default_value_t = 0.025)]
        lr: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct AeShape {
    /// Session length in tokens.
    #[arg(long, default_value_t = 500)]
    n: usize,
    #[arg(long, default_value_t = 64)]
    filters: usize,
    /// Embedding dimension.
    #[arg(long, default_value_t = 200)]
    m: usize,
}

#[derive(Subcommand)]
enum AeCmd {
    Train {
        #[command(flatten)]
        corpus: CorpusDir,
        #[arg(long)]
        w2v: PathBuf,
        #[command(flatten)]
        shape: AeShape,
        #[arg(long, default_value_t = 1e-3)]
        lr: f64,
        #[arg(long, default_value_t = 32)]
        batch: usize,
        #[arg(long, default_value_t = 1000)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    Encode {
        #[command(flatten)]
        corpus: CorpusDir,
        #[arg(long)]
        w2v: PathBuf,
        #[arg(long)]
        ae: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare backpropagated gradients with central finite differences.
    Gradcheck {
        #[command(flatten)]
        corpus: CorpusDir,
        #[arg(long)]
        w2v: PathBuf,
        #[command(flatten)]
        shape: AeShape,
        /// Sessions in the checked batch.
        #[arg(long, default_value_t = 4)]
        sessions: usize,
        #[arg(long, default_value_t = 200)]
        samples: usize,
        #[arg(long, default_value_t = 1e-6)]
        eps: f64,
        /// Identity activations and open gates.
        #[arg(long)]
        linear: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Subcommand)]
enum ClusterCmd {
    Kmeans {
        /// `theta.csv` or `embeddings.bemb`.
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 200)]
        k: usize,
        #[arg(long, default_value_t = 5)]
        restarts: usize,
        #[arg(long, default_value_t = 300)]
        max_iters: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    Vdgmm {
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long, default_value_t = 150)]
        kmax: usize,
        /// Earliest session timestamp included.
        #[arg(long)]
        from: Option<u64>,
        /// Sessions at or after this timestamp are excluded.
        #[arg(long)]
        to: Option<u64>,
        #[arg(long, value_enum, default_value = "auto")]
        covariance: CovArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// ARI, NMI and purity of an assignment against truth labels.
    Score {
        #[arg(long)]
        assignments: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Truth CSV column holding the label (0 is the key).
        #[arg(long, default_value_t = 1)]
        column: usize,
    },
    Report {
        #[arg(long)]
        assignments: PathBuf,
        /// `theta.csv` or `embeddings.bemb` the assignment was computed from.
        #[arg(long)]
        input: PathBuf,
        /// Session JSON-lines the excerpts are taken from.
        #[arg(long)]
        sessions: PathBuf,
        #[arg(long, default_value_t = 400)]
        excerpt_bytes: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum SignalsCmd {
    /// Distance series for every IP plus the full co-activity matrix.
    Build {
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long, default_value_t = 86_400)]
        bin: u64,
        #[arg(long)]
        out: PathBuf,
    },
    Distances {
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long, required = true)]
        ip: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    Coactivity {
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        ips: Vec<String>,
        #[arg(long, default_value_t = 86_400)]
        bin: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum SynthCmd {
    Generate {
        /// JSON array of family specifications; a built-in preset when absent.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value = "default")]
        preset: SynthPreset,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a built-in spec as JSON.
    Spec {
        #[arg(long, default_value = "default")]
        preset: SynthPreset,
    },
}

#[derive(Subcommand)]
enum PipelineCmd {
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override a config key, e.g. `--set topics=12`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
}

fn boxed(e: BoxError) -> anyhow::Error {
    anyhow!(e)
}

fn ensure_file(path: &Path) -> Result<()> {
    if !path.is_file() {
        bail!("input {} does not exist", path.display());
    }
    Ok(())
}

fn load_points(path: &Path) -> Result<(Vec<String>, Array2<f64>)> {
    ensure_file(path)?;
    if path.extension().is_some_and(|e| e == "bemb") {
        let rows = p::read_embeddings(path).map_err(boxed)?;
        Ok((rows.iter().map(|r| r.key.to_string()).collect(), p::embedding_matrix(&rows).map_err(boxed)?))
    } else {
        let rows = p::read_theta(path).map_err(boxed)?;
        Ok((rows.iter().map(|r| r.key.clone()).collect(), p::theta_matrix(&rows).map_err(boxed)?))
    }
}

fn corpus_of(dir: &CorpusDir) -> Result<(hc_core::Vocabulary, Vec<hc_core::Document>)> {
    p::read_corpus(&dir.corpus).map_err(boxed).with_context(|| format!("reading corpus in {}", dir.corpus.display()))
}

fn base(seed: u64) -> PipelineConfig {
    PipelineConfig { seed, ..Default::default() }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Corpus(CorpusCmd::Build { input, mode, level, strict, out }) => {
            ensure_file(&input)?;
            let records = p::read_sessions(&input, strict).map_err(boxed)?;
            let mode = match mode {
                ModeArg::Full => VocabularyMode::Full,
                ModeArg::Hapax => VocabularyMode::HapaxMerged,
            };
            let level = match level {
                LevelArg::Ip => Level::Ip,
                LevelArg::Session => Level::Session,
            };
            let (vocab, docs) = p::build_corpus(&records, level, mode).map_err(boxed)?;
            p::write_corpus(&out, &vocab, &docs).map_err(boxed)?;
            println!("{} documents, {} vocabulary ids", docs.len(), vocab.len());
        }
        Command::Lda(LdaCmd::Train { corpus, k, iters, alpha, beta, seed, out }) => {
            let (vocab, docs) = corpus_of(&corpus)?;
            let cfg = PipelineConfig { topics: k, lda_iters: iters, alpha, beta, ..base(seed) };
            let model = p::train_lda_model(&docs, vocab.len(), &cfg.lda()).map_err(boxed)?;
            p::write_lda_model(&out, p::LDA_MODEL, &model).map_err(boxed)?;
        }
        Command::Lda(LdaCmd::Embed { model, corpus, iters, seed, out }) => {
            ensure_file(&model)?;
            let lda = p::read_lda_model(&model).map_err(boxed)?;
            let (_, docs) = corpus_of(&corpus)?;
            let cfg = PipelineConfig { infer_iters: iters, ..base(seed) };
            let theta = p::embed_theta(&lda, &docs, &cfg.infer());
            p::write_theta(&out, p::THETA, &theta).map_err(boxed)?;
        }
        Command::W2v(W2vCmd::Train { corpus, dim, window, negatives, epochs, lr, seed, out }) => {
            let (vocab, docs) = corpus_of(&corpus)?;
            let cfg = PipelineConfig { w2v_dim: dim, window, negatives, epochs, w2v_lr: lr, ..base(seed) };
            let model = p::train_w2v(&docs, vocab.len(), &cfg.w2v()).map_err(boxed)?;
            p::write_w2v(&out, p::W2V, &model).map_err(boxed)?;
        }
        Command::Ae(AeCmd::Train { corpus, w2v, shape, lr, batch, steps, seed, out }) => {
            ensure_file(&w2v)?;
            let words = p::read_w2v(&w2v).map_err(boxed)?;
            let (_, docs) = corpus_of(&corpus)?;
            let cfg = PipelineConfig {
                w2v_dim: words.dim(),
                session_len: shape.n,
                filters: shape.filters,
                embedding_dim: shape.m,
                ae_lr: lr,
                ae_batch: batch,
                ae_steps: steps,
                ..base(seed)
            };
            let sessions = p::session_matrices(&words, &docs, shape.n);
            p::train_ae(&out, &sessions, &cfg.ae()).map_err(boxed)?;
        }
        Command::Ae(AeCmd::Encode { corpus, w2v, ae, out }) => {
            ensure_file(&w2v)?;
            ensure_file(&ae)?;
            let words = p::read_w2v(&w2v).map_err(boxed)?;
            let params = p::read_ae(&ae).map_err(boxed)?;
            let (_, docs) = corpus_of(&corpus)?;
            let mut rows = hc_core::embedding::encode_corpus(&words, &params, &docs)?;
            p::write_embeddings(&out, &mut rows).map_err(boxed)?;
        }
        Command::Ae(AeCmd::Gradcheck { corpus, w2v, shape, sessions, samples, eps, linear, seed }) => {
            ensure_file(&w2v)?;
            let words = p::read_w2v(&w2v).map_err(boxed)?;
            let (_, docs) = corpus_of(&corpus)?;
            let take = &docs[..sessions.min(docs.len())];
            let matrices = p::session_matrices(&words, take, shape.n);
            let dims = hc_core::embedding::AeDims { n: shape.n, h: words.dim(), f: shape.filters, m: shape.m };
            let params = AutoencoderParams::init(dims, linear, seed)?;
            let g = gradient_check(&params, &matrices, eps, samples, seed)?;
            println!("checked {} parameters, max relative error {:.3e}", g.checked, g.max_rel_err);
        }
        Command::Cluster(ClusterCmd::Kmeans { input, k, restarts, max_iters, seed, out }) => {
            let (keys, points) = load_points(&input)?;
            let cfg = PipelineConfig { clusters: k, kmeans_restarts: restarts, kmeans_max_iters: max_iters, ..base(seed) };
            let r = kmeans(points.view(), &cfg.kmeans())?;
            p::write_assignments(&out, p::ASSIGNMENTS, &keys, &r.assignment).map_err(boxed)?;
            println!("inertia {} after {} iterations", r.inertia, r.iterations);
        }
        Command::Cluster(ClusterCmd::Vdgmm { embeddings, kmax, from, to, covariance, seed, out }) => {
            ensure_file(&embeddings)?;
            let covariance = match covariance {
                CovArg::Auto => Covariance::Auto,
                CovArg::Full => Covariance::Full,
                CovArg::Diagonal => Covariance::Diagonal,
            };
            let cfg = PipelineConfig { kmax, window_from: from, window_to: to, covariance, ..base(seed) };
            let rows = p::read_embeddings(&embeddings).map_err(boxed)?;
            let window: Vec<_> = rows.iter().filter(|r| cfg.in_window(r.ts)).collect();
            if window.is_empty() {
                return Err(hc_cli::PipelineError::EmptyWindow { from, to }.into());
            }
            let keys: Vec<String> = window.iter().map(|r| r.key.to_string()).collect();
            let points = p::matrix(&window.iter().map(|r| r.y.as_slice()).collect::<Vec<_>>()).map_err(boxed)?;
            let r = vdgmm(points.view(), &cfg.vdgmm())?;
            p::write_json(&out, p::VDGMM, &p::VdgmmSummary::new(&r, from, to)).map_err(boxed)?;
            p::write_assignments(&out, p::ASSIGNMENTS, &keys, &r.assignment()).map_err(boxed)?;
            println!("effective K {} (final ELBO {})", r.effective_k, r.final_elbo());
        }
        Command::Cluster(ClusterCmd::Score { assignments, truth, column }) => {
            ensure_file(&assignments)?;
            ensure_file(&truth)?;
            let a = p::read_assignments(&assignments).map_err(boxed)?;
            let s = p::score(&a, &truth, column).map_err(boxed)?;
            println!("{}", serde_json::to_string(&s)?);
        }
        Command::Cluster(ClusterCmd::Report { assignments, input, sessions, excerpt_bytes, out }) => {
            ensure_file(&assignments)?;
            ensure_file(&sessions)?;
            let (keys, points) = load_points(&input)?;
            let assigned: HashMap<String, usize> = p::read_assignments(&assignments).map_err(boxed)?.into_iter().collect();
            let mut labels = Vec::with_capacity(keys.len());
            for k in &keys {
                labels.push(*assigned.get(k).ok_or_else(|| anyhow!("{k} has no cluster assignment"))?);
            }
            let records = p::read_sessions(&sessions, false).map_err(boxed)?;
            let mut texts = p::ip_texts(&records);
            texts.extend(p::session_texts(&records));
            p::write_report(&out, &keys, &labels, &points, &texts, excerpt_bytes).map_err(boxed)?;
        }
        Command::Signals(cmd) => {
            let (embeddings, ips, bin, out, coactivity) = match cmd {
                SignalsCmd::Build { embeddings, bin, out } => (embeddings, Vec::new(), bin, out, true),
                SignalsCmd::Distances { embeddings, ip, out } => (embeddings, ip, 86_400, out, false),
                SignalsCmd::Coactivity { embeddings, ips, bin, out } => (embeddings, ips, bin, out, true),
            };
            ensure_file(&embeddings)?;
            let rows = p::read_embeddings(&embeddings).map_err(boxed)?;
            let all = build_signals(&rows, None);
            let selected = p::select_signals(&all, &ips)?;
            p::write_distances(&out, &selected).map_err(boxed)?;
            if coactivity {
                p::write_co_activity(&out, &selected, bin).map_err(boxed)?;
            }
        }
        Command::Synth(SynthCmd::Generate { spec, preset, seed, out }) => {
            if let Some(s) = &spec {
                ensure_file(s)?;
            }
            let specs = p::synth_specs(spec.as_deref(), preset).map_err(boxed)?;
            let corpus = synth::generate(&specs, seed)?;
            p::write_labeled_corpus(&out, &corpus).map_err(boxed)?;
            println!("{} sessions from {} ips", corpus.records.len(), corpus.truth.len());
        }
        Command::Synth(SynthCmd::Spec { preset }) => {
            let specs = p::synth_specs(None, preset).map_err(boxed)?;
            println!("{}", serde_json::to_string_pretty(&specs)?);
        }
        Command::Pipeline(PipelineCmd::Run { config, overrides }) => {
            let overrides = overrides.iter().map(|o| parse_override(o)).collect::<Result<Vec<_>, _>>()?;
            let cfg = PipelineConfig::load(&config, &overrides)?;
            let summary = run_pipeline(&cfg)?;
            let o = &summary.outcome;
            println!("{} pipeline finished in {}", cfg.pipeline, o.out.display());
            println!("stages run: {}; reused: {}", o.ran.join(" "), o.skipped.join(" "));
            if let Some(k) = summary.effective_k {
                println!("effective K: {k}");
            }
            if let Some(s) = summary.score {
                println!("ARI {:.4}  NMI {:.4}  purity {:.4}", s.ari, s.nmi, s.purity);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match (cli.quiet, cli.verbose) {
        (true, _) => "warn",
        (false, 0) => "info",
        (false, 1) => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let threads = cli.threads;
    match with_threads(threads, || run(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
