//! Pipeline orchestration behind the `hc` command: configuration, run manifests with
//! checksum-based stage skipping, and the LDA, autoencoder, signals and synth pipelines.

pub mod config;
pub mod error;
pub mod manifest;
pub mod pipeline;

pub use config::{Pipeline, PipelineConfig};
pub use error::PipelineError;
pub use manifest::{Manifest, RunOutcome};
pub use pipeline::{run_autoencoder_pipeline, run_lda_pipeline, run_pipeline, run_signals, run_synth, RunSummary};

/// Runs `f` on a dedicated pool of `threads` workers, or on the global pool when `None`.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .expect("thread pool")
            .install(f),
        None => f(),
    }
}
