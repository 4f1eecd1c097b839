//! Clustering and time-series analysis of honeypot shell sessions.
//!
//! Two pipelines share the [`corpus`] front end:
//!
//! * per-IP bag-of-words documents → [`lda`] topic mixtures → [`clustering::kmeans`];
//! * per-session token sequences → skip-gram word vectors and a convolutional/recurrent
//!   sequence autoencoder ([`embedding`]) → [`clustering::vdgmm`].
//!
//! Session embeddings ordered in time per source IP form the [`signals`] analysed for
//! co-activity and shared behaviour. [`synth`] produces labelled corpora used to check the
//! pipelines end to end.

pub mod clustering;
pub mod corpus;
pub mod embedding;
pub mod lda;
pub mod rng;
pub mod signals;
pub mod synth;

mod binio;

pub use binio::FormatError;

pub use clustering::{ClusterError, ClusterReport, KMeansResult, VdgmmResult};
pub use corpus::{
    CorpusError, Document, SessionId, SessionRecord, TokenDocument, Vocabulary, VocabularyMode,
};
pub use embedding::{AutoencoderParams, EmbeddingError, SessionEmbedding, SessionMatrix, W2VModel};
pub use lda::{LdaError, LdaModel, ThetaEmbedding};
pub use signals::{DistanceSeries, Signal, SignalError};
pub use synth::{FamilySpec, LabeledCorpus, SynthError};
