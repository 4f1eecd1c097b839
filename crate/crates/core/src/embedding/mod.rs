//! Word and session embeddings for the autoencoder pipeline.
//!
//! [`w2v`] learns a word map `W: V → R^h` with skip-gram negative sampling. A session is
//! then the `N × h` stack of its word vectors ([`SessionMatrix`]), and the encoder half of a
//! convolutional/recurrent sequence autoencoder ([`autoencoder`]) compresses that stack
//! into a session embedding `y ∈ R^M`.

pub mod autoencoder;
pub mod w2v;

use std::io::{BufRead, Read, Write};

use rayon::prelude::*;
use thiserror::Error;

use crate::binio::{self, FormatError};
use crate::corpus::{Document, SessionId, PAD_ID};

pub use autoencoder::{
    decode, encode, gradient_check, reconstruction_loss, train_autoencoder, AeConfig, AeDims, AeFit,
    AutoencoderParams, GradCheck,
};
pub use w2v::{extract_pairs, sgns_loss, train_sgns, W2VConfig, W2VFit, W2VModel};

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("corpus contains no usable tokens")]
    EmptyCorpus,
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("token id {0} outside vocabulary of size {1}")]
    TokenOutOfRange(u32, usize),
    #[error("invalid session key {0:?}")]
    BadKey(String),
    #[error("embeddings sidecar line {0}: {1}")]
    BadSidecar(usize, String),
    #[error(transparent)]
    Format(#[from] FormatError),
}

impl From<std::io::Error> for EmbeddingError {
    fn from(e: std::io::Error) -> Self {
        EmbeddingError::Format(e.into())
    }
}

/// A session as the `rows × dim` stack of its word vectors, truncated or zero-padded to
/// `rows`.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionMatrix {
    pub key: String,
    pub rows: usize,
    pub dim: usize,
    /// Number of leading rows that hold real tokens; the rest are padding.
    pub len: usize,
    /// Row-major.
    pub data: Vec<f64>,
}

impl SessionMatrix {
    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }
}

/// Stacks the word vectors of the first `n` tokens; rows past the session end are zero.
///
/// The true length ignores trailing padding tokens, so appending [`PAD_ID`] never changes
/// it.
pub fn embed_session_matrix(w2v: &W2VModel, key: &str, tokens: &[u32], n: usize) -> SessionMatrix {
    let h = w2v.dim();
    let kept = &tokens[..tokens.len().min(n)];
    let len = kept.iter().rposition(|&t| t != PAD_ID).map_or(0, |p| p + 1);
    let mut data = vec![0.0; n * h];
    for (t, &id) in kept.iter().enumerate() {
        if let Some(v) = w2v.vector(id) {
            for (d, &x) in data[t * h..(t + 1) * h].iter_mut().zip(v) {
                *d = f64::from(x);
            }
        }
    }
    SessionMatrix { key: key.to_string(), rows: n, dim: h, len, data }
}

/// Encoder output for one session.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionEmbedding {
    pub key: SessionId,
    pub ts: u64,
    pub y: Vec<f64>,
}

/// Embeds session-level documents with `E(W(s))`, preserving order.
pub fn encode_corpus(
    w2v: &W2VModel,
    params: &AutoencoderParams,
    sessions: &[Document],
) -> Result<Vec<SessionEmbedding>, EmbeddingError> {
    if w2v.dim() != params.dims.h {
        return Err(EmbeddingError::DimMismatch(format!(
            "word vectors have dimension {} but the autoencoder expects {}",
            w2v.dim(),
            params.dims.h
        )));
    }
    sessions
        .par_iter()
        .map(|doc| {
            let key: SessionId =
                doc.key.parse().map_err(|_| EmbeddingError::BadKey(doc.key.clone()))?;
            let x = embed_session_matrix(w2v, &doc.key, &doc.tokens, params.dims.n);
            let y = encode(params, &x)?;
            Ok(SessionEmbedding { key, ts: doc.ts.unwrap_or(0), y })
        })
        .collect()
}

/// Writes `"BEMB"`, u32 rows, u32 cols, f32 row-major to `bemb` and `key,ts,row_index` rows
/// to `sidecar`.
pub fn write_embeddings<W: Write, S: Write>(
    mut bemb: W,
    mut sidecar: S,
    rows: &[SessionEmbedding],
) -> Result<(), EmbeddingError> {
    let cols = rows.first().map_or(0, |r| r.y.len());
    if rows.iter().any(|r| r.y.len() != cols) {
        return Err(EmbeddingError::DimMismatch("ragged embedding rows".into()));
    }
    binio::write_magic(&mut bemb, b"BEMB")?;
    binio::write_u32(&mut bemb, rows.len() as u32)?;
    binio::write_u32(&mut bemb, cols as u32)?;
    writeln!(sidecar, "key,ts,row_index")?;
    for (i, r) in rows.iter().enumerate() {
        let y: Vec<f32> = r.y.iter().map(|&x| x as f32).collect();
        binio::write_f32s(&mut bemb, &y)?;
        writeln!(sidecar, "{},{},{i}", r.key, r.ts)?;
    }
    Ok(())
}

pub fn read_embeddings<R: Read, S: BufRead>(
    mut bemb: R,
    sidecar: S,
) -> Result<Vec<SessionEmbedding>, EmbeddingError> {
    binio::read_magic(&mut bemb, b"BEMB")?;
    let rows = binio::read_u32(&mut bemb)?;
    let cols = binio::read_u32(&mut bemb)?;
    let n = binio::checked_len(&[rows, cols], "embedding matrix")?;
    let data = binio::read_f32s(&mut bemb, n)?;
    let cols = cols as usize;
    let mut out = Vec::with_capacity(rows as usize);
    for (i, line) in sidecar.lines().enumerate() {
        let line = line?;
        if i == 0 || line.is_empty() {
            continue;
        }
        let bad = |m: &str| EmbeddingError::BadSidecar(i + 1, m.to_string());
        let mut cols_it = line.rsplitn(3, ',');
        let (Some(row), Some(ts), Some(key)) = (cols_it.next(), cols_it.next(), cols_it.next())
        else {
            return Err(bad("expected key,ts,row_index"));
        };
        let row: usize = row.parse().map_err(|_| bad("bad row index"))?;
        if row >= rows as usize {
            return Err(bad("row index out of range"));
        }
        out.push(SessionEmbedding {
            key: key.parse().map_err(|_| bad("bad session key"))?,
            ts: ts.parse().map_err(|_| bad("bad timestamp"))?,
            y: data[row * cols..(row + 1) * cols].iter().map(|&x| f64::from(x)).collect(),
        });
    }
    Ok(out)
}
