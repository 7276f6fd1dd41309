//! Dense document embeddings.
//!
//! Three interchangeable providers produce one fixed-dimension vector per
//! document: a hashed random-direction [`StubEmbedder`], a precomputed
//! [`FileEmbedder`] backed by an `SMMEMB` text file, and a
//! [`RemoteEmbedder`] that calls an HTTP encoder service.

mod remote;
mod store;
mod stub;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::CleanDoc;
use crate::error::{Error, Result};

pub use remote::{EmbedRequest, EmbedResponse, RemoteEmbedder, ServiceInfo, DEFAULT_MAX_BATCH};
pub use store::{load_embeddings, read_embeddings, save_embeddings, write_embeddings, FileEmbedder};
pub use stub::{stub_embed, StubEmbedder};

/// Default embedding width, matching common large sentence encoders.
pub const DEFAULT_DIM: usize = 1024;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    pub doc_id: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    Stub,
    File,
    Remote,
}

impl fmt::Display for ProviderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProviderKind::Stub => "stub",
            ProviderKind::File => "file",
            ProviderKind::Remote => "remote",
        })
    }
}

impl FromStr for ProviderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stub" => Ok(ProviderKind::Stub),
            "file" => Ok(ProviderKind::File),
            "remote" => Ok(ProviderKind::Remote),
            other => Err(Error::config(format!("unknown embedding provider {other:?}"))),
        }
    }
}

/// Source of document embeddings. Implementations must be deterministic:
/// the same document always maps to the same vector.
pub trait EmbeddingProvider {
    fn kind(&self) -> ProviderKind;

    fn dim(&self) -> usize;

    /// Embeds `docs` in order, one vector per document.
    fn embed_docs(&self, docs: &[CleanDoc]) -> Result<Vec<EmbeddingVector>>;
}

/// Embeds documents and indexes the result by document id.
pub fn embed_table(
    provider: &dyn EmbeddingProvider,
    docs: &[CleanDoc],
) -> Result<HashMap<String, Vec<f64>>> {
    let vectors = provider.embed_docs(docs)?;
    let dim = provider.dim();
    let mut table = HashMap::with_capacity(vectors.len());
    for v in vectors {
        if v.values.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: v.values.len(),
            });
        }
        table.insert(v.doc_id, v.values);
    }
    Ok(table)
}

pub(crate) fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Cosine similarity of two dense vectors; 0 when either has zero norm.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = l2_norm(a);
    let nb = l2_norm(b);
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}
