//! Client for the embedding sidecar.
//!
//! Protocol: `GET /info` returns `{model, dim, max_batch}`; `POST /embed`
//! takes `{"texts": [...]}` and answers `{vectors, model, dim}` with one
//! vector per text, in request order.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use ureq::Agent;

use super::{EmbeddingProvider, EmbeddingVector, ProviderKind};
use crate::corpus::CleanDoc;
use crate::error::{Error, Result};

pub const DEFAULT_MAX_BATCH: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServiceInfo {
    pub model: String,
    pub dim: usize,
    pub max_batch: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbedRequest {
    pub texts: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub vectors: Vec<Vec<f64>>,
    pub model: String,
    pub dim: usize,
}

fn map_err(e: ureq::Error) -> Error {
    match e {
        // 5xx (including 503 while the model loads) may clear up on retry
        ureq::Error::StatusCode(code) if code >= 500 => Error::Transport(format!("HTTP {code}")),
        ureq::Error::StatusCode(code) => Error::Protocol(format!("HTTP {code}")),
        ureq::Error::Json(e) => Error::Protocol(format!("bad JSON: {e}")),
        ureq::Error::BadUri(u) => Error::config(format!("bad sidecar url {u}")),
        other => Error::Transport(other.to_string()),
    }
}

/// Embeds raw post text through the HTTP sidecar.
#[derive(Debug)]
pub struct RemoteEmbedder {
    agent: Agent,
    base_url: String,
    info: ServiceInfo,
    batch: usize,
}

impl RemoteEmbedder {
    /// Connects and fetches `/info`. `max_batch` is capped by the server's limit.
    pub fn connect(base_url: &str, max_batch: usize) -> Result<Self> {
        if max_batch == 0 {
            return Err(Error::config("remote batch size must be positive"));
        }
        let agent: Agent = Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(120)))
            .build()
            .into();
        let base_url = base_url.trim_end_matches('/').to_string();
        let info: ServiceInfo = agent
            .get(format!("{base_url}/info"))
            .call()
            .map_err(map_err)?
            .body_mut()
            .read_json()
            .map_err(map_err)?;
        if info.dim == 0 || info.max_batch == 0 {
            return Err(Error::Protocol(format!("unusable service info {info:?}")));
        }
        let batch = max_batch.min(info.max_batch);
        Ok(Self {
            agent,
            base_url,
            info,
            batch,
        })
    }

    pub fn info(&self) -> &ServiceInfo {
        &self.info
    }

    pub fn batch_size(&self) -> usize {
        self.batch
    }

    fn embed_chunk(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        let req = EmbedRequest {
            texts: texts.to_vec(),
        };
        let resp: EmbedResponse = self
            .agent
            .post(format!("{}/embed", self.base_url))
            .send_json(&req)
            .map_err(map_err)?
            .body_mut()
            .read_json()
            .map_err(map_err)?;
        if resp.vectors.len() != texts.len() {
            return Err(Error::Protocol(format!(
                "sent {} texts, received {} vectors",
                texts.len(),
                resp.vectors.len()
            )));
        }
        if resp.dim != self.info.dim {
            return Err(Error::Protocol(format!(
                "response dim {} differs from advertised {}",
                resp.dim, self.info.dim
            )));
        }
        for (i, v) in resp.vectors.iter().enumerate() {
            if v.len() != self.info.dim {
                return Err(Error::Protocol(format!(
                    "vector {i} has {} values, expected {}",
                    v.len(),
                    self.info.dim
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Protocol(format!("vector {i} has non-finite values")));
            }
        }
        Ok(resp.vectors)
    }

    /// One vector per text, in order. An empty batch sends no request.
    pub fn embed_texts(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(self.batch) {
            out.extend(self.embed_chunk(chunk)?);
        }
        Ok(out)
    }
}

impl EmbeddingProvider for RemoteEmbedder {
    fn kind(&self) -> ProviderKind {
        ProviderKind::Remote
    }

    fn dim(&self) -> usize {
        self.info.dim
    }

    fn embed_docs(&self, docs: &[CleanDoc]) -> Result<Vec<EmbeddingVector>> {
        let texts: Vec<String> = docs.iter().map(|d| d.raw_text.clone()).collect();
        let vectors = self.embed_texts(&texts)?;
        Ok(docs
            .iter()
            .zip(vectors)
            .map(|(d, values)| EmbeddingVector {
                doc_id: d.id.clone(),
                values,
            })
            .collect())
    }
}
