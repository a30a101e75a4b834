//! Client for the embedding sidecar: `GET /health` and `POST /embed`.

use std::time::Duration;

use drift_core::embedding::{EmbeddingProvider, EmbeddingVector, ProviderDescriptor};
use drift_core::{Error, Result, Scalar};
use reqwest::blocking::Client;
use serde::Deserialize;
use serde_json::json;

/// Largest batch the sidecar accepts per call.
pub const MAX_BATCH: usize = 256;

#[derive(Debug, Deserialize)]
struct Health {
    status: String,
    #[serde(default)]
    model_tag: String,
    dim: usize,
}

#[derive(Debug, Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f64>>,
    #[serde(default)]
    model_tag: String,
}

#[derive(Debug, Clone)]
pub struct SidecarEmbedder {
    base: String,
    client: Client,
    model_tag: String,
    dim: usize,
}

impl SidecarEmbedder {
    /// Checks `/health` and, when `expected_dim` is given, that the served
    /// model has that dimension.
    pub fn connect(base_url: &str, expected_dim: Option<usize>, timeout: Duration) -> Result<Self> {
        let client = Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| Error::Provider(e.to_string()))?;
        let base = base_url.trim_end_matches('/').to_string();
        let resp = client
            .get(format!("{base}/health"))
            .send()
            .map_err(|e| Error::Provider(format!("sidecar unreachable at {base}: {e}")))?;
        if !resp.status().is_success() {
            return Err(Error::Provider(format!("sidecar not ready (HTTP {})", resp.status())));
        }
        let health: Health = resp
            .json()
            .map_err(|e| Error::Provider(format!("bad /health body: {e}")))?;
        if health.status != "ok" {
            return Err(Error::Provider(format!("sidecar status {:?}", health.status)));
        }
        if let Some(d) = expected_dim {
            if d != health.dim {
                return Err(Error::DimensionMismatch(format!(
                    "sidecar serves dim {} but {d} was configured",
                    health.dim
                )));
            }
        }
        Ok(Self {
            base,
            client,
            model_tag: health.model_tag,
            dim: health.dim,
        })
    }

    fn embed_batch(&self, texts: &[String]) -> Result<EmbedResponse> {
        let resp = self
            .client
            .post(format!("{}/embed", self.base))
            .json(&json!({ "texts": texts }))
            .send()
            .map_err(|e| Error::Provider(format!("POST /embed: {e}")))?;
        let status = resp.status();
        if !status.is_success() {
            let body = resp.text().unwrap_or_default();
            return Err(Error::Provider(format!("POST /embed returned HTTP {status}: {body}")));
        }
        resp.json()
            .map_err(|e| Error::Provider(format!("bad /embed body: {e}")))
    }
}

impl<T: Scalar> EmbeddingProvider<T> for SidecarEmbedder {
    fn descriptor(&self) -> ProviderDescriptor {
        ProviderDescriptor {
            model_tag: self.model_tag.clone(),
            dim: self.dim,
        }
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector<T>>> {
        let mut out = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(MAX_BATCH) {
            let resp = self.embed_batch(chunk)?;
            if resp.vectors.len() != chunk.len() {
                return Err(Error::Provider(format!(
                    "{} vectors for {} texts",
                    resp.vectors.len(),
                    chunk.len()
                )));
            }
            for v in resp.vectors {
                if v.len() != self.dim {
                    return Err(Error::DimensionMismatch(format!(
                        "sidecar returned dim {} after announcing {}",
                        v.len(),
                        self.dim
                    )));
                }
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(Error::Provider("non-finite value from sidecar".into()));
                }
                let tag = if resp.model_tag.is_empty() {
                    self.model_tag.clone()
                } else {
                    resp.model_tag.clone()
                };
                out.push(EmbeddingVector {
                    values: v.into_iter().map(T::lit).collect(),
                    model_tag: tag,
                });
            }
        }
        Ok(out)
    }
}
