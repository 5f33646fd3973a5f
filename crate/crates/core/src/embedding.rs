//! Text encoders and vector math shared by both retrieval levels.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Mutex, OnceLock};
use std::thread;

use serde::{Deserialize, Serialize};
use serde_json::json;
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};
use crate::http::{EndpointConfig, JsonClient};

/// A dense vector of finite components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn new(components: Vec<f64>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::DimensionMismatch { expected: 1, actual: 0 });
        }
        if let Some(bad) = components.iter().find(|c| !c.is_finite()) {
            return Err(Error::Snapshot(format!("non-finite vector component {bad}")));
        }
        Ok(Self(components))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn components(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&c| c == 0.0)
    }

    /// Unit-length copy; the zero vector stays zero.
    pub fn normalized(&self) -> Self {
        let norm = self.norm();
        if norm == 0.0 {
            return self.clone();
        }
        Self(self.0.iter().map(|c| c / norm).collect())
    }
}

impl TryFrom<Vec<f64>> for EmbeddingVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<EmbeddingVector> for Vec<f64> {
    fn from(v: EmbeddingVector) -> Vec<f64> {
        v.0
    }
}

/// Cosine similarity clamped to `[-1, 1]`.
///
/// A zero vector on either side yields `f64::NEG_INFINITY` so such entries
/// rank after every real score and fall back to tie-break order.
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            actual: b.dim(),
        });
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    let dot: f64 = a.0.iter().zip(&b.0).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Maps text to vectors. Implementations are read-only after construction.
pub trait Encoder: Send + Sync {
    /// Stable identifier recorded in index snapshots and run manifests.
    fn identity(&self) -> String;

    /// Output dimension, when known ahead of the first call.
    fn dim(&self) -> Option<usize>;

    /// One L2-normalized vector per input, in input order.
    fn encode_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>>;

    fn encode(&self, text: &str) -> Result<EmbeddingVector> {
        let mut out = self.encode_batch(&[text])?;
        out.pop().ok_or_else(|| Error::MalformedResponse {
            endpoint: self.identity(),
            message: "encoder returned no vector".into(),
        })
    }
}

pub const BUILTIN_DIM: usize = 256;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

/// Deterministic signed feature hashing over character 3-grams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashedNgramEncoder {
    dim: usize,
}

impl Default for HashedNgramEncoder {
    fn default() -> Self {
        Self { dim: BUILTIN_DIM }
    }
}

impl HashedNgramEncoder {
    pub fn with_dim(dim: usize) -> Self {
        assert!(dim > 0, "encoder dimension must be positive");
        Self { dim }
    }

    pub fn encode_one(&self, text: &str) -> EmbeddingVector {
        let chars: Vec<char> = text.nfc().collect::<String>().to_lowercase().chars().collect();
        let mut acc = vec![0.0f64; self.dim];
        let mut gram = String::with_capacity(12);
        for window in chars.windows(3) {
            gram.clear();
            gram.extend(window);
            let h = fnv1a64(gram.as_bytes());
            let bucket = (h % self.dim as u64) as usize;
            if h >> 63 == 0 {
                acc[bucket] += 1.0;
            } else {
                acc[bucket] -= 1.0;
            }
        }
        EmbeddingVector(acc).normalized()
    }
}

impl Encoder for HashedNgramEncoder {
    fn identity(&self) -> String {
        format!("hashed-ngram3-fnv1a64/{}", self.dim)
    }

    fn dim(&self) -> Option<usize> {
        Some(self.dim)
    }

    fn encode_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>> {
        Ok(texts.iter().map(|t| self.encode_one(t)).collect())
    }
}

fn default_max_batch() -> usize {
    32
}
fn default_in_flight() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteEncoderConfig {
    #[serde(flatten)]
    pub endpoint: EndpointConfig,
    #[serde(default = "default_max_batch")]
    pub max_batch: usize,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    /// Expected output dimension; learned from the first response when unset.
    #[serde(default)]
    pub dim: Option<usize>,
}

impl RemoteEncoderConfig {
    pub fn new(endpoint: EndpointConfig) -> Self {
        Self {
            endpoint,
            max_batch: default_max_batch(),
            max_in_flight: default_in_flight(),
            dim: None,
        }
    }
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    embedding: Vec<f64>,
    index: usize,
}

/// Embedding service client speaking `{model, input}` → `{data: [{embedding, index}]}`.
pub struct RemoteEncoder {
    client: JsonClient,
    max_batch: usize,
    max_in_flight: usize,
    dim: OnceLock<usize>,
}

impl RemoteEncoder {
    pub fn new(config: RemoteEncoderConfig) -> Result<Self> {
        if config.max_batch == 0 || config.max_in_flight == 0 {
            return Err(Error::Config("remote encoder batch size and in-flight cap must be ≥ 1".into()));
        }
        let dim = OnceLock::new();
        if let Some(d) = config.dim {
            let _ = dim.set(d);
        }
        Ok(Self {
            client: JsonClient::new(config.endpoint)?,
            max_batch: config.max_batch,
            max_in_flight: config.max_in_flight,
            dim,
        })
    }

    fn malformed(&self, message: impl Into<String>) -> Error {
        Error::MalformedResponse {
            endpoint: self.client.endpoint().url.clone(),
            message: message.into(),
        }
    }

    fn encode_chunk(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>> {
        let endpoint = self.client.endpoint();
        let body = json!({ "model": endpoint.model, "input": texts });
        let correlation = uuid::Uuid::new_v4().to_string();
        let raw = self.client.post(&body, &correlation)?;
        let response: EmbeddingResponse =
            serde_json::from_value(raw).map_err(|e| self.malformed(e.to_string()))?;
        if response.data.len() != texts.len() {
            return Err(self.malformed(format!(
                "expected {} embeddings, got {}",
                texts.len(),
                response.data.len()
            )));
        }
        let mut slots: Vec<Option<EmbeddingVector>> = vec![None; texts.len()];
        for datum in response.data {
            let slot = slots
                .get_mut(datum.index)
                .ok_or_else(|| self.malformed(format!("index {} out of range", datum.index)))?;
            if slot.is_some() {
                return Err(self.malformed(format!("duplicate index {}", datum.index)));
            }
            let actual = datum.embedding.len();
            let expected = *self.dim.get_or_init(|| actual);
            if actual != expected {
                return Err(Error::DimensionMismatch { expected, actual });
            }
            let v = EmbeddingVector::new(datum.embedding).map_err(|e| self.malformed(e.to_string()))?;
            *slot = Some(v.normalized());
        }
        // Lengths match and indices are unique and in range, so every slot is filled.
        Ok(slots.into_iter().map(|s| s.expect("filled slot")).collect())
    }
}

impl Encoder for RemoteEncoder {
    fn identity(&self) -> String {
        let e = self.client.endpoint();
        format!("remote:{}@{}", e.model, e.url)
    }

    fn dim(&self) -> Option<usize> {
        self.dim.get().copied()
    }

    /// Splits the input into `max_batch` chunks and keeps at most
    /// `max_in_flight` requests outstanding. Chunks are reassembled in order.
    fn encode_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>> {
        let chunks: Vec<&[&str]> = texts.chunks(self.max_batch).collect();
        let results: Vec<Mutex<Option<Result<Vec<EmbeddingVector>>>>> =
            chunks.iter().map(|_| Mutex::new(None)).collect();
        let next = AtomicUsize::new(0);
        let workers = self.max_in_flight.min(chunks.len());
        thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= chunks.len() {
                        break;
                    }
                    let r = self.encode_chunk(chunks[i]);
                    *results[i].lock().expect("result slot") = Some(r);
                });
            }
        });
        let mut out = Vec::with_capacity(texts.len());
        for slot in results {
            let chunk = slot.into_inner().expect("result slot").expect("chunk processed")?;
            out.extend(chunk);
        }
        Ok(out)
    }
}
