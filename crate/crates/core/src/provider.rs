//! Embedding acquisition: precomputed matrix files or a remote HTTP service
//! with a content-addressed disk cache.

use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::costs::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::format;

pub const MAX_ATTEMPTS: usize = 3;

type Vectors = Vec<Vec<f32>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProviderConfig {
    /// A matrix file with one row per requested text, in request order.
    File { path: PathBuf },
    Remote(RemoteConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemoteConfig {
    pub endpoint: String,
    /// Sent verbatim as the `Authorization` header.
    #[serde(default)]
    pub auth_header: Option<String>,
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    /// Concurrent requests in flight.
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    /// Texts per request.
    #[serde(default = "default_request_batch")]
    pub request_batch: usize,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    /// Delay before the first retry; doubled for each further retry.
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
}

fn default_parallelism() -> usize {
    4
}
fn default_request_batch() -> usize {
    64
}
fn default_timeout_ms() -> u64 {
    30_000
}
fn default_backoff_ms() -> u64 {
    200
}

impl RemoteConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        RemoteConfig {
            endpoint: endpoint.into(),
            auth_header: None,
            cache_dir: None,
            parallelism: default_parallelism(),
            request_batch: default_request_batch(),
            timeout_ms: default_timeout_ms(),
            backoff_ms: default_backoff_ms(),
        }
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f32>>,
}

/// Fetches embeddings and counts the HTTP requests it sends.
#[derive(Debug)]
pub struct EmbeddingProvider {
    config: ProviderConfig,
    remote_calls: AtomicUsize,
}

impl EmbeddingProvider {
    pub fn new(config: ProviderConfig) -> Result<Self> {
        if let ProviderConfig::Remote(r) = &config {
            if r.parallelism == 0 || r.request_batch == 0 {
                return Err(Error::config("parallelism and request_batch must be at least 1"));
            }
        }
        Ok(EmbeddingProvider {
            config,
            remote_calls: AtomicUsize::new(0),
        })
    }

    /// HTTP requests sent so far, retries included.
    pub fn remote_calls(&self) -> usize {
        self.remote_calls.load(Ordering::Relaxed)
    }

    /// One vector per text, in order.
    pub fn fetch(&self, texts: &[String]) -> Result<EmbeddingMatrix> {
        match &self.config {
            ProviderConfig::File { path } => {
                let m = EmbeddingMatrix::new(format::read_matrix(path)?)?;
                if m.count() != texts.len() {
                    return Err(Error::provider(format!(
                        "{} holds {} vectors for {} texts",
                        path.display(),
                        m.count(),
                        texts.len()
                    )));
                }
                Ok(m)
            }
            ProviderConfig::Remote(remote) => self.fetch_remote(remote, texts),
        }
    }

    fn fetch_remote(&self, remote: &RemoteConfig, texts: &[String]) -> Result<EmbeddingMatrix> {
        let cached = remote
            .cache_dir
            .as_ref()
            .map(|dir| dir.join(format!("{}.edtm", cache_key(&remote.endpoint, texts))));
        if let Some(path) = cached.as_ref().filter(|p| p.exists()) {
            tracing::debug!(path = %path.display(), "embedding cache hit");
            let m = EmbeddingMatrix::new(format::read_matrix(path)?)?;
            if m.count() == texts.len() {
                return Ok(m);
            }
            tracing::warn!(path = %path.display(), "ignoring cache entry with wrong row count");
        }

        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(remote.timeout_ms))
            .build()
            .map_err(|e| Error::provider(e.to_string()))?;
        let chunks: Vec<&[String]> = texts.chunks(remote.request_batch).collect();
        let results: Mutex<Vec<Option<Result<Vectors>>>> =
            Mutex::new((0..chunks.len()).map(|_| None).collect());
        let next = AtomicUsize::new(0);
        std::thread::scope(|scope| {
            for _ in 0..remote.parallelism.min(chunks.len()) {
                scope.spawn(|| loop {
                    let k = next.fetch_add(1, Ordering::Relaxed);
                    if k >= chunks.len() {
                        break;
                    }
                    let out = self.request_with_retry(&client, remote, chunks[k]);
                    results.lock().unwrap()[k] = Some(out);
                });
            }
        });

        let mut rows = Vec::with_capacity(texts.len());
        for r in results.into_inner().unwrap() {
            rows.extend(r.expect("every chunk is processed")?);
        }
        let m = EmbeddingMatrix::from_rows(&rows)?;
        if let Some(path) = cached {
            std::fs::create_dir_all(path.parent().expect("cache path has a parent"))?;
            format::write_matrix(&path, m.values())?;
        }
        Ok(m)
    }

    fn request_with_retry(
        &self,
        client: &reqwest::blocking::Client,
        remote: &RemoteConfig,
        texts: &[String],
    ) -> Result<Vectors> {
        let mut last = None;
        for attempt in 0..MAX_ATTEMPTS {
            if attempt > 0 {
                std::thread::sleep(Duration::from_millis(remote.backoff_ms << (attempt - 1)));
            }
            self.remote_calls.fetch_add(1, Ordering::Relaxed);
            match request(client, remote, texts) {
                Ok(v) => return Ok(v),
                Err(e) => {
                    tracing::warn!(attempt, error = %e, "embedding request failed");
                    last = Some(e);
                }
            }
        }
        Err(Error::provider(format!(
            "{} failed after {MAX_ATTEMPTS} attempts: {}",
            remote.endpoint,
            last.expect("at least one attempt")
        )))
    }
}

fn request(
    client: &reqwest::blocking::Client,
    remote: &RemoteConfig,
    texts: &[String],
) -> std::result::Result<Vectors, String> {
    let mut req = client.post(&remote.endpoint).json(&EmbedRequest { texts });
    if let Some(auth) = &remote.auth_header {
        req = req.header(reqwest::header::AUTHORIZATION, auth);
    }
    let resp = req.send().map_err(|e| e.to_string())?;
    let status = resp.status();
    if !status.is_success() {
        return Err(format!("HTTP {status}"));
    }
    let body: EmbedResponse = resp.json().map_err(|e| e.to_string())?;
    if body.vectors.len() != texts.len() {
        return Err(format!(
            "{} vectors returned for {} texts",
            body.vectors.len(),
            texts.len()
        ));
    }
    Ok(body.vectors)
}

/// SHA-256 over the endpoint and the length-prefixed texts.
pub fn cache_key(endpoint: &str, texts: &[String]) -> String {
    let mut h = Sha256::new();
    for part in std::iter::once(endpoint).chain(texts.iter().map(String::as_str)) {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part.as_bytes());
    }
    hex::encode(h.finalize())
}

/// Convenience wrapper for a one-off fetch.
pub fn fetch_embeddings(texts: &[String], provider: &ProviderConfig) -> Result<EmbeddingMatrix> {
    EmbeddingProvider::new(provider.clone())?.fetch(texts)
}

/// Load a matrix file as `f64` (scores, costs).
pub fn read_matrix_f64(path: &std::path::Path) -> Result<Array2<f64>> {
    Ok(format::read_matrix(path)?.mapv(f64::from))
}
