//! Single choke point for every external model call.
//!
//! A [`ModelGateway`] pairs a completion backend with an embedding backend,
//! consults a persistent content-addressed cache before every completion,
//! and bounds the number of in-flight backend calls. Backends are live HTTP
//! endpoints or deterministic fixtures; either way, two runs with the same
//! fixtures and requests produce byte-identical response sequences.

mod backends;
mod cache;
mod embed;

pub use backends::{encode_base64, EchoBackend, FixtureBackend, LiveBackend, ScriptedBackend};
pub use cache::{CacheLine, ResponseCache};
pub use embed::{fixture_embedding, FixtureEmbedder, LiveEmbedder};

use sha2::{Digest, Sha256};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};

use crate::types::{EmbeddingVector, ImageRef};

/// Default bound on concurrent backend calls.
pub const DEFAULT_MAX_IN_FLIGHT: usize = 8;

/// A completion request. Every field participates in the cache key.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelRequest {
    pub model_id: String,
    pub prompt: String,
    pub images: Vec<ImageRef>,
    pub temperature: f64,
    pub max_tokens: u32,
    pub seed: i64,
}

impl ModelRequest {
    /// Text-only request with deterministic defaults (temperature 0).
    pub fn text(model_id: impl Into<String>, prompt: impl Into<String>) -> Self {
        Self {
            model_id: model_id.into(),
            prompt: prompt.into(),
            images: Vec::new(),
            temperature: 0.0,
            max_tokens: 512,
            seed: 0,
        }
    }

    pub fn with_images(mut self, images: Vec<ImageRef>) -> Self {
        self.images = images;
        self
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    pub fn with_seed(mut self, seed: i64) -> Self {
        self.seed = seed;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelResponse {
    pub text: String,
    pub cached: bool,
}

/// Lowercase hex SHA-256 digest identifying a request.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CacheKey {
    digest: String,
}

impl CacheKey {
    pub fn digest(&self) -> &str {
        &self.digest
    }
}

#[derive(Clone, Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("image {location:?} unreadable: {reason}")]
    ImageUnreadable { location: String, reason: String },
    #[error("backend unavailable: {reason}")]
    BackendUnavailable { reason: String },
    #[error("fixture miss for key {digest}")]
    FixtureMiss { digest: String },
    #[error("backend timed out after {seconds}s")]
    Timeout { seconds: u64 },
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("cache io: {0}")]
    CacheIo(String),
}

/// Serves completion requests; implementations must be safe to call from
/// multiple worker threads.
pub trait CompletionBackend: Send + Sync {
    fn complete(&self, request: &ModelRequest, key: &CacheKey) -> Result<String, GatewayError>;
}

/// Serves embedding requests.
pub trait EmbeddingBackend: Send + Sync {
    fn embed(&self, model_id: &str, text: &str) -> Result<EmbeddingVector, GatewayError>;
    fn dimension(&self) -> usize;
}

/// Content-addressed key over the canonical request serialization.
///
/// Fields are hashed in fixed order (model id, prompt, temperature bits,
/// max tokens, seed, image digests) with length prefixes, so equal requests
/// produce equal keys and any field change produces a different key. Image
/// *bytes* are hashed when the location is a readable file; a location with
/// no backing file is treated as an opaque handle and hashed literally.
pub fn cache_key(request: &ModelRequest) -> Result<CacheKey, GatewayError> {
    if request.model_id.is_empty() {
        return Err(GatewayError::InvalidRequest(
            "model_id must be non-empty".into(),
        ));
    }
    if !request.temperature.is_finite() {
        return Err(GatewayError::InvalidRequest(
            "temperature must be finite".into(),
        ));
    }

    let mut hasher = Sha256::new();
    hasher.update(b"mmrag-request-v1\0");
    let mut field = |bytes: &[u8]| {
        hasher.update((bytes.len() as u64).to_be_bytes());
        hasher.update(bytes);
    };
    field(request.model_id.as_bytes());
    field(request.prompt.as_bytes());
    field(&request.temperature.to_bits().to_be_bytes());
    field(&request.max_tokens.to_be_bytes());
    field(&request.seed.to_be_bytes());
    field(&(request.images.len() as u64).to_be_bytes());
    for image in &request.images {
        let image_digest = hash_image(image)?;
        field(&image_digest);
    }
    Ok(CacheKey {
        digest: hex(&hasher.finalize()),
    })
}

fn hash_image(image: &ImageRef) -> Result<[u8; 32], GatewayError> {
    let path = Path::new(&image.location);
    let mut hasher = Sha256::new();
    if path.is_file() {
        let bytes = std::fs::read(path).map_err(|e| GatewayError::ImageUnreadable {
            location: image.location.clone(),
            reason: e.to_string(),
        })?;
        hasher.update(b"bytes\0");
        hasher.update(&bytes);
    } else {
        hasher.update(b"opaque\0");
        hasher.update(image.location.as_bytes());
    }
    Ok(hasher.finalize().into())
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    let mut out = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// Counting snapshot of gateway activity, used by tests and run stats.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CallCounts {
    pub completions: u64,
    pub embeds: u64,
    pub backend_calls: u64,
}

#[derive(Default)]
struct Counters {
    completions: AtomicU64,
    embeds: AtomicU64,
    backend_calls: AtomicU64,
}

/// Counting semaphore bounding in-flight backend calls.
struct Limiter {
    permits: Mutex<usize>,
    available: Condvar,
}

impl Limiter {
    fn new(permits: usize) -> Self {
        Self {
            permits: Mutex::new(permits.max(1)),
            available: Condvar::new(),
        }
    }

    fn acquire(&self) -> LimiterPermit<'_> {
        let mut permits = self.permits.lock().expect("limiter lock");
        while *permits == 0 {
            permits = self.available.wait(permits).expect("limiter wait");
        }
        *permits -= 1;
        LimiterPermit { limiter: self }
    }
}

struct LimiterPermit<'a> {
    limiter: &'a Limiter,
}

impl Drop for LimiterPermit<'_> {
    fn drop(&mut self) {
        let mut permits = self.limiter.permits.lock().expect("limiter lock");
        *permits += 1;
        self.limiter.available.notify_one();
    }
}

/// Completion + embedding front door with caching and concurrency limits.
pub struct ModelGateway {
    backend: Arc<dyn CompletionBackend>,
    embedder: Arc<dyn EmbeddingBackend>,
    cache: ResponseCache,
    limiter: Limiter,
    counters: Counters,
}

impl ModelGateway {
    pub fn new(backend: Arc<dyn CompletionBackend>, embedder: Arc<dyn EmbeddingBackend>) -> Self {
        Self {
            backend,
            embedder,
            cache: ResponseCache::in_memory(),
            limiter: Limiter::new(DEFAULT_MAX_IN_FLIGHT),
            counters: Counters::default(),
        }
    }

    /// Attach a persistent cache file (created if absent, appended to).
    pub fn with_cache_file(mut self, path: impl AsRef<Path>) -> Result<Self, GatewayError> {
        self.cache = ResponseCache::with_file(path.as_ref())
            .map_err(|e| GatewayError::CacheIo(e.to_string()))?;
        Ok(self)
    }

    pub fn with_max_in_flight(mut self, max_in_flight: usize) -> Self {
        self.limiter = Limiter::new(max_in_flight);
        self
    }

    /// Run a completion: cache first, then the backend; backend results are
    /// persisted before returning.
    pub fn complete(&self, request: &ModelRequest) -> Result<ModelResponse, GatewayError> {
        self.counters.completions.fetch_add(1, Ordering::Relaxed);
        let key = cache_key(request)?;
        if let Some(text) = self.cache.get(key.digest()) {
            return Ok(ModelResponse { text, cached: true });
        }
        let text = {
            let _permit = self.limiter.acquire();
            self.counters.backend_calls.fetch_add(1, Ordering::Relaxed);
            self.backend.complete(request, &key)?
        };
        self.cache
            .put(key.digest(), &text, &request.model_id)
            .map_err(|e| GatewayError::CacheIo(e.to_string()))?;
        Ok(ModelResponse {
            text,
            cached: false,
        })
    }

    /// Embed non-empty text with the named embedding model.
    pub fn embed(&self, text: &str, model_id: &str) -> Result<EmbeddingVector, GatewayError> {
        if text.is_empty() {
            return Err(GatewayError::EmptyText);
        }
        self.counters.embeds.fetch_add(1, Ordering::Relaxed);
        let _permit = self.limiter.acquire();
        self.embedder.embed(model_id, text)
    }

    pub fn embedding_dimension(&self) -> usize {
        self.embedder.dimension()
    }

    pub fn call_counts(&self) -> CallCounts {
        CallCounts {
            completions: self.counters.completions.load(Ordering::Relaxed),
            embeds: self.counters.embeds.load(Ordering::Relaxed),
            backend_calls: self.counters.backend_calls.load(Ordering::Relaxed),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn request(prompt: &str) -> ModelRequest {
        ModelRequest::text("model-a", prompt)
    }

    #[test]
    fn identical_requests_yield_identical_digests() {
        let a = cache_key(&request("hello")).unwrap();
        let b = cache_key(&request("hello")).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.digest().len(), 64);
        assert!(a
            .digest()
            .chars()
            .all(|c| c.is_ascii_hexdigit() && !c.is_ascii_uppercase()));
    }

    #[test]
    fn any_field_change_changes_the_digest() {
        let base = request("hello");
        let variants = [
            ModelRequest {
                model_id: "model-b".into(),
                ..base.clone()
            },
            ModelRequest {
                prompt: "hello!".into(),
                ..base.clone()
            },
            base.clone().with_temperature(0.7),
            ModelRequest {
                max_tokens: 256,
                ..base.clone()
            },
            base.clone().with_seed(7),
            base.clone().with_images(vec![ImageRef::opaque("img-1")]),
        ];
        let base_key = cache_key(&base).unwrap();
        for variant in variants {
            assert_ne!(
                cache_key(&variant).unwrap(),
                base_key,
                "variant {variant:?}"
            );
        }
    }

    #[test]
    fn image_bytes_hashed_not_paths() {
        let dir = tempfile::tempdir().unwrap();
        let original = dir.path().join("image-a.bin");
        let renamed = dir.path().join("image-renamed.bin");
        std::fs::write(&original, b"pixel data").unwrap();
        std::fs::copy(&original, &renamed).unwrap();

        let with = |path: &std::path::Path| {
            request("describe").with_images(vec![ImageRef::new("img", path.to_str().unwrap())])
        };
        assert_eq!(
            cache_key(&with(&original)).unwrap(),
            cache_key(&with(&renamed)).unwrap()
        );

        // different bytes, same name shape -> different key
        std::fs::write(&renamed, b"other data").unwrap();
        assert_ne!(
            cache_key(&with(&original)).unwrap(),
            cache_key(&with(&renamed)).unwrap()
        );
    }

    #[test]
    fn invalid_requests_rejected() {
        let mut r = request("x");
        r.model_id = String::new();
        assert!(matches!(
            cache_key(&r).unwrap_err(),
            GatewayError::InvalidRequest(_)
        ));
        let r = request("x").with_temperature(f64::NAN);
        assert!(matches!(
            cache_key(&r).unwrap_err(),
            GatewayError::InvalidRequest(_)
        ));
    }

    #[test]
    fn collision_free_over_large_corpus() {
        let mut seen = HashSet::new();
        for i in 0..100_000u32 {
            let key = cache_key(&request(&format!("prompt-{i}"))).unwrap();
            assert!(seen.insert(key.digest().to_string()), "collision at {i}");
        }
    }

    #[test]
    fn limiter_bounds_concurrency() {
        use std::sync::atomic::AtomicUsize;

        struct SlowBackend {
            in_flight: AtomicUsize,
            peak: AtomicUsize,
        }
        impl CompletionBackend for SlowBackend {
            fn complete(&self, _r: &ModelRequest, _k: &CacheKey) -> Result<String, GatewayError> {
                let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
                self.peak.fetch_max(now, Ordering::SeqCst);
                std::thread::sleep(std::time::Duration::from_millis(10));
                self.in_flight.fetch_sub(1, Ordering::SeqCst);
                Ok("done".into())
            }
        }

        let backend = Arc::new(SlowBackend {
            in_flight: AtomicUsize::new(0),
            peak: AtomicUsize::new(0),
        });
        let gateway = Arc::new(
            ModelGateway::new(backend.clone(), Arc::new(FixtureEmbedder::new(8)))
                .with_max_in_flight(2),
        );
        let mut handles = Vec::new();
        for i in 0..8 {
            let g = Arc::clone(&gateway);
            handles.push(std::thread::spawn(move || {
                g.complete(&ModelRequest::text("m", format!("p{i}")))
                    .unwrap();
            }));
        }
        for h in handles {
            h.join().unwrap();
        }
        assert!(backend.peak.load(Ordering::SeqCst) <= 2);
        assert_eq!(gateway.call_counts().backend_calls, 8);
    }
}
