//! Fixture authoring support: build a fixture file (the cache line format)
//! from (request, response) pairs with the keys computed for you.

use std::io::Write;
use std::path::Path;

use crate::gateway::{cache_key, CacheLine, GatewayError, ModelRequest};

#[derive(Default)]
pub struct FixtureSet {
    lines: Vec<CacheLine>,
}

impl FixtureSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Record the response a request should get; the cache key is derived
    /// from the request exactly as the gateway derives it.
    pub fn add(
        &mut self,
        request: &ModelRequest,
        response: impl Into<String>,
    ) -> Result<&mut Self, GatewayError> {
        let key = cache_key(request)?;
        self.lines.push(CacheLine {
            key: key.digest().to_string(),
            response: response.into(),
            model_id: request.model_id.clone(),
            created_unix: 0,
        });
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.lines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }

    /// Write the fixture JSONL.
    pub fn write(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        let mut file = std::fs::File::create(path.as_ref())?;
        for line in &self.lines {
            let serialized = serde_json::to_string(line).expect("cache line serializes");
            writeln!(file, "{serialized}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{FixtureBackend, FixtureEmbedder, ModelGateway};
    use std::sync::Arc;

    #[test]
    fn written_fixtures_serve_the_recorded_requests() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fixtures.jsonl");
        let request = ModelRequest::text("m", "what year did it end");
        let mut set = FixtureSet::new();
        set.add(&request, "2019").unwrap();
        set.write(&path).unwrap();

        let gateway = ModelGateway::new(
            Arc::new(FixtureBackend::from_files(&[&path]).unwrap()),
            Arc::new(FixtureEmbedder::new(4)),
        );
        assert_eq!(gateway.complete(&request).unwrap().text, "2019");
    }
}
