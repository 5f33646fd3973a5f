//! Blocking JSON-over-HTTP with bounded exponential backoff.

use std::thread;
use std::time::Duration;

use log::{debug, warn};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

fn default_timeout_secs() -> u64 {
    60
}
fn default_max_attempts() -> u32 {
    3
}
fn default_backoff_ms() -> u64 {
    200
}

/// Connection settings shared by the remote encoder and the remote generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointConfig {
    pub url: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token.
    #[serde(default)]
    pub token_env: Option<String>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default = "default_max_attempts")]
    pub max_attempts: u32,
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
}

impl EndpointConfig {
    pub fn new(url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            model: model.into(),
            token_env: None,
            timeout_secs: default_timeout_secs(),
            max_attempts: default_max_attempts(),
            backoff_ms: default_backoff_ms(),
        }
    }
}

pub(crate) struct JsonClient {
    endpoint: EndpointConfig,
    token: Option<String>,
    client: reqwest::blocking::Client,
}

impl JsonClient {
    pub(crate) fn new(endpoint: EndpointConfig) -> Result<Self> {
        let token = match &endpoint.token_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                Error::Config(format!("environment variable `{var}` for {} is not set", endpoint.url))
            })?),
            None => None,
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(endpoint.timeout_secs))
            .build()
            .map_err(|e| Error::Config(format!("http client: {e}")))?;
        Ok(Self {
            endpoint,
            token,
            client,
        })
    }

    pub(crate) fn endpoint(&self) -> &EndpointConfig {
        &self.endpoint
    }

    /// POSTs `body`, retrying transport failures (connection errors, timeouts,
    /// 429 and 5xx) up to `max_attempts` times.
    pub(crate) fn post(&self, body: &Value, correlation_id: &str) -> Result<Value> {
        let attempts = self.endpoint.max_attempts.max(1);
        let mut last = None;
        for attempt in 0..attempts {
            if attempt > 0 {
                let delay = self.endpoint.backoff_ms.saturating_mul(1 << (attempt - 1));
                thread::sleep(Duration::from_millis(delay));
            }
            match self.post_once(body, correlation_id) {
                Ok(v) => return Ok(v),
                Err(e) if e.is_retryable() => {
                    warn!("[{correlation_id}] attempt {}/{attempts} failed: {e}", attempt + 1);
                    last = Some(e);
                }
                Err(e) => return Err(e),
            }
        }
        Err(last.expect("at least one attempt"))
    }

    fn post_once(&self, body: &Value, correlation_id: &str) -> Result<Value> {
        let url = &self.endpoint.url;
        let transport = |message: String| Error::Transport {
            endpoint: url.clone(),
            message,
        };
        let mut request = self
            .client
            .post(url)
            .header("x-request-id", correlation_id)
            .json(body);
        if let Some(token) = &self.token {
            request = request.bearer_auth(token);
        }
        debug!("[{correlation_id}] POST {url}");
        let response = request.send().map_err(|e| transport(e.to_string()))?;
        let status = response.status();
        let text = response.text().map_err(|e| transport(e.to_string()))?;
        debug!("[{correlation_id}] {status} ({} bytes)", text.len());
        if status.is_server_error() || status.as_u16() == 429 {
            return Err(transport(format!("HTTP {status}")));
        }
        if !status.is_success() {
            return Err(Error::MalformedResponse {
                endpoint: url.clone(),
                message: format!("HTTP {status}: {text}"),
            });
        }
        serde_json::from_str(&text).map_err(|e| Error::MalformedResponse {
            endpoint: url.clone(),
            message: e.to_string(),
        })
    }
}


#[cfg(test)]
mod tests {
    use super::*;

    fn fast(url: &str) -> EndpointConfig {
        EndpointConfig {
            backoff_ms: 1,
            ..EndpointConfig::new(url, "m")
        }
    }

    #[test]
    fn retries_server_errors_then_succeeds() {
        let server = testing::serve(vec![(503, "{}".into()), (200, r#"{"ok":true}"#.into())]);
        let client = JsonClient::new(fast(&server.url)).unwrap();
        let v = client.post(&serde_json::json!({"x": 1}), "t1").unwrap();
        assert_eq!(v["ok"], true);
        assert_eq!(server.requests.lock().unwrap().len(), 2);
    }

    #[test]
    fn gives_up_after_three_attempts() {
        let server = testing::serve(vec![(500, "{}".into()); 4]);
        let client = JsonClient::new(fast(&server.url)).unwrap();
        let err = client.post(&serde_json::json!({}), "t2").unwrap_err();
        assert!(matches!(err, Error::Transport { .. }));
        assert_eq!(server.requests.lock().unwrap().len(), 3);
    }

    #[test]
    fn client_errors_are_not_retried() {
        let server = testing::serve(vec![(400, "bad".into()), (200, "{}".into())]);
        let client = JsonClient::new(fast(&server.url)).unwrap();
        let err = client.post(&serde_json::json!({}), "t3").unwrap_err();
        assert!(matches!(err, Error::MalformedResponse { .. }));
        assert_eq!(server.requests.lock().unwrap().len(), 1);
    }

    #[test]
    fn missing_token_variable_is_a_config_error() {
        let mut cfg = fast("http://127.0.0.1:9");
        cfg.token_env = Some("PAVI_TEST_SURELY_UNSET_TOKEN".into());
        assert!(matches!(JsonClient::new(cfg), Err(Error::Config(_))));
    }
}
