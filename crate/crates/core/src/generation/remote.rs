use log::info;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::http::{EndpointConfig, JsonClient};
use crate::promptgen::PromptBundle;

use super::Generator;

fn default_max_tokens() -> u32 {
    256
}
fn default_max_prompt_chars() -> usize {
    32_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteGeneratorConfig {
    #[serde(flatten)]
    pub endpoint: EndpointConfig,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    /// Prompts longer than this (in characters) are rejected, never truncated.
    #[serde(default = "default_max_prompt_chars")]
    pub max_prompt_chars: usize,
}

impl RemoteGeneratorConfig {
    pub fn new(endpoint: EndpointConfig) -> Self {
        Self {
            endpoint,
            temperature: 0.0,
            max_tokens: default_max_tokens(),
            max_prompt_chars: default_max_prompt_chars(),
        }
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    content: Option<String>,
}

/// Chat-completion client: `{model, messages, temperature, max_tokens}` → `choices[0].message.content`.
pub struct RemoteGenerator {
    client: JsonClient,
    temperature: f64,
    max_tokens: u32,
    max_prompt_chars: usize,
}

impl RemoteGenerator {
    pub fn new(config: RemoteGeneratorConfig) -> Result<Self> {
        Ok(Self {
            client: JsonClient::new(config.endpoint)?,
            temperature: config.temperature,
            max_tokens: config.max_tokens,
            max_prompt_chars: config.max_prompt_chars,
        })
    }
}

impl Generator for RemoteGenerator {
    fn identity(&self) -> String {
        let e = self.client.endpoint();
        format!("remote:{}@{}", e.model, e.url)
    }

    fn generate(&self, bundle: &PromptBundle) -> Result<String> {
        let length = bundle.rendered.chars().count();
        if length > self.max_prompt_chars {
            return Err(Error::PromptTooLong {
                actual: length,
                limit: self.max_prompt_chars,
            });
        }
        let endpoint = self.client.endpoint();
        let body = json!({
            "model": endpoint.model,
            "messages": [{ "role": "user", "content": bundle.rendered }],
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
        });
        let correlation = uuid::Uuid::new_v4().to_string();
        let product = bundle.provenance.as_ref().map_or("-", |p| p.product_id.as_str());
        info!("[{correlation}] generate for product {product} ({length} chars)");
        let raw = self.client.post(&body, &correlation)?;
        let response: ChatResponse = serde_json::from_value(raw).map_err(|e| Error::MalformedResponse {
            endpoint: endpoint.url.clone(),
            message: e.to_string(),
        })?;
        let first = response.choices.into_iter().next().ok_or_else(|| Error::EmptyChoices {
            endpoint: endpoint.url.clone(),
        })?;
        let content = first.message.content.ok_or_else(|| Error::MalformedResponse {
            endpoint: endpoint.url.clone(),
            message: "choice has no message content".into(),
        })?;
        info!("[{correlation}] completion: {content:?}");
        Ok(content)
    }
}
