//! Minimal JSON-over-HTTP plumbing shared by the remote chat client and the
//! remote embedding provider.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token.
    #[serde(default = "default_key_env")]
    pub api_key_env: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_retries")]
    pub retries: u32,
}

fn default_key_env() -> String {
    "OPENAI_API_KEY".into()
}

fn default_timeout() -> u64 {
    60
}

fn default_retries() -> u32 {
    3
}

#[derive(Debug, Error)]
pub enum HttpError {
    #[error("building http client: {0}")]
    Client(String),
    #[error("POST {url} failed after {attempts} attempt(s): {last}")]
    Exhausted {
        url: String,
        attempts: u32,
        last: String,
    },
    #[error("POST {url}: status {status}: {body}")]
    Status {
        url: String,
        status: u16,
        body: String,
    },
    #[error("decoding response from {url}: {message}")]
    Decode { url: String, message: String },
}

pub struct JsonPoster {
    client: reqwest::blocking::Client,
    config: RemoteConfig,
}

impl JsonPoster {
    pub fn new(config: RemoteConfig) -> Result<Self, HttpError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| HttpError::Client(e.to_string()))?;
        Ok(Self { client, config })
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    /// POST `body` to `{base_url}/{endpoint}`. Transport errors and 5xx/429
    /// responses are retried up to `retries` extra times; other statuses fail
    /// immediately.
    pub fn post<B: Serialize, R: for<'de> Deserialize<'de>>(
        &self,
        endpoint: &str,
        body: &B,
    ) -> Result<R, HttpError> {
        let url = format!(
            "{}/{}",
            self.config.base_url.trim_end_matches('/'),
            endpoint.trim_start_matches('/')
        );
        let key = std::env::var(&self.config.api_key_env).ok();
        let attempts = self.config.retries + 1;
        let mut last = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                std::thread::sleep(Duration::from_millis(100 * (1 << attempt.min(6))));
            }
            let mut req = self.client.post(&url).json(body);
            if let Some(k) = &key {
                req = req.bearer_auth(k);
            }
            match req.send() {
                Ok(resp) => {
                    let status = resp.status();
                    if status.is_success() {
                        let text = resp.text().map_err(|e| HttpError::Decode {
                            url: url.clone(),
                            message: e.to_string(),
                        })?;
                        return serde_json::from_str(&text).map_err(|e| HttpError::Decode {
                            url: url.clone(),
                            message: e.to_string(),
                        });
                    }
                    let body = resp.text().unwrap_or_default();
                    if status.is_server_error() || status.as_u16() == 429 {
                        last = format!("status {status}: {body}");
                        continue;
                    }
                    return Err(HttpError::Status {
                        url,
                        status: status.as_u16(),
                        body,
                    });
                }
                Err(e) => last = e.to_string(),
            }
        }
        Err(HttpError::Exhausted {
            url,
            attempts,
            last,
        })
    }
}
