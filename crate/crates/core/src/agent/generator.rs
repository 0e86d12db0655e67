//! Candidate generators: an HTTP chat-completion client and a scripted mock.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::{Error, Result};

/// What a generator is asked to do.
#[derive(Debug, Clone, PartialEq)]
pub enum Request {
    Generate { iteration: usize, batch_size: usize },
    Repair { candidate: String, diagnostic: String },
}

/// A rendered prompt plus the structured request it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Prompt {
    pub system: String,
    pub user: String,
    pub request: Request,
}

pub trait Generator {
    /// Returns the raw response text. Errors mean the generator is
    /// unreachable, not that the response is unusable.
    fn complete(&mut self, prompt: &Prompt) -> Result<String>;
}

fn default_max_tokens() -> u32 {
    16_384
}
fn default_temperature() -> f64 {
    0.7
}
fn default_timeout() -> u64 {
    300
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum GeneratorSpec {
    Http {
        endpoint: String,
        model: String,
        #[serde(default = "default_max_tokens")]
        max_output_tokens: u32,
        #[serde(default = "default_temperature")]
        temperature: f64,
        #[serde(default = "default_timeout")]
        timeout_secs: u64,
        /// Name of the environment variable holding the bearer token.
        #[serde(default)]
        api_key_env: Option<String>,
    },
    Mock {
        script: PathBuf,
    },
}

impl GeneratorSpec {
    pub fn build(&self) -> Result<Box<dyn Generator>> {
        Ok(match self {
            GeneratorSpec::Mock { script } => Box::new(MockGenerator::from_path(script)?),
            GeneratorSpec::Http {
                endpoint,
                model,
                max_output_tokens,
                temperature,
                timeout_secs,
                api_key_env,
            } => {
                let api_key = match api_key_env {
                    Some(var) => Some(std::env::var(var).map_err(|_| {
                        Error::Config(format!("environment variable `{var}` for the generator API key is not set"))
                    })?),
                    None => None,
                };
                Box::new(HttpGenerator {
                    endpoint: endpoint.clone(),
                    model: model.clone(),
                    max_output_tokens: *max_output_tokens,
                    temperature: *temperature,
                    api_key,
                    agent: ureq::AgentBuilder::new()
                        .timeout(Duration::from_secs(*timeout_secs))
                        .build(),
                    retries: 3,
                    backoff: Duration::from_millis(500),
                })
            }
        })
    }
}

/// One scripted candidate: a bare DSL string or a full object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScriptItem {
    Dsl(String),
    Full {
        #[serde(default)]
        name: Option<String>,
        dsl: String,
        #[serde(default)]
        rationale: Option<String>,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockScript {
    pub iterations: Vec<Vec<ScriptItem>>,
    /// Bad candidate text → replacement offered on repair.
    #[serde(default)]
    pub repairs: BTreeMap<String, String>,
}

/// Replays a script. Generation answers with a fenced JSON block, repair
/// with a fenced expression (the input itself when no repair is scripted).
#[derive(Debug, Clone)]
pub struct MockGenerator {
    pub script: MockScript,
    pub calls: usize,
}

impl MockGenerator {
    pub fn new(script: MockScript) -> Self {
        MockGenerator { script, calls: 0 }
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let script = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("mock script {}: {e}", path.display())))?;
        Ok(Self::new(script))
    }
}

impl Generator for MockGenerator {
    fn complete(&mut self, prompt: &Prompt) -> Result<String> {
        self.calls += 1;
        match &prompt.request {
            Request::Generate { iteration, .. } => {
                let items = self.script.iterations.get(*iteration).ok_or_else(|| {
                    Error::Generator(format!("mock script has no entry for iteration {iteration}"))
                })?;
                let body = serde_json::to_string_pretty(items)?;
                Ok(format!("Here are the candidates.\n\n```json\n{body}\n```\n"))
            }
            Request::Repair { candidate, .. } => {
                let fixed = self.script.repairs.get(candidate).unwrap_or(candidate);
                Ok(format!("```\n{fixed}\n```\n"))
            }
        }
    }
}

/// Chat-completion client with retry and exponential backoff.
pub struct HttpGenerator {
    endpoint: String,
    model: String,
    max_output_tokens: u32,
    temperature: f64,
    api_key: Option<String>,
    agent: ureq::Agent,
    retries: u32,
    backoff: Duration,
}

impl HttpGenerator {
    fn body(&self, prompt: &Prompt) -> serde_json::Value {
        json!({
            "model": self.model,
            "messages": [
                {"role": "system", "content": prompt.system},
                {"role": "user", "content": prompt.user},
            ],
            "temperature": self.temperature,
            "max_tokens": self.max_output_tokens,
        })
    }

    fn once(&self, body: &serde_json::Value) -> std::result::Result<String, String> {
        let mut req = self.agent.post(&self.endpoint);
        if let Some(key) = &self.api_key {
            req = req.set("Authorization", &format!("Bearer {key}"));
        }
        let resp: serde_json::Value = req
            .send_json(body.clone())
            .map_err(|e| e.to_string())?
            .into_json()
            .map_err(|e| format!("invalid response body: {e}"))?;
        resp.pointer("/choices/0/message/content")
            .and_then(|v| v.as_str())
            .map(str::to_string)
            .ok_or_else(|| "response has no choices[0].message.content".to_string())
    }
}

impl Generator for HttpGenerator {
    fn complete(&mut self, prompt: &Prompt) -> Result<String> {
        let body = self.body(prompt);
        let mut delay = self.backoff;
        let mut last = String::new();
        for attempt in 0..=self.retries {
            if attempt > 0 {
                log::warn!("generator call failed ({last}); retry {attempt} in {delay:?}");
                std::thread::sleep(delay);
                delay *= 2;
            }
            match self.once(&body) {
                Ok(text) => return Ok(text),
                Err(e) => last = e,
            }
        }
        Err(Error::Generator(format!("{} after {} retries: {last}", self.endpoint, self.retries)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gen_prompt(iteration: usize) -> Prompt {
        Prompt {
            system: String::new(),
            user: String::new(),
            request: Request::Generate { iteration, batch_size: 10 },
        }
    }

    #[test]
    fn script_parses_both_item_forms() {
        let s: MockScript = serde_json::from_str(
            r#"{"iterations": [["hhi(mcc)", {"name": "span", "dsl": "span_days()"}]], "repairs": {"a": "b"}}"#,
        )
        .unwrap();
        assert_eq!(s.iterations[0].len(), 2);
        assert_eq!(s.repairs["a"], "b");
    }

    #[test]
    fn mock_missing_iteration_is_unreachable() {
        let mut g = MockGenerator::new(MockScript::default());
        assert!(matches!(g.complete(&gen_prompt(0)), Err(Error::Generator(_))));
    }

    #[test]
    fn unreachable_http_fails_after_retries() {
        let mut g = HttpGenerator {
            endpoint: "http://127.0.0.1:9/v1/chat/completions".into(),
            model: "m".into(),
            max_output_tokens: 16,
            temperature: 0.0,
            api_key: None,
            agent: ureq::AgentBuilder::new().timeout(Duration::from_millis(200)).build(),
            retries: 3,
            backoff: Duration::from_millis(1),
        };
        let err = g.complete(&gen_prompt(0)).unwrap_err();
        assert!(matches!(err, Error::Generator(_)));
        assert_eq!(err.exit_code(), 4);
    }
}
