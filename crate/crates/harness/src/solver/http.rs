use std::collections::BTreeMap;
use std::path::Path;
use std::time::Duration;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{SolverAdapter, SolverError, SolverInput, DEFAULT_SOLVER_TIMEOUT};
use crate::eval::EvalMode;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuthConfig {
    /// Header to send, e.g. `Authorization`.
    pub header: String,
    /// Environment variable holding the secret.
    pub env: String,
    #[serde(default)]
    pub prefix: String,
}

/// A model endpoint described as data.
///
/// Request bodies are JSON templates with `{prompt}`, `{image_b64}` and
/// `{audio_b64}` slots, each replaced by the JSON-escaped value. The answer
/// is read from `response_path`, a dotted path where numeric segments index
/// arrays (`choices.0.message.content`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub name: String,
    pub modes: Vec<EvalMode>,
    pub url: String,
    #[serde(default)]
    pub request_template: Option<String>,
    /// Per-mode templates; take precedence over `request_template`.
    #[serde(default)]
    pub templates: BTreeMap<EvalMode, String>,
    pub response_path: String,
    #[serde(default)]
    pub timeout_seconds: Option<f64>,
    #[serde(default)]
    pub auth: Option<AuthConfig>,
    #[serde(default)]
    pub headers: BTreeMap<String, String>,
}

impl SolverConfig {
    pub fn from_toml(text: &str) -> Result<Self, SolverError> {
        let cfg: Self = toml::from_str(text).map_err(|e| SolverError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, SolverError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| SolverError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        if self.modes.is_empty() {
            return Err(SolverError::Config(format!("{}: no modes listed", self.name)));
        }
        for &mode in &self.modes {
            let template = self
                .template(mode)
                .ok_or_else(|| SolverError::Config(format!("{}: no request template for {mode:?}", self.name)))?;
            let probe = fill_template(template, "p", Some("aQ=="), Some("aQ=="));
            serde_json::from_str::<Value>(&probe).map_err(|e| {
                SolverError::Config(format!("{}: {mode:?} template is not JSON after filling: {e}", self.name))
            })?;
        }
        if let Some(t) = self.timeout_seconds {
            if !(t.is_finite() && t > 0.0) {
                return Err(SolverError::Config(format!("{}: timeout must be positive", self.name)));
            }
        }
        Ok(())
    }

    pub fn template(&self, mode: EvalMode) -> Option<&str> {
        self.templates.get(&mode).or(self.request_template.as_ref()).map(String::as_str)
    }

    pub fn timeout(&self) -> Duration {
        self.timeout_seconds.map(Duration::from_secs_f64).unwrap_or(DEFAULT_SOLVER_TIMEOUT)
    }
}

fn json_escape(s: &str) -> String {
    let quoted = serde_json::to_string(s).expect("strings always serialize");
    quoted[1..quoted.len() - 1].to_owned()
}

fn fill_template(template: &str, prompt: &str, image_b64: Option<&str>, audio_b64: Option<&str>) -> String {
    let mut out = String::with_capacity(template.len() + prompt.len());
    let mut rest = template;
    while let Some(start) = rest.find('{') {
        out.push_str(&rest[..start]);
        let tail = &rest[start..];
        let slot = ["{prompt}", "{image_b64}", "{audio_b64}"].into_iter().find(|s| tail.starts_with(s));
        match slot {
            Some(s) => {
                let value = match s {
                    "{prompt}" => Some(prompt),
                    "{image_b64}" => image_b64,
                    _ => audio_b64,
                };
                out.push_str(&json_escape(value.unwrap_or("")));
                rest = &tail[s.len()..];
            }
            None => {
                out.push('{');
                rest = &tail[1..];
            }
        }
    }
    out.push_str(rest);
    out
}

/// Follows a dotted path into a JSON document and returns the string there.
pub fn extract_path(doc: &Value, path: &str) -> Result<String, SolverError> {
    let mut cur = doc;
    for seg in path.split('.').filter(|s| !s.is_empty()) {
        cur = match (cur, seg.parse::<usize>()) {
            (Value::Array(items), Ok(i)) => items.get(i),
            (Value::Object(map), _) => map.get(seg),
            _ => None,
        }
        .ok_or_else(|| SolverError::Extraction(format!("path {path:?} not found at {seg:?}")))?;
    }
    match cur {
        Value::String(s) => Ok(s.clone()),
        Value::Null => Err(SolverError::Extraction(format!("{path:?} is null"))),
        other => Ok(other.to_string()),
    }
}

#[derive(Debug, Clone)]
pub struct HttpTemplateAdapter {
    config: SolverConfig,
}

impl HttpTemplateAdapter {
    pub fn new(config: SolverConfig) -> Result<Self, SolverError> {
        config.validate()?;
        Ok(Self { config })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    /// The request body for `input`.
    pub fn request_body(&self, input: &SolverInput<'_>) -> Result<String, SolverError> {
        let template = self.config.template(input.mode).ok_or(SolverError::UnsupportedMode(input.mode))?;
        if template.contains("{image_b64}") && input.image_png.is_none() {
            return Err(SolverError::Config("template needs an image but the trial has none".into()));
        }
        if template.contains("{audio_b64}") && input.audio_wav.is_none() {
            return Err(SolverError::Config("template needs audio but the trial has none".into()));
        }
        let image = input.image_png.map(|b| BASE64.encode(b));
        let audio = input.audio_wav.map(|b| BASE64.encode(b));
        Ok(fill_template(template, input.prompt, image.as_deref(), audio.as_deref()))
    }
}

impl SolverAdapter for HttpTemplateAdapter {
    fn name(&self) -> &str {
        &self.config.name
    }

    fn supports(&self, mode: EvalMode) -> bool {
        self.config.modes.contains(&mode)
    }

    fn solve(&self, input: &SolverInput<'_>) -> Result<String, SolverError> {
        if !self.supports(input.mode) {
            return Err(SolverError::UnsupportedMode(input.mode));
        }
        let body = self.request_body(input)?;
        let timeout = self.config.timeout();
        let mut req = ureq::post(&self.config.url)
            .config()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .header("content-type", "application/json");
        for (k, v) in &self.config.headers {
            req = req.header(k.as_str(), v.as_str());
        }
        if let Some(auth) = &self.config.auth {
            let secret = std::env::var(&auth.env).map_err(|_| SolverError::MissingCredential(auth.env.clone()))?;
            req = req.header(auth.header.as_str(), format!("{}{secret}", auth.prefix));
        }
        let mut response = req.send(body.as_bytes()).map_err(|e| match e {
            ureq::Error::Timeout(_) => SolverError::Timeout,
            other => SolverError::Transport(other.to_string()),
        })?;
        let status = response.status().as_u16();
        let text = response.body_mut().with_config().limit(64 * 1024 * 1024).read_to_string().map_err(|e| match e {
            ureq::Error::Timeout(_) => SolverError::Timeout,
            other => SolverError::Transport(other.to_string()),
        })?;
        if !(200..300).contains(&status) {
            return Err(SolverError::Http { status, body: text.chars().take(512).collect() });
        }
        let doc: Value =
            serde_json::from_str(&text).map_err(|e| SolverError::Extraction(format!("response is not JSON: {e}")))?;
        extract_path(&doc, &self.config.response_path)
    }
}
