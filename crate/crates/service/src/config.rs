//! Service configuration: a TOML file overlaid with `EVOCAPTCHA_*`
//! environment variables.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ServiceError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub host: String,
    pub port: u16,
    pub ttl_seconds: u64,
    pub attempts: u32,
    /// FIGlet fonts; the bundled set when absent.
    pub font_dir: Option<PathBuf>,
    /// Directory of `.wav` ambient beds; the bundled bed when absent.
    pub noise_dir: Option<PathBuf>,
    /// Question set for audio challenges; the bundled sample when absent.
    pub qa_path: Option<PathBuf>,
    /// Base URL of a speech server. The built-in tone synthesizer is used
    /// when absent.
    pub tts_endpoint: Option<String>,
    pub default_snr_db: f64,
    pub default_gain_db: f64,
    pub audit_log: PathBuf,
    /// Static files served under `/demo`.
    pub demo_dir: Option<PathBuf>,
    /// Challenges generated at once.
    pub workers: usize,
    /// Attach images to ASCII text challenges too.
    pub rasterize_text: bool,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            host: "127.0.0.1".into(),
            port: 8080,
            ttl_seconds: 180,
            attempts: 1,
            font_dir: None,
            noise_dir: None,
            qa_path: None,
            tts_endpoint: None,
            default_snr_db: 10.0,
            default_gain_db: -6.0,
            audit_log: PathBuf::from("evocaptcha-audit.jsonl"),
            demo_dir: None,
            workers: 4,
            rasterize_text: false,
        }
    }
}

/// Environment variables read by [`ServiceConfig::apply_env`].
pub const ENV_OVERRIDES: [&str; 11] = [
    "EVOCAPTCHA_HOST",
    "EVOCAPTCHA_PORT",
    "EVOCAPTCHA_TTL_SECONDS",
    "EVOCAPTCHA_ATTEMPTS",
    "EVOCAPTCHA_FONT_DIR",
    "EVOCAPTCHA_NOISE_DIR",
    "EVOCAPTCHA_TTS_ENDPOINT",
    "EVOCAPTCHA_SNR_DB",
    "EVOCAPTCHA_GAIN_DB",
    "EVOCAPTCHA_AUDIT_LOG",
    "EVOCAPTCHA_DEMO_DIR",
];

impl ServiceConfig {
    pub fn from_toml(text: &str) -> Result<Self, ServiceError> {
        toml::from_str(text).map_err(|e| ServiceError::Config(e.to_string()))
    }

    /// Reads `path` if given, then applies the process environment.
    pub fn load(path: Option<&Path>) -> Result<Self, ServiceError> {
        let mut cfg = match path {
            Some(p) => {
                let text =
                    std::fs::read_to_string(p).map_err(|e| ServiceError::Config(format!("{}: {e}", p.display())))?;
                Self::from_toml(&text)?
            }
            None => Self::default(),
        };
        cfg.apply_env(std::env::vars())?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies any of [`ENV_OVERRIDES`] found in `vars`.
    pub fn apply_env<I, K, V>(&mut self, vars: I) -> Result<(), ServiceError>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: Into<String>,
    {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, ServiceError> {
            v.trim().parse().map_err(|_| ServiceError::Config(format!("{key}: cannot parse {v:?}")))
        }
        for (k, v) in vars {
            let (k, v) = (k.as_ref(), v.into());
            match k {
                "EVOCAPTCHA_HOST" => self.host = v,
                "EVOCAPTCHA_PORT" => self.port = num(k, &v)?,
                "EVOCAPTCHA_TTL_SECONDS" => self.ttl_seconds = num(k, &v)?,
                "EVOCAPTCHA_ATTEMPTS" => self.attempts = num(k, &v)?,
                "EVOCAPTCHA_FONT_DIR" => self.font_dir = Some(v.into()),
                "EVOCAPTCHA_NOISE_DIR" => self.noise_dir = Some(v.into()),
                "EVOCAPTCHA_TTS_ENDPOINT" => self.tts_endpoint = Some(v),
                "EVOCAPTCHA_SNR_DB" => self.default_snr_db = num(k, &v)?,
                "EVOCAPTCHA_GAIN_DB" => self.default_gain_db = num(k, &v)?,
                "EVOCAPTCHA_AUDIT_LOG" => self.audit_log = v.into(),
                "EVOCAPTCHA_DEMO_DIR" => self.demo_dir = Some(v.into()),
                _ => {}
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ServiceError> {
        if self.ttl_seconds == 0 {
            return Err(ServiceError::Config("ttl_seconds must be positive".into()));
        }
        if self.attempts == 0 {
            return Err(ServiceError::Config("attempts must be at least 1".into()));
        }
        if self.workers == 0 {
            return Err(ServiceError::Config("workers must be at least 1".into()));
        }
        if !self.default_snr_db.is_finite() {
            return Err(ServiceError::Config("default_snr_db must be finite".into()));
        }
        if !self.default_gain_db.is_finite() || self.default_gain_db > 0.0 {
            return Err(ServiceError::Config("default_gain_db must be finite and <= 0".into()));
        }
        Ok(())
    }

    pub fn demo_dir(&self) -> PathBuf {
        self.demo_dir.clone().unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("static/demo"))
    }
}
