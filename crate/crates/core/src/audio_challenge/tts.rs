use std::io::{Read, Write};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use parking_lot::{Condvar, Mutex};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use wait_timeout::ChildExt;

use crate::audio::{load_wav, resample_linear, AudioClip, AudioError, CANONICAL_RATE};

pub const DEFAULT_TTS_TIMEOUT: Duration = Duration::from_secs(30);
pub const DEFAULT_MAX_IN_FLIGHT: usize = 4;
/// Response header carrying the provider's own synthesis time, in seconds.
pub const DURATION_HEADER: &str = "x-synth-duration";

#[derive(Debug, Error)]
pub enum TtsError {
    #[error("text to synthesize is empty")]
    EmptyText,
    #[error("TTS provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("TTS provider error: {0}")]
    ProviderError(String),
    #[error("TTS request timed out after {0:?}")]
    Timeout(Duration),
    #[error("TTS provider returned no audio")]
    EmptyAudio,
    #[error(transparent)]
    Audio(#[from] AudioError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TtsRequest {
    pub text: String,
    #[serde(rename = "voice")]
    pub voice_id: String,
    pub language: String,
}

impl TtsRequest {
    pub fn new(text: impl Into<String>, voice_id: impl Into<String>, language: impl Into<String>) -> Self {
        Self { text: text.into(), voice_id: voice_id.into(), language: language.into() }
    }
}

#[derive(Debug, Clone)]
pub struct TtsResult {
    pub clip: AudioClip,
    pub synth_seconds: f64,
}

/// A speech synthesizer. Implementations return audio at any rate;
/// [`synthesize`] handles validation, timing and resampling.
pub trait TtsProvider: Send + Sync {
    fn name(&self) -> &str;

    fn synthesize_raw(&self, request: &TtsRequest, timeout: Duration) -> Result<AudioClip, TtsError>;
}

impl<P: TtsProvider + ?Sized> TtsProvider for &P {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn synthesize_raw(&self, request: &TtsRequest, timeout: Duration) -> Result<AudioClip, TtsError> {
        (**self).synthesize_raw(request, timeout)
    }
}

impl<P: TtsProvider + ?Sized> TtsProvider for Box<P> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn synthesize_raw(&self, request: &TtsRequest, timeout: Duration) -> Result<AudioClip, TtsError> {
        (**self).synthesize_raw(request, timeout)
    }
}

/// Synthesizes `request`, resamples to [`CANONICAL_RATE`] and records the
/// wall-clock time. Empty text fails before the provider is contacted.
pub fn synthesize<P: TtsProvider + ?Sized>(
    provider: &P,
    request: &TtsRequest,
    timeout: Duration,
) -> Result<TtsResult, TtsError> {
    if request.text.trim().is_empty() {
        return Err(TtsError::EmptyText);
    }
    let started = Instant::now();
    let raw = provider.synthesize_raw(request, timeout)?;
    if raw.is_empty() {
        return Err(TtsError::EmptyAudio);
    }
    let clip = resample_linear(&raw, CANONICAL_RATE)?;
    Ok(TtsResult { clip, synth_seconds: started.elapsed().as_secs_f64() })
}

/// Deterministic offline stand-in for a speech model.
///
/// Each character becomes a short harmonic tone whose pitch depends on the
/// character and the voice; spaces become pauses. The same request always
/// yields the same samples.
#[derive(Debug, Clone)]
pub struct StubTts {
    pub sample_rate: u32,
}

impl Default for StubTts {
    fn default() -> Self {
        Self { sample_rate: CANONICAL_RATE }
    }
}

impl StubTts {
    const CHAR_SECONDS: f64 = 0.06;
    const PAUSE_SECONDS: f64 = 0.04;

    fn voice_pitch(voice: &str) -> f64 {
        let h = voice.bytes().fold(0u32, |acc, b| acc.wrapping_mul(31).wrapping_add(u32::from(b)));
        100.0 + f64::from(h % 120)
    }

    pub fn render(&self, request: &TtsRequest) -> AudioClip {
        let rate = f64::from(self.sample_rate);
        let base = Self::voice_pitch(&request.voice_id);
        let char_len = (Self::CHAR_SECONDS * rate) as usize;
        let pause_len = (Self::PAUSE_SECONDS * rate) as usize;
        let mut samples = Vec::new();
        for c in request.text.chars() {
            if c.is_whitespace() {
                samples.extend(std::iter::repeat_n(0.0, pause_len));
                continue;
            }
            let f0 = base * (1.0 + f64::from(u32::from(c) % 24) / 24.0);
            for i in 0..char_len {
                let t = i as f64 / rate;
                let env = (std::f64::consts::PI * i as f64 / char_len as f64).sin();
                let tone: f64 =
                    (1..=4).map(|h| (2.0 * std::f64::consts::PI * f0 * f64::from(h) * t).sin() / f64::from(h)).sum();
                samples.push((0.25 * env * tone) as f32);
            }
        }
        AudioClip::from_clipped(self.sample_rate, samples)
    }
}

impl TtsProvider for StubTts {
    fn name(&self) -> &str {
        "stub"
    }

    fn synthesize_raw(&self, request: &TtsRequest, _timeout: Duration) -> Result<AudioClip, TtsError> {
        Ok(self.render(request))
    }
}

/// Client for `POST {base_url}/synthesize` taking `{text, voice, language}`
/// JSON and answering with WAV bytes.
#[derive(Debug, Clone)]
pub struct HttpTts {
    pub base_url: String,
}

impl HttpTts {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self { base_url: base_url.into() }
    }
}

impl TtsProvider for HttpTts {
    fn name(&self) -> &str {
        "http"
    }

    fn synthesize_raw(&self, request: &TtsRequest, timeout: Duration) -> Result<AudioClip, TtsError> {
        let url = format!("{}/synthesize", self.base_url.trim_end_matches('/'));
        let body = serde_json::to_vec(request).map_err(|e| TtsError::ProviderError(e.to_string()))?;
        let result = ureq::post(&url)
            .config()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .header("content-type", "application/json")
            .send(&body[..]);
        let mut response = match result {
            Ok(r) => r,
            Err(ureq::Error::Timeout(_)) => return Err(TtsError::Timeout(timeout)),
            Err(e @ (ureq::Error::ConnectionFailed | ureq::Error::HostNotFound | ureq::Error::Io(_))) => {
                return Err(TtsError::ProviderUnavailable(e.to_string()))
            }
            Err(e) => return Err(TtsError::ProviderError(e.to_string())),
        };
        let status = response.status();
        let bytes = response.body_mut().with_config().limit(256 * 1024 * 1024).read_to_vec().map_err(|e| match e {
            ureq::Error::Timeout(_) => TtsError::Timeout(timeout),
            other => TtsError::ProviderError(other.to_string()),
        })?;
        if !status.is_success() {
            let payload = String::from_utf8_lossy(&bytes).chars().take(512).collect::<String>();
            return Err(TtsError::ProviderError(format!("HTTP {status}: {payload}")));
        }
        Ok(load_wav(&bytes)?)
    }
}

/// Runs an external program per request. The text goes to stdin; the
/// program must write a WAV file to stdout. `{voice}` and `{language}` in
/// `args` are substituted.
#[derive(Debug, Clone)]
pub struct ProcessTts {
    pub program: String,
    pub args: Vec<String>,
}

impl TtsProvider for ProcessTts {
    fn name(&self) -> &str {
        &self.program
    }

    fn synthesize_raw(&self, request: &TtsRequest, timeout: Duration) -> Result<AudioClip, TtsError> {
        let args =
            self.args.iter().map(|a| a.replace("{voice}", &request.voice_id).replace("{language}", &request.language));
        let mut child = Command::new(&self.program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| TtsError::ProviderUnavailable(format!("{}: {e}", self.program)))?;

        let mut stdin = child.stdin.take().expect("stdin is piped");
        let text = request.text.clone();
        let writer = std::thread::spawn(move || {
            let _ = stdin.write_all(text.as_bytes());
        });
        let mut stdout = child.stdout.take().expect("stdout is piped");
        let reader = std::thread::spawn(move || {
            let mut buf = Vec::new();
            stdout.read_to_end(&mut buf).map(|_| buf)
        });
        let mut stderr = child.stderr.take().expect("stderr is piped");
        let err_reader = std::thread::spawn(move || {
            let mut buf = String::new();
            let _ = stderr.read_to_string(&mut buf);
            buf
        });

        let status = match child.wait_timeout(timeout) {
            Ok(Some(status)) => status,
            Ok(None) => {
                let _ = child.kill();
                let _ = child.wait();
                return Err(TtsError::Timeout(timeout));
            }
            Err(e) => return Err(TtsError::ProviderError(e.to_string())),
        };
        let _ = writer.join();
        let out = reader
            .join()
            .map_err(|_| TtsError::ProviderError("stdout reader panicked".into()))?
            .map_err(|e| TtsError::ProviderError(e.to_string()))?;
        let err = err_reader.join().unwrap_or_default();
        if !status.success() {
            return Err(TtsError::ProviderError(format!("{status}: {}", err.trim())));
        }
        Ok(load_wav(&out)?)
    }
}

/// Caps the number of concurrent requests reaching the inner provider.
pub struct ConcurrencyLimited<P> {
    inner: P,
    limit: usize,
    state: Mutex<(usize, usize)>,
    freed: Condvar,
}

impl<P> ConcurrencyLimited<P> {
    pub fn new(inner: P, limit: usize) -> Self {
        Self { inner, limit: limit.max(1), state: Mutex::new((0, 0)), freed: Condvar::new() }
    }

    pub fn limit(&self) -> usize {
        self.limit
    }

    /// Highest number of simultaneous requests observed so far.
    pub fn peak_in_flight(&self) -> usize {
        self.state.lock().1
    }

    pub fn inner(&self) -> &P {
        &self.inner
    }
}

struct Permit<'a, P>(&'a ConcurrencyLimited<P>);

impl<P> Drop for Permit<'_, P> {
    fn drop(&mut self) {
        self.0.state.lock().0 -= 1;
        self.0.freed.notify_one();
    }
}

impl<P: TtsProvider> TtsProvider for ConcurrencyLimited<P> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn synthesize_raw(&self, request: &TtsRequest, timeout: Duration) -> Result<AudioClip, TtsError> {
        {
            let mut state = self.state.lock();
            while state.0 >= self.limit {
                self.freed.wait(&mut state);
            }
            state.0 += 1;
            state.1 = state.1.max(state.0);
        }
        let _permit = Permit(self);
        self.inner.synthesize_raw(request, timeout)
    }
}
