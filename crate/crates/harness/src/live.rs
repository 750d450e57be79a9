//! Live runs against real model APIs.
//!
//! A plan names the solver configs, the modes each should face and the
//! number of samples per table cell. [`run_live_plan`] generates the
//! datasets, runs every (solver, mode) pair on its own thread and writes
//! one report per table.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Instant;

use evocaptcha_core::audio::MixSpec;
use evocaptcha_core::audio_challenge::{
    bundled_noise_bed, bundled_qa_sample, generate_audio_dataset, parse_qa_dataset, AudioJob, BuildOptions,
    ConcurrencyLimited, HttpTts, NoiseBank, StubTts, TtsProvider, DEFAULT_MAX_IN_FLIGHT,
};
use evocaptcha_core::challenge::{generate_dataset, GenConfig, RasterSpec};
use evocaptcha_core::figlet::{bundled_fonts_dir, load_font_dir};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::{Clock, SystemClock};
use crate::eval::{run_eval, EvalDataset, EvalMode, EvalOptions, EvalSummary};
use crate::report::{emit_report, ReportFormat};
use crate::solver::{HttpTemplateAdapter, SolverConfig};

#[derive(Debug, Error)]
pub enum LiveError {
    #[error("plan {}: {message}", path.display())]
    Plan { path: PathBuf, message: String },
    #[error("dataset generation failed: {0}")]
    Generation(String),
    #[error("cannot write {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Where question audio comes from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TtsPlan {
    #[default]
    Stub,
    Http {
        url: String,
        #[serde(default = "default_clip_seconds")]
        seconds_per_clip: f64,
        #[serde(default = "default_in_flight")]
        max_in_flight: usize,
    },
}

fn default_clip_seconds() -> f64 {
    2.1
}

fn default_in_flight() -> usize {
    DEFAULT_MAX_IN_FLIGHT
}

fn default_budget() -> f64 {
    30.0
}

fn default_concurrency() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedSolver {
    /// Solver config path, relative to the plan file.
    pub config: PathBuf,
    /// Defaults to every mode the config supports.
    #[serde(default)]
    pub modes: Option<Vec<EvalMode>>,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    /// Expected seconds per trial, used only for the time projection.
    #[serde(default)]
    pub expected_seconds: BTreeMap<EvalMode, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LivePlan {
    /// Trials per table cell: per solver for ASCII, per solver and
    /// environment for audio.
    pub samples: usize,
    pub seed: u64,
    #[serde(default = "default_budget")]
    pub budget_minutes: f64,
    /// Questions for audio; the bundled sample when absent.
    #[serde(default)]
    pub qa_path: Option<PathBuf>,
    #[serde(default)]
    pub tts: TtsPlan,
    #[serde(rename = "solver")]
    pub solvers: Vec<PlannedSolver>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

/// One (solver, mode) pair.
#[derive(Debug, Clone)]
pub struct LiveJob {
    pub config: SolverConfig,
    pub mode: EvalMode,
    pub concurrency: usize,
    pub trials: usize,
    pub expected_seconds: Option<f64>,
}

impl LiveJob {
    pub fn projected_seconds(&self) -> Option<f64> {
        self.expected_seconds.map(|s| (self.trials as f64 / self.concurrency.max(1) as f64).ceil() * s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub generation_seconds: f64,
    /// Slowest job; jobs run side by side.
    pub slowest_job_seconds: f64,
    pub total_seconds: f64,
    pub budget_seconds: f64,
    /// Jobs with no expected time, left out of the total.
    pub unestimated: Vec<String>,
}

impl Projection {
    pub fn within_budget(&self) -> bool {
        self.unestimated.is_empty() && self.total_seconds <= self.budget_seconds
    }
}

impl LivePlan {
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self, LiveError> {
        let mut plan: Self = toml::from_str(text)
            .map_err(|e| LiveError::Plan { path: base_dir.to_path_buf(), message: e.to_string() })?;
        plan.base_dir = base_dir.to_path_buf();
        if plan.samples == 0 {
            return Err(plan.error("samples must be at least 1"));
        }
        if plan.solvers.is_empty() {
            return Err(plan.error("no [[solver]] entries"));
        }
        Ok(plan)
    }

    pub fn load(path: &Path) -> Result<Self, LiveError> {
        let text = fs::read_to_string(path)
            .map_err(|e| LiveError::Plan { path: path.to_path_buf(), message: e.to_string() })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base)
    }

    fn error(&self, message: impl Into<String>) -> LiveError {
        LiveError::Plan { path: self.base_dir.clone(), message: message.into() }
    }

    /// Resolves configs and expands solvers into jobs, in plan order.
    pub fn jobs(&self) -> Result<Vec<LiveJob>, LiveError> {
        let mut jobs = Vec::new();
        for planned in &self.solvers {
            let path = self.base_dir.join(&planned.config);
            let config = SolverConfig::load(&path).map_err(|e| self.error(format!("{}: {e}", path.display())))?;
            let modes = planned.modes.clone().unwrap_or_else(|| config.modes.clone());
            for mode in modes {
                if !config.modes.contains(&mode) {
                    return Err(self.error(format!("{} does not support {mode:?}", config.name)));
                }
                let trials = match mode {
                    EvalMode::Audio => self.samples * MixSpec::all_defaults().len(),
                    _ => self.samples,
                };
                jobs.push(LiveJob {
                    config: config.clone(),
                    mode,
                    concurrency: planned.concurrency.max(1),
                    trials,
                    expected_seconds: planned.expected_seconds.get(&mode).copied(),
                });
            }
        }
        Ok(jobs)
    }

    /// Expected wall time from the per-trial estimates.
    pub fn projection(&self) -> Result<Projection, LiveError> {
        let jobs = self.jobs()?;
        let generation_seconds = match &self.tts {
            TtsPlan::Http { seconds_per_clip, max_in_flight, .. } if jobs.iter().any(|j| j.mode == EvalMode::Audio) => {
                // Overlap clips synthesize the question and two distractors.
                let clips = self.samples * (MixSpec::all_defaults().len() + 2);
                clips as f64 * seconds_per_clip / (*max_in_flight).max(1) as f64
            }
            _ => 0.0,
        };
        let mut unestimated = Vec::new();
        let mut slowest: f64 = 0.0;
        for job in &jobs {
            match job.projected_seconds() {
                Some(s) => slowest = slowest.max(s),
                None => unestimated.push(format!("{} ({:?})", job.config.name, job.mode)),
            }
        }
        Ok(Projection {
            generation_seconds,
            slowest_job_seconds: slowest,
            total_seconds: generation_seconds + slowest,
            budget_seconds: self.budget_minutes * 60.0,
            unestimated,
        })
    }
}

#[derive(Clone, Default)]
pub struct LiveOptions {
    /// Sends every request here instead of the configured URL.
    pub url_override: Option<String>,
    /// Replaces the plan's speech source.
    pub tts_override: Option<TtsPlan>,
    pub clock: Option<Arc<dyn Clock>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JobFailure {
    pub solver: String,
    pub mode: EvalMode,
    pub error: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LiveOutcome {
    pub projection: Projection,
    pub summaries: BTreeMap<EvalMode, Vec<EvalSummary>>,
    pub failures: Vec<JobFailure>,
    /// `<mode>.md`, `<mode>.csv` and `<mode>.json` for every mode with results.
    pub reports: Vec<PathBuf>,
    pub wall_seconds: f64,
}

/// Generates the datasets under `out_dir`, runs every job and writes reports.
/// A failing job is recorded and does not stop the others.
pub fn run_live_plan(plan: &LivePlan, out_dir: &Path, options: &LiveOptions) -> Result<LiveOutcome, LiveError> {
    let started = Instant::now();
    let projection = plan.projection()?;
    let mut jobs = plan.jobs()?;
    if let Some(url) = &options.url_override {
        for job in &mut jobs {
            job.config.url = url.clone();
        }
    }
    let needs = |m: EvalMode| jobs.iter().any(|j| j.mode == m);
    let ascii = if needs(EvalMode::Text) || needs(EvalMode::Image) {
        Some(generate_ascii(plan, &out_dir.join("ascii"), needs(EvalMode::Image))?)
    } else {
        None
    };
    let audio = if needs(EvalMode::Audio) {
        Some(generate_audio(plan, options.tts_override.as_ref().unwrap_or(&plan.tts), &out_dir.join("audio"))?)
    } else {
        None
    };

    let logs = out_dir.join("logs");
    create_dir(&logs)?;
    let clock: Arc<dyn Clock> = options.clock.clone().unwrap_or_else(|| Arc::new(SystemClock::default()));
    let results: Vec<Result<Vec<EvalSummary>, JobFailure>> = std::thread::scope(|scope| {
        let handles: Vec<_> = jobs
            .iter()
            .map(|job| {
                let dataset = if job.mode == EvalMode::Audio { audio.as_ref() } else { ascii.as_ref() };
                let opts = EvalOptions {
                    concurrency: job.concurrency,
                    log_path: Some(logs.join(format!("{}-{}.jsonl", slug(&job.config.name), mode_name(job.mode)))),
                    clock: clock.clone(),
                    ..EvalOptions::default()
                };
                scope.spawn(move || {
                    let fail = |error: String| JobFailure { solver: job.config.name.clone(), mode: job.mode, error };
                    let adapter = HttpTemplateAdapter::new(job.config.clone()).map_err(|e| fail(e.to_string()))?;
                    let dataset = dataset.expect("dataset generated for every planned mode");
                    run_eval(dataset, &adapter, job.mode, &opts)
                        .map(|run| run.summaries)
                        .map_err(|e| fail(e.to_string()))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("live job panicked")).collect()
    });

    let mut summaries: BTreeMap<EvalMode, Vec<EvalSummary>> = BTreeMap::new();
    let mut failures = Vec::new();
    for (job, result) in jobs.iter().zip(results) {
        match result {
            Ok(s) => summaries.entry(job.mode).or_default().extend(s),
            Err(f) => failures.push(f),
        }
    }
    let mut reports = Vec::new();
    for (mode, rows) in &summaries {
        for (format, ext) in [(ReportFormat::Table, "md"), (ReportFormat::Csv, "csv"), (ReportFormat::Json, "json")] {
            let bytes = emit_report(rows, format).map_err(|e| LiveError::Generation(e.to_string()))?;
            let path = out_dir.join(format!("{}.{ext}", mode_name(*mode)));
            fs::write(&path, bytes).map_err(|source| LiveError::Io { path: path.clone(), source })?;
            reports.push(path);
        }
    }
    Ok(LiveOutcome { projection, summaries, failures, reports, wall_seconds: started.elapsed().as_secs_f64() })
}

fn generate_ascii(plan: &LivePlan, dir: &Path, images: bool) -> Result<EvalDataset, LiveError> {
    let fonts = load_font_dir(&bundled_fonts_dir()).map_err(|e| LiveError::Generation(e.to_string()))?;
    let config = GenConfig { seed: plan.seed, ..GenConfig::default() };
    let raster = RasterSpec::default();
    generate_dataset(plan.samples, &fonts.fonts, &config, dir, images.then_some(&raster))
        .map_err(|e| LiveError::Generation(e.to_string()))?;
    EvalDataset::load(dir).map_err(|e| LiveError::Generation(e.to_string()))
}

fn generate_audio(plan: &LivePlan, tts: &TtsPlan, dir: &Path) -> Result<EvalDataset, LiveError> {
    let qa_path = plan.qa_path.as_ref().map(|p| plan.base_dir.join(p)).unwrap_or_else(bundled_qa_sample);
    let file = fs::File::open(&qa_path).map_err(|e| LiveError::Generation(format!("{}: {e}", qa_path.display())))?;
    let items =
        parse_qa_dataset(std::io::BufReader::new(file)).map_err(|e| LiveError::Generation(e.to_string()))?.items;
    let bank = NoiseBank::new(items.clone())
        .with_bed_file(&bundled_noise_bed())
        .map_err(|e| LiveError::Generation(e.to_string()))?;
    let jobs: Vec<AudioJob> = MixSpec::all_defaults()
        .into_iter()
        .flat_map(|env| (0..plan.samples).map(move |i| (env, i)))
        .map(|(environment, i)| AudioJob { qa: items[i % items.len()].clone(), environment })
        .collect();
    let tts: Box<dyn TtsProvider> = match tts {
        TtsPlan::Stub => Box::new(StubTts::default()),
        TtsPlan::Http { url, max_in_flight, .. } => {
            Box::new(ConcurrencyLimited::new(HttpTts::new(url), *max_in_flight))
        }
    };
    generate_audio_dataset(&jobs, tts.as_ref(), &bank, &BuildOptions::default(), plan.seed, dir, None)
        .map_err(|e| LiveError::Generation(e.to_string()))?;
    EvalDataset::load(dir).map_err(|e| LiveError::Generation(e.to_string()))
}

fn create_dir(path: &Path) -> Result<(), LiveError> {
    fs::create_dir_all(path).map_err(|source| LiveError::Io { path: path.to_path_buf(), source })
}

fn mode_name(mode: EvalMode) -> &'static str {
    match mode {
        EvalMode::Text => "text",
        EvalMode::Image => "image",
        EvalMode::Audio => "audio",
    }
}

fn slug(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '.' { c.to_ascii_lowercase() } else { '-' }).collect()
}

/// Local stand-in for every model API, for checking a plan without
/// credentials. Each POST gets one JSON body that satisfies the OpenAI,
/// Gemini and Anthropic response paths at once.
pub struct DryRunServer {
    url: String,
    requests: Arc<AtomicUsize>,
    stop: Arc<AtomicBool>,
    handle: Option<std::thread::JoinHandle<()>>,
}

impl DryRunServer {
    pub fn start(reply: &str) -> std::io::Result<Self> {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let text = serde_json::Value::String(reply.to_owned());
        let body = Arc::new(
            serde_json::json!({
                "choices": [{"message": {"content": text}}],
                "candidates": [{"content": {"parts": [{"text": text}]}}],
                "content": [{"text": text}],
            })
            .to_string(),
        );
        let requests = Arc::new(AtomicUsize::new(0));
        let stop = Arc::new(AtomicBool::new(false));
        let (count, halt) = (requests.clone(), stop.clone());
        let handle = std::thread::spawn(move || {
            for stream in listener.incoming() {
                if halt.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = stream else { continue };
                let (body, count) = (body.clone(), count.clone());
                std::thread::spawn(move || {
                    if answer(stream, &body).is_ok() {
                        count.fetch_add(1, Ordering::SeqCst);
                    }
                });
            }
        });
        Ok(Self { url: format!("http://{addr}/v1/dry-run"), requests, stop, handle: Some(handle) })
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    pub fn requests(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }
}

impl Drop for DryRunServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(addr) = self.url.strip_prefix("http://").and_then(|r| r.split('/').next()) {
            let _ = TcpStream::connect(addr);
        }
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn answer(stream: TcpStream, body: &str) -> std::io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut len = 0usize;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line)? == 0 {
            return Err(std::io::ErrorKind::UnexpectedEof.into());
        }
        if let Some((name, value)) = line.split_once(':') {
            if name.eq_ignore_ascii_case("content-length") {
                len = value.trim().parse().unwrap_or(0);
            }
        }
        if line == "\r\n" {
            break;
        }
    }
    let mut sink = vec![0; len];
    reader.read_exact(&mut sink)?;
    let mut stream = stream;
    write!(
        stream,
        "HTTP/1.1 200 OK\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
        body.len()
    )?;
    stream.flush()
}
