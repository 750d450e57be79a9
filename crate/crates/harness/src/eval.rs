//! Running a solver over a dataset.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use evocaptcha_core::audio::MixSpec;
use evocaptcha_core::audio_challenge::{render_solver_prompt, AudioManifest, AUDIO_MANIFEST_FILE};
use evocaptcha_core::challenge::{load_manifest, DatasetManifest};
use evocaptcha_core::scoring::{grade, grade_choice, ChoiceLabel, ChoiceVerdict, Verdict};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::{Clock, SystemClock};
use crate::prompt::render_ascii_prompt;
use crate::solver::{SolverAdapter, SolverInput};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    Text,
    Image,
    Audio,
}

impl std::str::FromStr for EvalMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "text" => Ok(Self::Text),
            "image" => Ok(Self::Image),
            "audio" => Ok(Self::Audio),
            other => Err(format!("unknown mode {other:?}, expected text, image or audio")),
        }
    }
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("dataset error: {0}")]
    Dataset(String),
    #[error("solver {solver} does not support {mode:?} mode")]
    UnsupportedMode { solver: String, mode: EvalMode },
    #[error("{mode:?} mode cannot run on a {dataset} dataset")]
    ModeMismatch { mode: EvalMode, dataset: &'static str },
    #[error("entry {0} has no rendered image")]
    MissingImage(String),
    #[error("dataset has no entries")]
    EmptyDataset,
    #[error("aborted: {errors} of {attempted} attempted trials failed ({total} planned)")]
    AbortThreshold { errors: usize, attempted: usize, total: usize },
    #[error("cannot write trial log {}: {source}", path.display())]
    Log {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// A dataset on disk, either kind.
#[derive(Debug, Clone)]
pub enum EvalDataset {
    Ascii { root: PathBuf, manifest: DatasetManifest },
    Audio { root: PathBuf, manifest: AudioManifest },
}

impl EvalDataset {
    /// Loads `dir/manifest.json`, telling the kinds apart by their fields.
    pub fn load(dir: &Path) -> Result<Self, HarnessError> {
        let file = dir.join(AUDIO_MANIFEST_FILE);
        let raw = std::fs::read(&file).map_err(|e| HarnessError::Dataset(format!("{}: {e}", file.display())))?;
        let probe: serde_json::Value =
            serde_json::from_slice(&raw).map_err(|e| HarnessError::Dataset(format!("{}: {e}", file.display())))?;
        if probe.get("tts_provider").is_some() {
            let manifest = AudioManifest::load(dir).map_err(|e| HarnessError::Dataset(e.to_string()))?;
            Ok(Self::Audio { root: dir.to_path_buf(), manifest })
        } else {
            let manifest = load_manifest(dir).map_err(|e| HarnessError::Dataset(e.to_string()))?;
            Ok(Self::Ascii { root: dir.to_path_buf(), manifest })
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Self::Ascii { manifest, .. } => manifest.entries.len(),
            Self::Audio { manifest, .. } => manifest.entries.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn kind(&self) -> &'static str {
        match self {
            Self::Ascii { .. } => "ascii",
            Self::Audio { .. } => "audio",
        }
    }
}

#[derive(Clone)]
pub struct EvalOptions {
    /// Evaluate only the first `limit` entries.
    pub limit: Option<usize>,
    /// Trials in flight at once. 1 keeps response times comparable to a
    /// single client.
    pub concurrency: usize,
    /// Abort once more than this fraction of planned trials has failed.
    pub abort_fraction: f64,
    /// JSON-lines trial log.
    pub log_path: Option<PathBuf>,
    pub clock: Arc<dyn Clock>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            limit: None,
            concurrency: 1,
            abort_fraction: 0.5,
            log_path: None,
            clock: Arc::new(SystemClock::default()),
        }
    }
}

/// Outcome of one solver attempt. Exactly one of `verdict`, `choice` and
/// `error` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub challenge_id: String,
    pub solver: String,
    pub mode: EvalMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub environment: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_response: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<Verdict>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub choice: Option<ChoiceVerdict>,
    pub response_seconds: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl TrialRecord {
    pub fn passed(&self) -> bool {
        self.verdict.as_ref().map(|v| v.passed).or(self.choice.map(|c| c.passed)).unwrap_or(false)
    }

    pub fn is_error(&self) -> bool {
        self.error.is_some()
    }
}

/// Aggregate for one solver, mode and (for audio) environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub solver: String,
    pub mode: EvalMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub environment: Option<String>,
    /// Trials attempted, errors included.
    pub n: usize,
    /// Share of graded trials that passed.
    pub full_accuracy_pct: f64,
    /// Mean similarity of graded trials; absent for audio.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_similarity_pct: Option<f64>,
    pub mean_response_seconds: f64,
    pub error_count: usize,
    #[serde(default = "one")]
    pub concurrency: usize,
}

fn one() -> usize {
    1
}

impl EvalSummary {
    pub fn graded(&self) -> usize {
        self.n - self.error_count
    }
}

#[derive(Debug, Clone)]
pub struct EvalRun {
    pub summaries: Vec<EvalSummary>,
    pub trials: Vec<TrialRecord>,
}

enum Truth {
    Text(String),
    Choice(ChoiceLabel),
}

struct Job {
    challenge_id: String,
    environment: Option<String>,
    truth: Truth,
}

struct Assets {
    prompt: String,
    image: Option<Vec<u8>>,
    audio: Option<Vec<u8>>,
}

fn jobs(dataset: &EvalDataset, mode: EvalMode, limit: usize) -> Result<Vec<Job>, HarnessError> {
    match (dataset, mode) {
        (EvalDataset::Ascii { manifest, .. }, EvalMode::Text | EvalMode::Image) => Ok(manifest
            .entries
            .iter()
            .take(limit)
            .map(|e| Job { challenge_id: e.id.clone(), environment: None, truth: Truth::Text(e.answer.clone()) })
            .collect()),
        (EvalDataset::Audio { manifest, .. }, EvalMode::Audio) => Ok(manifest
            .entries
            .iter()
            .take(limit)
            .map(|e| Job {
                challenge_id: e.id.clone(),
                environment: Some(e.environment.name().to_owned()),
                truth: Truth::Choice(e.answer_key),
            })
            .collect()),
        (d, mode) => Err(HarnessError::ModeMismatch { mode, dataset: d.kind() }),
    }
}

fn read(path: PathBuf) -> Result<Vec<u8>, String> {
    std::fs::read(&path).map_err(|e| format!("{}: {e}", path.display()))
}

fn load_assets(dataset: &EvalDataset, index: usize, mode: EvalMode) -> Result<Assets, String> {
    match dataset {
        EvalDataset::Ascii { root, manifest } => {
            let entry = &manifest.entries[index];
            if mode == EvalMode::Image {
                let rel = entry.image_path.as_ref().ok_or_else(|| format!("entry {} has no image", entry.id))?;
                Ok(Assets { prompt: render_ascii_prompt(None), image: Some(read(root.join(rel))?), audio: None })
            } else {
                let art = manifest.read_text(root, entry).map_err(|e| e.to_string())?;
                Ok(Assets { prompt: render_ascii_prompt(Some(&art)), image: None, audio: None })
            }
        }
        EvalDataset::Audio { root, manifest } => {
            let entry = &manifest.entries[index];
            let qa =
                manifest.item(&entry.qa_id).ok_or_else(|| format!("question {} missing from manifest", entry.qa_id))?;
            Ok(Assets {
                prompt: render_solver_prompt(qa),
                image: None,
                audio: Some(read(root.join(&entry.audio_path))?),
            })
        }
    }
}

fn run_trial<S: SolverAdapter + ?Sized>(
    dataset: &EvalDataset,
    index: usize,
    job: &Job,
    solver: &S,
    mode: EvalMode,
    clock: &dyn Clock,
) -> TrialRecord {
    let mut record = TrialRecord {
        challenge_id: job.challenge_id.clone(),
        solver: solver.name().to_owned(),
        mode,
        environment: job.environment.clone(),
        raw_response: None,
        verdict: None,
        choice: None,
        response_seconds: 0.0,
        error: None,
    };
    let assets = match load_assets(dataset, index, mode) {
        Ok(a) => a,
        Err(e) => {
            record.error = Some(format!("asset: {e}"));
            return record;
        }
    };
    let input = SolverInput {
        challenge_id: &job.challenge_id,
        mode,
        prompt: &assets.prompt,
        image_png: assets.image.as_deref(),
        audio_wav: assets.audio.as_deref(),
    };
    let t0 = clock.now_seconds();
    let result = solver.solve(&input);
    record.response_seconds = clock.now_seconds() - t0;
    match result {
        Ok(raw) => {
            match &job.truth {
                Truth::Text(truth) => match grade(truth, &raw) {
                    Ok(v) => record.verdict = Some(v),
                    Err(e) => record.error = Some(e.to_string()),
                },
                Truth::Choice(label) => record.choice = Some(grade_choice(*label, &raw)),
            }
            record.raw_response = Some(raw);
        }
        Err(e) => record.error = Some(e.to_string()),
    }
    record
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Aggregates trials into one summary per environment (one overall for
/// ASCII runs). Errors count towards `n` but not the means.
pub fn summarize(trials: &[TrialRecord], concurrency: usize) -> Vec<EvalSummary> {
    let mut groups: Vec<(String, EvalMode, Option<String>)> = Vec::new();
    for t in trials {
        let key = (t.solver.clone(), t.mode, t.environment.clone());
        if !groups.contains(&key) {
            groups.push(key);
        }
    }
    let env_rank = |e: &Option<String>| {
        MixSpec::all_defaults().iter().position(|m| Some(m.name()) == e.as_deref()).unwrap_or(usize::MAX)
    };
    groups.sort_by(|a, b| (&a.0, a.1, env_rank(&a.2), &a.2).cmp(&(&b.0, b.1, env_rank(&b.2), &b.2)));
    groups
        .into_iter()
        .map(|(solver, mode, environment)| {
            let group: Vec<&TrialRecord> = trials
                .iter()
                .filter(|t| t.solver == solver && t.mode == mode && t.environment == environment)
                .collect();
            let graded: Vec<&&TrialRecord> = group.iter().filter(|t| !t.is_error()).collect();
            let pct = |count: usize| if graded.is_empty() { 0.0 } else { 100.0 * count as f64 / graded.len() as f64 };
            let mean_similarity_pct = (mode != EvalMode::Audio)
                .then(|| 100.0 * mean(graded.iter().filter_map(|t| t.verdict.as_ref()).map(|v| v.similarity)));
            EvalSummary {
                full_accuracy_pct: pct(graded.iter().filter(|t| t.passed()).count()),
                mean_similarity_pct,
                mean_response_seconds: mean(graded.iter().map(|t| t.response_seconds)),
                error_count: group.len() - graded.len(),
                n: group.len(),
                solver,
                mode,
                environment,
                concurrency,
            }
        })
        .collect()
}

struct Log {
    path: PathBuf,
    out: Option<BufWriter<File>>,
}

impl Log {
    fn open(path: Option<&Path>) -> Result<Self, HarnessError> {
        let Some(path) = path else {
            return Ok(Self { path: PathBuf::new(), out: None });
        };
        let file = File::create(path).map_err(|source| HarnessError::Log { path: path.to_path_buf(), source })?;
        Ok(Self { path: path.to_path_buf(), out: Some(BufWriter::new(file)) })
    }

    fn write(&mut self, record: &TrialRecord) -> Result<(), HarnessError> {
        if let Some(out) = &mut self.out {
            let line = serde_json::to_string(record).expect("trial records serialize");
            writeln!(out, "{line}").map_err(|source| HarnessError::Log { path: self.path.clone(), source })?;
        }
        Ok(())
    }

    fn finish(mut self) -> Result<(), HarnessError> {
        if let Some(out) = &mut self.out {
            out.flush().map_err(|source| HarnessError::Log { path: self.path.clone(), source })?;
        }
        Ok(())
    }
}

/// Runs `solver` over `dataset` in `mode`, one trial per entry.
///
/// Per-trial failures are recorded and the run continues until more than
/// `abort_fraction` of the planned trials have failed. Every finished trial
/// is appended to the log, aborted runs included.
pub fn run_eval<S: SolverAdapter + ?Sized>(
    dataset: &EvalDataset,
    solver: &S,
    mode: EvalMode,
    options: &EvalOptions,
) -> Result<EvalRun, HarnessError> {
    if !solver.supports(mode) {
        return Err(HarnessError::UnsupportedMode { solver: solver.name().to_owned(), mode });
    }
    let jobs = jobs(dataset, mode, options.limit.unwrap_or(usize::MAX))?;
    if jobs.is_empty() {
        return Err(HarnessError::EmptyDataset);
    }
    let total = jobs.len();
    let too_many = |errors: usize| errors as f64 > options.abort_fraction * total as f64;
    let mut log = Log::open(options.log_path.as_deref())?;
    let clock = options.clock.as_ref();
    let concurrency = options.concurrency.max(1);

    let trials: Vec<TrialRecord> = if concurrency == 1 {
        let mut trials = Vec::with_capacity(total);
        let mut errors = 0;
        for (i, job) in jobs.iter().enumerate() {
            let record = run_trial(dataset, i, job, solver, mode, clock);
            errors += usize::from(record.is_error());
            log.write(&record)?;
            trials.push(record);
            if too_many(errors) {
                log.finish()?;
                return Err(HarnessError::AbortThreshold { errors, attempted: i + 1, total });
            }
        }
        trials
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(concurrency)
            .build()
            .map_err(|e| HarnessError::Dataset(e.to_string()))?;
        let trials: Vec<TrialRecord> = pool.install(|| {
            jobs.par_iter().enumerate().map(|(i, job)| run_trial(dataset, i, job, solver, mode, clock)).collect()
        });
        for t in &trials {
            log.write(t)?;
        }
        let errors = trials.iter().filter(|t| t.is_error()).count();
        if too_many(errors) {
            log.finish()?;
            return Err(HarnessError::AbortThreshold { errors, attempted: total, total });
        }
        trials
    };
    log.finish()?;
    tracing::info!(solver = solver.name(), ?mode, n = trials.len(), "evaluation finished");
    Ok(EvalRun { summaries: summarize(&trials, concurrency), trials })
}

/// Reads a JSON-lines trial log.
pub fn read_trial_log(path: &Path) -> Result<Vec<TrialRecord>, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Dataset(format!("{}: {e}", path.display())))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| HarnessError::Dataset(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}
