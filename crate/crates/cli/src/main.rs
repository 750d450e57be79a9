//! `evocaptcha`: generate challenge datasets, evaluate solvers against them,
//! render result tables, compare costs and run the challenge service.

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use evocaptcha_core::audio::MixSpec;
use evocaptcha_core::audio_challenge::{
    bundled_noise_bed, bundled_qa_sample, generate_audio_dataset, parse_qa_dataset, AudioJob, AudioManifest,
    BuildOptions, ConcurrencyLimited, EncoderHook, HttpTts, NoiseBank, ProcessTts, StubTts, TtsProvider,
    DEFAULT_MAX_IN_FLIGHT,
};
use evocaptcha_core::challenge::{generate_dataset, DatasetCosts, GenConfig, RasterSpec};
use evocaptcha_core::figlet::{bundled_fonts_dir, load_font_dir};
use evocaptcha_harness::{
    cost_report, emit_report, generation_seconds_ascii, generation_seconds_audio, parse_json_report, read_trial_log,
    run_eval, run_live_plan, ConstantSolver, DryRunServer, EvalDataset, EvalMode, EvalOptions, EvalSummary,
    HttpTemplateAdapter, LiveOptions, LivePlan, OracleSolver, RandomLetterSolver, ReportFormat, SolverAdapter,
    SolverConfig, TtsPlan,
};
use evocaptcha_service::ServiceConfig;

#[derive(Parser)]
#[command(name = "evocaptcha", version, about = "ASCII-art and audio CAPTCHA toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a challenge dataset.
    #[command(subcommand)]
    Gen(GenCommand),
    /// Run a solver over a dataset and write a report.
    Eval(EvalArgs),
    /// Merge JSON reports and re-emit them in another format.
    Report(ReportArgs),
    /// Compare generation cost with solve cost for a finished run.
    Cost(CostArgs),
    /// Run the HTTP challenge service.
    Serve(ServeArgs),
    /// Run a multi-solver plan end to end, or dry-run it locally.
    Live(LiveArgs),
}

#[derive(Subcommand)]
enum GenCommand {
    /// FIGlet text challenges, optionally rasterized.
    Ascii(GenAsciiArgs),
    /// Spoken multiple-choice challenges in noisy environments.
    Audio(GenAudioArgs),
}

#[derive(Args)]
struct GenAsciiArgs {
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Font directory; defaults to the bundled set.
    #[arg(long)]
    fonts_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 7)]
    min_len: usize,
    #[arg(long, default_value_t = 15)]
    max_len: usize,
    #[arg(long)]
    charset: Option<String>,
    /// Also write a PNG rendering of every challenge.
    #[arg(long)]
    images: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Environment {
    Baseline,
    Background,
    Gaussian,
    Overlap,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TtsKind {
    Stub,
    Http,
    Process,
}

#[derive(Args)]
struct GenAudioArgs {
    /// Challenges per environment.
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// CommonsenseQA-style JSONL; defaults to the bundled sample.
    #[arg(long)]
    qa: Option<PathBuf>,
    /// Background noise bed (WAV); defaults to the bundled bed.
    #[arg(long)]
    noise_bed: Option<PathBuf>,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [Environment::Baseline, Environment::Background, Environment::Gaussian, Environment::Overlap])]
    environments: Vec<Environment>,
    #[arg(long, default_value_t = MixSpec::DEFAULT_BACKGROUND_SNR_DB, allow_negative_numbers = true)]
    background_snr_db: f64,
    #[arg(long, default_value_t = MixSpec::DEFAULT_GAUSSIAN_SNR_DB, allow_negative_numbers = true)]
    gaussian_snr_db: f64,
    #[arg(long, default_value_t = MixSpec::DEFAULT_DISTRACTOR_GAIN_DB, allow_negative_numbers = true)]
    gain_db: f64,
    #[arg(long, default_value_t = MixSpec::DEFAULT_DISTRACTOR_COUNT)]
    distractors: usize,
    #[arg(long, value_enum, default_value_t = TtsKind::Stub)]
    tts: TtsKind,
    /// Base URL for `--tts http`.
    #[arg(long)]
    tts_url: Option<String>,
    /// Program for `--tts process`; reads text on stdin, writes WAV on stdout.
    #[arg(long)]
    tts_program: Option<String>,
    /// Arguments for the TTS program; `{voice}` and `{language}` are substituted.
    #[arg(long = "tts-arg", allow_hyphen_values = true)]
    tts_args: Vec<String>,
    #[arg(long, default_value_t = DEFAULT_MAX_IN_FLIGHT)]
    tts_max_in_flight: usize,
    /// Encoder run on every WAV, e.g. `ffmpeg`.
    #[arg(long)]
    encoder_program: Option<String>,
    /// Encoder arguments; `{input}` and `{output}` are substituted.
    #[arg(long = "encoder-arg", allow_hyphen_values = true)]
    encoder_args: Vec<String>,
    #[arg(long, default_value = "mp3")]
    encoder_ext: String,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Solver config TOML, or `mock:oracle`, `mock:random[:seed]`, `mock:empty`.
    #[arg(long)]
    solver: String,
    #[arg(long)]
    mode: EvalMode,
    /// Report path; the format follows the extension unless `--format` is set.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    format: Option<ReportFormat>,
    #[arg(long)]
    limit: Option<usize>,
    #[arg(long, default_value_t = 1)]
    concurrency: usize,
    /// Trial log; defaults to `<out>.trials.jsonl`.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// JSON reports written by `eval` or `live`.
    #[arg(long, required = true, num_args = 1..)]
    input: Vec<PathBuf>,
    #[arg(long, default_value = "table")]
    format: ReportFormat,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CostArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Trial log written by `eval`.
    #[arg(long)]
    trials: PathBuf,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct LiveArgs {
    #[arg(long)]
    plan: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Answer every request from a local stub and synthesize speech offline.
    #[arg(long)]
    dry_run: bool,
    /// Overrides the plan's sample count.
    #[arg(long)]
    samples: Option<usize>,
    /// Print the projection and exit.
    #[arg(long)]
    plan_only: bool,
}

fn main() -> Result<()> {
    let level =
        std::env::var("RUST_LOG").ok().and_then(|v| v.parse::<tracing::Level>().ok()).unwrap_or(tracing::Level::INFO);
    tracing_subscriber::fmt().with_max_level(level).with_writer(std::io::stderr).init();
    match Cli::parse().command {
        Command::Gen(GenCommand::Ascii(args)) => gen_ascii(args),
        Command::Gen(GenCommand::Audio(args)) => gen_audio(args),
        Command::Eval(args) => eval(args),
        Command::Report(args) => report(args),
        Command::Cost(args) => cost(args),
        Command::Serve(args) => serve(args),
        Command::Live(args) => live(args),
    }
}

fn gen_ascii(args: GenAsciiArgs) -> Result<()> {
    let dir = args.fonts_dir.unwrap_or_else(bundled_fonts_dir);
    let fonts = load_font_dir(&dir).with_context(|| format!("loading fonts from {}", dir.display()))?;
    for d in &fonts.diagnostics {
        tracing::warn!("skipped font {}: {}", d.path.display(), d.error);
    }
    let defaults = GenConfig::default();
    let config = GenConfig {
        min_len: args.min_len,
        max_len: args.max_len,
        charset: args.charset.unwrap_or(defaults.charset),
        seed: args.seed,
        ..GenConfig::default()
    };
    let raster = RasterSpec::default();
    let manifest = generate_dataset(args.n, &fonts.fonts, &config, &args.out, args.images.then_some(&raster))?;
    let costs = DatasetCosts::load(&args.out)?;
    println!(
        "wrote {} challenges to {} ({} fonts, text {:.4} s/sample{})",
        manifest.entries.len(),
        args.out.display(),
        fonts.len(),
        costs.mean_text_seconds,
        costs.mean_image_seconds.map(|s| format!(", image {s:.4} s/sample")).unwrap_or_default()
    );
    Ok(())
}

fn gen_audio(args: GenAudioArgs) -> Result<()> {
    if args.environments.is_empty() {
        bail!("at least one environment is required");
    }
    let qa_path = args.qa.clone().unwrap_or_else(bundled_qa_sample);
    let file = fs::File::open(&qa_path).with_context(|| format!("opening {}", qa_path.display()))?;
    let parsed = parse_qa_dataset(BufReader::new(file))?;
    for d in &parsed.diagnostics {
        tracing::warn!("skipped QA record: {d:?}");
    }
    let items = parsed.items;
    let bed = args.noise_bed.clone().unwrap_or_else(bundled_noise_bed);
    let bank = NoiseBank::new(items.clone()).with_bed_file(&bed)?;

    let specs: Vec<MixSpec> = args
        .environments
        .iter()
        .map(|e| match e {
            Environment::Baseline => MixSpec::Baseline,
            Environment::Background => MixSpec::Background { snr_db: args.background_snr_db },
            Environment::Gaussian => MixSpec::Gaussian { snr_db: args.gaussian_snr_db },
            Environment::Overlap => {
                MixSpec::Overlap { distractor_gain_db: args.gain_db, distractor_count: args.distractors }
            }
        })
        .collect();
    for spec in &specs {
        spec.validate()?;
    }
    let jobs: Vec<AudioJob> = specs
        .iter()
        .flat_map(|&environment| (0..args.n).map(move |i| (environment, i)))
        .map(|(environment, i)| AudioJob { qa: items[i % items.len()].clone(), environment })
        .collect();

    let tts: Box<dyn TtsProvider> = match args.tts {
        TtsKind::Stub => Box::new(StubTts::default()),
        TtsKind::Http => {
            let url = args.tts_url.clone().context("--tts http needs --tts-url")?;
            Box::new(ConcurrencyLimited::new(HttpTts::new(url), args.tts_max_in_flight))
        }
        TtsKind::Process => {
            let program = args.tts_program.clone().context("--tts process needs --tts-program")?;
            Box::new(ConcurrencyLimited::new(
                ProcessTts { program, args: args.tts_args.clone() },
                args.tts_max_in_flight,
            ))
        }
    };
    let encoder = args.encoder_program.clone().map(|program| EncoderHook {
        program,
        args: args.encoder_args.clone(),
        extension: args.encoder_ext.clone(),
    });
    let manifest = generate_audio_dataset(
        &jobs,
        tts.as_ref(),
        &bank,
        &BuildOptions::default(),
        args.seed,
        &args.out,
        encoder.as_ref(),
    )?;
    println!("wrote {} audio challenges to {} using {}", manifest.entries.len(), args.out.display(), tts.name());
    Ok(())
}

fn build_solver(spec: &str, dataset: &EvalDataset) -> Result<Box<dyn SolverAdapter>> {
    let solver: Box<dyn SolverAdapter> = match spec.split_once(':') {
        Some(("mock", "oracle")) => Box::new(match dataset {
            EvalDataset::Ascii { manifest, .. } => OracleSolver::for_ascii(manifest),
            EvalDataset::Audio { manifest, .. } => OracleSolver::for_audio(manifest),
        }),
        Some(("mock", "empty")) => Box::new(ConstantSolver::default()),
        Some(("mock", rest)) if rest == "random" || rest.starts_with("random:") => {
            let seed = match rest.strip_prefix("random:") {
                Some(s) => s.parse().with_context(|| format!("bad random seed {s:?}"))?,
                None => 0,
            };
            Box::new(RandomLetterSolver { seed })
        }
        Some(("mock", other)) => bail!("unknown mock solver {other:?}; expected oracle, random or empty"),
        _ => Box::new(HttpTemplateAdapter::new(SolverConfig::load(Path::new(spec))?)?),
    };
    Ok(solver)
}

fn format_for(path: &Path, explicit: Option<ReportFormat>) -> Result<ReportFormat> {
    if let Some(f) = explicit {
        return Ok(f);
    }
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    ext.parse().map_err(|_| anyhow::anyhow!("cannot infer report format from {}; pass --format", path.display()))
}

fn write_output(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn eval(args: EvalArgs) -> Result<()> {
    let format = format_for(&args.out, args.format)?;
    let dataset = EvalDataset::load(&args.dataset)?;
    let solver = build_solver(&args.solver, &dataset)?;
    let log = args.log.unwrap_or_else(|| {
        let mut name = args.out.file_stem().unwrap_or_default().to_os_string();
        name.push(".trials.jsonl");
        args.out.with_file_name(name)
    });
    if let Some(parent) = log.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let options = EvalOptions {
        limit: args.limit,
        concurrency: args.concurrency.max(1),
        log_path: Some(log.clone()),
        ..EvalOptions::default()
    };
    let run = run_eval(&dataset, solver.as_ref(), args.mode, &options)?;
    write_output(&args.out, &emit_report(&run.summaries, format)?)?;
    print!("{}", String::from_utf8(emit_report(&run.summaries, ReportFormat::Table)?)?);
    println!("report: {}\ntrials: {}", args.out.display(), log.display());
    Ok(())
}

fn report(args: ReportArgs) -> Result<()> {
    let mut rows: Vec<EvalSummary> = Vec::new();
    for path in &args.input {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        rows.extend(parse_json_report(&bytes).with_context(|| format!("parsing {}", path.display()))?);
    }
    let mut modes: Vec<EvalMode> = rows.iter().map(|s| s.mode).collect();
    modes.sort();
    modes.dedup();
    let mut out = Vec::new();
    for (i, mode) in modes.iter().enumerate() {
        let group: Vec<EvalSummary> = rows.iter().filter(|s| s.mode == *mode).cloned().collect();
        if i > 0 && args.format == ReportFormat::Table {
            out.push(b'\n');
        }
        if modes.len() > 1 && args.format != ReportFormat::Table {
            bail!("inputs mix {} modes; only the table format can hold several", modes.len());
        }
        out.extend(emit_report(&group, args.format)?);
    }
    match args.out {
        Some(path) => write_output(&path, &out),
        None => {
            print!("{}", String::from_utf8_lossy(&out));
            Ok(())
        }
    }
}

fn cost(args: CostArgs) -> Result<()> {
    let generation = match EvalDataset::load(&args.dataset)? {
        EvalDataset::Ascii { root, .. } => generation_seconds_ascii(&DatasetCosts::load(&root)?),
        EvalDataset::Audio { root, .. } => generation_seconds_audio(&AudioManifest::load(&root)?),
    };
    let trials = read_trial_log(&args.trials)?;
    let report = cost_report(&generation, &trials);
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn serve(args: ServeArgs) -> Result<()> {
    let config = ServiceConfig::load(args.config.as_deref())?;
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(evocaptcha_service::serve(config))?;
    Ok(())
}

fn live(args: LiveArgs) -> Result<()> {
    let mut plan = LivePlan::load(&args.plan)?;
    if let Some(n) = args.samples {
        plan.samples = n;
    }
    let projection = plan.projection()?;
    println!(
        "projection: generation {:.0} s + slowest job {:.0} s = {:.0} s of {:.0} s budget{}",
        projection.generation_seconds,
        projection.slowest_job_seconds,
        projection.total_seconds,
        projection.budget_seconds,
        if projection.unestimated.is_empty() {
            String::new()
        } else {
            format!(" ({} jobs without estimates)", projection.unestimated.len())
        }
    );
    if args.plan_only {
        return Ok(());
    }
    if !projection.within_budget() {
        tracing::warn!("projected run exceeds the budget");
    }
    let server = if args.dry_run { Some(DryRunServer::start("A")?) } else { None };
    let options = LiveOptions {
        url_override: server.as_ref().map(|s| s.url().to_owned()),
        tts_override: args.dry_run.then_some(TtsPlan::Stub),
        clock: None,
    };
    let outcome = run_live_plan(&plan, &args.out, &options)?;
    for f in &outcome.failures {
        eprintln!("failed: {} ({:?}): {}", f.solver, f.mode, f.error);
    }
    for path in &outcome.reports {
        println!("report: {}", path.display());
    }
    println!("wall time {:.1} s", outcome.wall_seconds);
    if !outcome.failures.is_empty() {
        bail!("{} of the planned jobs failed", outcome.failures.len());
    }
    Ok(())
}
