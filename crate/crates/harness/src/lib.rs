//! Evaluation harness: run solvers over generated CAPTCHA datasets, grade
//! their answers and emit result tables and cost comparisons.
//!
//! A run is driven by [`run_eval`] with any [`SolverAdapter`]. Mock solvers
//! bound the achievable scores; [`HttpTemplateAdapter`] talks to real model
//! APIs described by TOML files.

pub mod clock;
pub mod cost;
pub mod eval;
pub mod live;
pub mod prompt;
pub mod report;
pub mod solver;

pub use clock::{Clock, ManualClock, SystemClock};
pub use cost::{cost_report, generation_seconds_ascii, generation_seconds_audio, CostReport};
pub use eval::{
    read_trial_log, run_eval, summarize, EvalDataset, EvalMode, EvalOptions, EvalRun, EvalSummary, HarnessError,
    TrialRecord,
};
pub use live::{
    run_live_plan, DryRunServer, LiveError, LiveJob, LiveOptions, LiveOutcome, LivePlan, PlannedSolver, Projection,
    TtsPlan,
};
pub use prompt::render_ascii_prompt;
pub use report::{emit_report, parse_json_report, ReportError, ReportFormat, ASCII_COLUMNS, AUDIO_COLUMNS};
pub use solver::{
    ConstantSolver, DelayedSolver, HttpTemplateAdapter, OracleSolver, RandomLetterSolver, SolverAdapter, SolverConfig,
    SolverError, SolverInput,
};
