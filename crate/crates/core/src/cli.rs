//! Command-line front end: `run`, `verify` and `constants`.
//!
//! Exit codes: 0 success, 1 a check or run failed, 2 usage or configuration error.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::{ExperimentConfig, FlagOverrides};
use crate::error::{Error, Result};
use crate::gsse::RewardKind;
use crate::npg::{ConstantsLedger, NpgTrace};
use crate::verify::{
    fit_rate, prepare, run_full_verification, run_grid, Adequacy, CheckStatus, RateFit, VerificationConfig,
    ADEQUACY_THRESHOLD, INCONCLUSIVE_TRUNCATION,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "npg", version, about = "Natural policy gradient on truncated queueing MDPs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run NPG over a horizon grid and write traces, a summary and rate data.
    Run {
        #[command(flatten)]
        common: CommonArgs,
        /// Record wall-clock time per iteration (makes outputs non-reproducible).
        #[arg(long)]
        timings: bool,
    },
    /// Run every check and write a JSON report.
    Verify {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Print the constants ledger.
    Constants {
        #[command(flatten)]
        common: CommonArgs,
    },
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Preset model: single-queue, nsystem, switch2x2 or multiserver-job.
    #[arg(long)]
    pub model: Option<String>,
    /// TOML experiment file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Comma-separated, strictly increasing horizons.
    #[arg(long = "T", value_delimiter = ',')]
    pub t_grid: Option<Vec<usize>>,
    #[arg(long)]
    pub truncation: Option<u32>,
    /// Largest truncation reached by doubling when the first is inadequate.
    #[arg(long)]
    pub truncation_cap: Option<u32>,
    /// maxweight, weighted-maxweight, alpha-maxweight, uniform or file:PATH.
    #[arg(long)]
    pub init: Option<String>,
    /// Use the alpha-moment reward with this exponent.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// High-reward threshold; defaults to one unit below the initial average reward.
    #[arg(long, allow_hyphen_values = true)]
    pub z: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (falls back to NPG_OUT_DIR).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Print JSON to stdout instead of a table.
    #[arg(long)]
    pub json: bool,
}

impl CommonArgs {
    fn experiment(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_file(path)?,
            None => ExperimentConfig::default(),
        };
        cfg.apply_flags(&FlagOverrides {
            model: self.model.clone(),
            t_grid: self.t_grid.clone(),
            truncation: self.truncation,
            truncation_cap: self.truncation_cap,
            init: self.init.clone(),
            alpha: self.alpha,
            z: self.z,
            seed: self.seed,
            out: self.out.clone(),
        })?;
        Ok(cfg)
    }
}

/// Parses `args` (including the program name) and executes the command.
pub fn main_with<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            if code == 0 {
                let _ = stdout.write_all(text.as_bytes());
                return EXIT_OK;
            }
            let _ = stderr.write_all(text.as_bytes());
            return EXIT_USAGE;
        }
    };
    match execute(&cli.command, stdout) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            exit_code_for(&e)
        }
    }
}

pub fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::InvalidArgument(_) | Error::InvalidModel(_) => EXIT_USAGE,
        _ => EXIT_FAILED,
    }
}

pub fn execute(command: &Command, stdout: &mut dyn Write) -> Result<i32> {
    match command {
        Command::Run { common, timings } => {
            let exp = common.experiment()?;
            let cfg = exp.resolve()?;
            let summary = run_experiment(&cfg, &exp.out_dir(), *timings)?;
            if common.json {
                emit(stdout, &to_json(&summary)?)?;
            } else {
                emit(stdout, &summary_table(&summary))?;
            }
            Ok(if summary.runs.iter().any(|r| r.failure.is_some()) { EXIT_FAILED } else { EXIT_OK })
        }
        Command::Verify { common } => {
            let exp = common.experiment()?;
            let cfg = exp.resolve()?;
            let report = run_full_verification(&cfg)?;
            let json = to_json(&report)?;
            let dir = exp.out_dir();
            std::fs::create_dir_all(&dir)?;
            std::fs::write(dir.join("report.json"), &json)?;
            if common.json {
                emit(stdout, &json)?;
            } else {
                let mut text = String::new();
                for c in &report.checks {
                    let margin = c.margin.map_or(String::from("-"), |m| format!("{m:e}"));
                    let _ = writeln!(text, "{:<12} {:<26} margin {margin:<24} {}", status_word(c.status), c.name, c.detail);
                }
                let _ = writeln!(text, "{}", if report.passed { "verification passed" } else { "verification FAILED" });
                emit(stdout, &text)?;
            }
            Ok(if report.passed { EXIT_OK } else { EXIT_FAILED })
        }
        Command::Constants { common } => {
            let exp = common.experiment()?;
            let cfg = exp.resolve()?;
            let prep = prepare(&cfg)?;
            let ledger = &prep.fitted.ledger;
            if common.json {
                emit(stdout, &to_json(ledger)?)?;
            } else {
                emit(stdout, &ledger_table(ledger))?;
            }
            Ok(EXIT_OK)
        }
    }
}

fn status_word(s: CheckStatus) -> &'static str {
    match s {
        CheckStatus::Pass => "pass",
        CheckStatus::Fail => "FAIL",
        CheckStatus::Skipped => "skipped",
        CheckStatus::Inconclusive => "inconclusive",
    }
}

fn emit(stdout: &mut dyn Write, text: &str) -> Result<()> {
    stdout.write_all(text.as_bytes())?;
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// Seventeen significant digits, enough to round-trip any f64.
pub fn format_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

pub const TRACE_HEADER: &str = "iteration,J,gap,min_V,max_V,poisson_residual,wall_ms";

pub fn trace_csv(trace: &NpgTrace) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for r in &trace.records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.iteration,
            format_f64(r.average_reward),
            format_f64(r.gap),
            format_f64(r.min_value),
            format_f64(r.max_value),
            format_f64(r.poisson_residual),
            format_f64(r.wall_ms)
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunLine {
    pub horizon: usize,
    pub iterations: usize,
    pub final_average_reward: Option<f64>,
    pub final_gap: Option<f64>,
    /// `c_star / sqrt(T)`
    pub bound: f64,
    pub trace_file: String,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub model: String,
    pub reward: RewardKind,
    pub init: String,
    pub seed: u64,
    pub t_grid: Vec<usize>,
    pub state_count: usize,
    pub action_count: usize,
    /// `ok` or `inconclusive: truncation`.
    pub status: String,
    pub adequacy: Adequacy,
    pub optimal_reward: f64,
    pub runs: Vec<RunLine>,
    pub rate: RateFit,
    pub ledger: ConstantsLedger,
}

pub fn trace_file_name(horizon: usize) -> String {
    format!("trace_T{horizon}.csv")
}

/// Runs the grid and writes one CSV per horizon, `summary.json` and `rate.dat` into `out_dir`.
pub fn run_experiment(cfg: &VerificationConfig, out_dir: &Path, timings: bool) -> Result<RunSummary> {
    let prep = prepare(cfg)?;
    let runs = run_grid(&prep, &cfg.t_grid, None, timings)?;
    std::fs::create_dir_all(out_dir)?;

    let mut adequacy = prep.adequacy.clone();
    let longest = runs.last().expect("grid is nonempty");
    let max_mass = longest.trace.records.iter().map(|r| r.boundary_mass).fold(0.0, f64::max);
    adequacy.max_iterate_boundary_mass = Some(max_mass);
    adequacy.adequate = adequacy.adequate && max_mass < ADEQUACY_THRESHOLD;

    let c_star = prep.fitted.ledger.c_star();
    let mut lines = Vec::with_capacity(runs.len());
    let mut points = Vec::with_capacity(runs.len());
    for run in &runs {
        let name = trace_file_name(run.horizon);
        std::fs::write(out_dir.join(&name), trace_csv(&run.trace))?;
        let last = run.trace.records.last();
        let complete = run.trace.failure.is_none() && last.is_some_and(|r| r.iteration == run.horizon);
        if complete {
            points.push((run.horizon, last.expect("checked").gap));
        }
        lines.push(RunLine {
            horizon: run.horizon,
            iterations: run.trace.records.len().saturating_sub(1),
            final_average_reward: last.map(|r| r.average_reward),
            final_gap: last.map(|r| r.gap),
            bound: c_star / (run.horizon as f64).sqrt(),
            trace_file: name,
            failure: run.trace.failure.as_ref().map(|e| e.to_string()),
        });
    }
    let rate = fit_rate(&points, c_star);
    let mut dat = String::from("# T gap c_star/sqrt(T)\n");
    for p in &rate.points {
        let _ = writeln!(dat, "{} {} {}", p.horizon, format_f64(p.gap), format_f64(p.bound));
    }
    std::fs::write(out_dir.join("rate.dat"), dat)?;

    let summary = RunSummary {
        model: cfg.model_name.clone(),
        reward: cfg.model.reward_kind().clone(),
        init: cfg.init.name(),
        seed: cfg.seed,
        t_grid: cfg.t_grid.clone(),
        state_count: prep.mdp.state_count(),
        action_count: prep.mdp.action_count(),
        status: if adequacy.adequate { "ok".into() } else { INCONCLUSIVE_TRUNCATION.into() },
        adequacy,
        optimal_reward: prep.optimal_reward,
        runs: lines,
        rate,
        ledger: prep.fitted.ledger.clone(),
    };
    std::fs::write(out_dir.join("summary.json"), to_json(&summary)?)?;
    Ok(summary)
}

fn summary_table(s: &RunSummary) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "model {} ({} states, {} actions), J* = {}", s.model, s.state_count, s.action_count, s.optimal_reward);
    let _ = writeln!(out, "{:>8} {:>24} {:>24} {:>24}", "T", "J_T", "gap", "c_star/sqrt(T)");
    for r in &s.runs {
        let j = r.final_average_reward.map_or("-".into(), format_f64);
        let g = r.final_gap.map_or("-".into(), format_f64);
        let _ = writeln!(out, "{:>8} {j:>24} {g:>24} {:>24}", r.horizon, format_f64(r.bound));
        if let Some(f) = &r.failure {
            let _ = writeln!(out, "         failed: {f}");
        }
    }
    let exponent = s.rate.exponent.map_or("-".into(), |e| format!("{e:.4}"));
    let _ = writeln!(out, "c_hat = {}, fitted exponent = {exponent}, status: {}", format_f64(s.rate.c_hat), s.status);
    out
}

fn ledger_table(l: &ConstantsLedger) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<14} {:>24}  {:<9}  note", "name", "value", "source");
    for e in &l.entries {
        let _ = writeln!(out, "{:<14} {:>24}  {:<9}  {}", e.name, format_f64(e.value), e.provenance.to_string(), e.note);
    }
    out
}
