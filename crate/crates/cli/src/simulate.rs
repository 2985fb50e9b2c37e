//! `simulate`: run an ensemble and write the result bundle.

use std::path::{Path, PathBuf};

use freecir_core::diagnostics::{
    expected_trace_alpha, feller_check, mean_and_std_err, observable_deviation,
    trace_ode_reference, FellerReport, TraceObservable,
};
use freecir_core::{simulate, TrajectoryStats};
use serde::Serialize;

use crate::config::{Experiment, RunConfig};
use crate::error::CliError;
use crate::output::{trajectory_csv, write_atomic, write_json};

#[derive(Debug, Clone, Serialize)]
pub struct FellerSummary {
    pub min_eig_2a_minus_sigma2: f64,
    pub satisfied: bool,
    pub margin: f64,
    pub jensen_min_eig: f64,
    pub jensen_trace_margin: f64,
    pub jensen_trace_satisfied: bool,
}

impl From<FellerReport<f64>> for FellerSummary {
    fn from(r: FellerReport<f64>) -> Self {
        Self {
            min_eig_2a_minus_sigma2: r.min_eig_2a_minus_sigma2,
            satisfied: r.satisfied,
            margin: r.margin,
            jensen_min_eig: r.jensen_min_eig,
            jensen_trace_margin: r.jensen_trace_margin,
            jensen_trace_satisfied: r.jensen_trace_satisfied(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckpointSummary {
    pub t: f64,
    pub step: usize,
    pub runs: usize,
    pub mean_trace: f64,
    pub trace_std_err: f64,
    pub mean_min_eig: f64,
    pub min_min_eig: f64,
    pub mean_max_eig: f64,
    pub mean_norm1: f64,
    pub mean_norm2: f64,
    pub runs_with_breaches: usize,
    pub total_breaches: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TraceOdeSummary {
    pub observable: &'static str,
    pub alpha: f64,
    pub b: f64,
    pub y0: f64,
    pub t: Vec<f64>,
    pub mean: Vec<f64>,
    pub reference: Vec<f64>,
    pub deviation: Vec<f64>,
    pub std_err: Vec<f64>,
    pub max_deviation: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunFailure {
    pub run: usize,
    pub error: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub config: RunConfig,
    pub feller: FellerSummary,
    pub warnings: Vec<String>,
    pub runs_requested: usize,
    pub runs_completed: usize,
    pub failures: Vec<RunFailure>,
    pub runs_with_breaches: usize,
    pub breach_fraction: f64,
    pub checkpoints: Vec<CheckpointSummary>,
    pub trace_ode: Option<TraceOdeSummary>,
    pub trajectory_file: String,
}

/// Outputs of a finished simulation.
#[derive(Debug)]
pub struct Bundle {
    pub summary: Summary,
    pub stats: Vec<TrajectoryStats>,
    pub trajectory_path: PathBuf,
    pub summary_path: PathBuf,
}

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const SUMMARY_FILE: &str = "summary.json";

fn checkpoint_summary(stats: &[TrajectoryStats], t: f64, step: usize) -> CheckpointSummary {
    let rows: Vec<_> = stats
        .iter()
        .filter(|s| s.completed())
        .filter_map(|s| s.records.get(step))
        .collect();
    let col =
        |f: fn(&freecir_core::StatRecord) -> f64| rows.iter().map(|r| f(r)).collect::<Vec<f64>>();
    let (mean_trace, trace_std_err) = mean_and_std_err(&col(|r| r.trace));
    let mins = col(|r| r.min_eig);
    CheckpointSummary {
        t,
        step,
        runs: rows.len(),
        mean_trace,
        trace_std_err,
        mean_min_eig: mean_and_std_err(&mins).0,
        min_min_eig: mins.iter().copied().fold(f64::INFINITY, f64::min),
        mean_max_eig: mean_and_std_err(&col(|r| r.max_eig)).0,
        mean_norm1: mean_and_std_err(&col(|r| r.norm1)).0,
        mean_norm2: mean_and_std_err(&col(|r| r.norm2)).0,
        runs_with_breaches: rows.iter().filter(|r| r.breaches > 0).count(),
        total_breaches: rows.iter().map(|r| r.breaches).sum(),
    }
}

fn trace_ode(exp: &Experiment, stats: &[TrajectoryStats]) -> Option<TraceOdeSummary> {
    let obs = TraceObservable::for_kind(exp.spec.kind());
    let alpha = expected_trace_alpha(&exp.spec);
    let y0 = obs.initial(&exp.spec);
    let b = exp.spec.b();
    let reference = trace_ode_reference(alpha, b, y0, &exp.config.checkpoints);
    let dev = observable_deviation(stats, &exp.config.checkpoints, &reference, obs).ok()?;
    Some(TraceOdeSummary {
        observable: obs.as_str(),
        alpha,
        b,
        y0,
        max_deviation: dev.max_deviation(),
        t: dev.t,
        mean: dev.mean,
        reference: dev.reference,
        deviation: dev.deviation,
        std_err: dev.std_err,
    })
}

/// Loads, validates and runs a configuration; `out` overrides `output_dir`.
pub fn run_simulate(config_path: &Path, out: Option<&Path>) -> Result<Bundle, CliError> {
    let mut config = RunConfig::load(config_path)?;
    config.apply_env_seed()?;
    if let Some(o) = out {
        config.output_dir = o.to_path_buf();
    }
    simulate_config(&config)
}

pub fn simulate_config(config: &RunConfig) -> Result<Bundle, CliError> {
    let exp = config.validate()?;
    let report = feller_check(&exp.spec.a(), &exp.spec.sigma())
        .map_err(|e| CliError::Input(e.to_string()))?;
    let mut warnings = Vec::new();
    if !report.satisfied {
        let w = format!(
            "Feller condition violated: min eig(2a - sigma^2) = {:e}; simulating anyway",
            report.min_eig_2a_minus_sigma2
        );
        eprintln!("warning: {w}");
        warnings.push(w);
    }

    let stats = simulate(
        &exp.spec,
        &exp.scheme,
        exp.config.base_seed,
        exp.config.runs,
    );

    let dir = &exp.config.output_dir;
    let trajectory_path = dir.join(TRAJECTORY_FILE);
    let summary_path = dir.join(SUMMARY_FILE);
    write_atomic(&trajectory_path, trajectory_csv(&stats).as_bytes())?;

    let failures: Vec<RunFailure> = stats
        .iter()
        .filter_map(|s| {
            s.failure.as_ref().map(|e| RunFailure {
                run: s.run,
                error: e.clone(),
            })
        })
        .collect();
    let completed = stats.len() - failures.len();
    let runs_with_breaches = stats.iter().filter(|s| s.final_breaches() > 0).count();
    let summary = Summary {
        config: exp.config.clone(),
        feller: report.into(),
        warnings,
        runs_requested: exp.config.runs,
        runs_completed: completed,
        runs_with_breaches,
        breach_fraction: runs_with_breaches as f64 / stats.len() as f64,
        checkpoints: exp
            .config
            .checkpoints
            .iter()
            .zip(&exp.checkpoint_steps)
            .map(|(&t, &k)| checkpoint_summary(&stats, t, k))
            .collect(),
        trace_ode: trace_ode(&exp, &stats),
        failures,
        trajectory_file: TRAJECTORY_FILE.to_owned(),
    };
    write_json(&summary_path, &summary)?;
    if completed == 0 {
        return Err(CliError::AllRunsFailed {
            runs: stats.len(),
            first: summary.failures[0].error.clone(),
        });
    }
    Ok(Bundle {
        summary,
        stats,
        trajectory_path,
        summary_path,
    })
}
