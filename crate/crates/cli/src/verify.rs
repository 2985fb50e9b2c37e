//! `verify`: statistical and analytic check suites.

use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use freecir_core::diagnostics::{
    catalan, esd_histogram, expected_trace_alpha, feller_check, freeness_test, isometry_check,
    observable_deviation, semicircle_moments_of, trace_ode_reference, AlternatingWord, Bins,
    DiagnosticsError, TraceObservable,
};
use freecir_core::{
    sample_free_increment, simulate, EquationKind, EquationSpec, FreeBrownianPath, Scheme,
    SchemeSpec, SeedPolicy, SelfAdjointOperator,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{stationary, RunConfig, SEED_ENV};
use crate::error::CliError;
use crate::output::write_json;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Semicircle,
    Freeness,
    Isometry,
    TraceOde,
    Feller,
}

impl Suite {
    pub const ALL: [Suite; 5] = [
        Suite::Semicircle,
        Suite::Freeness,
        Suite::Isometry,
        Suite::TraceOde,
        Suite::Feller,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Suite::Semicircle => "semicircle",
            Suite::Freeness => "freeness",
            Suite::Isometry => "isometry",
            Suite::TraceOde => "trace-ode",
            Suite::Feller => "feller",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Suite {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        Suite::ALL
            .into_iter()
            .find(|x| x.as_str() == norm)
            .ok_or_else(|| CliError::Input(format!("unknown suite {s:?}; expected one of semicircle, freeness, isometry, trace-ode, feller")))
    }
}

/// One pass/fail criterion with its target, estimate and tolerance.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub target: f64,
    pub estimate: f64,
    pub std_err: Option<f64>,
    pub tolerance: f64,
    /// How `tolerance` is applied: `abs`, `std_err`, `min` or `max`.
    pub rule: &'static str,
    pub pass: bool,
}

impl Check {
    /// `|estimate - target| <= tolerance`.
    pub fn absolute(
        name: impl Into<String>,
        target: f64,
        estimate: f64,
        tolerance: f64,
        std_err: Option<f64>,
    ) -> Self {
        let pass = (estimate - target).abs() <= tolerance;
        Self {
            name: name.into(),
            target,
            estimate,
            std_err,
            tolerance,
            rule: "abs",
            pass,
        }
    }

    /// `|estimate - target| <= k * std_err`; exact agreement always passes.
    pub fn within_std_errs(
        name: impl Into<String>,
        target: f64,
        estimate: f64,
        std_err: f64,
        k: f64,
    ) -> Self {
        let d = (estimate - target).abs();
        let pass = d == 0.0 || d <= k * std_err;
        Self {
            name: name.into(),
            target,
            estimate,
            std_err: Some(std_err),
            tolerance: k,
            rule: "std_err",
            pass,
        }
    }

    /// `estimate >= bound - tolerance`.
    pub fn at_least(name: impl Into<String>, bound: f64, estimate: f64, tolerance: f64) -> Self {
        let pass = estimate >= bound - tolerance;
        Self {
            name: name.into(),
            target: bound,
            estimate,
            std_err: None,
            tolerance,
            rule: "min",
            pass,
        }
    }

    /// `estimate <= bound`.
    pub fn at_most(name: impl Into<String>, bound: f64, estimate: f64) -> Self {
        let pass = estimate <= bound;
        Self {
            name: name.into(),
            target: bound,
            estimate,
            std_err: None,
            tolerance: 0.0,
            rule: "max",
            pass,
        }
    }
}

/// Reported quantity that is not a pass criterion.
#[derive(Debug, Clone, Serialize)]
pub struct Note {
    pub name: String,
    pub value: f64,
    pub remark: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub suite: String,
    pub dim: usize,
    pub runs: usize,
    pub seed: u64,
    pub parameters: serde_json::Value,
    pub checks: Vec<Check>,
    pub notes: Vec<Note>,
    pub pass: bool,
}

#[derive(Debug, Clone, Default)]
pub struct VerifyOptions {
    pub dim: Option<usize>,
    pub runs: Option<usize>,
    pub seed: Option<u64>,
    pub config: Option<PathBuf>,
    pub vbar_config: Option<PathBuf>,
    pub out_dir: PathBuf,
}

const DEFAULT_SEED: u64 = 20240601;

impl VerifyOptions {
    fn seed(&self, config: Option<&RunConfig>) -> Result<u64, CliError> {
        if let Some(s) = self.seed {
            return Ok(s);
        }
        if let Ok(v) = std::env::var(SEED_ENV) {
            return v.trim().parse().map_err(|_| CliError::Config {
                field: "base_seed".into(),
                message: format!("{SEED_ENV}={v:?} is not an unsigned integer"),
            });
        }
        Ok(config.map_or(DEFAULT_SEED, |c| c.base_seed))
    }

    fn load_config(&self) -> Result<Option<RunConfig>, CliError> {
        self.config.as_deref().map(RunConfig::load).transpose()
    }
}

/// Semicircle moment `E x^order` for variance `t`, by the midpoint rule
/// after `x = 2 sqrt(t) sin(theta)`; the integrand is smooth and periodic,
/// so the rule converges geometrically.
pub fn semicircle_quadrature(order: u32, t: f64) -> f64 {
    let n = 4096;
    let h = PI / n as f64;
    let r = 2.0 * t.sqrt();
    (0..n)
        .map(|i| {
            let th = -PI / 2.0 + (i as f64 + 0.5) * h;
            let c = th.cos();
            (r * th.sin()).powi(order as i32) * (2.0 / PI) * c * c
        })
        .sum::<f64>()
        * h
}

fn diag_err(e: DiagnosticsError) -> CliError {
    match e {
        DiagnosticsError::SpecMismatch { field } => CliError::Config {
            field: format!("equation.{field}"),
            message: "V and Vbar specifications must share coefficients".into(),
        },
        other => CliError::Input(other.to_string()),
    }
}

fn finish(
    suite: Suite,
    dim: usize,
    runs: usize,
    seed: u64,
    parameters: serde_json::Value,
    checks: Vec<Check>,
    notes: Vec<Note>,
    out_dir: &Path,
) -> Result<VerifyReport, CliError> {
    let pass = !checks.is_empty() && checks.iter().all(|c| c.pass);
    let report = VerifyReport {
        suite: suite.to_string(),
        dim,
        runs,
        seed,
        parameters,
        checks,
        notes,
        pass,
    };
    write_json(&out_dir.join(format!("verify_{}.json", suite)), &report)?;
    Ok(report)
}

/// Runs a suite and writes `verify_<suite>.json`. A report with failed
/// checks is returned normally; callers map `pass == false` to exit 4.
pub fn run_verify(suite: Suite, opts: &VerifyOptions) -> Result<VerifyReport, CliError> {
    match suite {
        Suite::Semicircle => semicircle(opts),
        Suite::Freeness => freeness(opts),
        Suite::Isometry => isometry(opts),
        Suite::TraceOde => trace_ode(opts),
        Suite::Feller => feller(opts),
    }
}

fn semicircle(opts: &VerifyOptions) -> Result<VerifyReport, CliError> {
    let dim = opts.dim.unwrap_or(256);
    let runs = opts.runs.unwrap_or(200);
    let seed = opts.seed(None)?;
    if dim == 0 || runs < 2 {
        return Err(CliError::Input(
            "semicircle needs dim >= 1 and at least 2 runs".into(),
        ));
    }
    let mut checks = Vec::new();
    for k in 1..=3u32 {
        let q = semicircle_quadrature(2 * k, 1.0);
        checks.push(Check::absolute(
            format!("quadrature_catalan_{k}"),
            catalan(k) as f64,
            q,
            1e-8,
            None,
        ));
    }
    let grid = vec![0.0, 0.25, 0.5, 0.75, 1.0];
    let samples: Vec<SelfAdjointOperator<f64>> = (0..runs)
        .into_par_iter()
        .map(|r| {
            FreeBrownianPath::sample(grid.clone(), dim, SeedPolicy::new(seed, r as u64)).value_at(4)
        })
        .collect();
    let moments = semicircle_moments_of(&samples, 1.0, 6).map_err(diag_err)?;
    for m in &moments {
        checks.push(Check::within_std_errs(
            format!("moment_{}", m.order),
            m.target,
            m.estimate,
            m.std_err,
            4.0,
        ));
    }
    let hist = esd_histogram(
        &samples,
        Bins::Edges(vec![f64::NEG_INFINITY, -2.2, 2.2, f64::INFINITY]),
    )
    .map_err(diag_err)?;
    let outside = (hist.counts[0] + hist.counts[2]) as f64 / hist.counts.iter().sum::<u64>() as f64;
    checks.push(Check::at_most("esd_mass_outside_2.2", 0.01, outside));
    let notes = vec![
        Note {
            name: "min_eigenvalue".into(),
            value: hist.min,
            remark: "pooled".into(),
        },
        Note {
            name: "max_eigenvalue".into(),
            value: hist.max,
            remark: "pooled".into(),
        },
    ];
    let params = serde_json::json!({ "t": 1.0, "grid": grid, "max_order": 6, "std_errs": 4.0 });
    finish(
        Suite::Semicircle,
        dim,
        runs,
        seed,
        params,
        checks,
        notes,
        &opts.out_dir,
    )
}

fn a_operator(
    config: Option<&RunConfig>,
    dim: usize,
) -> Result<SelfAdjointOperator<f64>, CliError> {
    match config {
        Some(c) => {
            let mut c = c.clone();
            c.dim = dim;
            Ok(c.validate()?.spec.a())
        }
        None => {
            let levels = [1.0, 2.0, 3.0, 4.0];
            let d: Vec<f64> = (0..dim).map(|i| levels[i * levels.len() / dim]).collect();
            SelfAdjointOperator::from_real_diagonal(&d).map_err(|e| CliError::Input(e.to_string()))
        }
    }
}

fn freeness(opts: &VerifyOptions) -> Result<VerifyReport, CliError> {
    let config = opts.load_config()?;
    let dim = opts.dim.unwrap_or(128);
    let runs = opts.runs.unwrap_or(200);
    let seed = opts.seed(config.as_ref())?;
    if dim < 2 || runs < 2 {
        return Err(CliError::Input(
            "freeness needs dim >= 2 and at least 2 runs".into(),
        ));
    }
    let words = vec![
        AlternatingWord(vec![1, 1]),
        AlternatingWord(vec![2, 1]),
        AlternatingWord(vec![1, 2]),
        AlternatingWord(vec![1, 1, 1, 1]),
    ];
    let sample_w = |n: usize| -> Vec<SelfAdjointOperator<f64>> {
        (0..runs)
            .into_par_iter()
            .map(|r| sample_free_increment(1.0, n, &mut SeedPolicy::new(seed, r as u64).stream(0)))
            .collect()
    };
    let a = a_operator(config.as_ref(), dim)?;
    let w = sample_w(dim);
    let est = freeness_test(&a, &w, &words).map_err(diag_err)?;
    let mut checks: Vec<Check> = est
        .iter()
        .map(|e| {
            Check::within_std_errs(format!("word_{:?}", e.word.0), 0.0, e.mean, e.std_err, 4.0)
        })
        .collect();

    let scalar = SelfAdjointOperator::scaled_identity(dim, 2.0);
    for e in freeness_test(&scalar, &w, &words).map_err(diag_err)? {
        checks.push(Check::absolute(
            format!("scalar_a_word_{:?}", e.word.0),
            0.0,
            e.mean,
            0.0,
            Some(e.std_err),
        ));
    }

    let mut notes = Vec::new();
    let half = dim / 2;
    if let Ok(a_half) = a_operator(config.as_ref(), half) {
        let long = [AlternatingWord(vec![1, 1, 1, 1])];
        let small = freeness_test(&a_half, &sample_w(half), &long).map_err(diag_err)?;
        let large = est
            .iter()
            .find(|e| e.word.0.len() == 4)
            .expect("length-4 word present");
        if small[0].rms > 0.0 {
            checks.push(Check::at_most(
                "length4_rms_decreases_with_dim",
                small[0].rms,
                large.rms,
            ));
        }
        notes.push(Note {
            name: format!("length4_rms_dim_{half}"),
            value: small[0].rms,
            remark: "comparison ensemble".into(),
        });
    }
    let params = serde_json::json!({
        "t": 1.0,
        "words": words.iter().map(|w| w.0.clone()).collect::<Vec<_>>(),
        "a": if config.is_some() { "a(X0) from config" } else { "diag(1, 2, 3, 4) blocks" },
        "std_errs": 4.0,
    });
    finish(
        Suite::Freeness,
        dim,
        runs,
        seed,
        params,
        checks,
        notes,
        &opts.out_dir,
    )
}

/// `V` and `Vbar` specs from the options; the classical side may come from
/// its own file, which must agree on every coefficient.
fn isometry_specs(
    opts: &VerifyOptions,
    config: Option<&RunConfig>,
    dim: usize,
) -> Result<(EquationSpec<f64>, EquationSpec<f64>), CliError> {
    let base = |c: Option<&RunConfig>, kind: EquationKind| -> Result<EquationSpec<f64>, CliError> {
        let mut c = c
            .cloned()
            .unwrap_or_else(|| stationary(kind, dim, 1, 0.01, 1.0));
        c.equation.kind = kind.as_str().into();
        c.dim = dim;
        Ok(c.validate()?.spec)
    };
    let v = base(config, EquationKind::SqrtVFree)?;
    let vbar = match &opts.vbar_config {
        Some(p) => base(Some(&RunConfig::load(p)?), EquationKind::SqrtVbarClassical)?,
        None => base(config, EquationKind::SqrtVbarClassical)?,
    };
    Ok((v, vbar))
}

fn isometry(opts: &VerifyOptions) -> Result<VerifyReport, CliError> {
    let config = opts.load_config()?;
    let dim = opts.dim.or(config.as_ref().map(|c| c.dim)).unwrap_or(64);
    let runs = opts.runs.or(config.as_ref().map(|c| c.runs)).unwrap_or(200);
    let seed = opts.seed(config.as_ref())?;
    let (v, vbar) = isometry_specs(opts, config.as_ref(), dim)?;
    let (scheme, checkpoints) = match &config {
        Some(c) => {
            let e = c.validate()?;
            let cps = if c.checkpoints.is_empty() {
                vec![e.scheme.t_end]
            } else {
                e.config.checkpoints.clone()
            };
            (e.scheme, cps)
        }
        None => (
            SchemeSpec::new(Scheme::Euler, 1e-2, 1.0).expect("valid grid"),
            vec![0.25, 0.5, 1.0],
        ),
    };
    let report = isometry_check(&v, &vbar, &scheme, runs, seed, &checkpoints).map_err(diag_err)?;
    let tol = 0.05;
    let mut checks = Vec::new();
    for (i, &t) in report.checkpoints.iter().enumerate() {
        checks.push(Check::absolute(
            format!("trace_square_t{t}"),
            report.rhs[i],
            report.lhs[i],
            tol,
            Some(report.std_err[i]),
        ));
    }
    for s in &report.projections {
        for (i, &t) in report.checkpoints.iter().enumerate() {
            checks.push(Check::absolute(
                format!("{}_t{t}", s.label),
                s.rhs[i],
                s.lhs[i],
                tol,
                Some(s.std_err[i]),
            ));
        }
    }
    let notes = vec![Note {
        name: "failed_runs".into(),
        value: report.failed_runs as f64,
        remark: "runs aborted on either side".into(),
    }];
    let params = serde_json::json!({
        "scheme": scheme.scheme.as_str(),
        "dt": scheme.dt,
        "checkpoints": checkpoints,
        "tolerance": tol,
        "a": format!("{:?}", v.a_fn()),
        "sigma": format!("{:?}", v.sigma_fn()),
        "b": v.b(),
        "x0_spectrum": v.x0_spectrum(),
    });
    finish(
        Suite::Isometry,
        dim,
        runs,
        seed,
        params,
        checks,
        notes,
        &opts.out_dir,
    )
}

fn trace_ode(opts: &VerifyOptions) -> Result<VerifyReport, CliError> {
    let mut config = opts
        .load_config()?
        .unwrap_or_else(|| stationary(EquationKind::FreeCirNonclassical, 64, 50, 1e-3, 1.0));
    if let Some(d) = opts.dim {
        config.dim = d;
    }
    if let Some(r) = opts.runs {
        config.runs = r;
    }
    config.base_seed = opts.seed(Some(&config))?;
    if config.checkpoints.is_empty() {
        config.checkpoints = vec![config.scheme.t_end];
    }
    let e = config.validate()?;
    let stats = simulate(&e.spec, &e.scheme, e.config.base_seed, e.config.runs);
    let failed = stats.iter().filter(|s| !s.completed()).count();
    if failed == stats.len() {
        return Err(CliError::AllRunsFailed {
            runs: stats.len(),
            first: stats[0].failure.clone().unwrap_or_default(),
        });
    }
    let obs = TraceObservable::for_kind(e.spec.kind());
    let alpha = expected_trace_alpha(&e.spec);
    let y0 = obs.initial(&e.spec);
    let reference = trace_ode_reference(alpha, e.spec.b(), y0, &e.config.checkpoints);
    let dev =
        observable_deviation(&stats, &e.config.checkpoints, &reference, obs).map_err(diag_err)?;
    let tol = 0.02;
    let checks = (0..dev.t.len())
        .map(|i| {
            Check::absolute(
                format!("{}_t{}", obs.as_str(), dev.t[i]),
                dev.reference[i],
                dev.mean[i],
                tol,
                Some(dev.std_err[i]),
            )
        })
        .collect();
    let notes = vec![Note {
        name: "failed_runs".into(),
        value: failed as f64,
        remark: "excluded from the means".into(),
    }];
    let params = serde_json::json!({
        "equation": e.config.equation,
        "scheme": e.config.scheme,
        "observable": obs.as_str(),
        "alpha": alpha,
        "y0": y0,
        "tolerance": tol,
    });
    finish(
        Suite::TraceOde,
        e.config.dim,
        e.config.runs,
        e.config.base_seed,
        params,
        checks,
        notes,
        &opts.out_dir,
    )
}

fn feller(opts: &VerifyOptions) -> Result<VerifyReport, CliError> {
    let config = opts.load_config()?;
    let mut c = config
        .clone()
        .unwrap_or_else(|| stationary(EquationKind::FreeCirNonclassical, 1, 1, 0.01, 1.0));
    if let Some(d) = opts.dim {
        c.dim = d;
    } else if config.is_none() {
        c.dim = c.equation.x0_spectrum.len();
    }
    let seed = opts.seed(config.as_ref())?;
    let e = c.validate()?;
    let r = feller_check(&e.spec.a(), &e.spec.sigma()).map_err(diag_err)?;
    let tol = 1e-12;
    let checks = vec![
        Check::at_least(
            "min_eig_2a_minus_sigma2",
            0.0,
            r.min_eig_2a_minus_sigma2,
            tol,
        ),
        Check::at_least("jensen_trace_margin", 0.0, r.jensen_trace_margin, tol),
    ];
    let notes = vec![Note {
        name: "jensen_min_eig".into(),
        value: r.jensen_min_eig,
        remark:
            "min eig(2a - (phi(sigma) sigma + sigma^2)/2); may be negative for non-scalar sigma"
                .into(),
    }];
    let params = serde_json::json!({ "equation": e.config.equation, "tolerance": tol });
    finish(
        Suite::Feller,
        e.config.dim,
        0,
        seed,
        params,
        checks,
        notes,
        &opts.out_dir,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadrature_reproduces_catalan() {
        for k in 1..=5u32 {
            assert!((semicircle_quadrature(2 * k, 1.0) - catalan(k) as f64).abs() < 1e-10);
            assert!(semicircle_quadrature(2 * k - 1, 1.0).abs() < 1e-12);
        }
        assert!((semicircle_quadrature(4, 0.5) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn suite_names() {
        for s in Suite::ALL {
            assert_eq!(s.as_str().parse::<Suite>().unwrap(), s);
        }
        assert_eq!("trace_ode".parse::<Suite>().unwrap(), Suite::TraceOde);
        assert!("moments".parse::<Suite>().is_err());
    }

    #[test]
    fn check_rules() {
        assert!(Check::absolute("x", 1.0, 1.01, 0.02, None).pass);
        assert!(!Check::absolute("x", 1.0, 1.03, 0.02, None).pass);
        assert!(Check::within_std_errs("x", 0.0, 0.0, 0.0, 4.0).pass);
        assert!(!Check::within_std_errs("x", 0.0, 0.5, 0.1, 4.0).pass);
        assert!(Check::at_least("x", 0.0, -1e-13, 1e-12).pass);
        assert!(!Check::at_most("x", 1.0, 1.5).pass);
    }

    #[test]
    fn feller_boundary_passes_with_zero_margin() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = stationary(EquationKind::FreeCirNonclassical, 1, 1, 0.01, 1.0);
        c.equation.a = crate::config::FunctionConfig::constant(0.5);
        let path = dir.path().join("c.json");
        std::fs::write(&path, c.to_json()).unwrap();
        let opts = VerifyOptions {
            config: Some(path),
            out_dir: dir.path().to_path_buf(),
            ..Default::default()
        };
        let r = run_verify(Suite::Feller, &opts).unwrap();
        assert!(r.pass);
        assert_eq!(r.checks[0].estimate, 0.0);
        assert!(dir.path().join("verify_feller.json").exists());
    }

    #[test]
    fn small_semicircle_run() {
        let dir = tempfile::tempdir().unwrap();
        let opts = VerifyOptions {
            dim: Some(16),
            runs: Some(20),
            seed: Some(3),
            out_dir: dir.path().to_path_buf(),
            ..Default::default()
        };
        let r = run_verify(Suite::Semicircle, &opts).unwrap();
        assert_eq!(r.checks.len(), 10);
        assert!(r.checks[..3].iter().all(|c| c.pass));
    }
}
