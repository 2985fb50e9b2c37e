//! Checkable consequences of the theory: Feller margins, trace ODEs, the
//! `L2` isometry between the free and classical square-root processes, and
//! spectral statistics of GUE drivers.

use rayon::prelude::*;
use thiserror::Error;

use crate::error::NcError;
use crate::freebm::{FreeBrownianPath, SeedPolicy};
use crate::ncspace::{eigenvalues, spectral_decompose, SelfAdjointOperator};
use crate::scalar::{matmul, Real};
use crate::sde::{
    run_trajectory, EquationKind, EquationSpec, SchemeSpec, SdeError, StatRecord, TrajectoryStats,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiagnosticsError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("time {t} is not on the simulation grid")]
    GridMismatch { t: f64 },
    #[error("equation specs disagree on `{field}`")]
    SpecMismatch { field: &'static str },
    #[error("ensemble is empty")]
    EmptyEnsemble,
    #[error("invalid bins: {0}")]
    InvalidBins(String),
    #[error(transparent)]
    Operator(#[from] NcError),
    #[error(transparent)]
    Sde(#[from] SdeError),
}

/// Sample mean and standard error of the mean (zero error for fewer than two samples).
pub fn mean_and_std_err(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let m = xs.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (m, 0.0);
    }
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64;
    (m, (var / n as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FellerReport<T> {
    /// Smallest eigenvalue of `2a - sigma^2`.
    pub min_eig_2a_minus_sigma2: T,
    pub satisfied: bool,
    pub margin: T,
    /// Smallest eigenvalue of `2a - (phi(sigma) sigma + sigma^2)/2`.
    pub jensen_min_eig: T,
    /// `2 phi(a) - (phi(sigma)^2 + phi(sigma^2))/2`.
    pub jensen_trace_margin: T,
}

impl<T: Real> FellerReport<T> {
    pub fn jensen_trace_satisfied(&self) -> bool {
        self.jensen_trace_margin >= -T::tol_herm()
    }
}

/// Operator Feller condition `2a >= sigma^2` and its averaged variants.
///
/// `satisfied` tolerates rounding of order `tol_herm` in the eigenvalue.
pub fn feller_check<T: Real>(
    a: &SelfAdjointOperator<T>,
    sigma: &SelfAdjointOperator<T>,
) -> Result<FellerReport<T>, DiagnosticsError> {
    if a.dim() != sigma.dim() {
        return Err(DiagnosticsError::DimensionMismatch {
            left: a.dim(),
            right: sigma.dim(),
        });
    }
    let two = T::lit(2.0);
    let sigma_sq = sigma.square();
    let gap = a.scale(two).sub(&sigma_sq)?;
    let min_eig = eigenvalues(&gap)[0];
    let ps = sigma.trace_phi().value();
    let jensen = a
        .scale(two)
        .sub(&sigma.scale(ps).add(&sigma_sq)?.scale(T::lit(0.5)))?;
    let jensen_min_eig = eigenvalues(&jensen)[0];
    let jensen_trace_margin =
        two * a.trace_phi().value() - (ps * ps + sigma_sq.trace_phi().value()) * T::lit(0.5);
    Ok(FellerReport {
        min_eig_2a_minus_sigma2: min_eig,
        satisfied: min_eig >= -T::tol_herm(),
        margin: min_eig,
        jensen_min_eig,
        jensen_trace_margin,
    })
}

/// Closed-form solution of `y' = alpha - b y` on `grid`.
pub fn trace_ode_reference<T: Real>(alpha: T, b: T, y0: T, grid: &[T]) -> Vec<T> {
    debug_assert!(b > T::zero());
    let fixed = alpha / b;
    grid.iter()
        .map(|&t| fixed + (y0 - fixed) * (-b * t).exp())
        .collect()
}

/// `alpha` of the expected-trace ODE `d E phi(X) = (alpha - b E phi(X)) dt`.
///
/// For CIR kinds and for the squares of the square-root kinds this is
/// `phi(a)`: the noise contributes `(phi(sigma)^2 + phi(sigma^2))/8` per unit
/// time on top of [`flow_trace_alpha`].
pub fn expected_trace_alpha<T: Real>(spec: &EquationSpec<T>) -> T {
    spec.phi_a()
}

/// `phi(a) - (phi(sigma)^2 + phi(sigma^2))/8`, the trace drift of `V^2` under the noise-free flow.
pub fn flow_trace_alpha<T: Real>(spec: &EquationSpec<T>) -> T {
    let ps = spec.phi_sigma();
    spec.phi_a() - (ps * ps + spec.phi_sigma_sq()) * T::lit(0.125)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceDeviation {
    pub t: Vec<f64>,
    pub mean: Vec<f64>,
    pub reference: Vec<f64>,
    pub deviation: Vec<f64>,
    pub std_err: Vec<f64>,
    /// Completed runs that entered the averages.
    pub runs_used: usize,
}

impl TraceDeviation {
    pub fn max_deviation(&self) -> f64 {
        self.deviation.iter().copied().fold(0.0, f64::max)
    }
}

fn same_time(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(1.0)
}

fn record_index(records: &[crate::sde::StatRecord], t: f64) -> Option<usize> {
    let i = records.partition_point(|r| r.t < t - 1e-9 * t.abs().max(1.0));
    (i < records.len() && same_time(records[i].t, t)).then_some(i)
}

/// Per-record quantity whose ensemble mean solves the trace ODE.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceObservable {
    /// `phi(X)`, for the CIR kinds.
    Trace,
    /// `phi(X^2) = norm2^2`, for the square-root kinds.
    TraceOfSquare,
}

impl TraceObservable {
    pub fn for_kind(kind: EquationKind) -> Self {
        match kind {
            EquationKind::SqrtVFree
            | EquationKind::SqrtVbarClassical
            | EquationKind::ScalarSqrt => TraceObservable::TraceOfSquare,
            _ => TraceObservable::Trace,
        }
    }

    pub fn of(self, r: &StatRecord) -> f64 {
        match self {
            TraceObservable::Trace => r.trace,
            TraceObservable::TraceOfSquare => r.norm2 * r.norm2,
        }
    }

    /// Value at `t = 0` for a given start.
    pub fn initial<T: Real>(self, spec: &EquationSpec<T>) -> T {
        let x0 = spec.x0_spectrum();
        let n = T::from_usize_exact(x0.len());
        match self {
            TraceObservable::Trace => x0.iter().fold(T::zero(), |a, &v| a + v) / n,
            TraceObservable::TraceOfSquare => x0.iter().fold(T::zero(), |a, &v| a + v * v) / n,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TraceObservable::Trace => "trace",
            TraceObservable::TraceOfSquare => "trace_of_square",
        }
    }
}

/// Ensemble mean of `phi(X(t))` against a reference curve at the reference times.
///
/// Failed runs are excluded.
pub fn trace_deviation(
    stats: &[TrajectoryStats],
    times: &[f64],
    reference: &[f64],
) -> Result<TraceDeviation, DiagnosticsError> {
    observable_deviation(stats, times, reference, TraceObservable::Trace)
}

/// As [`trace_deviation`] for any [`TraceObservable`].
pub fn observable_deviation(
    stats: &[TrajectoryStats],
    times: &[f64],
    reference: &[f64],
    observable: TraceObservable,
) -> Result<TraceDeviation, DiagnosticsError> {
    if times.len() != reference.len() {
        return Err(DiagnosticsError::DimensionMismatch {
            left: times.len(),
            right: reference.len(),
        });
    }
    let runs: Vec<&TrajectoryStats> = stats.iter().filter(|s| s.completed()).collect();
    if runs.is_empty() {
        return Err(DiagnosticsError::EmptyEnsemble);
    }
    let mut out = TraceDeviation {
        t: times.to_vec(),
        mean: Vec::new(),
        reference: reference.to_vec(),
        deviation: Vec::new(),
        std_err: Vec::new(),
        runs_used: runs.len(),
    };
    for (&t, &y) in times.iter().zip(reference) {
        let values = runs
            .iter()
            .map(|s| record_index(&s.records, t).map(|i| observable.of(&s.records[i])))
            .collect::<Option<Vec<f64>>>()
            .ok_or(DiagnosticsError::GridMismatch { t })?;
        let (m, se) = mean_and_std_err(&values);
        out.mean.push(m);
        out.deviation.push((m - y).abs());
        out.std_err.push(se);
    }
    Ok(out)
}

/// Means of one observable on both sides of the isometry, per checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct IsometrySeries {
    pub label: String,
    pub lhs: Vec<f64>,
    pub rhs: Vec<f64>,
    pub abs_gap: Vec<f64>,
    /// Standard error of `lhs - rhs` (the two ensembles are independent).
    pub std_err: Vec<f64>,
    pub lhs_std_err: Vec<f64>,
    pub rhs_std_err: Vec<f64>,
}

impl IsometrySeries {
    pub fn max_gap(&self) -> f64 {
        self.abs_gap.iter().copied().fold(0.0, f64::max)
    }

    /// Largest `|gap| / std_err` over checkpoints with nonzero error.
    pub fn max_z(&self) -> f64 {
        self.abs_gap
            .iter()
            .zip(&self.std_err)
            .map(|(g, s)| if *g == 0.0 { 0.0 } else { g / s })
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IsometryReport {
    pub checkpoints: Vec<f64>,
    /// Ensemble means of `phi(V(t)^2)`.
    pub lhs: Vec<f64>,
    /// Ensemble means of `phi(Vbar(t)^2)`.
    pub rhs: Vec<f64>,
    pub abs_gap: Vec<f64>,
    pub std_err: Vec<f64>,
    pub lhs_std_err: Vec<f64>,
    pub rhs_std_err: Vec<f64>,
    /// `phi(p V^2 p)` against `phi(p Vbar^2 p)` for spectral projections `p` of `X0`
    /// and for one projection built from an independent GUE sample.
    pub projections: Vec<IsometrySeries>,
    pub runs: usize,
    /// Runs that stopped early on either side.
    pub failed_runs: usize,
}

impl IsometryReport {
    pub fn max_gap(&self) -> f64 {
        self.abs_gap.iter().copied().fold(0.0, f64::max)
    }

    pub fn main_series(&self) -> IsometrySeries {
        IsometrySeries {
            label: "trace".into(),
            lhs: self.lhs.clone(),
            rhs: self.rhs.clone(),
            abs_gap: self.abs_gap.clone(),
            std_err: self.std_err.clone(),
            lhs_std_err: self.lhs_std_err.clone(),
            rhs_std_err: self.rhs_std_err.clone(),
        }
    }
}

/// Seed domain of the classical driver in [`isometry_check`].
pub const VBAR_DOMAIN: u64 = 1;
/// Seed domain of the GUE sample that defines the free projection.
pub const PROJECTION_DOMAIN: u64 = 2;

/// Projections used by [`isometry_check`]: one per distinct point of the `X0`
/// spectrum (when there are at least two), then `1_{G > 0}` for a GUE sample `G`.
pub fn isometry_projections<T: Real>(
    spec: &EquationSpec<T>,
    base_seed: u64,
) -> Result<Vec<(String, SelfAdjointOperator<T>)>, NcError> {
    let mut out = Vec::new();
    let x0 = spec.x0();
    let diag = x0.diagonal_real();
    let mut distinct: Vec<T> = spec.x0_spectrum().to_vec();
    distinct.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    distinct.dedup();
    if distinct.len() > 1 {
        for &l in &distinct {
            let indicator: Vec<T> = diag
                .iter()
                .map(|&d| if d == l { T::one() } else { T::zero() })
                .collect();
            out.push((
                format!("x0_projection[{l}]"),
                SelfAdjointOperator::from_real_diagonal(&indicator)?,
            ));
        }
    }
    let g = crate::freebm::sample_free_increment(
        T::one(),
        spec.dim(),
        &mut SeedPolicy::new(base_seed, 0)
            .with_domain(PROJECTION_DOMAIN)
            .stream(0),
    );
    let dec = spectral_decompose(&g)?;
    let ind: Vec<T> = dec
        .eigenvalues()
        .iter()
        .map(|&l| if l > T::zero() { T::one() } else { T::zero() })
        .collect();
    out.push(("gue_projection".into(), dec.assemble(&ind)));
    Ok(out)
}

fn series(
    label: String,
    lhs_runs: &[&Vec<f64>],
    rhs_runs: &[&Vec<f64>],
    column: impl Fn(usize) -> usize,
    n: usize,
) -> IsometrySeries {
    let mut out = IsometrySeries {
        label,
        lhs: Vec::new(),
        rhs: Vec::new(),
        abs_gap: Vec::new(),
        std_err: Vec::new(),
        lhs_std_err: Vec::new(),
        rhs_std_err: Vec::new(),
    };
    for slot in 0..n {
        let c = column(slot);
        let l: Vec<f64> = lhs_runs.iter().map(|v| v[c]).collect();
        let r: Vec<f64> = rhs_runs.iter().map(|v| v[c]).collect();
        let (ml, sl) = mean_and_std_err(&l);
        let (mr, sr) = mean_and_std_err(&r);
        out.lhs.push(ml);
        out.rhs.push(mr);
        out.abs_gap.push((ml - mr).abs());
        out.lhs_std_err.push(sl);
        out.rhs_std_err.push(sr);
        out.std_err.push((sl * sl + sr * sr).sqrt());
    }
    out
}

/// Compares `E phi(V(t)^2)` with `E phi(Vbar(t)^2)` on independent ensembles.
///
/// Run `r` of the free side uses `SeedPolicy::new(base_seed, r)`, the classical
/// side the same policy in domain [`VBAR_DOMAIN`]. Runs that fail on either side
/// are counted in `failed_runs` and left out of that side's averages.
pub fn isometry_check<T: Real>(
    spec_v: &EquationSpec<T>,
    spec_vbar: &EquationSpec<T>,
    scheme: &SchemeSpec<T>,
    runs: usize,
    base_seed: u64,
    checkpoints: &[T],
) -> Result<IsometryReport, DiagnosticsError> {
    if spec_v.kind() != EquationKind::SqrtVFree
        || spec_vbar.kind() != EquationKind::SqrtVbarClassical
    {
        return Err(DiagnosticsError::SpecMismatch { field: "kind" });
    }
    check_same_coefficients(spec_v, spec_vbar)?;
    if runs == 0 {
        return Err(DiagnosticsError::EmptyEnsemble);
    }
    let idx = checkpoints
        .iter()
        .map(|&t| {
            scheme.index_of(t).ok_or(DiagnosticsError::GridMismatch {
                t: t.to_f64_lossy(),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let horizon = SchemeSpec {
        t_end: scheme.time(idx.iter().copied().max().unwrap_or(0).max(1)),
        ..*scheme
    };
    let projections = isometry_projections(spec_v, base_seed)?;
    let width = 1 + projections.len();

    // Row layout per checkpoint: phi(V^2), then phi(p V^2 p) for each projection.
    let observe = |spec: &EquationSpec<T>, seed: SeedPolicy| -> Option<Vec<f64>> {
        let mut values = vec![f64::NAN; idx.len() * width];
        run_trajectory(spec, &horizon, seed, |k, s| {
            for (slot, &i) in idx.iter().enumerate() {
                if i == k {
                    values[slot * width] = s.trace_of_square().to_f64_lossy();
                    let sq = s.operator().square();
                    for (j, (_, p)) in projections.iter().enumerate() {
                        let v = crate::ncspace::trace_phi_product(&sq, p).expect("same dimension");
                        values[slot * width + 1 + j] = v.to_f64_lossy();
                    }
                }
            }
        })
        .ok()
        .map(|_| values)
    };
    let sides: Vec<(Option<Vec<f64>>, Option<Vec<f64>>)> = (0..runs)
        .into_par_iter()
        .map(|r| {
            let seed = SeedPolicy::new(base_seed, r as u64);
            (
                observe(spec_v, seed),
                observe(spec_vbar, seed.with_domain(VBAR_DOMAIN)),
            )
        })
        .collect();
    let failed_runs = sides
        .iter()
        .filter(|(l, r)| l.is_none() || r.is_none())
        .count();
    let lhs_runs: Vec<&Vec<f64>> = sides.iter().filter_map(|(l, _)| l.as_ref()).collect();
    let rhs_runs: Vec<&Vec<f64>> = sides.iter().filter_map(|(_, r)| r.as_ref()).collect();
    if lhs_runs.is_empty() || rhs_runs.is_empty() {
        return Err(DiagnosticsError::EmptyEnsemble);
    }
    let main = series(
        "trace".into(),
        &lhs_runs,
        &rhs_runs,
        |slot| slot * width,
        idx.len(),
    );
    let projections = projections
        .iter()
        .enumerate()
        .map(|(j, (label, _))| {
            series(
                label.clone(),
                &lhs_runs,
                &rhs_runs,
                |slot| slot * width + 1 + j,
                idx.len(),
            )
        })
        .collect();
    Ok(IsometryReport {
        checkpoints: checkpoints.iter().map(|t| t.to_f64_lossy()).collect(),
        lhs: main.lhs,
        rhs: main.rhs,
        abs_gap: main.abs_gap,
        std_err: main.std_err,
        lhs_std_err: main.lhs_std_err,
        rhs_std_err: main.rhs_std_err,
        projections,
        runs,
        failed_runs,
    })
}

fn check_same_coefficients<T: Real>(
    x: &EquationSpec<T>,
    y: &EquationSpec<T>,
) -> Result<(), DiagnosticsError> {
    let mismatch = |field| Err(DiagnosticsError::SpecMismatch { field });
    if x.x0_spectrum() != y.x0_spectrum() || x.dim_multiplicity() != y.dim_multiplicity() {
        return mismatch("x0_spectrum");
    }
    if x.a_fn() != y.a_fn() {
        return mismatch("a");
    }
    if x.sigma_fn() != y.sigma_fn() {
        return mismatch("sigma");
    }
    if x.b() != y.b() {
        return mismatch("b");
    }
    Ok(())
}

/// `C_k = binom(2k, k) / (k + 1)`.
pub fn catalan(k: u32) -> u64 {
    (0..k).fold(1u64, |c, i| c * 2 * (2 * i as u64 + 1) / (i as u64 + 2))
}

/// Moment of the semicircle law of variance `t`.
pub fn semicircle_target(order: u32, t: f64) -> f64 {
    if order % 2 == 1 {
        0.0
    } else {
        catalan(order / 2) as f64 * t.powi((order / 2) as i32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentEstimate {
    pub order: u32,
    pub estimate: f64,
    pub std_err: f64,
    pub target: f64,
}

impl MomentEstimate {
    /// `|estimate - target|` in units of the standard error.
    pub fn z_score(&self) -> f64 {
        let d = (self.estimate - self.target).abs();
        if d == 0.0 {
            0.0
        } else {
            d / self.std_err
        }
    }
}

/// `phi(W(t)^j)` for `j = 1..=max_order`, estimated over an ensemble of paths.
pub fn semicircle_moments<T: Real>(
    paths: &[FreeBrownianPath<T>],
    t: T,
    max_order: u32,
) -> Result<Vec<MomentEstimate>, DiagnosticsError> {
    let first = paths.first().ok_or(DiagnosticsError::EmptyEnsemble)?;
    let k = first
        .grid()
        .iter()
        .position(|&g| same_time(g.to_f64_lossy(), t.to_f64_lossy()))
        .ok_or(DiagnosticsError::GridMismatch {
            t: t.to_f64_lossy(),
        })?;
    let samples: Vec<SelfAdjointOperator<T>> = paths.par_iter().map(|p| p.value_at(k)).collect();
    semicircle_moments_of(&samples, t, max_order)
}

/// As [`semicircle_moments`], for samples of `W(t)` given directly.
pub fn semicircle_moments_of<T: Real>(
    samples: &[SelfAdjointOperator<T>],
    t: T,
    max_order: u32,
) -> Result<Vec<MomentEstimate>, DiagnosticsError> {
    if samples.is_empty() {
        return Err(DiagnosticsError::EmptyEnsemble);
    }
    let per_sample: Vec<Vec<f64>> = samples
        .par_iter()
        .map(|w| {
            let spec: Vec<f64> = eigenvalues(w).iter().map(|l| l.to_f64_lossy()).collect();
            let n = spec.len() as f64;
            (1..=max_order)
                .map(|j| spec.iter().map(|l| l.powi(j as i32)).sum::<f64>() / n)
                .collect()
        })
        .collect();
    Ok((1..=max_order)
        .map(|j| {
            let xs: Vec<f64> = per_sample.iter().map(|m| m[(j - 1) as usize]).collect();
            let (estimate, std_err) = mean_and_std_err(&xs);
            MomentEstimate {
                order: j,
                estimate,
                std_err,
                target: semicircle_target(j, t.to_f64_lossy()),
            }
        })
        .collect())
}

/// An alternating word `A^m1 W^n1 A^m2 W^n2 ...` with every factor centered.
///
/// Exponents alternate starting with `A`; a word has between one and four factors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlternatingWord(pub Vec<u32>);

#[derive(Debug, Clone, PartialEq)]
pub struct FreenessEstimate {
    pub word: AlternatingWord,
    pub mean: f64,
    pub std_err: f64,
    /// Root mean square of the per-sample values; tracks the finite-`N` defect.
    pub rms: f64,
}

impl FreenessEstimate {
    pub fn within(&self, k_se: f64) -> bool {
        self.mean.abs() <= k_se * self.std_err || self.mean == 0.0
    }
}

/// `X^m - phi(X^m)`, exactly zero when `X^m` is a multiple of the identity.
fn centered_power<T: Real>(
    x: &SelfAdjointOperator<T>,
    m: u32,
) -> Result<SelfAdjointOperator<T>, NcError> {
    let dec = spectral_decompose(x)?;
    let vals: Vec<T> = dec
        .eigenvalues()
        .iter()
        .map(|&l| l.powi(m as i32))
        .collect();
    let mu = vals.iter().fold(T::zero(), |acc, &v| acc + v) / T::from_usize_exact(vals.len());
    let (lo, hi) = vals
        .iter()
        .fold((vals[0], vals[0]), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if lo == hi {
        return Ok(SelfAdjointOperator::zeros(x.dim()));
    }
    let centered: Vec<T> = vals.iter().map(|&v| v - mu).collect();
    Ok(dec.assemble(&centered))
}

/// Alternating centered moments of a deterministic `A` and independent samples of `W`.
pub fn freeness_test<T: Real>(
    a: &SelfAdjointOperator<T>,
    w_samples: &[SelfAdjointOperator<T>],
    words: &[AlternatingWord],
) -> Result<Vec<FreenessEstimate>, DiagnosticsError> {
    if w_samples.is_empty() {
        return Err(DiagnosticsError::EmptyEnsemble);
    }
    for w in w_samples {
        if w.dim() != a.dim() {
            return Err(DiagnosticsError::DimensionMismatch {
                left: a.dim(),
                right: w.dim(),
            });
        }
    }
    for word in words {
        if word.0.is_empty() || word.0.len() > 4 || word.0.contains(&0) {
            return Err(DiagnosticsError::InvalidBins(format!(
                "word {:?} must have 1 to 4 positive exponents",
                word.0
            )));
        }
    }
    let max_a = words
        .iter()
        .flat_map(|w| w.0.iter().step_by(2))
        .copied()
        .max()
        .unwrap_or(1);
    let max_w = words
        .iter()
        .flat_map(|w| w.0.iter().skip(1).step_by(2))
        .copied()
        .max()
        .unwrap_or(1);
    let a_pows = (1..=max_a)
        .map(|m| centered_power(a, m))
        .collect::<Result<Vec<_>, _>>()?;
    let per_sample: Vec<Vec<f64>> = w_samples
        .par_iter()
        .map(|w| -> Result<Vec<f64>, NcError> {
            let w_pows = (1..=max_w)
                .map(|n| centered_power(w, n))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(words
                .iter()
                .map(|word| {
                    let factor = |i: usize, e: u32| {
                        if i % 2 == 0 {
                            &a_pows[e as usize - 1]
                        } else {
                            &w_pows[e as usize - 1]
                        }
                    };
                    let mut prod = factor(0, word.0[0]).matrix().clone();
                    for (i, &e) in word.0.iter().enumerate().skip(1) {
                        prod = matmul(&prod, factor(i, e).matrix());
                    }
                    crate::ncspace::normalized_trace(&prod).re.to_f64_lossy()
                })
                .collect())
        })
        .collect::<Result<_, _>>()?;
    Ok(words
        .iter()
        .enumerate()
        .map(|(i, word)| {
            let xs: Vec<f64> = per_sample.iter().map(|v| v[i]).collect();
            let (mean, std_err) = mean_and_std_err(&xs);
            let rms = (xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64).sqrt();
            FreenessEstimate {
                word: word.clone(),
                mean,
                std_err,
                rms,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub enum Bins {
    /// Strictly increasing edges; infinite end edges are allowed.
    Edges(Vec<f64>),
    /// Equal-width bins over the observed range.
    Auto(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralHistogram {
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub n_samples: usize,
    pub min: f64,
    pub max: f64,
}

/// Pooled eigenvalue histogram. Eigenvalues outside the edges go to the end bins,
/// so the counts always add up to `n_samples * N`.
pub fn esd_histogram<T: Real>(
    ensemble: &[SelfAdjointOperator<T>],
    bins: Bins,
) -> Result<SpectralHistogram, DiagnosticsError> {
    let first = ensemble.first().ok_or(DiagnosticsError::EmptyEnsemble)?;
    if let Some(x) = ensemble.iter().find(|x| x.dim() != first.dim()) {
        return Err(DiagnosticsError::DimensionMismatch {
            left: first.dim(),
            right: x.dim(),
        });
    }
    let pooled: Vec<f64> = ensemble
        .par_iter()
        .map(|x| {
            eigenvalues(x)
                .iter()
                .map(|l| l.to_f64_lossy())
                .collect::<Vec<_>>()
        })
        .collect::<Vec<_>>()
        .concat();
    let min = pooled.iter().copied().fold(f64::INFINITY, f64::min);
    let max = pooled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let edges = match bins {
        Bins::Edges(e) => {
            if e.len() < 2 || e.iter().any(|x| x.is_nan()) || e.windows(2).any(|w| w[0] >= w[1]) {
                return Err(DiagnosticsError::InvalidBins(
                    "edges must be at least two strictly increasing values".into(),
                ));
            }
            e
        }
        Bins::Auto(count) => {
            if count == 0 {
                return Err(DiagnosticsError::InvalidBins(
                    "bin count must be positive".into(),
                ));
            }
            let (lo, hi) = if max > min {
                (min, max)
            } else {
                (min - 0.5, max + 0.5)
            };
            let w = (hi - lo) / count as f64;
            (0..=count)
                .map(|i| if i == count { hi } else { lo + w * i as f64 })
                .collect()
        }
    };
    let mut counts = vec![0u64; edges.len() - 1];
    for &l in &pooled {
        let i = edges
            .partition_point(|&e| e <= l)
            .saturating_sub(1)
            .min(counts.len() - 1);
        counts[i] += 1;
    }
    Ok(SpectralHistogram {
        bin_edges: edges,
        counts,
        n_samples: ensemble.len(),
        min,
        max,
    })
}

/// Fraction of completed runs with at least one clamped eigenvalue.
pub fn breach_fraction(stats: &[TrajectoryStats]) -> f64 {
    let done: Vec<&TrajectoryStats> = stats.iter().filter(|s| s.completed()).collect();
    if done.is_empty() {
        return f64::NAN;
    }
    done.iter().filter(|s| s.final_breaches() > 0).count() as f64 / done.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::freebm::sample_free_increment;
    use crate::ncspace::SpectralFunction as F;
    use crate::sde::{simulate, Scheme};

    fn diag(v: &[f64]) -> SelfAdjointOperator<f64> {
        SelfAdjointOperator::from_real_diagonal(v).unwrap()
    }

    #[test]
    fn feller_examples() {
        let r = feller_check(
            &SelfAdjointOperator::<f64>::identity(3),
            &SelfAdjointOperator::identity(3),
        )
        .unwrap();
        assert!(r.satisfied);
        assert_eq!(r.margin, 1.0);

        let s = diag(&[1.0, 2.0]);
        let r = feller_check(&diag(&[0.5, 2.0]), &s).unwrap();
        assert!(r.satisfied);
        assert_eq!(r.margin, 0.0);

        let r = feller_check(&diag(&[1.0, 2.0]), &diag(&[2.0, 1.0])).unwrap();
        assert!(!r.satisfied);
        assert_eq!(r.margin, -2.0);

        assert!(matches!(
            feller_check(
                &SelfAdjointOperator::<f64>::identity(2),
                &SelfAdjointOperator::identity(3)
            ),
            Err(DiagnosticsError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn jensen_step_fails_pointwise_but_holds_in_trace() {
        // boundary Feller case with a non-scalar sigma
        let r = feller_check(&diag(&[0.5, 2.0]), &diag(&[1.0, 2.0])).unwrap();
        assert!(r.satisfied);
        // 2a - (1.5 sigma + sigma^2)/2 = diag(1 - 1.25, 4 - 3.5)
        assert!((r.jensen_min_eig + 0.25).abs() < 1e-15);
        assert!(r.jensen_trace_margin >= 0.0);
        assert!(r.jensen_trace_satisfied());
    }

    #[test]
    fn trace_ode_examples() {
        assert!(trace_ode_reference(1.0, 1.0, 1.0, &[0.0, 0.5, 3.0])
            .iter()
            .all(|&y| y == 1.0));
        assert_eq!(trace_ode_reference(0.3, 2.0, 7.0, &[0.0])[0], 7.0);
        let y = trace_ode_reference(2.0, 1.0, 0.5, &[1.0])[0];
        // RK4 oracle with h = 1e-3
        let mut z = 0.5f64;
        let h = 1e-3;
        let f = |z: f64| 2.0 - z;
        for _ in 0..1000 {
            let k1 = f(z);
            let k2 = f(z + h / 2.0 * k1);
            let k3 = f(z + h / 2.0 * k2);
            let k4 = f(z + h * k3);
            z += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        assert!((y - z).abs() <= 1e-10);
        assert!((y - 1.44818).abs() <= 1e-5);
    }

    #[test]
    fn alpha_variants() {
        let one = F::Affine {
            alpha: 0.0,
            beta: 1.0,
        };
        let spec = EquationSpec::new(
            EquationKind::SqrtVFree,
            one,
            F::Affine {
                alpha: 1.0,
                beta: 0.0,
            },
            1.0,
            vec![1.0, 3.0],
            1,
        )
        .unwrap();
        assert_eq!(expected_trace_alpha(&spec), 1.0);
        // phi(sigma) = 2, phi(sigma^2) = 5
        assert!((flow_trace_alpha(&spec) - (1.0 - 9.0 / 8.0f64)).abs() < 1e-15);
    }

    #[test]
    fn deviation_of_noiseless_run() {
        let spec = EquationSpec::without_noise(
            EquationKind::FreeCirNonclassical,
            F::Affine {
                alpha: 0.0,
                beta: 1.0,
            },
            1.0,
            vec![2.0],
            2,
        )
        .unwrap();
        let scheme = SchemeSpec::new(Scheme::Splitting, 1e-3, 1.0).unwrap();
        let stats = simulate(&spec, &scheme, 0, 1);
        let times = vec![0.0, 0.25, 0.5, 1.0];
        let reference = trace_ode_reference(1.0, 1.0, 2.0, &times);
        let dev = trace_deviation(&stats, &times, &reference).unwrap();
        assert_eq!(dev.deviation[0], 0.0);
        assert!(dev.max_deviation() <= 1e-4, "{:?}", dev.deviation);
        assert!(matches!(
            trace_deviation(&stats, &[0.0005], &[1.0]),
            Err(DiagnosticsError::GridMismatch { .. })
        ));
    }

    #[test]
    fn square_root_kinds_track_the_square() {
        let spec = EquationSpec::without_noise(
            EquationKind::SqrtVFree,
            F::Affine {
                alpha: 0.0,
                beta: 2.0,
            },
            1.0,
            vec![1.0, 4.0],
            2,
        )
        .unwrap();
        let obs = TraceObservable::for_kind(spec.kind());
        assert_eq!(obs, TraceObservable::TraceOfSquare);
        assert_eq!(obs.initial(&spec), 8.5);
        let scheme = SchemeSpec::new(Scheme::Splitting, 1e-3, 1.0).unwrap();
        let stats = simulate(&spec, &scheme, 0, 1);
        let times = vec![0.0, 0.5, 1.0];
        let reference = trace_ode_reference(flow_trace_alpha(&spec), 1.0, 8.5, &times);
        let dev = observable_deviation(&stats, &times, &reference, obs).unwrap();
        assert!(dev.max_deviation() <= 1e-4, "{:?}", dev.deviation);
        assert_eq!(
            TraceObservable::for_kind(EquationKind::ScalarCir),
            TraceObservable::Trace
        );
    }

    #[test]
    fn isometry_rejects_mismatched_specs() {
        let id = F::Affine {
            alpha: 0.0,
            beta: 1.0,
        };
        let v = EquationSpec::new(EquationKind::SqrtVFree, id, id, 1.0, vec![1.0], 4).unwrap();
        let vbar = EquationSpec::new(
            EquationKind::SqrtVbarClassical,
            id,
            F::Affine {
                alpha: 0.0,
                beta: 2.0,
            },
            1.0,
            vec![1.0],
            4,
        )
        .unwrap();
        let scheme = SchemeSpec::new(Scheme::Euler, 0.01, 0.1).unwrap();
        assert!(matches!(
            isometry_check(&v, &vbar, &scheme, 2, 0, &[0.0]),
            Err(DiagnosticsError::SpecMismatch { field: "sigma" })
        ));
        assert!(matches!(
            isometry_check(&v, &v, &scheme, 2, 0, &[0.0]),
            Err(DiagnosticsError::SpecMismatch { field: "kind" })
        ));
    }

    #[test]
    fn isometry_starts_with_zero_gap() {
        let id = F::Affine {
            alpha: 0.0,
            beta: 1.0,
        };
        let v = EquationSpec::new(EquationKind::SqrtVFree, id, id, 1.0, vec![0.5, 1.5], 4).unwrap();
        let vbar = v.with_kind(EquationKind::SqrtVbarClassical);
        let scheme = SchemeSpec::new(Scheme::Euler, 0.01, 0.2).unwrap();
        let rep = isometry_check(&v, &vbar, &scheme, 20, 4, &[0.0, 0.1, 0.2]).unwrap();
        assert_eq!(rep.abs_gap[0], 0.0);
        assert_eq!(rep.lhs[0], 1.25);
        assert_eq!(rep.failed_runs, 0);
        // two spectral projections of X0 plus the GUE projection
        assert_eq!(rep.projections.len(), 3);
        for p in &rep.projections {
            assert_eq!(p.abs_gap[0], 0.0, "{}", p.label);
        }
        // phi(p V0^2 p) for p onto the eigenvalue 1.5 of X0: 2.25 / 2
        assert_eq!(rep.projections[1].lhs[0], 1.125);
        assert!(matches!(
            isometry_check(&v, &vbar, &scheme, 2, 0, &[0.015]),
            Err(DiagnosticsError::GridMismatch { .. })
        ));
    }

    #[test]
    fn catalan_numbers() {
        assert_eq!(
            (0..8).map(catalan).collect::<Vec<_>>(),
            vec![1, 1, 2, 5, 14, 42, 132, 429]
        );
        assert_eq!(semicircle_target(3, 1.0), 0.0);
        assert_eq!(semicircle_target(4, 2.0), 8.0);
    }

    #[test]
    fn semicircle_small_sample() {
        let paths: Vec<FreeBrownianPath<f64>> = (0..50)
            .map(|r| FreeBrownianPath::sample(vec![0.0, 0.5, 1.0], 64, SeedPolicy::new(8, r)))
            .collect();
        let est = semicircle_moments(&paths, 1.0, 4).unwrap();
        for e in &est {
            assert!(
                e.z_score() <= 4.0 || (e.estimate - e.target).abs() < 0.05 * e.target.max(1.0),
                "{e:?}"
            );
        }
        assert!(matches!(
            semicircle_moments(&paths, 0.3, 2),
            Err(DiagnosticsError::GridMismatch { .. })
        ));
    }

    #[test]
    fn freeness_with_scalar_a_is_exactly_zero() {
        let a = SelfAdjointOperator::scaled_identity(8, 0.1);
        let ws: Vec<_> = (0..5)
            .map(|r| sample_free_increment(1.0, 8, &mut SeedPolicy::new(1, r).stream(0)))
            .collect();
        let words = [
            AlternatingWord(vec![1, 1]),
            AlternatingWord(vec![2, 1, 1, 2]),
        ];
        for e in freeness_test(&a, &ws, &words).unwrap() {
            assert_eq!(e.mean, 0.0);
            assert_eq!(e.rms, 0.0);
        }
    }

    #[test]
    fn histogram_counts_everything() {
        let xs = vec![diag(&[0.0, 1.0, 2.0]), diag(&[-5.0, 0.5, 9.0])];
        let h = esd_histogram(&xs, Bins::Edges(vec![0.0, 1.0, 2.0])).unwrap();
        assert_eq!(h.counts.iter().sum::<u64>(), 6);
        assert_eq!(h.counts, vec![3, 3]);
        assert_eq!((h.min, h.max), (-5.0, 9.0));
        let h = esd_histogram(
            &xs,
            Bins::Edges(vec![f64::NEG_INFINITY, 0.0, f64::INFINITY]),
        )
        .unwrap();
        assert_eq!(h.counts, vec![1, 5]);
        let h = esd_histogram(&xs, Bins::Auto(7)).unwrap();
        assert_eq!(h.counts.iter().sum::<u64>(), 6);
        assert_eq!(h.bin_edges.len(), 8);
        assert!(esd_histogram(&xs, Bins::Edges(vec![1.0, 1.0])).is_err());
    }
}
