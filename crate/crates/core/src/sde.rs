//! Equation catalog and time steppers.
//!
//! Free kinds evolve a Hermitian matrix driven by GUE increments. Commutative
//! kinds (`ScalarCir`, `ScalarSqrt`, `SqrtVbarClassical`) evolve the diagonal
//! of the state in the eigenbasis of `X0`: one scalar SDE per spectral point,
//! all sharing a single classical Brownian path.
//!
//! Coefficients `a` and `sigma` are spectral functions of the diagonal `X0`,
//! so they are stored as diagonals and every product with them is a row or
//! column scaling.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rayon::prelude::*;
use thiserror::Error;

use crate::error::NcError;
use crate::freebm::{sample_free_increment, sample_scalar_increment, SeedPolicy};
use crate::ncspace::{
    make_operator_from_spectrum, p_norm_of_spectrum, spectral_decompose, PNorm,
    SelfAdjointOperator, SpectralDecomposition, SpectralFunction,
};
use crate::scalar::{matmul, re, Real, C};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SdeError {
    #[error("invalid `{field}`: {reason}")]
    InvalidField { field: &'static str, reason: String },
    #[error("state left the invertible region at t = {t}: eigenvalue {eigenvalue:e}")]
    SingularState { t: f64, eigenvalue: f64 },
    #[error("noise increment does not match the equation kind")]
    NoiseMismatch,
    #[error(transparent)]
    Operator(#[from] NcError),
}

fn invalid(field: &'static str, reason: impl Into<String>) -> SdeError {
    SdeError::InvalidField {
        field,
        reason: reason.into(),
    }
}

/// Which SDE of the catalog to integrate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EquationKind {
    /// `dX = (a - bX)dt + (sigma/2) sqrt(X) dW + dW sqrt(X) (sigma/2)`.
    FreeCirNonclassical,
    /// `dX = (a - bX)dt + X^(1/4) sqrt(sigma) dW sqrt(sigma) X^(1/4)`.
    FreeCirClassical,
    /// Square-root process driven by free Brownian motion, symmetrized inverse drift.
    SqrtVFree,
    /// Square-root process on the commutative algebra of `V0`, scalar Brownian driver.
    SqrtVbarClassical,
    /// `dX = (a - bX)dt + sqrt(sigma) X^(1/4) dW X^(1/4) sqrt(sigma)`.
    FreeSdeAnalogue,
    /// `dx = (a - bx)dt + sigma sqrt(x) dB`.
    ScalarCir,
    /// `du = (1/2 (a - sigma^2/4) / u - b u / 2)dt + sigma/2 dB`.
    ScalarSqrt,
}

impl EquationKind {
    pub const ALL: [EquationKind; 7] = [
        EquationKind::FreeCirNonclassical,
        EquationKind::FreeCirClassical,
        EquationKind::SqrtVFree,
        EquationKind::SqrtVbarClassical,
        EquationKind::FreeSdeAnalogue,
        EquationKind::ScalarCir,
        EquationKind::ScalarSqrt,
    ];

    /// Driven by a free (matrix) Brownian motion.
    pub fn is_free(self) -> bool {
        matches!(
            self,
            EquationKind::FreeCirNonclassical
                | EquationKind::FreeCirClassical
                | EquationKind::SqrtVFree
                | EquationKind::FreeSdeAnalogue
        )
    }

    /// CIR-type equation whose diffusion carries a square root of the state.
    pub fn is_cir(self) -> bool {
        matches!(
            self,
            EquationKind::FreeCirNonclassical
                | EquationKind::FreeCirClassical
                | EquationKind::FreeSdeAnalogue
                | EquationKind::ScalarCir
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EquationKind::FreeCirNonclassical => "free_cir_nonclassical",
            EquationKind::FreeCirClassical => "free_cir_classical",
            EquationKind::SqrtVFree => "sqrt_v_free",
            EquationKind::SqrtVbarClassical => "sqrt_vbar_classical",
            EquationKind::FreeSdeAnalogue => "free_sde_analogue",
            EquationKind::ScalarCir => "scalar_cir",
            EquationKind::ScalarSqrt => "scalar_sqrt",
        }
    }
}

impl fmt::Display for EquationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EquationKind {
    type Err = SdeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        EquationKind::ALL
            .into_iter()
            .find(|k| k.as_str() == norm)
            .ok_or_else(|| invalid("kind", format!("unknown equation kind {s:?}")))
    }
}

/// Equation kind plus coefficient data.
#[derive(Debug, Clone)]
pub struct EquationSpec<T: Real> {
    kind: EquationKind,
    a_fn: SpectralFunction<T>,
    sigma_fn: Option<SpectralFunction<T>>,
    b: T,
    x0_spectrum: Vec<T>,
    dim_multiplicity: usize,
    x0: Vec<T>,
    a: Vec<T>,
    sigma: Vec<T>,
}

impl<T: Real> EquationSpec<T> {
    /// Validated constructor: `b > 0`, `X0 > 0`, and `a(X0)`, `sigma(X0)` strictly positive.
    pub fn new(
        kind: EquationKind,
        a_fn: SpectralFunction<T>,
        sigma_fn: SpectralFunction<T>,
        b: T,
        x0_spectrum: Vec<T>,
        dim_multiplicity: usize,
    ) -> Result<Self, SdeError> {
        Self::build(kind, a_fn, Some(sigma_fn), b, x0_spectrum, dim_multiplicity)
    }

    /// Degenerate spec with `sigma = 0`, for checking the deterministic flow.
    pub fn without_noise(
        kind: EquationKind,
        a_fn: SpectralFunction<T>,
        b: T,
        x0_spectrum: Vec<T>,
        dim_multiplicity: usize,
    ) -> Result<Self, SdeError> {
        Self::build(kind, a_fn, None, b, x0_spectrum, dim_multiplicity)
    }

    fn build(
        kind: EquationKind,
        a_fn: SpectralFunction<T>,
        sigma_fn: Option<SpectralFunction<T>>,
        b: T,
        x0_spectrum: Vec<T>,
        dim_multiplicity: usize,
    ) -> Result<Self, SdeError> {
        if !(b > T::zero()) || !b.is_finite() {
            return Err(invalid(
                "b",
                format!("must be a finite positive scalar, got {b}"),
            ));
        }
        if x0_spectrum.is_empty() {
            return Err(invalid("x0_spectrum", "must be nonempty"));
        }
        if dim_multiplicity == 0 {
            return Err(invalid("dim_multiplicity", "must be a positive integer"));
        }
        if let Some((i, v)) = x0_spectrum
            .iter()
            .enumerate()
            .find(|(_, v)| !(**v > T::zero()) || !v.is_finite())
        {
            return Err(invalid(
                "x0_spectrum",
                format!("entry {i} = {v} is not strictly positive"),
            ));
        }
        let eval = |f: &SpectralFunction<T>, field: &'static str| -> Result<Vec<T>, SdeError> {
            x0_spectrum
                .iter()
                .map(|&l| {
                    let v = f.eval(l).map_err(|e| invalid(field, e.to_string()))?;
                    if v > T::zero() && v.is_finite() {
                        Ok(v)
                    } else {
                        Err(invalid(
                            field,
                            format!(
                                "evaluates to {v} at spectral point {l}; must be strictly positive"
                            ),
                        ))
                    }
                })
                .collect()
        };
        let a_spec = eval(&a_fn, "a")?;
        let sigma_spec = match &sigma_fn {
            Some(f) => eval(f, "sigma")?,
            None => vec![T::zero(); x0_spectrum.len()],
        };
        let repeat = |v: &[T]| -> Vec<T> {
            v.iter()
                .flat_map(|&s| std::iter::repeat_n(s, dim_multiplicity))
                .collect()
        };
        Ok(Self {
            kind,
            a_fn,
            sigma_fn,
            b,
            x0: repeat(&x0_spectrum),
            a: repeat(&a_spec),
            sigma: repeat(&sigma_spec),
            x0_spectrum,
            dim_multiplicity,
        })
    }

    pub fn kind(&self) -> EquationKind {
        self.kind
    }

    pub fn with_kind(&self, kind: EquationKind) -> Self {
        Self {
            kind,
            ..self.clone()
        }
    }

    pub fn a_fn(&self) -> SpectralFunction<T> {
        self.a_fn
    }

    /// `None` for the noiseless degenerate spec.
    pub fn sigma_fn(&self) -> Option<SpectralFunction<T>> {
        self.sigma_fn
    }

    pub fn b(&self) -> T {
        self.b
    }

    pub fn x0_spectrum(&self) -> &[T] {
        &self.x0_spectrum
    }

    pub fn dim_multiplicity(&self) -> usize {
        self.dim_multiplicity
    }

    pub fn dim(&self) -> usize {
        self.x0.len()
    }

    pub fn is_noiseless(&self) -> bool {
        self.sigma_fn.is_none()
    }

    pub fn a_diagonal(&self) -> &[T] {
        &self.a
    }

    pub fn sigma_diagonal(&self) -> &[T] {
        &self.sigma
    }

    pub fn x0(&self) -> SelfAdjointOperator<T> {
        make_operator_from_spectrum(&self.x0_spectrum, self.dim_multiplicity).expect("validated")
    }

    pub fn a(&self) -> SelfAdjointOperator<T> {
        SelfAdjointOperator::from_real_diagonal(&self.a).expect("validated")
    }

    pub fn sigma(&self) -> SelfAdjointOperator<T> {
        SelfAdjointOperator::from_real_diagonal(&self.sigma).expect("validated")
    }

    pub fn phi_a(&self) -> T {
        mean(&self.a)
    }

    pub fn phi_sigma(&self) -> T {
        mean(&self.sigma)
    }

    pub fn phi_sigma_sq(&self) -> T {
        mean_by(&self.sigma, |s| s * s)
    }

    /// Diagonal of `a - (phi(sigma) sigma + sigma^2) / 8`, the square-root drift numerator.
    pub fn shifted_drift_coefficient(&self) -> Vec<T> {
        let ps = self.phi_sigma();
        let eighth = T::lit(0.125);
        self.a
            .iter()
            .zip(&self.sigma)
            .map(|(&a, &s)| a - (ps * s + s * s) * eighth)
            .collect()
    }

    /// `1/2 sqrt(phi(sigma^2)/2 + phi(sigma)^2/2)`, the scalar noise coefficient of the V-bar equation.
    pub fn vbar_noise_coefficient(&self) -> T {
        let half = T::lit(0.5);
        let ps = self.phi_sigma();
        half * (self.phi_sigma_sq() * half + ps * ps * half).sqrt()
    }

    /// Start value: `diag(X0)` as a matrix or as a commutative diagonal.
    pub fn initial_value(&self) -> StateValue<T> {
        if self.kind.is_free() {
            StateValue::Operator(self.x0())
        } else {
            StateValue::Diagonal(self.x0.clone())
        }
    }
}

fn mean<T: Real>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |acc, &x| acc + x) / T::from_usize_exact(v.len())
}

fn mean_by<T: Real>(v: &[T], f: impl Fn(T) -> T) -> T {
    v.iter().fold(T::zero(), |acc, &x| acc + f(x)) / T::from_usize_exact(v.len())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    Euler,
    Splitting,
}

impl Scheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Euler => "euler",
            Scheme::Splitting => "splitting",
        }
    }
}

impl FromStr for Scheme {
    type Err = SdeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "euler" => Ok(Scheme::Euler),
            "splitting" => Ok(Scheme::Splitting),
            other => Err(invalid("scheme", format!("unknown scheme {other:?}"))),
        }
    }
}

/// Uniform time grid and integrator choice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeSpec<T> {
    pub scheme: Scheme,
    pub dt: T,
    pub t_end: T,
}

impl<T: Real> SchemeSpec<T> {
    pub fn new(scheme: Scheme, dt: T, t_end: T) -> Result<Self, SdeError> {
        if !(dt > T::zero()) || !dt.is_finite() {
            return Err(invalid("dt", format!("must be positive, got {dt}")));
        }
        if !(t_end > T::zero()) || !t_end.is_finite() {
            return Err(invalid("t_end", format!("must be positive, got {t_end}")));
        }
        if dt > t_end {
            return Err(invalid("dt", format!("{dt} exceeds t_end = {t_end}")));
        }
        Ok(Self { scheme, dt, t_end })
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round().to_f64_lossy() as usize
    }

    pub fn time(&self, k: usize) -> T {
        T::from_usize_exact(k) * self.dt
    }

    pub fn grid(&self) -> Vec<T> {
        (0..=self.steps()).map(|k| self.time(k)).collect()
    }

    /// Grid index of `t`, if `t` lies on the grid up to rounding.
    pub fn index_of(&self, t: T) -> Option<usize> {
        let k = (t / self.dt).round();
        if k < T::zero() {
            return None;
        }
        let k_usize = k.to_f64_lossy() as usize;
        let slack = T::lit(1e-9) * self.dt.max(T::one());
        (k_usize <= self.steps() && (self.time(k_usize) - t).abs() <= slack).then_some(k_usize)
    }
}

/// State or increment: a Hermitian matrix, or a diagonal in the eigenbasis of `X0`.
#[derive(Debug, Clone, PartialEq)]
pub enum StateValue<T: Real> {
    Operator(SelfAdjointOperator<T>),
    Diagonal(Vec<T>),
}

impl<T: Real> StateValue<T> {
    pub fn dim(&self) -> usize {
        match self {
            StateValue::Operator(x) => x.dim(),
            StateValue::Diagonal(d) => d.len(),
        }
    }

    pub fn to_operator(&self) -> SelfAdjointOperator<T> {
        match self {
            StateValue::Operator(x) => x.clone(),
            StateValue::Diagonal(d) => {
                SelfAdjointOperator::from_real_diagonal(d).expect("nonempty")
            }
        }
    }

    pub fn as_diagonal(&self) -> Option<&[T]> {
        match self {
            StateValue::Diagonal(d) => Some(d),
            StateValue::Operator(_) => None,
        }
    }

    pub fn as_operator(&self) -> Option<&SelfAdjointOperator<T>> {
        match self {
            StateValue::Operator(x) => Some(x),
            StateValue::Diagonal(_) => None,
        }
    }

    fn zero_like(&self) -> Self {
        match self {
            StateValue::Operator(x) => StateValue::Operator(SelfAdjointOperator::zeros(x.dim())),
            StateValue::Diagonal(d) => StateValue::Diagonal(vec![T::zero(); d.len()]),
        }
    }

    /// `self + c * other`, evaluated entrywise as `x + (y * c)`.
    fn axpy(&self, c: T, other: &Self) -> Self {
        match (self, other) {
            (StateValue::Operator(x), StateValue::Operator(y)) => {
                let m = x.matrix() + y.matrix().map(|z| z * c);
                StateValue::Operator(SelfAdjointOperator::from_hermitian_part(m))
            }
            (StateValue::Diagonal(x), StateValue::Diagonal(y)) => {
                StateValue::Diagonal(x.iter().zip(y).map(|(&a, &b)| a + b * c).collect())
            }
            _ => unreachable!("state representations are fixed per equation kind"),
        }
    }

    fn add(&self, other: &Self) -> Self {
        match (self, other) {
            (StateValue::Operator(x), StateValue::Operator(y)) => StateValue::Operator(
                SelfAdjointOperator::from_hermitian_part(x.matrix() + y.matrix()),
            ),
            (StateValue::Diagonal(x), StateValue::Diagonal(y)) => {
                StateValue::Diagonal(x.iter().zip(y).map(|(&a, &b)| a + b).collect())
            }
            _ => unreachable!("state representations are fixed per equation kind"),
        }
    }

    /// Ascending spectrum and, for matrices, the full decomposition.
    fn analyze(&self) -> Result<Spectrum<T>, NcError> {
        match self {
            StateValue::Operator(x) => Ok(Spectrum::Matrix(spectral_decompose(x)?)),
            StateValue::Diagonal(d) => Ok(Spectrum::Diagonal(d.clone())),
        }
    }
}

#[derive(Debug, Clone)]
enum Spectrum<T: Real> {
    Matrix(SpectralDecomposition<T>),
    // Diagonal states are their own spectrum (unsorted, aligned with the state).
    Diagonal(Vec<T>),
}

/// Noise increment for one grid step.
#[derive(Debug, Clone, PartialEq)]
pub enum Noise<T: Real> {
    Free(SelfAdjointOperator<T>),
    Scalar(T),
}

impl<T: Real> Noise<T> {
    pub fn zero_for(kind: EquationKind, dim: usize) -> Self {
        if kind.is_free() {
            Noise::Free(SelfAdjointOperator::zeros(dim))
        } else {
            Noise::Scalar(T::zero())
        }
    }

    /// Draws the increment an equation of `kind` consumes at one step.
    pub fn sample(kind: EquationKind, dt: T, dim: usize, seed: &SeedPolicy, step: u64) -> Self {
        let mut stream = seed.stream(step);
        if kind.is_free() {
            Noise::Free(sample_free_increment(dt, dim, &mut stream))
        } else {
            Noise::Scalar(sample_scalar_increment(dt, &mut stream))
        }
    }
}

/// Time, state, its spectrum, and the running count of clamped eigenvalues.
#[derive(Debug, Clone)]
pub struct ProcessState<T: Real> {
    pub t: T,
    pub breach_count: u64,
    value: StateValue<T>,
    spectrum: Spectrum<T>,
}

impl<T: Real> ProcessState<T> {
    pub fn new(t: T, value: StateValue<T>) -> Result<Self, SdeError> {
        let spectrum = value.analyze()?;
        Ok(Self {
            t,
            breach_count: 0,
            value,
            spectrum,
        })
    }

    pub fn initial(spec: &EquationSpec<T>) -> Self {
        Self::new(T::zero(), spec.initial_value()).expect("positive diagonal start")
    }

    pub fn value(&self) -> &StateValue<T> {
        &self.value
    }

    pub fn operator(&self) -> SelfAdjointOperator<T> {
        self.value.to_operator()
    }

    pub fn dim(&self) -> usize {
        self.value.dim()
    }

    /// Ascending eigenvalues of the state.
    pub fn eigenvalues(&self) -> Vec<T> {
        match &self.spectrum {
            Spectrum::Matrix(d) => d.eigenvalues().to_vec(),
            Spectrum::Diagonal(v) => {
                let mut s = v.clone();
                s.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
                s
            }
        }
    }

    pub fn min_eigenvalue(&self) -> T {
        match &self.spectrum {
            Spectrum::Matrix(d) => d.min_eigenvalue(),
            Spectrum::Diagonal(v) => v
                .iter()
                .copied()
                .fold(T::max_value().unwrap(), |a, b| a.min(b)),
        }
    }

    /// `phi(X)`.
    pub fn trace(&self) -> T {
        match &self.value {
            StateValue::Operator(x) => x.trace_phi().value(),
            StateValue::Diagonal(d) => mean(d),
        }
    }

    /// `phi(X^2)`, computed from the spectrum.
    pub fn trace_of_square(&self) -> T {
        let s = self.eigenvalues();
        mean_by(&s, |l| l * l)
    }

    pub fn stats(&self) -> StatRecord {
        let s = self.eigenvalues();
        StatRecord {
            t: self.t.to_f64_lossy(),
            trace: self.trace().to_f64_lossy(),
            min_eig: s[0].to_f64_lossy(),
            max_eig: s[s.len() - 1].to_f64_lossy(),
            norm1: p_norm_of_spectrum(&s, PNorm::One).to_f64_lossy(),
            norm2: p_norm_of_spectrum(&s, PNorm::Two).to_f64_lossy(),
            breaches: self.breach_count,
        }
    }

    /// Replaces the value by its positive part; returns the number of eigenvalues changed.
    fn clamp(mut self) -> (Self, usize) {
        let changed = match (&mut self.value, &mut self.spectrum) {
            (StateValue::Operator(x), Spectrum::Matrix(d)) => {
                let changed = d.clamp_nonnegative();
                if changed > 0 {
                    *x = d.reconstruct();
                }
                changed
            }
            (StateValue::Diagonal(v), Spectrum::Diagonal(s)) => {
                let mut changed = 0;
                for x in v.iter_mut() {
                    if *x < T::zero() {
                        *x = T::zero();
                        changed += 1;
                    }
                }
                *s = v.clone();
                changed
            }
            _ => unreachable!(),
        };
        self.breach_count += changed as u64;
        (self, changed)
    }
}

/// Drift `f(X)` of the equation at the current state.
pub fn drift<T: Real>(
    spec: &EquationSpec<T>,
    state: &ProcessState<T>,
) -> Result<StateValue<T>, SdeError> {
    drift_of(spec, &state.value, &state.spectrum, state.t)
}

fn drift_of<T: Real>(
    spec: &EquationSpec<T>,
    value: &StateValue<T>,
    spectrum: &Spectrum<T>,
    t: T,
) -> Result<StateValue<T>, SdeError> {
    let b = spec.b;
    let half = T::lit(0.5);
    let singular = |l: T| SdeError::SingularState {
        t: t.to_f64_lossy(),
        eigenvalue: l.to_f64_lossy(),
    };
    match (spec.kind, value, spectrum) {
        (
            EquationKind::FreeCirNonclassical
            | EquationKind::FreeCirClassical
            | EquationKind::FreeSdeAnalogue,
            StateValue::Operator(x),
            _,
        ) => {
            // a - bX, entry (i,i) evaluated as a_i - x_ii * b
            let mut m = x.matrix().map(|z| z * b);
            m.neg_mut();
            for (i, &a) in spec.a.iter().enumerate() {
                m[(i, i)] = re(a - x.matrix()[(i, i)].re * b);
            }
            Ok(StateValue::Operator(
                SelfAdjointOperator::from_hermitian_part(m),
            ))
        }
        (EquationKind::SqrtVFree, StateValue::Operator(v), Spectrum::Matrix(dec)) => {
            if v.dim() == 1 {
                let x = v.matrix()[(0, 0)].re;
                if x.abs() < T::eps_inv() {
                    return Err(singular(x));
                }
                let c = spec.shifted_drift_coefficient()[0];
                let d = half * c / x - b * half * x;
                return Ok(StateValue::Operator(
                    SelfAdjointOperator::from_real_diagonal(&[d])?,
                ));
            }
            let lo = dec
                .eigenvalues()
                .iter()
                .copied()
                .fold(T::max_value().unwrap(), |a, l| a.min(l.abs()));
            if lo < T::eps_inv() {
                return Err(singular(lo));
            }
            let coeff = spec.shifted_drift_coefficient();
            let inv_vals: Vec<T> = dec.eigenvalues().iter().map(|&l| T::one() / l).collect();
            let mut k = dec.assemble(&inv_vals).into_matrix();
            for (i, mut row) in k.row_iter_mut().enumerate() {
                row *= re(coeff[i]);
            }
            // (A V^-1 + V^-1 A) / 4 - (b/2) V
            let sym = SelfAdjointOperator::from_sum_with_adjoint(&k).scale(T::lit(0.25));
            let out = sym.matrix() - v.matrix().map(|z| z * (b * half));
            Ok(StateValue::Operator(
                SelfAdjointOperator::from_hermitian_part(out),
            ))
        }
        (EquationKind::SqrtVbarClassical, StateValue::Diagonal(v), _) => {
            let coeff = spec.shifted_drift_coefficient();
            v.iter()
                .zip(&coeff)
                .map(|(&x, &c)| {
                    if x.abs() < T::eps_inv() {
                        Err(singular(x))
                    } else {
                        Ok(half * c / x - b * half * x)
                    }
                })
                .collect::<Result<Vec<_>, _>>()
                .map(StateValue::Diagonal)
        }
        (EquationKind::ScalarSqrt, StateValue::Diagonal(u), _) => {
            let quarter = T::lit(0.25);
            u.iter()
                .zip(spec.a.iter().zip(&spec.sigma))
                .map(|(&x, (&a, &s))| {
                    if x.abs() < T::eps_inv() {
                        Err(singular(x))
                    } else {
                        Ok(half * (a - s * s * quarter) / x - b * half * x)
                    }
                })
                .collect::<Result<Vec<_>, _>>()
                .map(StateValue::Diagonal)
        }
        (EquationKind::ScalarCir, StateValue::Diagonal(x), _) => Ok(StateValue::Diagonal(
            x.iter().zip(&spec.a).map(|(&x, &a)| a - b * x).collect(),
        )),
        _ => unreachable!("state representation does not match equation kind"),
    }
}

/// `sigma * sqrt(x) * dB` with the root argument clipped as in the functional calculus.
fn cir_noise<T: Real>(sigma: T, x: T, db: T) -> Result<T, NcError> {
    Ok(sigma * SpectralFunction::Sqrt.eval(x)? * db)
}

/// Noise term of the equation for a given increment.
pub fn diffusion_apply<T: Real>(
    spec: &EquationSpec<T>,
    state: &ProcessState<T>,
    noise: &Noise<T>,
) -> Result<StateValue<T>, SdeError> {
    diffusion_of(spec, &state.value, &state.spectrum, noise)
}

fn diffusion_of<T: Real>(
    spec: &EquationSpec<T>,
    value: &StateValue<T>,
    spectrum: &Spectrum<T>,
    noise: &Noise<T>,
) -> Result<StateValue<T>, SdeError> {
    let kind = spec.kind;
    match (noise, value, spectrum) {
        (Noise::Free(dw), StateValue::Operator(x), Spectrum::Matrix(dec)) if kind.is_free() => {
            if dw.dim() != x.dim() {
                return Err(NcError::DimensionMismatch {
                    left: x.dim(),
                    right: dw.dim(),
                }
                .into());
            }
            if kind != EquationKind::SqrtVFree && x.dim() == 1 {
                // The one-dimensional algebra is commutative: every CIR sandwich is sigma sqrt(x) dW.
                let v = cir_noise(spec.sigma[0], x.matrix()[(0, 0)].re, dw.matrix()[(0, 0)].re)?;
                return Ok(StateValue::Operator(
                    SelfAdjointOperator::from_real_diagonal(&[v])?,
                ));
            }
            Ok(StateValue::Operator(free_diffusion(spec, dec, dw)?))
        }
        (Noise::Scalar(db), StateValue::Diagonal(x), _) if !kind.is_free() => {
            let db = *db;
            let half = T::lit(0.5);
            let out = match kind {
                EquationKind::ScalarCir => x
                    .iter()
                    .zip(&spec.sigma)
                    .map(|(&x, &s)| cir_noise(s, x, db))
                    .collect::<Result<Vec<_>, _>>()?,
                EquationKind::ScalarSqrt => spec.sigma.iter().map(|&s| s * half * db).collect(),
                EquationKind::SqrtVbarClassical => {
                    vec![spec.vbar_noise_coefficient() * db; x.len()]
                }
                _ => unreachable!(),
            };
            Ok(StateValue::Diagonal(out))
        }
        _ => Err(SdeError::NoiseMismatch),
    }
}

fn free_diffusion<T: Real>(
    spec: &EquationSpec<T>,
    dec: &SpectralDecomposition<T>,
    dw: &SelfAdjointOperator<T>,
) -> Result<SelfAdjointOperator<T>, SdeError> {
    let sigma = &spec.sigma;
    let n = dw.dim();
    match spec.kind {
        EquationKind::FreeCirNonclassical => {
            // M = (sigma/2) sqrt(X) dW, noise = M + M*
            let roots = dec
                .eigenvalues()
                .iter()
                .map(|&l| SpectralFunction::Sqrt.eval(l))
                .collect::<Result<Vec<_>, _>>()?;
            let mut m = dec.assemble_times(&roots, dw.matrix());
            let half = T::lit(0.5);
            for (i, mut row) in m.row_iter_mut().enumerate() {
                row *= re(sigma[i] * half);
            }
            Ok(SelfAdjointOperator::from_sum_with_adjoint(&m))
        }
        EquationKind::FreeCirClassical => {
            // G dW G* with G = X^(1/4) sqrt(sigma)
            let mut g = dec.apply(SpectralFunction::FourthRoot)?.into_matrix();
            for (j, mut col) in g.column_iter_mut().enumerate() {
                col *= re(sigma[j].sqrt());
            }
            Ok(sandwich(&g, dw.matrix()))
        }
        EquationKind::FreeSdeAnalogue => {
            // H dW H* with H = sqrt(sigma) X^(1/4)
            let mut h = dec.apply(SpectralFunction::FourthRoot)?.into_matrix();
            for (i, mut row) in h.row_iter_mut().enumerate() {
                row *= re(sigma[i].sqrt());
            }
            Ok(sandwich(&h, dw.matrix()))
        }
        EquationKind::SqrtVFree => {
            // (sigma/4) dW + dW (sigma/4)
            let quarter = T::lit(0.25);
            let mut m = dw.matrix().clone();
            for i in 0..n {
                let mut row = m.row_mut(i);
                row *= re(sigma[i] * quarter);
            }
            Ok(SelfAdjointOperator::from_sum_with_adjoint(&m))
        }
        _ => unreachable!(),
    }
}

/// `G M G*` for Hermitian `M`.
fn sandwich<T: Real>(g: &DMatrix<C<T>>, m: &DMatrix<C<T>>) -> SelfAdjointOperator<T> {
    SelfAdjointOperator::from_hermitian_part(matmul(&matmul(g, m), &g.adjoint()))
}

/// One explicit Euler step, followed by the positive-part clamp.
pub fn step<T: Real>(
    spec: &EquationSpec<T>,
    state: &ProcessState<T>,
    dt: T,
    noise: &Noise<T>,
) -> Result<ProcessState<T>, SdeError> {
    let d = drift(spec, state)?;
    let g = diffusion_apply(spec, state, noise)?;
    let next = state.value.axpy(dt, &d).add(&g);
    finish(state, next, dt)
}

/// Drift flow over `dt` (four RK4 substeps), then the noise term at the flowed state.
pub fn step_splitting<T: Real>(
    spec: &EquationSpec<T>,
    state: &ProcessState<T>,
    dt: T,
    noise: &Noise<T>,
) -> Result<ProcessState<T>, SdeError> {
    let flowed = drift_flow(spec, state, dt, 4)?;
    let (flowed, _) = flowed.clamp();
    let g = diffusion_apply(spec, &flowed, noise)?;
    let next = flowed.value.add(&g);
    let mut out = finish(&flowed, next, T::zero())?;
    out.t = state.t + dt;
    Ok(out)
}

/// Deterministic flow of the drift over `dt` with `substeps` classical RK4 steps.
pub fn drift_flow<T: Real>(
    spec: &EquationSpec<T>,
    state: &ProcessState<T>,
    dt: T,
    substeps: usize,
) -> Result<ProcessState<T>, SdeError> {
    let h = dt / T::from_usize_exact(substeps);
    let half = T::lit(0.5);
    let sixth = T::one() / T::lit(6.0);
    let mut y = state.value.clone();
    let mut t = state.t;
    let f = |v: &StateValue<T>, t: T| -> Result<StateValue<T>, SdeError> {
        let spectrum = if spec.kind == EquationKind::SqrtVFree {
            v.analyze()?
        } else {
            Spectrum::Diagonal(Vec::new())
        };
        drift_of(spec, v, &spectrum, t)
    };
    for _ in 0..substeps {
        let k1 = f(&y, t)?;
        let k2 = f(&y.axpy(h * half, &k1), t + h * half)?;
        let k3 = f(&y.axpy(h * half, &k2), t + h * half)?;
        let k4 = f(&y.axpy(h, &k3), t + h)?;
        let mut incr = k1.zero_like();
        incr = incr.axpy(T::one(), &k1);
        incr = incr.axpy(T::lit(2.0), &k2);
        incr = incr.axpy(T::lit(2.0), &k3);
        incr = incr.axpy(T::one(), &k4);
        y = y.axpy(h * sixth, &incr);
        t += h;
    }
    let mut out = ProcessState::new(state.t + dt, y)?;
    out.breach_count = state.breach_count;
    Ok(out)
}

fn finish<T: Real>(
    prev: &ProcessState<T>,
    next: StateValue<T>,
    dt: T,
) -> Result<ProcessState<T>, SdeError> {
    let mut out = ProcessState::new(prev.t + dt, next)?;
    out.breach_count = prev.breach_count;
    Ok(out.clamp().0)
}

/// Advances one step with the chosen scheme.
pub fn advance<T: Real>(
    spec: &EquationSpec<T>,
    scheme: Scheme,
    state: &ProcessState<T>,
    dt: T,
    noise: &Noise<T>,
) -> Result<ProcessState<T>, SdeError> {
    match scheme {
        Scheme::Euler => step(spec, state, dt, noise),
        Scheme::Splitting => step_splitting(spec, state, dt, noise),
    }
}

/// Per-grid-point summary of one run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StatRecord {
    pub t: f64,
    pub trace: f64,
    pub min_eig: f64,
    pub max_eig: f64,
    pub norm1: f64,
    pub norm2: f64,
    pub breaches: u64,
}

/// Trajectory summary of one run; `failure` is set when the run aborted early.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryStats {
    pub run: usize,
    pub records: Vec<StatRecord>,
    pub failure: Option<String>,
}

impl TrajectoryStats {
    pub fn completed(&self) -> bool {
        self.failure.is_none()
    }

    pub fn final_breaches(&self) -> u64 {
        self.records.last().map_or(0, |r| r.breaches)
    }
}

/// Integrates one run, calling `observe(k, state)` at every grid index `k` (including 0).
pub fn run_trajectory<T: Real>(
    spec: &EquationSpec<T>,
    scheme: &SchemeSpec<T>,
    seed: SeedPolicy,
    mut observe: impl FnMut(usize, &ProcessState<T>),
) -> Result<ProcessState<T>, SdeError> {
    let mut state = ProcessState::initial(spec);
    observe(0, &state);
    let dim = spec.dim();
    for k in 0..scheme.steps() {
        let noise = if spec.is_noiseless() {
            Noise::zero_for(spec.kind, dim)
        } else {
            Noise::sample(spec.kind, scheme.dt, dim, &seed, k as u64)
        };
        let mut next = advance(spec, scheme.scheme, &state, scheme.dt, &noise)?;
        next.t = scheme.time(k + 1);
        state = next;
        observe(k + 1, &state);
    }
    Ok(state)
}

/// Monte Carlo ensemble; run `r` uses `SeedPolicy::new(base_seed, r)`.
///
/// Runs are distributed over the rayon pool and merged by run index, so the
/// output does not depend on the number of workers.
pub fn simulate<T: Real>(
    spec: &EquationSpec<T>,
    scheme: &SchemeSpec<T>,
    base_seed: u64,
    runs: usize,
) -> Vec<TrajectoryStats> {
    (0..runs)
        .into_par_iter()
        .map(|r| {
            let mut records = Vec::with_capacity(scheme.steps() + 1);
            let result = run_trajectory(
                spec,
                scheme,
                SeedPolicy::new(base_seed, r as u64),
                |_, s| records.push(s.stats()),
            );
            TrajectoryStats {
                run: r,
                records,
                failure: result.err().map(|e| e.to_string()),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::freebm::SeedPolicy;
    use crate::ncspace::SpectralFunction as F;

    const ID: F<f64> = F::Affine {
        alpha: 0.0,
        beta: 1.0,
    };

    fn constant(c: f64) -> F<f64> {
        F::Affine {
            alpha: 0.0,
            beta: c,
        }
    }

    fn op_state(x: SelfAdjointOperator<f64>) -> ProcessState<f64> {
        ProcessState::new(0.0, StateValue::Operator(x)).unwrap()
    }

    #[test]
    fn spec_validation_names_fields() {
        let err = EquationSpec::new(
            EquationKind::FreeCirNonclassical,
            ID,
            ID,
            -1.0,
            vec![1.0],
            2,
        )
        .unwrap_err();
        assert!(matches!(err, SdeError::InvalidField { field: "b", .. }));
        let err = EquationSpec::new(EquationKind::FreeCirNonclassical, ID, ID, 1.0, vec![0.0], 2)
            .unwrap_err();
        assert!(matches!(
            err,
            SdeError::InvalidField {
                field: "x0_spectrum",
                ..
            }
        ));
        let err = EquationSpec::new(
            EquationKind::FreeCirNonclassical,
            constant(0.0),
            ID,
            1.0,
            vec![1.0],
            2,
        )
        .unwrap_err();
        assert!(matches!(err, SdeError::InvalidField { field: "a", .. }));
        let err = EquationSpec::new(
            EquationKind::FreeCirNonclassical,
            ID,
            F::Affine {
                alpha: 1.0,
                beta: -1.5,
            },
            1.0,
            vec![1.0, 2.0],
            1,
        )
        .unwrap_err();
        assert!(matches!(err, SdeError::InvalidField { field: "sigma", .. }));
        assert!(SchemeSpec::new(Scheme::Euler, 2.0, 1.0).is_err());
        assert_eq!(
            SchemeSpec::new(Scheme::Euler, 1e-3, 1.0).unwrap().steps(),
            1000
        );
    }

    #[test]
    fn kind_names_round_trip() {
        for k in EquationKind::ALL {
            assert_eq!(k.as_str().parse::<EquationKind>().unwrap(), k);
        }
        assert!("nope".parse::<EquationKind>().is_err());
    }

    #[test]
    fn cir_fixed_point_has_zero_drift() {
        let spec = EquationSpec::new(EquationKind::FreeCirNonclassical, ID, ID, 1.0, vec![1.0], 3)
            .unwrap();
        let d = drift(&spec, &ProcessState::initial(&spec)).unwrap();
        assert_eq!(d, StateValue::Operator(SelfAdjointOperator::zeros(3)));
    }

    #[test]
    fn scalar_cir_drift_by_substitution() {
        let spec = EquationSpec::new(EquationKind::ScalarCir, ID, ID, 1.0, vec![2.0], 1).unwrap();
        let d = drift(&spec, &ProcessState::initial(&spec)).unwrap();
        assert_eq!(d, StateValue::Diagonal(vec![-1.0]));
    }

    #[test]
    fn sqrt_v_drift_collapses_for_scalar_coefficients() {
        let (alpha0, s, v, b) = (1.3, 0.7, 0.9, 1.7);
        let spec = EquationSpec::new(
            EquationKind::SqrtVFree,
            constant(alpha0),
            constant(s),
            b,
            vec![1.0],
            4,
        )
        .unwrap();
        let state = op_state(SelfAdjointOperator::scaled_identity(4, v));
        let d = drift(&spec, &state).unwrap();
        let scalar = 0.5 * (alpha0 - (s * s + s * s) / 8.0) / v - v / 2.0 * b;
        let x = d.as_operator().unwrap();
        for i in 0..4 {
            assert!((x.entry(i, i).re - scalar).abs() <= 1e-14);
        }
        assert!(x.is_diagonal());
        // and equals the commutative V-bar drift
        let vbar = spec.with_kind(EquationKind::SqrtVbarClassical);
        let db = drift(
            &vbar,
            &ProcessState::new(0.0, StateValue::Diagonal(vec![v; 4])).unwrap(),
        )
        .unwrap();
        for (i, y) in db.as_diagonal().unwrap().iter().enumerate() {
            assert!((x.entry(i, i).re - y).abs() <= 1e-14);
        }
    }

    #[test]
    fn sqrt_v_drift_is_hermitian_and_refuses_singular() {
        let spec = EquationSpec::new(
            EquationKind::SqrtVFree,
            ID,
            F::Affine {
                alpha: 1.0,
                beta: 0.5,
            },
            1.0,
            vec![0.5, 2.0],
            3,
        )
        .unwrap();
        let v = crate::ncspace::test_support::random_spd(6, 3, 0.3);
        let d = drift(&spec, &op_state(v)).unwrap();
        let m = d.as_operator().unwrap();
        for i in 0..6 {
            for j in 0..6 {
                assert_eq!(m.entry(i, j), m.entry(j, i).conj());
            }
        }
        let singular = op_state(
            SelfAdjointOperator::from_real_diagonal(&[1.0, 1.0, 1e-12, 1.0, 1.0, 1.0]).unwrap(),
        );
        assert!(matches!(
            drift(&spec, &singular),
            Err(SdeError::SingularState { .. })
        ));
    }

    #[test]
    fn dimension_one_noise_matches_scalar_formula() {
        let spec = EquationSpec::new(EquationKind::FreeCirNonclassical, ID, ID, 1.0, vec![4.0], 1)
            .unwrap();
        let state = ProcessState::initial(&spec);
        let noise = Noise::Free(SelfAdjointOperator::from_real_diagonal(&[0.1]).unwrap());
        let g = diffusion_apply(&spec, &state, &noise).unwrap();
        assert!((g.as_operator().unwrap().entry(0, 0).re - 0.2).abs() < 1e-15);
    }

    #[test]
    fn general_path_at_dimension_one_agrees_with_collapse() {
        // the matrix sandwich code evaluated on 1x1 inputs, bypassing the commutative shortcut
        for kind in [
            EquationKind::FreeCirNonclassical,
            EquationKind::FreeCirClassical,
            EquationKind::FreeSdeAnalogue,
        ] {
            let spec = EquationSpec::new(kind, ID, constant(0.8), 1.0, vec![2.5], 1).unwrap();
            let state = ProcessState::initial(&spec);
            let dw = SelfAdjointOperator::from_real_diagonal(&[-0.37]).unwrap();
            let Spectrum::Matrix(dec) = &state.spectrum else {
                unreachable!()
            };
            let general = free_diffusion(&spec, dec, &dw).unwrap().entry(0, 0).re;
            let collapsed = 0.8 * 2.5f64.sqrt() * -0.37;
            assert!(
                (general - collapsed).abs() <= 4.0 * f64::EPSILON * collapsed.abs(),
                "{kind}"
            );
        }
    }

    #[test]
    fn zero_noise_gives_zero_increment() {
        for kind in EquationKind::ALL {
            let spec = EquationSpec::new(kind, ID, ID, 1.0, vec![0.5, 1.5], 2).unwrap();
            let state = ProcessState::initial(&spec);
            let g = diffusion_apply(&spec, &state, &Noise::zero_for(kind, 4)).unwrap();
            assert_eq!(g.to_operator(), SelfAdjointOperator::zeros(4), "{kind}");
        }
    }

    #[test]
    fn classical_and_nonclassical_agree_when_everything_commutes() {
        let x = SelfAdjointOperator::from_real_diagonal(&[0.5, 1.0, 2.0, 3.0]).unwrap();
        let dw = SelfAdjointOperator::from_real_diagonal(&[0.1, -0.2, 0.05, 0.3]).unwrap();
        let sig = F::Affine {
            alpha: 0.5,
            beta: 0.25,
        };
        let nc = EquationSpec::new(
            EquationKind::FreeCirNonclassical,
            ID,
            sig,
            1.0,
            vec![0.5, 1.0, 2.0, 3.0],
            1,
        )
        .unwrap();
        let cl = nc.with_kind(EquationKind::FreeCirClassical);
        let an = nc.with_kind(EquationKind::FreeSdeAnalogue);
        let state = op_state(x.clone());
        let noise = Noise::Free(dw.clone());
        let a = diffusion_apply(&nc, &state, &noise).unwrap().to_operator();
        let b = diffusion_apply(&cl, &state, &noise).unwrap().to_operator();
        let c = diffusion_apply(&an, &state, &noise).unwrap().to_operator();
        // oracle: sigma_i sqrt(x_i) dw_i with diagonal noise
        let sigma = nc.sigma_diagonal();
        for i in 0..4 {
            let expected = sigma[i] * x.entry(i, i).re.sqrt() * dw.entry(i, i).re;
            for got in [&a, &b, &c] {
                assert!((got.entry(i, i).re - expected).abs() <= 1e-15);
            }
        }
        assert!(a.max_abs_entry_diff(&b) <= 1e-15 && a.max_abs_entry_diff(&c) <= 1e-15);
    }

    #[test]
    fn deterministic_euler_step() {
        let spec =
            EquationSpec::without_noise(EquationKind::FreeCirNonclassical, ID, 1.0, vec![2.0], 3)
                .unwrap();
        let state = ProcessState::initial(&spec);
        let next = step(&spec, &state, 0.1, &Noise::zero_for(spec.kind(), 3)).unwrap();
        assert_eq!(
            next.operator(),
            SelfAdjointOperator::scaled_identity(3, 2.0 + (1.0 - 2.0) * 0.1)
        );
        assert_eq!(next.t, 0.1);
        assert_eq!(next.breach_count, 0);
    }

    #[test]
    fn dimension_one_step_equals_scalar_step() {
        let free = EquationSpec::new(
            EquationKind::FreeCirNonclassical,
            constant(0.3),
            constant(1.4),
            2.0,
            vec![0.6],
            1,
        )
        .unwrap();
        let scalar = free.with_kind(EquationKind::ScalarCir);
        let seed = SeedPolicy::new(11, 0);
        let (mut xf, mut xs) = (ProcessState::initial(&free), ProcessState::initial(&scalar));
        for k in 0..200 {
            let nf = Noise::sample(free.kind(), 0.01, 1, &seed, k);
            let ns = Noise::sample(scalar.kind(), 0.01, 1, &seed, k);
            xf = step(&free, &xf, 0.01, &nf).unwrap();
            xs = step(&scalar, &xs, 0.01, &ns).unwrap();
            assert_eq!(
                xf.operator().entry(0, 0).re.to_bits(),
                xs.value().as_diagonal().unwrap()[0].to_bits()
            );
            assert_eq!(xf.breach_count, xs.breach_count);
        }
    }

    #[test]
    fn euler_clamps_and_counts() {
        let spec =
            EquationSpec::new(EquationKind::ScalarCir, ID, ID, 1.0, vec![0.01, 1.0], 1).unwrap();
        let state = ProcessState::initial(&spec);
        // large negative shock drives the small component below zero
        let next = step(&spec, &state, 0.01, &Noise::Scalar(-1.0)).unwrap();
        assert_eq!(next.breach_count, 1);
        assert_eq!(next.value().as_diagonal().unwrap()[0], 0.0);
    }

    #[test]
    fn seeded_steps_are_bit_identical() {
        let spec = EquationSpec::new(
            EquationKind::FreeCirNonclassical,
            ID,
            ID,
            1.0,
            vec![1.0],
            16,
        )
        .unwrap();
        let seed = SeedPolicy::new(3, 1);
        let run = || {
            let noise = Noise::sample(spec.kind(), 1e-3, 16, &seed, 0);
            step(&spec, &ProcessState::initial(&spec), 1e-3, &noise)
                .unwrap()
                .operator()
        };
        let (a, b) = (run(), run());
        assert!(a
            .matrix()
            .iter()
            .zip(b.matrix().iter())
            .all(|(x, y)| x.re.to_bits() == y.re.to_bits() && x.im.to_bits() == y.im.to_bits()));
    }

    #[test]
    fn splitting_without_noise_is_the_flow() {
        let spec = EquationSpec::new(EquationKind::ScalarCir, ID, ID, 1.0, vec![1.0], 1).unwrap();
        let s = step_splitting(
            &spec,
            &ProcessState::initial(&spec),
            0.1,
            &Noise::Scalar(0.0),
        )
        .unwrap();
        assert_eq!(s.value().as_diagonal().unwrap(), &[1.0]);
    }

    #[test]
    fn splitting_and_euler_agree_to_second_order() {
        let spec = EquationSpec::new(EquationKind::ScalarSqrt, ID, ID, 1.0, vec![1.0], 1).unwrap();
        let dt = 1e-3;
        let noise = Noise::Scalar(0.02);
        let init = ProcessState::initial(&spec);
        let split = step_splitting(&spec, &init, dt, &noise)
            .unwrap()
            .value()
            .as_diagonal()
            .unwrap()[0];
        let euler = step(&spec, &init, dt, &noise)
            .unwrap()
            .value()
            .as_diagonal()
            .unwrap()[0];
        assert!((split - euler).abs() <= 1e-6, "{}", (split - euler).abs());
        // reference: ten Euler substeps of the drift, then the same additive noise
        let mut r = init.clone();
        for _ in 0..10 {
            r = step(&spec, &r, dt / 10.0, &Noise::Scalar(0.0)).unwrap();
        }
        let reference = r.value().as_diagonal().unwrap()[0] + 0.5 * 0.02;
        assert!((split - reference).abs() <= 1e-6);
        assert!((split - reference).abs() < (euler - reference).abs());
    }

    #[test]
    fn vbar_flow_stays_commutative() {
        let spec = EquationSpec::new(
            EquationKind::SqrtVbarClassical,
            ID,
            ID,
            1.0,
            vec![0.5, 1.5],
            2,
        )
        .unwrap();
        let s = step_splitting(
            &spec,
            &ProcessState::initial(&spec),
            0.1,
            &Noise::Scalar(0.03),
        )
        .unwrap();
        assert!(s.operator().is_diagonal());
        let v = s.value().as_diagonal().unwrap();
        assert_eq!(v[0], v[1]);
        assert_eq!(v[2], v[3]);
    }

    #[test]
    fn noiseless_simulation_tracks_trace_ode() {
        let spec = EquationSpec::without_noise(
            EquationKind::FreeCirNonclassical,
            ID,
            1.0,
            vec![1.5, 2.5],
            2,
        )
        .unwrap();
        let scheme = SchemeSpec::new(Scheme::Splitting, 1e-3, 1.0).unwrap();
        let out = simulate(&spec, &scheme, 0, 1);
        // oracle: RK4 on y' = phi(a) - b y from y0 = phi(X0) = 2
        let mut y = 2.0f64;
        let h = 1e-3;
        let f = |y: f64| 1.0 - y;
        for (k, rec) in out[0].records.iter().enumerate() {
            assert!((rec.trace - y).abs() <= 1e-4, "k={k}");
            let k1 = f(y);
            let k2 = f(y + h / 2.0 * k1);
            let k3 = f(y + h / 2.0 * k2);
            let k4 = f(y + h * k3);
            y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
    }

    #[test]
    fn ensemble_is_order_independent() {
        let spec = EquationSpec::new(EquationKind::FreeCirNonclassical, ID, ID, 1.0, vec![1.0], 8)
            .unwrap();
        let scheme = SchemeSpec::new(Scheme::Euler, 0.01, 0.2).unwrap();
        let serial = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| simulate(&spec, &scheme, 5, 8));
        let parallel = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap()
            .install(|| simulate(&spec, &scheme, 5, 8));
        assert_eq!(serial, parallel);
        // each run matches its standalone execution
        let mut alone = Vec::new();
        run_trajectory(&spec, &scheme, SeedPolicy::new(5, 6), |_, s| {
            alone.push(s.stats())
        })
        .unwrap();
        assert_eq!(alone, serial[6].records);
    }

    #[test]
    fn failed_run_is_recorded_not_propagated() {
        // huge sigma and tiny V0 push the square-root process through zero
        let spec = EquationSpec::new(
            EquationKind::SqrtVbarClassical,
            constant(0.01),
            constant(50.0),
            1.0,
            vec![1e-3],
            1,
        )
        .unwrap();
        let scheme = SchemeSpec::new(Scheme::Euler, 0.01, 1.0).unwrap();
        let out = simulate(&spec, &scheme, 1, 4);
        assert_eq!(out.len(), 4);
        assert!(out.iter().any(|t| t.failure.is_some()));
        for t in &out {
            if t.failure.is_some() {
                assert!(t.records.len() < scheme.steps() + 1);
            }
        }
    }

    #[test]
    fn hermitian_along_free_trajectories() {
        for kind in [
            EquationKind::FreeCirNonclassical,
            EquationKind::FreeCirClassical,
            EquationKind::FreeSdeAnalogue,
            EquationKind::SqrtVFree,
        ] {
            let spec = EquationSpec::new(
                kind,
                ID,
                F::Affine {
                    alpha: 0.5,
                    beta: 0.5,
                },
                1.0,
                vec![0.8, 1.2],
                4,
            )
            .unwrap();
            let scheme = SchemeSpec::new(Scheme::Euler, 0.01, 0.1).unwrap();
            run_trajectory(&spec, &scheme, SeedPolicy::new(1, 0), |_, s| {
                let x = s.operator();
                for i in 0..8 {
                    for j in 0..8 {
                        assert_eq!(x.entry(i, j), x.entry(j, i).conj());
                    }
                }
            })
            .unwrap();
        }
    }
}
