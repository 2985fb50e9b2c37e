//! Matrix laboratory for free Cox–Ingersoll–Ross processes.
//!
//! A von Neumann algebra with faithful tracial state is approximated by
//! `N x N` Hermitian matrices with the normalized trace. The crate provides
//! the operator layer ([`ncspace`]), GUE drivers ([`freebm`]), the equation
//! catalog with Euler and splitting integrators ([`sde`]), and statistical
//! checks of the resulting processes ([`diagnostics`]).
//!
//! Numeric code is generic over [`Real`] (`f32`, `f64`); the aliases below
//! fix the common double-precision instantiation.

pub mod diagnostics;
pub mod error;
pub mod freebm;
#[cfg(feature = "lapack")]
mod lapack;
pub mod ncspace;
pub mod scalar;
pub mod sde;

pub use error::NcError;
pub use freebm::{
    sample_free_increment, sample_scalar_increment, FreeBrownianPath, NoiseStream,
    ScalarBrownianPath, SeedPolicy,
};
pub use ncspace::{
    apply_spectral_function, eigenvalues, make_operator_from_spectrum, p_norm, spectral_decompose,
    trace_phi, trace_phi_product, PNorm, SelfAdjointOperator, SpectralDecomposition,
    SpectralFunction, TraceValue,
};
pub use scalar::Real;
pub use sde::{
    diffusion_apply, drift, run_trajectory, simulate, step, step_splitting, EquationKind,
    EquationSpec, Noise, ProcessState, Scheme, SchemeSpec, SdeError, StatRecord, StateValue,
    TrajectoryStats,
};

/// Double-precision Hermitian operator.
pub type Operator = SelfAdjointOperator<f64>;
/// Single-precision Hermitian operator.
pub type Operator32 = SelfAdjointOperator<f32>;
pub type Decomposition = SpectralDecomposition<f64>;
pub type Spec = EquationSpec<f64>;
pub type Spec32 = EquationSpec<f32>;
pub type Grid = SchemeSpec<f64>;
pub type State = ProcessState<f64>;
pub type Function = SpectralFunction<f64>;
