//! Brownian drivers: GUE increments approximating free Brownian motion, and
//! classical scalar increments.
//!
//! Randomness is counter-based: the stream for grid step `k` of run `r` is a
//! ChaCha8 keystream keyed by `(base_seed, r, k, domain)`, and entries are
//! drawn from it in a fixed order. Any schedule of `(run, step)` pairs yields
//! the same numbers.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::ncspace::SelfAdjointOperator;
use crate::scalar::{Real, C};

/// Deterministic seeding rule for one Monte Carlo run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SeedPolicy {
    pub base_seed: u64,
    pub run_index: u64,
    /// Separates independent families of streams sharing a base seed.
    pub domain: u64,
}

impl SeedPolicy {
    pub fn new(base_seed: u64, run_index: u64) -> Self {
        Self {
            base_seed,
            run_index,
            domain: 0,
        }
    }

    pub fn with_domain(self, domain: u64) -> Self {
        Self { domain, ..self }
    }

    pub fn for_run(self, run_index: u64) -> Self {
        Self { run_index, ..self }
    }

    /// Gaussian stream for one grid step.
    pub fn stream(&self, step_index: u64) -> NoiseStream {
        let mut key = [0u8; 32];
        key[0..8].copy_from_slice(&self.base_seed.to_le_bytes());
        key[8..16].copy_from_slice(&self.run_index.to_le_bytes());
        key[16..24].copy_from_slice(&step_index.to_le_bytes());
        key[24..32].copy_from_slice(&self.domain.to_le_bytes());
        NoiseStream {
            rng: ChaCha8Rng::from_seed(key),
            drawn: 0,
        }
    }
}

/// Standard normal draws from one counter-keyed stream.
#[derive(Debug, Clone)]
pub struct NoiseStream {
    rng: ChaCha8Rng,
    drawn: u64,
}

impl NoiseStream {
    pub fn standard_normal(&mut self) -> f64 {
        self.drawn += 1;
        self.rng.sample(StandardNormal)
    }

    /// Index of the next entry to be drawn.
    pub fn entry_index(&self) -> u64 {
        self.drawn
    }
}

/// Hermitian increment with `E phi(dW^2) = dt`.
///
/// Diagonal entries are `N(0, dt/N)`; above the diagonal, real and imaginary
/// parts are independent `N(0, dt/(2N))`. Entries are drawn diagonal first,
/// then the strict upper triangle row by row, real part before imaginary part.
pub fn sample_free_increment<T: Real>(
    dt: T,
    dim: usize,
    stream: &mut NoiseStream,
) -> SelfAdjointOperator<T> {
    assert!(dt > T::zero(), "dt must be positive");
    assert!(dim >= 1, "dimension must be at least 1");
    let n = T::from_usize_exact(dim);
    let diag_scale = (dt / n).sqrt();
    let off_scale = (dt / (n + n)).sqrt();
    let mut m = DMatrix::<C<T>>::zeros(dim, dim);
    for i in 0..dim {
        m[(i, i)] = C::new(T::lit(stream.standard_normal()) * diag_scale, T::zero());
    }
    for i in 0..dim {
        for j in (i + 1)..dim {
            let a = T::lit(stream.standard_normal()) * off_scale;
            let b = T::lit(stream.standard_normal()) * off_scale;
            m[(i, j)] = C::new(a, b);
            m[(j, i)] = C::new(a, -b);
        }
    }
    SelfAdjointOperator::from_hermitian_part(m)
}

/// `N(0, dt)` draw; uses the same first entry as a one-dimensional free increment.
pub fn sample_scalar_increment<T: Real>(dt: T, stream: &mut NoiseStream) -> T {
    assert!(dt > T::zero(), "dt must be positive");
    T::lit(stream.standard_normal()) * (dt / T::one()).sqrt()
}

/// Grid starting at zero with strictly increasing times.
pub fn validate_grid<T: Real>(grid: &[T]) -> bool {
    !grid.is_empty() && grid[0] == T::zero() && grid.windows(2).all(|w| w[0] < w[1])
}

/// Free Brownian motion sampled on a grid, stored as per-step increments.
#[derive(Debug, Clone)]
pub struct FreeBrownianPath<T: Real> {
    grid: Vec<T>,
    increments: Vec<SelfAdjointOperator<T>>,
    dim: usize,
}

impl<T: Real> FreeBrownianPath<T> {
    pub fn sample(grid: Vec<T>, dim: usize, seed: SeedPolicy) -> Self {
        assert!(
            validate_grid(&grid),
            "grid must start at 0 and increase strictly"
        );
        let increments = grid
            .windows(2)
            .enumerate()
            .map(|(k, w)| sample_free_increment(w[1] - w[0], dim, &mut seed.stream(k as u64)))
            .collect();
        Self {
            grid,
            increments,
            dim,
        }
    }

    pub fn grid(&self) -> &[T] {
        &self.grid
    }

    pub fn increments(&self) -> &[SelfAdjointOperator<T>] {
        &self.increments
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `W(grid[k])`; `W(grid[0])` is the zero operator.
    pub fn value_at(&self, k: usize) -> SelfAdjointOperator<T> {
        let mut acc = DMatrix::<C<T>>::zeros(self.dim, self.dim);
        for inc in &self.increments[..k] {
            acc += inc.matrix();
        }
        SelfAdjointOperator::from_hermitian_part(acc)
    }
}

/// Classical Brownian motion on a grid.
#[derive(Debug, Clone)]
pub struct ScalarBrownianPath<T: Real> {
    grid: Vec<T>,
    increments: Vec<T>,
}

impl<T: Real> ScalarBrownianPath<T> {
    pub fn sample(grid: Vec<T>, seed: SeedPolicy) -> Self {
        assert!(
            validate_grid(&grid),
            "grid must start at 0 and increase strictly"
        );
        let increments = grid
            .windows(2)
            .enumerate()
            .map(|(k, w)| sample_scalar_increment(w[1] - w[0], &mut seed.stream(k as u64)))
            .collect();
        Self { grid, increments }
    }

    pub fn grid(&self) -> &[T] {
        &self.grid
    }

    pub fn increments(&self) -> &[T] {
        &self.increments
    }

    pub fn value_at(&self, k: usize) -> T {
        self.increments[..k]
            .iter()
            .fold(T::zero(), |acc, &d| acc + d)
    }
}
