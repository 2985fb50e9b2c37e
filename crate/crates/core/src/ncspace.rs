//! Finite-dimensional tracial probability space.
//!
//! Elements are dense `N x N` Hermitian matrices; the state is the normalized
//! trace `phi(X) = tr(X) / N`, so `phi(id) = 1`. Fractional powers, inverses
//! and positive parts all go through the spectral decomposition.

use std::cmp::Ordering;

use nalgebra::{ComplexField, DMatrix};

use crate::error::NcError;
use crate::scalar::{matmul, re, Real, C};

/// Value of the normalized trace of a self-adjoint operator.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct TraceValue<T>(pub T);

impl<T: Copy> TraceValue<T> {
    pub fn value(self) -> T {
        self.0
    }
}

/// Hermitian `N x N` complex matrix.
///
/// Hermiticity is exact: inputs within `T::tol_herm()` are replaced by their
/// Hermitian part, and every internal constructor symmetrizes.
#[derive(Debug, Clone, PartialEq)]
pub struct SelfAdjointOperator<T: Real> {
    matrix: DMatrix<C<T>>,
}

impl<T: Real> SelfAdjointOperator<T> {
    /// Validates and wraps a matrix.
    pub fn new(matrix: DMatrix<C<T>>) -> Result<Self, NcError> {
        let (rows, cols) = matrix.shape();
        if rows != cols {
            return Err(NcError::NotSquare { rows, cols });
        }
        if rows == 0 {
            return Err(NcError::EmptyOperator);
        }
        check_hermitian(&matrix)?;
        Ok(Self::from_hermitian_part(matrix))
    }

    pub fn from_real_diagonal(diagonal: &[T]) -> Result<Self, NcError> {
        if diagonal.is_empty() {
            return Err(NcError::EmptyOperator);
        }
        let n = diagonal.len();
        let mut m = DMatrix::zeros(n, n);
        for (i, &d) in diagonal.iter().enumerate() {
            if !d.is_finite() {
                return Err(NcError::NonFinite { row: i, col: i });
            }
            m[(i, i)] = re(d);
        }
        Ok(Self { matrix: m })
    }

    pub fn identity(n: usize) -> Self {
        assert!(n >= 1, "operator dimension must be at least 1");
        Self {
            matrix: DMatrix::identity(n, n),
        }
    }

    pub fn zeros(n: usize) -> Self {
        assert!(n >= 1, "operator dimension must be at least 1");
        Self {
            matrix: DMatrix::zeros(n, n),
        }
    }

    pub fn scaled_identity(n: usize, c: T) -> Self {
        Self::identity(n).scale(c)
    }

    /// `(M + M*) / 2`. For an already Hermitian `M` this is exact entrywise.
    pub(crate) fn from_hermitian_part(mut m: DMatrix<C<T>>) -> Self {
        let n = m.nrows();
        let half = T::lit(0.5);
        for i in 0..n {
            m[(i, i)] = re(m[(i, i)].re);
            for j in (i + 1)..n {
                let upper = m[(i, j)];
                let lower = m[(j, i)].conj();
                let v = if upper == lower {
                    upper
                } else {
                    (upper + lower) * half
                };
                m[(i, j)] = v;
                m[(j, i)] = v.conj();
            }
        }
        Self { matrix: m }
    }

    /// `M + M*` for an arbitrary square `M`.
    pub(crate) fn from_sum_with_adjoint(m: &DMatrix<C<T>>) -> Self {
        let n = m.nrows();
        let mut out = DMatrix::zeros(n, n);
        for i in 0..n {
            out[(i, i)] = re(m[(i, i)].re + m[(i, i)].re);
            for j in (i + 1)..n {
                let v = m[(i, j)] + m[(j, i)].conj();
                out[(i, j)] = v;
                out[(j, i)] = v.conj();
            }
        }
        Self { matrix: out }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C<T>> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<C<T>> {
        self.matrix
    }

    pub fn entry(&self, i: usize, j: usize) -> C<T> {
        self.matrix[(i, j)]
    }

    /// True when every off-diagonal entry is exactly zero.
    pub fn is_diagonal(&self) -> bool {
        let n = self.dim();
        (0..n)
            .all(|j| (0..n).all(|i| i == j || self.matrix[(i, j)] == C::new(T::zero(), T::zero())))
    }

    pub fn diagonal_real(&self) -> Vec<T> {
        (0..self.dim()).map(|i| self.matrix[(i, i)].re).collect()
    }

    pub fn scale(&self, c: T) -> Self {
        Self {
            matrix: self.matrix.map(|z| z * c),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self, NcError> {
        self.same_dim(other)?;
        Ok(Self {
            matrix: &self.matrix + &other.matrix,
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self, NcError> {
        self.same_dim(other)?;
        Ok(Self {
            matrix: &self.matrix - &other.matrix,
        })
    }

    /// Matrix product; not self-adjoint unless the factors commute.
    pub fn mul_matrix(&self, other: &Self) -> Result<DMatrix<C<T>>, NcError> {
        self.same_dim(other)?;
        Ok(matmul(&self.matrix, &other.matrix))
    }

    /// `X^2`, which is always self-adjoint.
    pub fn square(&self) -> Self {
        Self::from_hermitian_part(matmul(&self.matrix, &self.matrix))
    }

    /// `(XY + YX) / 2`.
    pub fn jordan_product(&self, other: &Self) -> Result<Self, NcError> {
        let xy = self.mul_matrix(other)?;
        let half = T::lit(0.5);
        Ok(Self::from_sum_with_adjoint(&xy).scale(half))
    }

    pub fn trace_phi(&self) -> TraceValue<T> {
        trace_phi(self)
    }

    pub fn max_abs_entry_diff(&self, other: &Self) -> T {
        max_abs_diff(&self.matrix, &other.matrix)
    }

    fn same_dim(&self, other: &Self) -> Result<(), NcError> {
        if self.dim() != other.dim() {
            return Err(NcError::DimensionMismatch {
                left: self.dim(),
                right: other.dim(),
            });
        }
        Ok(())
    }
}

fn check_hermitian<T: Real>(m: &DMatrix<C<T>>) -> Result<(), NcError> {
    let n = m.nrows();
    let tol = T::tol_herm();
    for j in 0..n {
        for i in 0..n {
            let z = m[(i, j)];
            if !(z.re.is_finite() && z.im.is_finite()) {
                return Err(NcError::NonFinite { row: i, col: j });
            }
        }
    }
    for i in 0..n {
        for j in i..n {
            let dev = (m[(i, j)] - m[(j, i)].conj()).modulus();
            if dev > tol {
                return Err(NcError::NonHermitianInput {
                    row: i,
                    col: j,
                    deviation: dev.to_f64_lossy(),
                });
            }
        }
    }
    Ok(())
}

pub(crate) fn max_abs_diff<T: Real>(a: &DMatrix<C<T>>, b: &DMatrix<C<T>>) -> T {
    a.iter()
        .zip(b.iter())
        .fold(T::zero(), |acc, (x, y)| acc.max((*x - *y).modulus()))
}

/// Eigenvalues (ascending) and a unitary matrix of eigenvectors.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition<T: Real> {
    eigenvalues: Vec<T>,
    eigenvectors: DMatrix<C<T>>,
    // Set when the source was diagonal: eigenvector k is the unit vector e_{perm[k]}.
    permutation: Option<Vec<usize>>,
}

impl<T: Real> SpectralDecomposition<T> {
    pub fn eigenvalues(&self) -> &[T] {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &DMatrix<C<T>> {
        &self.eigenvectors
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn min_eigenvalue(&self) -> T {
        self.eigenvalues[0]
    }

    pub fn max_eigenvalue(&self) -> T {
        self.eigenvalues[self.eigenvalues.len() - 1]
    }

    /// `Q diag(f(lambda)) Q*` for an arbitrary real map.
    pub fn map_spectrum(&self, f: impl Fn(T) -> T) -> SelfAdjointOperator<T> {
        let values: Vec<T> = self.eigenvalues.iter().map(|&l| f(l)).collect();
        self.assemble(&values)
    }

    /// `Q diag(f(lambda)) Q*` for a named function, honoring clip and inversion thresholds.
    pub fn apply(&self, f: SpectralFunction<T>) -> Result<SelfAdjointOperator<T>, NcError> {
        let values = self
            .eigenvalues
            .iter()
            .map(|&l| f.eval(l))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(self.assemble(&values))
    }

    pub fn reconstruct(&self) -> SelfAdjointOperator<T> {
        self.assemble(&self.eigenvalues)
    }

    /// Replaces negative eigenvalues by zero. Returns the number of eigenvalues changed.
    pub fn clamp_nonnegative(&mut self) -> usize {
        let mut changed = 0;
        for l in &mut self.eigenvalues {
            if *l < T::zero() {
                *l = T::zero();
                changed += 1;
            }
        }
        changed
    }

    /// `Q diag(values) Q*`.
    pub fn assemble(&self, values: &[T]) -> SelfAdjointOperator<T> {
        assert_eq!(values.len(), self.dim());
        if let Some(perm) = &self.permutation {
            let mut diag = vec![T::zero(); values.len()];
            for (k, &p) in perm.iter().enumerate() {
                diag[p] = values[k];
            }
            return SelfAdjointOperator::from_real_diagonal(&diag).expect("nonempty");
        }
        let mut scaled = self.eigenvectors.clone();
        for (k, mut col) in scaled.column_iter_mut().enumerate() {
            col *= re(values[k]);
        }
        SelfAdjointOperator::from_hermitian_part(matmul(&scaled, &self.eigenvectors.adjoint()))
    }

    /// `Q diag(values) Q* M` without forming the left factor.
    pub(crate) fn assemble_times(&self, values: &[T], rhs: &DMatrix<C<T>>) -> DMatrix<C<T>> {
        if let Some(perm) = &self.permutation {
            let mut out = rhs.clone();
            for (k, &p) in perm.iter().enumerate() {
                let mut row = out.row_mut(p);
                row *= re(values[k]);
            }
            return out;
        }
        let mut inner = matmul(&self.eigenvectors.adjoint(), rhs);
        for (k, mut row) in inner.row_iter_mut().enumerate() {
            row *= re(values[k]);
        }
        matmul(&self.eigenvectors, &inner)
    }
}

/// Spectral functions available to the functional calculus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpectralFunction<T> {
    Sqrt,
    FourthRoot,
    Inverse,
    PositivePart,
    /// `alpha * lambda + beta`.
    Affine {
        alpha: T,
        beta: T,
    },
    Power(i32),
}

impl<T: Real> SpectralFunction<T> {
    pub fn eval(&self, lambda: T) -> Result<T, NcError> {
        match *self {
            SpectralFunction::Sqrt => Ok(clip_root_arg(lambda)?.sqrt()),
            SpectralFunction::FourthRoot => Ok(clip_root_arg(lambda)?.sqrt().sqrt()),
            SpectralFunction::Inverse => {
                check_invertible(lambda)?;
                Ok(T::one() / lambda)
            }
            SpectralFunction::PositivePart => Ok(lambda.max(T::zero())),
            SpectralFunction::Affine { alpha, beta } => Ok(alpha * lambda + beta),
            SpectralFunction::Power(k) => {
                if k < 0 {
                    check_invertible(lambda)?;
                }
                Ok(lambda.powi(k))
            }
        }
    }
}

fn clip_root_arg<T: Real>(lambda: T) -> Result<T, NcError> {
    if lambda >= T::zero() {
        Ok(lambda)
    } else if lambda >= -T::tol_clip() {
        Ok(T::zero())
    } else {
        Err(NcError::NegativeSpectrum {
            eigenvalue: lambda.to_f64_lossy(),
        })
    }
}

fn check_invertible<T: Real>(lambda: T) -> Result<(), NcError> {
    if lambda.abs() < T::eps_inv() {
        Err(NcError::SingularOperator {
            eigenvalue: lambda.to_f64_lossy(),
        })
    } else {
        Ok(())
    }
}

/// Full eigendecomposition with eigenvalues sorted ascending.
pub fn spectral_decompose<T: Real>(
    x: &SelfAdjointOperator<T>,
) -> Result<SpectralDecomposition<T>, NcError> {
    check_hermitian(x.matrix())?;
    let n = x.dim();
    if x.is_diagonal() {
        let diag = x.diagonal_real();
        let mut perm: Vec<usize> = (0..n).collect();
        perm.sort_by(|&i, &j| diag[i].partial_cmp(&diag[j]).unwrap_or(Ordering::Equal));
        let eigenvalues = perm.iter().map(|&p| diag[p]).collect();
        let mut q = DMatrix::zeros(n, n);
        for (k, &p) in perm.iter().enumerate() {
            q[(p, k)] = re(T::one());
        }
        return Ok(SpectralDecomposition {
            eigenvalues,
            eigenvectors: q,
            permutation: Some(perm),
        });
    }
    let (eigenvalues, eigenvectors) = T::hermitian_eigen(x.matrix().clone());
    Ok(SpectralDecomposition {
        eigenvalues,
        eigenvectors,
        permutation: None,
    })
}

/// Ascending eigenvalues without eigenvectors.
pub fn eigenvalues<T: Real>(x: &SelfAdjointOperator<T>) -> Vec<T> {
    let mut values: Vec<T> = if x.is_diagonal() {
        x.diagonal_real()
    } else {
        x.matrix()
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .collect()
    };
    values.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    values
}

/// `f(X)` through the spectral theorem.
pub fn apply_spectral_function<T: Real>(
    x: &SelfAdjointOperator<T>,
    f: SpectralFunction<T>,
) -> Result<SelfAdjointOperator<T>, NcError> {
    spectral_decompose(x)?.apply(f)
}

/// `phi(X) = (1/N) sum_i Re x_ii`.
pub fn trace_phi<T: Real>(x: &SelfAdjointOperator<T>) -> TraceValue<T> {
    TraceValue(normalized_trace(x.matrix()).re)
}

/// Normalized trace of an arbitrary square matrix.
pub fn normalized_trace<T: Real>(m: &DMatrix<C<T>>) -> C<T> {
    let n = m.nrows();
    let mut acc = C::new(T::zero(), T::zero());
    for i in 0..n {
        acc += m[(i, i)];
    }
    acc / T::from_usize_exact(n)
}

/// `phi(XY)`, real for self-adjoint `X`, `Y`; computed in `O(N^2)`.
pub fn trace_phi_product<T: Real>(
    x: &SelfAdjointOperator<T>,
    y: &SelfAdjointOperator<T>,
) -> Result<T, NcError> {
    if x.dim() != y.dim() {
        return Err(NcError::DimensionMismatch {
            left: x.dim(),
            right: y.dim(),
        });
    }
    let n = x.dim();
    let mut acc = T::zero();
    for i in 0..n {
        for j in 0..n {
            acc += (x.matrix()[(i, j)] * y.matrix()[(j, i)]).re;
        }
    }
    Ok(acc / T::from_usize_exact(n))
}

/// Trace p-norm exponents supported by [`p_norm`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PNorm {
    One,
    Two,
    Infinity,
}

/// `||X||_p = phi(|X|^p)^(1/p)`; `p = infinity` is the operator norm.
pub fn p_norm<T: Real>(x: &SelfAdjointOperator<T>, p: PNorm) -> T {
    p_norm_of_spectrum(&eigenvalues(x), p)
}

pub fn p_norm_of_spectrum<T: Real>(spectrum: &[T], p: PNorm) -> T {
    let n = T::from_usize_exact(spectrum.len());
    match p {
        PNorm::One => spectrum.iter().fold(T::zero(), |acc, l| acc + l.abs()) / n,
        PNorm::Two => (spectrum.iter().fold(T::zero(), |acc, &l| acc + l * l) / n).sqrt(),
        PNorm::Infinity => spectrum.iter().fold(T::zero(), |acc, l| acc.max(l.abs())),
    }
}

/// Diagonal operator with every spectrum value repeated `multiplicity` times.
pub fn make_operator_from_spectrum<T: Real>(
    spectrum: &[T],
    multiplicity: usize,
) -> Result<SelfAdjointOperator<T>, NcError> {
    if spectrum.is_empty() {
        return Err(NcError::EmptySpectrum);
    }
    if multiplicity == 0 {
        return Err(NcError::InvalidMultiplicity);
    }
    let diag: Vec<T> = spectrum
        .iter()
        .flat_map(|&s| std::iter::repeat_n(s, multiplicity))
        .collect();
    SelfAdjointOperator::from_real_diagonal(&diag)
}


#[cfg(test)]
mod tests {
    use super::test_support::*;
    use super::*;

    fn opnorm(m: &DMatrix<C<f64>>) -> f64 {
        let h = SelfAdjointOperator::from_hermitian_part(m.clone());
        p_norm(&h, PNorm::Infinity)
    }

    #[test]
    fn identity_decomposes_to_ones() {
        let d = spectral_decompose(&SelfAdjointOperator::<f64>::identity(3)).unwrap();
        assert_eq!(d.eigenvalues(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn diagonal_is_sorted() {
        let x = SelfAdjointOperator::from_real_diagonal(&[3.0, 1.0, 2.0]).unwrap();
        let d = spectral_decompose(&x).unwrap();
        assert_eq!(d.eigenvalues(), &[1.0, 2.0, 3.0]);
        assert_eq!(d.reconstruct(), x);
    }

    #[test]
    fn random_hermitian_reconstructs() {
        let x = random_hermitian(16, 7);
        let d = spectral_decompose(&x).unwrap();
        assert!(d.eigenvalues().windows(2).all(|w| w[0] <= w[1]));
        // direct reassembly Q diag(l) Q*
        let q = d.eigenvectors();
        let mut lam = DMatrix::<C<f64>>::zeros(16, 16);
        for (k, &l) in d.eigenvalues().iter().enumerate() {
            lam[(k, k)] = C::new(l, 0.0);
        }
        let rebuilt = q * lam * q.adjoint();
        let err = opnorm(&(rebuilt - x.matrix()));
        assert!(
            err <= 1e-9 * p_norm(&x, PNorm::Infinity).max(1.0),
            "err {err}"
        );
        let qq = q.adjoint() * q;
        let id = DMatrix::<C<f64>>::identity(16, 16);
        assert!(max_abs_diff(&qq, &id) <= 1e-10);
    }

    #[test]
    fn non_hermitian_rejected() {
        let mut m = DMatrix::<C<f64>>::identity(2, 2);
        m[(0, 1)] = C::new(1.0, 0.0);
        assert!(matches!(
            SelfAdjointOperator::new(m),
            Err(NcError::NonHermitianInput { .. })
        ));
        let mut m = DMatrix::<C<f64>>::identity(2, 2);
        m[(0, 1)] = C::new(0.0, 1e-13);
        m[(1, 0)] = C::new(0.0, 1e-13);
        // within tolerance: accepted and symmetrized exactly
        let x = SelfAdjointOperator::new(m).unwrap();
        assert_eq!(x.entry(0, 1), x.entry(1, 0).conj());
    }

    #[test]
    fn sqrt_of_diagonal() {
        let x = SelfAdjointOperator::from_real_diagonal(&[4.0, 9.0]).unwrap();
        let r = apply_spectral_function(&x, SpectralFunction::Sqrt).unwrap();
        assert_eq!(r.diagonal_real(), vec![2.0, 3.0]);
        assert!(r.is_diagonal());
    }

    #[test]
    fn inverse_of_identity() {
        let id = SelfAdjointOperator::<f64>::identity(5);
        assert_eq!(
            apply_spectral_function(&id, SpectralFunction::Inverse).unwrap(),
            id
        );
    }

    #[test]
    fn sqrt_of_random_spd_squares_back() {
        let x = random_spd(16, 11, 0.5);
        let r = apply_spectral_function(&x, SpectralFunction::Sqrt).unwrap();
        let sq = r.matrix() * r.matrix();
        let rel = opnorm(&(sq - x.matrix())) / p_norm(&x, PNorm::Infinity);
        assert!(rel <= 1e-8, "rel {rel}");
    }

    #[test]
    fn roots_clip_small_negative_and_reject_large() {
        let x = SelfAdjointOperator::from_real_diagonal(&[-5e-13, 4.0]).unwrap();
        let r = apply_spectral_function(&x, SpectralFunction::Sqrt).unwrap();
        assert_eq!(r.diagonal_real(), vec![0.0, 2.0]);
        let y = SelfAdjointOperator::from_real_diagonal(&[-1e-6, 4.0]).unwrap();
        assert_eq!(
            apply_spectral_function(&y, SpectralFunction::FourthRoot),
            Err(NcError::NegativeSpectrum { eigenvalue: -1e-6 })
        );
    }

    #[test]
    fn inverse_refuses_near_singular() {
        let x = SelfAdjointOperator::from_real_diagonal(&[1e-11, 4.0]).unwrap();
        assert_eq!(
            apply_spectral_function(&x, SpectralFunction::Inverse),
            Err(NcError::SingularOperator { eigenvalue: 1e-11 })
        );
        assert!(matches!(
            apply_spectral_function(&x, SpectralFunction::Power(-2)),
            Err(NcError::SingularOperator { .. })
        ));
    }

    #[test]
    fn trace_examples() {
        for n in [1, 4, 17] {
            assert_eq!(
                trace_phi(&SelfAdjointOperator::<f64>::identity(n)).value(),
                1.0
            );
        }
        let x = SelfAdjointOperator::from_real_diagonal(&[1.0, -1.0]).unwrap();
        assert_eq!(trace_phi(&x).value(), 0.0);
    }

    #[test]
    fn trace_is_tracial() {
        let x = random_hermitian(8, 1);
        let y = random_hermitian(8, 2);
        let xy = normalized_trace(&(x.matrix() * y.matrix()));
        let yx = normalized_trace(&(y.matrix() * x.matrix()));
        assert!((xy - yx).norm() <= 1e-12);
        assert!(xy.im.abs() <= 1e-12);
        assert!((trace_phi_product(&x, &y).unwrap() - xy.re).abs() <= 1e-12);
    }

    #[test]
    fn p_norm_examples() {
        let id = SelfAdjointOperator::<f64>::identity(3);
        for p in [PNorm::One, PNorm::Two, PNorm::Infinity] {
            assert_eq!(p_norm(&id, p), 1.0);
        }
        let x = SelfAdjointOperator::from_real_diagonal(&[1.0, -1.0]).unwrap();
        for p in [PNorm::One, PNorm::Two, PNorm::Infinity] {
            assert_eq!(p_norm(&x, p), 1.0);
        }
        let r = random_hermitian(16, 5);
        let two = p_norm(&r, PNorm::Two);
        let phi_sq = trace_phi(&r.square()).value();
        assert!((two * two - phi_sq).abs() <= 1e-10);
        assert!(p_norm(&r, PNorm::One) <= two && two <= p_norm(&r, PNorm::Infinity));
    }

    #[test]
    fn operators_from_spectrum() {
        let x = make_operator_from_spectrum(&[1.0], 4).unwrap();
        assert_eq!(x, SelfAdjointOperator::identity(4));
        let y = make_operator_from_spectrum(&[0.5, 1.5], 2).unwrap();
        assert_eq!(y.diagonal_real(), vec![0.5, 0.5, 1.5, 1.5]);
        assert_eq!(
            trace_phi(&make_operator_from_spectrum(&[1.0, 2.0, 3.0], 1).unwrap()).value(),
            2.0
        );
        assert_eq!(
            make_operator_from_spectrum::<f64>(&[], 2),
            Err(NcError::EmptySpectrum)
        );
        assert_eq!(
            make_operator_from_spectrum(&[1.0], 0),
            Err(NcError::InvalidMultiplicity)
        );
    }

    #[test]
    fn single_precision_instantiation() {
        let x = make_operator_from_spectrum(&[4.0f32, 9.0], 2).unwrap();
        let r = apply_spectral_function(&x, SpectralFunction::Sqrt).unwrap();
        assert_eq!(r.diagonal_real(), vec![2.0f32, 2.0, 3.0, 3.0]);
        assert_eq!(trace_phi(&r).value(), 2.5);
    }
}
