//! Scalar abstraction shared by every numeric module.
//!
//! All operator code is written once against [`Real`] and instantiated for
//! `f32` and `f64`. Tolerances live on the trait because a threshold that is
//! meaningful in double precision (`1e-12`) is below single-precision epsilon.

use std::fmt::{Debug, Display, LowerExp};

use matrixmultiply::CGemmOption::Standard;
use nalgebra::{Complex, DMatrix, RealField};
use num_traits::{FromPrimitive, ToPrimitive};

/// Real field usable as the entry type of [`SelfAdjointOperator`](crate::SelfAdjointOperator).
pub trait Real:
    RealField + Copy + FromPrimitive + ToPrimitive + Debug + Display + LowerExp + Send + Sync + 'static
{
    /// Absolute per-entry tolerance for `|x_ij - conj(x_ji)|`.
    fn tol_herm() -> Self;
    /// Eigenvalues in `[-tol_clip, 0)` are treated as zero before fractional roots.
    fn tol_clip() -> Self;
    /// Smallest eigenvalue magnitude accepted by inversion.
    fn eps_inv() -> Self;

    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }

    #[inline]
    fn from_usize_exact(n: usize) -> Self {
        <Self as FromPrimitive>::from_usize(n).expect("usize representable")
    }

    /// Ascending eigenvalues and matching unit eigenvectors of a Hermitian matrix.
    fn hermitian_eigen(m: DMatrix<C<Self>>) -> (Vec<Self>, DMatrix<C<Self>>) {
        sorted_eigen(m)
    }

    /// Complex matrix product `a * b`.
    fn complex_matmul(a: &DMatrix<C<Self>>, b: &DMatrix<C<Self>>) -> DMatrix<C<Self>> {
        a * b
    }
}

macro_rules! blocked_matmul {
    ($t:ty, $kernel:path) => {
        fn complex_matmul(a: &DMatrix<C<$t>>, b: &DMatrix<C<$t>>) -> DMatrix<C<$t>> {
            assert_eq!(a.ncols(), b.nrows(), "inner dimensions differ");
            let (m, k, n) = (a.nrows(), a.ncols(), b.ncols());
            let mut c = DMatrix::<C<$t>>::zeros(m, n);
            if m == 0 || k == 0 || n == 0 {
                return c;
            }
            // Complex<T> is #[repr(C)] { re, im }, i.e. [T; 2]; all three buffers are column-major.
            unsafe {
                $kernel(
                    Standard,
                    Standard,
                    m,
                    k,
                    n,
                    [1.0, 0.0],
                    a.as_ptr() as *const [$t; 2],
                    1,
                    m as isize,
                    b.as_ptr() as *const [$t; 2],
                    1,
                    k as isize,
                    [0.0, 0.0],
                    c.as_mut_ptr() as *mut [$t; 2],
                    1,
                    m as isize,
                );
            }
            c
        }
    };
}

impl Real for f64 {
    #[inline]
    fn tol_herm() -> Self {
        1e-12
    }
    #[inline]
    fn tol_clip() -> Self {
        1e-12
    }
    #[inline]
    fn eps_inv() -> Self {
        1e-10
    }
    blocked_matmul!(f64, matrixmultiply::zgemm);

    #[cfg(feature = "lapack")]
    fn hermitian_eigen(m: DMatrix<C<f64>>) -> (Vec<f64>, DMatrix<C<f64>>) {
        crate::lapack::zheevd(m.clone()).unwrap_or_else(|| sorted_eigen(m))
    }
}

impl Real for f32 {
    #[inline]
    fn tol_herm() -> Self {
        1e-5
    }
    #[inline]
    fn tol_clip() -> Self {
        1e-5
    }
    #[inline]
    fn eps_inv() -> Self {
        1e-5
    }
    blocked_matmul!(f32, matrixmultiply::cgemm);

    #[cfg(feature = "lapack")]
    fn hermitian_eigen(m: DMatrix<C<f32>>) -> (Vec<f32>, DMatrix<C<f32>>) {
        crate::lapack::cheevd(m.clone()).unwrap_or_else(|| sorted_eigen(m))
    }
}

/// nalgebra's Hermitian QR solver, columns reordered by ascending eigenvalue.
pub(crate) fn sorted_eigen<T: Real>(m: DMatrix<C<T>>) -> (Vec<T>, DMatrix<C<T>>) {
    let n = m.nrows();
    let eig = m.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[i]
            .partial_cmp(&eig.eigenvalues[j])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    (values, eig.eigenvectors.select_columns(order.iter()))
}

/// Complex entry type of operators over `T`.
pub type C<T> = Complex<T>;

/// `a * b` through the scalar type's product kernel.
#[inline]
pub(crate) fn matmul<T: Real>(a: &DMatrix<C<T>>, b: &DMatrix<C<T>>) -> DMatrix<C<T>> {
    T::complex_matmul(a, b)
}

#[inline]
pub(crate) fn re<T: Real>(x: T) -> C<T> {
    Complex::new(x, T::zero())
}
