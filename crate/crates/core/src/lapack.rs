//! Hermitian eigensolver backed by the system OpenBLAS/LAPACK (`?heevd`).

use std::os::raw::c_int;
use std::sync::Once;

use nalgebra::DMatrix;

use crate::scalar::C;

#[link(name = "openblas")]
extern "C" {
    fn openblas_set_num_threads(n: c_int);
}

static SINGLE_THREADED: Once = Once::new();

// Parallelism comes from the run level; a library thread pool would make
// results depend on how many runs share the machine.
fn init() {
    SINGLE_THREADED.call_once(|| unsafe { openblas_set_num_threads(1) });
}

macro_rules! heevd {
    ($name:ident, $t:ty, $routine:path) => {
        /// Ascending eigenvalues and eigenvectors, or `None` if LAPACK reports a failure.
        pub(crate) fn $name(mut a: DMatrix<C<$t>>) -> Option<(Vec<$t>, DMatrix<C<$t>>)> {
            init();
            let n = a.nrows();
            let ni = c_int::try_from(n).ok()?;
            let (lwork, lrwork, liwork) = if n <= 1 {
                (1, 1, 1)
            } else {
                (2 * ni + ni * ni, 1 + 5 * ni + 2 * ni * ni, 3 + 5 * ni)
            };
            let mut w = vec![0.0 as $t; n];
            let mut work = vec![C::<$t>::new(0.0, 0.0); lwork as usize];
            let mut rwork = vec![0.0 as $t; lrwork as usize];
            let mut iwork = vec![0 as c_int; liwork as usize];
            let mut info: c_int = 0;
            unsafe {
                $routine(
                    b"V".as_ptr() as *const _,
                    b"L".as_ptr() as *const _,
                    &ni,
                    a.as_mut_ptr() as *mut _,
                    &ni.max(1),
                    w.as_mut_ptr(),
                    work.as_mut_ptr() as *mut _,
                    &lwork,
                    rwork.as_mut_ptr(),
                    &lrwork,
                    iwork.as_mut_ptr(),
                    &liwork,
                    &mut info,
                );
            }
            (info == 0).then_some((w, a))
        }
    };
}

heevd!(zheevd, f64, lapack_sys::zheevd_);
heevd!(cheevd, f32, lapack_sys::cheevd_);
