//! Subspace accuracy metrics: the deviation of the desired eigenspace from
//! the search subspace, principal-angle sines between computed and reference
//! bases, and conditioning of retained vector blocks.

use chebslice::matrix::{dense_qr, dense_svd, Scalar};
use nalgebra::DMatrix;

/// The square-root formula `sqrt(1 - sigma_min^2)` cannot resolve angles
/// below `sqrt(2 * sigma-rounding)`; the sigma rounding of the overlap SVD
/// grows like `sqrt(n) * eps_mach` (plus an extra orthonormalization for
/// non-orthonormal inputs), so measured angles wobble at the 1e-7 level for
/// n up to a few thousand. Callers comparing two measured angles should
/// allow for this floor.
pub const ANGLE_MEASUREMENT_FLOOR: f64 = 2e-7;

fn orthonormalize_if_needed<T: Scalar>(x: &DMatrix<T>) -> DMatrix<T> {
    let g = x.ad_mul(x);
    let eye = DMatrix::<T>::identity(g.nrows(), g.ncols());
    if (g - eye).norm() <= 1e-10 * (x.ncols() as f64) {
        x.clone()
    } else {
        dense_qr(x).0
    }
}

/// Deviation of the reference eigenspace from `range(u)`:
/// `|| (I - U U^H) X_ref ||_2`, computed as `sqrt(1 - sigma_min(U^H X_ref)^2)`
/// and clamped to `[0, 1]`. `u` must be column-orthonormal; `x_ref` is
/// orthonormalized first when needed.
pub fn subspace_deviation<T: Scalar>(u: &DMatrix<T>, x_ref: &DMatrix<T>) -> f64 {
    let x = orthonormalize_if_needed(x_ref);
    if x.ncols() == 0 {
        return 0.0;
    }
    let overlap = u.ad_mul(&x);
    if overlap.nrows() < overlap.ncols() {
        // The subspace cannot contain a larger space.
        return 1.0;
    }
    let sigma = dense_svd(&overlap).sigma;
    let smin = sigma.last().copied().unwrap_or(0.0).clamp(0.0, 1.0);
    (1.0 - smin * smin).max(0.0).sqrt()
}

/// Direct-formula evaluation of the same quantity: the spectral norm of
/// `X_ref - U (U^H X_ref)`. Reference path for the SVD shortcut.
pub fn subspace_deviation_direct<T: Scalar>(u: &DMatrix<T>, x_ref: &DMatrix<T>) -> f64 {
    let x = orthonormalize_if_needed(x_ref);
    if x.ncols() == 0 {
        return 0.0;
    }
    let proj = u * u.ad_mul(&x);
    let resid = &x - proj;
    dense_svd(&resid).sigma.first().copied().unwrap_or(0.0)
}

/// `sin` of the largest principal angle between `range(x)` and `range(y)`
/// (both orthonormalized as needed, equal column counts expected). Uses the
/// projector-residual form, which keeps full absolute accuracy for tiny
/// angles where the `sqrt(1 - sigma_min^2)` shortcut cancels.
pub fn sin_angle<T: Scalar>(x: &DMatrix<T>, y: &DMatrix<T>) -> f64 {
    let qx = orthonormalize_if_needed(x);
    subspace_deviation_direct(&qx, y)
}

/// Spectral-norm condition number of a block (`inf` for rank-deficient).
pub fn condition_number<T: Scalar>(x: &DMatrix<T>) -> f64 {
    if x.ncols() == 0 {
        return 1.0;
    }
    let sigma = dense_svd(x).sigma;
    let (max, min) = (sigma[0], sigma[sigma.len() - 1]);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}
