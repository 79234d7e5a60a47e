//! Ritz and refined-Ritz extraction from an orthonormal subspace basis.
//!
//! The refined path computes, for each shift, the right singular vector of
//! `H - lambda J` where `(J, H)` are the two halves of the R factor of one
//! compact QR factorization of `(U, AU)`. One pencil is shared by all shifts
//! of an outer iteration, which is what makes the refined extraction cheap.
//! The direct SVD of `(A - lambda I) U` is kept as an independently coded
//! reference path.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::filter::Window;
use crate::matrix::{dense_svd, hermitian_eig, mat_axpy, qr_r_factor, HermitianOp, Scalar};

/// Two smallest singular values closer than this (absolute) mark the refined
/// vector as non-unique.
const SINGVAL_TIE_TOL: f64 = 1e-14;

/// Ritz pairs of `A` with respect to `range(U)`, sorted by ascending value.
#[derive(Debug, Clone)]
pub struct RitzSet<T: Scalar> {
    /// Ritz values, ascending.
    pub values: Vec<f64>,
    /// Eigenvectors of the projected matrix (coefficients in the `U` basis).
    pub prim_vectors: DMatrix<T>,
    /// Lifted Ritz vectors `x = U y`, unit norm.
    pub vectors: DMatrix<T>,
}

impl<T: Scalar> RitzSet<T> {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Residual norms `||A x_i - lambda_i x_i||`, computed on demand.
    pub fn residual_norms(&self, a: &dyn HermitianOp<T>) -> Vec<f64> {
        let ax = a.apply_block(&self.vectors);
        (0..self.len())
            .map(|i| {
                let r = ax.column(i) - self.vectors.column(i).scale(self.values[i]);
                r.norm()
            })
            .collect()
    }
}

/// Rayleigh-Ritz projection: eigen-decompose `U^H A U` (symmetrized) and lift.
pub fn rayleigh_ritz<T: Scalar>(a: &dyn HermitianOp<T>, u: &DMatrix<T>) -> RitzSet<T> {
    let au = a.apply_block(u);
    rayleigh_ritz_from_product(u, &au)
}

/// Rayleigh-Ritz projection reusing a precomputed `AU` block.
pub fn rayleigh_ritz_from_product<T: Scalar>(u: &DMatrix<T>, au: &DMatrix<T>) -> RitzSet<T> {
    let b = u.ad_mul(au);
    let (values, y) = hermitian_eig(&b);
    let vectors = u * &y;
    RitzSet {
        values,
        prim_vectors: y,
        vectors,
    }
}

/// Indices of the Ritz values inside the closed window `[a, b]` in original
/// coordinates: the potential pairs.
pub fn select_potential<T: Scalar>(ritz: &RitzSet<T>, window: &Window) -> Vec<usize> {
    (0..ritz.len())
        .filter(|&i| window.contains(ritz.values[i]))
        .collect()
}

// ---------------------------------------------------------------------------
// Reduced pencil
// ---------------------------------------------------------------------------

/// The two `2m x m` halves of the R factor of the compact QR factorization
/// of `(U, AU)`; `||(A - lambda I) U z|| = ||(H - lambda J) z||` for every z.
#[derive(Debug, Clone)]
pub struct ReducedPencil<T: Scalar> {
    pub j: DMatrix<T>,
    pub h: DMatrix<T>,
}

impl<T: Scalar> ReducedPencil<T> {
    /// Build from `U` and a precomputed product `AU`. The Householder QR is
    /// consumed for its R factor only; `Q` is never assembled.
    pub fn from_product(u: &DMatrix<T>, au: &DMatrix<T>) -> Result<Self> {
        let n = u.nrows();
        let m = u.ncols();
        if au.shape() != (n, m) {
            return Err(Error::DimensionMismatch(format!(
                "AU block is {}x{}, expected {n}x{m}",
                au.nrows(),
                au.ncols()
            )));
        }
        if 2 * m > n {
            return Err(Error::InvalidParameter(format!(
                "pencil needs 2 * M * ell <= n, got 2 * {m} > {n}"
            )));
        }
        let mut stacked = DMatrix::zeros(n, 2 * m);
        stacked.columns_mut(0, m).copy_from(u);
        stacked.columns_mut(m, m).copy_from(au);
        let r = qr_r_factor(stacked);
        let j = r.columns(0, m).into_owned();
        let h = r.columns(m, m).into_owned();
        Ok(Self { j, h })
    }

    pub fn subspace_dim(&self) -> usize {
        self.j.ncols()
    }
}

/// Pencil construction from the operator itself (computes `AU` internally).
pub fn build_reduced_pencil<T: Scalar>(
    a: &dyn HermitianOp<T>,
    u: &DMatrix<T>,
) -> Result<ReducedPencil<T>> {
    let au = a.apply_block(u);
    ReducedPencil::from_product(u, &au)
}

/// A refined direction in `U` coordinates together with the attained
/// residual optimum.
#[derive(Debug, Clone)]
pub struct RefinedVector<T: Scalar> {
    /// Primitive refined vector (unit norm, coefficients in the `U` basis).
    pub z: DVector<T>,
    /// `||(A - lambda I) U z||`, the smallest singular value of the reduced
    /// (or direct) matrix.
    pub sigma_min: f64,
    /// Set when the smallest singular value is not simple within `1e-14`.
    pub ambiguous: bool,
}

fn smallest_right_singular<T: Scalar>(m: &DMatrix<T>) -> RefinedVector<T> {
    let svd = dense_svd(m);
    let k = svd.sigma.len();
    let sigma_min = svd.sigma[k - 1];
    // Singular values are sorted descending; when several are tied with the
    // smallest we keep the first one the kernel returned and flag it.
    let first_tied = (0..k)
        .find(|&i| svd.sigma[i] <= sigma_min + SINGVAL_TIE_TOL)
        .expect("at least one singular value");
    let z = DVector::from_column_slice(svd.v.column(first_tied).as_slice());
    RefinedVector {
        z,
        sigma_min,
        ambiguous: first_tied < k - 1,
    }
}

/// Refined direction for one shift from the shared reduced pencil: the right
/// singular vector of `H - lambda J` for its smallest singular value.
pub fn refined_vector<T: Scalar>(pencil: &ReducedPencil<T>, lambda: f64) -> RefinedVector<T> {
    let mut m = pencil.h.clone();
    mat_axpy(&mut m, T::from_real(-lambda), &pencil.j);
    smallest_right_singular(&m)
}

/// Reference path: the same direction from the SVD of the tall matrix
/// `(A - lambda I) U`. Used as the oracle for the pencil path and selectable
/// for production runs.
pub fn refined_vector_direct<T: Scalar>(
    a: &dyn HermitianOp<T>,
    u: &DMatrix<T>,
    lambda: f64,
) -> RefinedVector<T> {
    let mut m = a.apply_block(u);
    mat_axpy(&mut m, T::from_real(-lambda), u);
    smallest_right_singular(&m)
}

// ---------------------------------------------------------------------------
// Refined sets
// ---------------------------------------------------------------------------

/// Which implementation computes refined directions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
pub enum RefinedPath {
    /// Shared QR pencil, one small SVD per shift.
    #[default]
    QrPencil,
    /// Direct SVD of `(A - lambda I) U` per shift.
    DirectSvd,
}

/// Refined Ritz triples for a list of potential shifts.
#[derive(Debug, Clone)]
pub struct RefinedSet<T: Scalar> {
    /// The potential Ritz values used as shifts.
    pub base_values: Vec<f64>,
    /// Primitive refined vectors (columns, unit norm, phase-normalized).
    pub prim_refined: DMatrix<T>,
    /// Lifted refined vectors `x = U z`, unit norm, phase-normalized so the
    /// largest-magnitude entry is real positive.
    pub vectors: DMatrix<T>,
    /// Refined Ritz values `lambda = x^H A x`.
    pub ref_values: Vec<f64>,
    /// Residuals `r = A x - lambda x` (columns).
    pub residuals: DMatrix<T>,
    pub residual_norms: Vec<f64>,
    /// `sigma_min(H - lambda J)` per shift.
    pub min_singvals: Vec<f64>,
    /// Tie flags propagated from the singular-vector selection.
    pub ambiguous: Vec<bool>,
}

impl<T: Scalar> RefinedSet<T> {
    pub fn len(&self) -> usize {
        self.base_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.base_values.is_empty()
    }
}

/// Compute refined Ritz triples for every shift against one shared pencil.
/// `au` must be the product `A * U` used to build the pencil.
pub fn refine_set<T: Scalar>(
    u: &DMatrix<T>,
    au: &DMatrix<T>,
    pencil: &ReducedPencil<T>,
    shifts: &[f64],
    path: RefinedPath,
    a: &dyn HermitianOp<T>,
) -> RefinedSet<T> {
    assert!(
        !shifts.is_empty(),
        "refine_set needs at least one potential shift"
    );
    let n = u.nrows();
    let p = shifts.len();
    let mut prim = DMatrix::zeros(u.ncols(), p);
    let mut vectors = DMatrix::zeros(n, p);
    let mut residuals = DMatrix::zeros(n, p);
    let mut ref_values = Vec::with_capacity(p);
    let mut residual_norms = Vec::with_capacity(p);
    let mut min_singvals = Vec::with_capacity(p);
    let mut ambiguous = Vec::with_capacity(p);

    for (c, &shift) in shifts.iter().enumerate() {
        let rv = match path {
            RefinedPath::QrPencil => refined_vector(pencil, shift),
            RefinedPath::DirectSvd => refined_vector_direct(a, u, shift),
        };
        let mut z = rv.z;
        let mut x = u * &z;
        let mut ax = au * &z;

        // Deterministic phase: make the largest-magnitude entry of x real
        // positive, then renormalize.
        let (mut arg, mut best) = (0usize, -1.0_f64);
        for i in 0..n {
            let m = x[i].modulus();
            if m > best {
                best = m;
                arg = i;
            }
        }
        if best > 0.0 {
            let phase = x[arg] * T::from_real(1.0 / best);
            let adj = phase.conjugate();
            z *= adj;
            x *= adj;
            ax *= adj;
        }
        let nrm = x.norm();
        if nrm > 0.0 {
            z.unscale_mut(nrm);
            x.unscale_mut(nrm);
            ax.unscale_mut(nrm);
        }

        let lambda_hat = x.dotc(&ax).real();
        let r = &ax - &x.scale(lambda_hat);

        prim.column_mut(c).copy_from(&z);
        vectors.column_mut(c).copy_from(&x);
        residuals.column_mut(c).copy_from(&r);
        ref_values.push(lambda_hat);
        residual_norms.push(r.norm());
        min_singvals.push(rv.sigma_min);
        ambiguous.push(rv.ambiguous);
    }

    RefinedSet {
        base_values: shifts.to_vec(),
        prim_refined: prim,
        vectors,
        ref_values,
        residuals,
        residual_norms,
        min_singvals,
        ambiguous,
    }
}
