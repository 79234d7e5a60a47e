//! Hermitian operators and the dense kernels used by every stage of the
//! solver: sparse/dense block products, Householder QR, SVD, small Hermitian
//! eigensolves and Lanczos-based spectral bound estimation.

use nalgebra::{ComplexField, DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Scalar field of an operator: `f64` for real symmetric matrices,
/// `Complex<f64>` for complex Hermitian ones. Inner products conjugate
/// through `ComplexField`, so both cases share one code path.
pub trait Scalar: ComplexField<RealField = f64> + Copy {}
impl<T: ComplexField<RealField = f64> + Copy> Scalar for T {}

/// Relative tolerance for the stored-value Hermiticity invariant.
const HERMITIAN_STORE_TOL: f64 = 1e-14;

/// A Hermitian linear operator exposing block products and cached induced
/// norms. Implementations must be immutable after construction so one
/// operator can be shared across concurrent solves.
pub trait HermitianOp<T: Scalar>: Sync {
    fn dim(&self) -> usize;

    /// `y = A * x`. Both blocks are `dim()`-row matrices.
    fn apply_block_to(&self, x: &DMatrix<T>, y: &mut DMatrix<T>);

    /// Cached induced 1-norm (max absolute column sum).
    fn norm_one(&self) -> f64;

    /// Cached induced infinity-norm (max absolute row sum).
    fn norm_inf(&self) -> f64;

    /// Convenience wrapper allocating the output block.
    fn apply_block(&self, x: &DMatrix<T>) -> DMatrix<T> {
        let mut y = DMatrix::zeros(x.nrows(), x.ncols());
        self.apply_block_to(x, &mut y);
        y
    }

    /// `sqrt(norm1 * norminf)`, the cheap upper bound for the spectral norm
    /// used by relative-residual tests.
    fn norm_est(&self) -> f64 {
        (self.norm_one() * self.norm_inf()).sqrt()
    }
}

/// `y += alpha * x` over whole blocks.
pub fn mat_axpy<T: Scalar>(y: &mut DMatrix<T>, alpha: T, x: &DMatrix<T>) {
    assert_eq!(y.shape(), x.shape(), "axpy blocks must have equal shape");
    y.zip_apply(x, |yi, xi| *yi += alpha * xi);
}

/// Largest entry modulus of a block.
pub fn max_modulus<T: Scalar>(m: &DMatrix<T>) -> f64 {
    m.iter().map(|v| v.modulus()).fold(0.0_f64, f64::max)
}

/// `A * X` with an explicit dimension check.
pub fn block_matvec<T: Scalar>(a: &dyn HermitianOp<T>, x: &DMatrix<T>) -> Result<DMatrix<T>> {
    if x.nrows() != a.dim() {
        return Err(Error::DimensionMismatch(format!(
            "operator has dimension {} but block has {} rows",
            a.dim(),
            x.nrows()
        )));
    }
    Ok(a.apply_block(x))
}

// ---------------------------------------------------------------------------
// Sparse storage
// ---------------------------------------------------------------------------

/// Sparse Hermitian matrix in CSR form. The full pattern is stored (both
/// triangles); construction symmetrizes the values so the matrix equals its
/// conjugate transpose exactly up to the stored-value rounding.
#[derive(Debug, Clone)]
pub struct SparseHermitian<T> {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<T>,
    norm_one: f64,
    norm_inf: f64,
}

impl<T: Scalar> SparseHermitian<T> {
    /// Build from COO triplets. Duplicate entries are summed. Entries may
    /// cover one triangle, both, or a mix; missing conjugate partners are
    /// filled in. Fails when a stored pair violates `a_ij = conj(a_ji)`
    /// beyond `rel_tol` relative to the largest entry. Values are then
    /// symmetrized as `(a_ij + conj(a_ji)) / 2`.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, T)], rel_tol: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter(
                "matrix dimension must be >= 1".into(),
            ));
        }
        let mut map: std::collections::BTreeMap<(usize, usize), T> =
            std::collections::BTreeMap::new();
        for &(i, j, v) in triplets {
            if i >= n || j >= n {
                return Err(Error::DimensionMismatch(format!(
                    "entry ({i}, {j}) outside {n}x{n} matrix"
                )));
            }
            let slot = map.entry((i, j)).or_insert_with(T::zero);
            *slot += v;
        }
        let max_abs = map
            .values()
            .map(|v| v.modulus())
            .fold(0.0_f64, f64::max)
            .max(f64::MIN_POSITIVE);

        // Symmetrize: every (i, j) gets (a_ij + conj(a_ji)) / 2, checking the
        // mismatch against the tolerance first.
        let keys: Vec<(usize, usize)> = map.keys().copied().collect();
        let mut sym: std::collections::BTreeMap<(usize, usize), T> =
            std::collections::BTreeMap::new();
        for (i, j) in keys {
            let a_ij = map.get(&(i, j)).copied().unwrap_or_else(T::zero);
            let a_ji = map.get(&(j, i)).copied().unwrap_or_else(T::zero);
            let mismatch = (a_ij - a_ji.conjugate()).modulus();
            if map.contains_key(&(j, i)) || i == j {
                if mismatch > rel_tol * max_abs {
                    return Err(Error::NotHermitian(format!(
                        "entries ({i}, {j}) and ({j}, {i}) differ by {mismatch:.3e} \
                         (tolerance {:.3e})",
                        rel_tol * max_abs
                    )));
                }
                let avg = (a_ij + a_ji.conjugate()) * T::from_real(0.5);
                sym.insert((i, j), avg);
                sym.insert((j, i), avg.conjugate());
            } else {
                // Only one triangle stored: mirror it.
                sym.insert((i, j), a_ij);
                sym.insert((j, i), a_ij.conjugate());
            }
        }
        // Diagonal of a Hermitian matrix is real.
        for i in 0..n {
            if let Some(d) = sym.get_mut(&(i, i)) {
                *d = T::from_real(d.real());
            }
        }

        let mut row_ptr = vec![0usize; n + 1];
        for &(i, _) in sym.keys() {
            row_ptr[i + 1] += 1;
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        let nnz = row_ptr[n];
        let mut col_idx = vec![0usize; nnz];
        let mut values = vec![T::zero(); nnz];
        let mut cursor = row_ptr.clone();
        for (&(i, j), &v) in &sym {
            col_idx[cursor[i]] = j;
            values[cursor[i]] = v;
            cursor[i] += 1;
        }

        let (norm_one, norm_inf) = induced_norms_csr(n, &row_ptr, &col_idx, &values);
        Ok(Self {
            n,
            row_ptr,
            col_idx,
            values,
            norm_one,
            norm_inf,
        })
    }

    /// Build from a dense Hermitian matrix, dropping exact zeros.
    pub fn from_dense(m: &DMatrix<T>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} matrix is not square",
                m.nrows(),
                m.ncols()
            )));
        }
        let mut trips = Vec::new();
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                let v = m[(i, j)];
                if v != T::zero() {
                    trips.push((i, j, v));
                }
            }
        }
        Self::from_triplets(m.nrows(), &trips, HERMITIAN_STORE_TOL)
    }

    /// Real diagonal matrix.
    pub fn from_diagonal(diag: &[f64]) -> Self {
        let trips: Vec<(usize, usize, T)> = diag
            .iter()
            .enumerate()
            .map(|(i, &d)| (i, i, T::from_real(d)))
            .collect();
        Self::from_triplets(diag.len(), &trips, HERMITIAN_STORE_TOL).expect("diagonal is Hermitian")
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![1.0; n])
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Recompute the induced norms from the stored structure (the cached
    /// values must match exactly).
    pub fn recompute_norms(&self) -> (f64, f64) {
        induced_norms_csr(self.n, &self.row_ptr, &self.col_idx, &self.values)
    }
}

fn induced_norms_csr<T: Scalar>(
    n: usize,
    row_ptr: &[usize],
    col_idx: &[usize],
    values: &[T],
) -> (f64, f64) {
    let mut col_sum = vec![0.0_f64; n];
    let mut norm_inf = 0.0_f64;
    for i in 0..n {
        let mut row_sum = 0.0;
        for k in row_ptr[i]..row_ptr[i + 1] {
            let a = values[k].modulus();
            row_sum += a;
            col_sum[col_idx[k]] += a;
        }
        norm_inf = norm_inf.max(row_sum);
    }
    let norm_one = col_sum.iter().copied().fold(0.0, f64::max);
    (norm_one, norm_inf)
}

impl<T: Scalar> HermitianOp<T> for SparseHermitian<T> {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply_block_to(&self, x: &DMatrix<T>, y: &mut DMatrix<T>) {
        assert_eq!(
            x.nrows(),
            self.n,
            "block row count must match operator dimension"
        );
        assert_eq!(y.shape(), x.shape());
        for c in 0..x.ncols() {
            for i in 0..self.n {
                let mut acc = T::zero();
                for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                    acc += self.values[k] * x[(self.col_idx[k], c)];
                }
                y[(i, c)] = acc;
            }
        }
    }

    fn norm_one(&self) -> f64 {
        self.norm_one
    }

    fn norm_inf(&self) -> f64 {
        self.norm_inf
    }
}

// ---------------------------------------------------------------------------
// Dense operator
// ---------------------------------------------------------------------------

/// Dense Hermitian operator. Used for synthetic test matrices where the
/// block product is a plain GEMM.
#[derive(Debug, Clone)]
pub struct DenseHermitian<T: Scalar> {
    m: DMatrix<T>,
    norm_one: f64,
    norm_inf: f64,
}

impl<T: Scalar> DenseHermitian<T> {
    pub fn new(m: DMatrix<T>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} matrix is not square",
                m.nrows(),
                m.ncols()
            )));
        }
        let scale = max_modulus(&m).max(f64::MIN_POSITIVE);
        let mismatch = max_modulus(&(&m - m.adjoint()));
        if mismatch > 2.0 * HERMITIAN_STORE_TOL * scale {
            return Err(Error::NotHermitian(format!(
                "max |A - A^H| entry is {mismatch:.3e}"
            )));
        }
        // Store the exactly Hermitian part.
        let sym = (&m + m.adjoint()).scale(0.5);
        let mut norm_one = 0.0_f64;
        for j in 0..sym.ncols() {
            norm_one = norm_one.max(sym.column(j).iter().map(|v| v.modulus()).sum());
        }
        let mut norm_inf = 0.0_f64;
        for i in 0..sym.nrows() {
            norm_inf = norm_inf.max(sym.row(i).iter().map(|v| v.modulus()).sum());
        }
        Ok(Self {
            m: sym,
            norm_one,
            norm_inf,
        })
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.m
    }
}

impl<T: Scalar> HermitianOp<T> for DenseHermitian<T> {
    fn dim(&self) -> usize {
        self.m.nrows()
    }

    fn apply_block_to(&self, x: &DMatrix<T>, y: &mut DMatrix<T>) {
        assert_eq!(
            x.nrows(),
            self.m.nrows(),
            "block row count must match operator dimension"
        );
        y.gemm(T::one(), &self.m, x, T::zero());
    }

    fn norm_one(&self) -> f64 {
        self.norm_one
    }

    fn norm_inf(&self) -> f64 {
        self.norm_inf
    }
}

// ---------------------------------------------------------------------------
// Dense kernels
// ---------------------------------------------------------------------------

/// Compact Householder QR of a tall block: `b = q * r` with `q` having
/// orthonormal columns. Rank deficiency is not an error; `r` may carry tiny
/// diagonal entries and callers decide what to do with them.
pub fn dense_qr<T: Scalar>(b: &DMatrix<T>) -> (DMatrix<T>, DMatrix<T>) {
    assert!(
        b.nrows() >= b.ncols(),
        "dense_qr expects rows >= cols, got {}x{}",
        b.nrows(),
        b.ncols()
    );
    let qr = b.clone().qr();
    (qr.q(), qr.r())
}

/// The `R` factor alone. The Householder `Q` stays in factored form inside
/// the decomposition and is never assembled.
pub fn qr_r_factor<T: Scalar>(b: DMatrix<T>) -> DMatrix<T> {
    assert!(
        b.nrows() >= b.ncols(),
        "qr_r_factor expects rows >= cols, got {}x{}",
        b.nrows(),
        b.ncols()
    );
    b.qr().r()
}

/// Compact SVD with singular values sorted descending.
#[derive(Debug, Clone)]
pub struct Svd<T: Scalar> {
    pub u: DMatrix<T>,
    pub sigma: Vec<f64>,
    pub v: DMatrix<T>,
}

pub fn dense_svd<T: Scalar>(b: &DMatrix<T>) -> Svd<T> {
    let svd = b
        .clone()
        .try_svd(true, true, f64::EPSILON, 0)
        .expect("SVD did not converge");
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let k = svd.singular_values.len();

    // Defensive descending sort; nalgebra sorts but the contract here is pinned.
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .partial_cmp(&svd.singular_values[a])
            .expect("singular values are finite")
    });
    let sigma: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let u_sorted = DMatrix::from_fn(u.nrows(), k, |i, j| u[(i, order[j])]);
    let v = DMatrix::from_fn(v_t.ncols(), k, |i, j| v_t[(order[j], i)].conjugate());
    Svd {
        u: u_sorted,
        sigma,
        v,
    }
}

/// Eigendecomposition of a small Hermitian matrix: values ascending,
/// eigenvector columns orthonormal. The input is symmetrized as
/// `(B + B^H) / 2` before factorization.
pub fn hermitian_eig<T: Scalar>(b: &DMatrix<T>) -> (Vec<f64>, DMatrix<T>) {
    assert_eq!(
        b.nrows(),
        b.ncols(),
        "hermitian_eig expects a square matrix"
    );
    let sym = (b + b.adjoint()).scale(0.5);
    let eig = sym.symmetric_eigen();
    let k = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .partial_cmp(&eig.eigenvalues[b])
            .expect("eigenvalues are finite")
    });
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(k, k, |i, j| eig.eigenvectors[(i, order[j])]);
    (values, vectors)
}

// ---------------------------------------------------------------------------
// Spectral bounds
// ---------------------------------------------------------------------------

/// Estimated enclosure of the spectrum. `margin` records the relative
/// inflation that was applied to the extremal Ritz values.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SpectralBounds {
    pub lambda_min_est: f64,
    pub lambda_max_est: f64,
    pub margin: f64,
}

impl SpectralBounds {
    /// Exact bounds, for tests and synthetic operators with known spectra.
    pub fn exact(lambda_min: f64, lambda_max: f64) -> Self {
        Self {
            lambda_min_est: lambda_min,
            lambda_max_est: lambda_max,
            margin: 0.0,
        }
    }

    pub fn spread(&self) -> f64 {
        self.lambda_max_est - self.lambda_min_est
    }

    pub fn is_degenerate(&self) -> bool {
        !(self.lambda_min_est < self.lambda_max_est)
    }

    /// `max(|lambda_min|, |lambda_max|)`, the spectral-norm bound used by the
    /// refined driver's convergence test.
    pub fn norm_bound(&self) -> f64 {
        self.lambda_min_est.abs().max(self.lambda_max_est.abs())
    }
}

/// Symmetric Lanczos sweep with full reorthogonalization of the stored basis;
/// returns the extremal Ritz values inflated outward by `margin * spread`.
/// Deterministic for a fixed seed. A vanishing start vector is reseeded at
/// most three times.
pub fn estimate_bounds<T: Scalar>(
    a: &dyn HermitianOp<T>,
    margin: f64,
    iters: usize,
    seed: u64,
) -> Result<SpectralBounds> {
    if iters < 20 {
        return Err(Error::InvalidParameter(format!(
            "bound estimation needs iters >= 20, got {iters}"
        )));
    }
    if margin < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "margin must be >= 0, got {margin}"
        )));
    }
    let n = a.dim();
    let steps = iters.min(n);

    const MAX_RESEEDS: usize = 3;
    for attempt in 0..=MAX_RESEEDS {
        let v0 = seeded_gaussian_vector::<T>(n, seed.wrapping_add(attempt as u64));
        let norm0 = v0.norm();
        if norm0 <= f64::MIN_POSITIVE * (n as f64) {
            continue;
        }

        let mut basis: Vec<DVector<T>> = Vec::with_capacity(steps);
        let mut alphas: Vec<f64> = Vec::with_capacity(steps);
        let mut betas: Vec<f64> = Vec::with_capacity(steps);
        basis.push(v0.unscale(norm0));

        for k in 0..steps {
            let vk_mat = DMatrix::from_column_slice(n, 1, basis[k].as_slice());
            let w_mat = a.apply_block(&vk_mat);
            let mut w = DVector::from_column_slice(w_mat.column(0).as_slice());
            let alpha = basis[k].dotc(&w).real();
            alphas.push(alpha);
            w.axpy(-T::from_real(alpha), &basis[k], T::one());
            if k > 0 {
                w.axpy(-T::from_real(betas[k - 1]), &basis[k - 1], T::one());
            }
            // Full reorthogonalization against the small stored basis.
            for v in &basis {
                let proj = v.dotc(&w);
                w.axpy(-proj, v, T::one());
            }
            let beta = w.norm();
            if beta
                <= f64::EPSILON
                    * (n as f64).sqrt()
                    * alphas.iter().fold(1.0_f64, |m, a| m.max(a.abs()))
            {
                break; // invariant subspace found; the basis so far is exact
            }
            if k + 1 < steps {
                betas.push(beta);
                basis.push(w.unscale(beta));
            }
        }

        let k = alphas.len();
        let mut t = DMatrix::<f64>::zeros(k, k);
        for i in 0..k {
            t[(i, i)] = alphas[i];
            if i + 1 < k {
                t[(i, i + 1)] = betas[i];
                t[(i + 1, i)] = betas[i];
            }
        }
        let (theta, _) = hermitian_eig(&t);
        let (theta_min, theta_max) = (theta[0], theta[k - 1]);
        let spread = theta_max - theta_min;
        return Ok(SpectralBounds {
            lambda_min_est: theta_min - margin * spread,
            lambda_max_est: theta_max + margin * spread,
            margin,
        });
    }
    Err(Error::LanczosBreakdown(MAX_RESEEDS))
}

// ---------------------------------------------------------------------------
// Seeded randomness
// ---------------------------------------------------------------------------

/// Standard-normal block with a fixed fill order (column-major), seeded.
pub fn seeded_gaussian_block<T: Scalar>(rows: usize, cols: usize, seed: u64) -> DMatrix<T> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut m = DMatrix::zeros(rows, cols);
    for j in 0..cols {
        for i in 0..rows {
            let g: f64 = rng.sample(StandardNormal);
            m[(i, j)] = T::from_real(g);
        }
    }
    m
}

fn seeded_gaussian_vector<T: Scalar>(n: usize, seed: u64) -> DVector<T> {
    let m = seeded_gaussian_block::<T>(n, 1, seed);
    DVector::from_column_slice(m.column(0).as_slice())
}

/// Rademacher (+-1) block, seeded; used by the stochastic eigenvalue counter.
pub fn seeded_rademacher_block<T: Scalar>(rows: usize, cols: usize, seed: u64) -> DMatrix<T> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut m = DMatrix::zeros(rows, cols);
    for j in 0..cols {
        for i in 0..rows {
            let bit: bool = rng.random();
            m[(i, j)] = T::from_real(if bit { 1.0 } else { -1.0 });
        }
    }
    m
}
