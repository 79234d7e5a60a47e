//! Synthetic Hermitian operators with prescribed spectra: `A = Q diag Q^T`
//! with a seeded random orthogonal basis. The exact eigenpairs serve as the
//! ground truth for deviation measurements and acceptance oracles.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use chebslice::matrix::{dense_qr, seeded_gaussian_block, DenseHermitian, SpectralBounds};

/// Dense-construction size limit.
pub const MAX_SYNTHETIC_DIM: usize = 5000;

/// Eigenvalue layout of a synthetic operator.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EigenvalueSpec {
    /// Explicit list (sorted internally).
    Explicit { values: Vec<f64> },
    /// Piecewise uniform segments, e.g. dense shoulders around a sparse
    /// window zone. Counts must sum to the matrix dimension.
    Segments { segments: Vec<Segment> },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Segment {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

/// Serializable description of a synthetic problem.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n: usize,
    pub eigenvalues: EigenvalueSpec,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn eigenvalue_list(&self) -> Result<Vec<f64>, String> {
        let mut vals = match &self.eigenvalues {
            EigenvalueSpec::Explicit { values } => values.clone(),
            EigenvalueSpec::Segments { segments } => {
                let mut v = Vec::new();
                for s in segments {
                    if s.count == 0 {
                        continue;
                    }
                    if s.count == 1 {
                        v.push(s.lo);
                        continue;
                    }
                    for k in 0..s.count {
                        v.push(s.lo + (s.hi - s.lo) * k as f64 / (s.count - 1) as f64);
                    }
                }
                v
            }
        };
        if vals.len() != self.n {
            return Err(format!(
                "eigenvalue spec yields {} values for dimension {}",
                vals.len(),
                self.n
            ));
        }
        vals.sort_by(|a, b| a.partial_cmp(b).expect("finite eigenvalues"));
        Ok(vals)
    }
}

/// A generated operator together with its exact eigen-decomposition.
pub struct SyntheticMatrix {
    pub op: DenseHermitian<f64>,
    /// Orthonormal eigenvectors, columns aligned with `eigenvalues`.
    pub eigenvectors: DMatrix<f64>,
    /// Ascending.
    pub eigenvalues: Vec<f64>,
}

impl SyntheticMatrix {
    /// Exact spectrum enclosure.
    pub fn exact_bounds(&self) -> SpectralBounds {
        SpectralBounds::exact(
            self.eigenvalues[0],
            self.eigenvalues[self.eigenvalues.len() - 1],
        )
    }

    /// Eigenvalue count in the closed window.
    pub fn count_in_window(&self, a: f64, b: f64) -> usize {
        self.eigenvalues
            .iter()
            .filter(|&&l| a <= l && l <= b)
            .count()
    }

    /// Exact eigenvectors of the window, as an orthonormal block.
    pub fn window_eigenvectors(&self, a: f64, b: f64) -> DMatrix<f64> {
        let idx: Vec<usize> = (0..self.eigenvalues.len())
            .filter(|&i| a <= self.eigenvalues[i] && self.eigenvalues[i] <= b)
            .collect();
        let mut x = DMatrix::zeros(self.eigenvectors.nrows(), idx.len());
        for (c, &i) in idx.iter().enumerate() {
            x.column_mut(c).copy_from(&self.eigenvectors.column(i));
        }
        x
    }
}

/// Build `A = Q diag(lambda) Q^T` with a seeded random orthogonal `Q`
/// (QR of a standard-normal matrix, sign-fixed so the factorization is
/// deterministic and canonical).
pub fn synthetic_spectrum(spec: &SyntheticSpec) -> Result<SyntheticMatrix, String> {
    if spec.n == 0 || spec.n > MAX_SYNTHETIC_DIM {
        return Err(format!(
            "synthetic dimension must be in 1..={MAX_SYNTHETIC_DIM}, got {}",
            spec.n
        ));
    }
    let lambda = spec.eigenvalue_list()?;
    let g = seeded_gaussian_block::<f64>(spec.n, spec.n, spec.seed);
    let (mut q, r) = dense_qr(&g);
    for j in 0..spec.n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    // Q diag Q^T assembled via a scaled copy to keep it O(n^2) + one GEMM.
    let mut scaled = q.clone();
    for (j, &l) in lambda.iter().enumerate() {
        scaled.column_mut(j).scale_mut(l);
    }
    let dense = &scaled * q.transpose();
    let op = DenseHermitian::new(dense).map_err(|e| e.to_string())?;
    Ok(SyntheticMatrix {
        op,
        eigenvectors: q,
        eigenvalues: lambda,
    })
}

// ---------------------------------------------------------------------------
// Fast-transform operator
// ---------------------------------------------------------------------------

/// Hermitian operator `A = H diag(lambda) H^T / n` where `H` is the
/// Walsh-Hadamard matrix. Block products cost `O(n log n)` per column, so
/// spectra with tens of thousands of eigenvalues stay affordable; the
/// eigenvectors are the (normalized) Hadamard columns and are known exactly.
pub struct WalshHermitian {
    lambda: Vec<f64>,
    norm_one: f64,
}

impl WalshHermitian {
    /// `n = lambda.len()` must be a power of two. The induced norms are
    /// computed exactly from the matrix entries (one transform of `lambda`).
    pub fn new(lambda: Vec<f64>) -> Result<Self, String> {
        let n = lambda.len();
        if n == 0 || n & (n - 1) != 0 {
            return Err(format!("dimension {n} is not a power of two"));
        }
        // Row i of A has entries (H diag H^T / n)_{ij}; by the transform
        // structure every row is a signed permutation of the same multiset,
        // so ||A||_1 = ||A||_inf = max_j sum_i |a_ij| over one transform.
        let mut row = lambda.clone();
        fwht(&mut row);
        let norm_one = row.iter().map(|v| v.abs()).sum::<f64>() / n as f64;
        Ok(Self { lambda, norm_one })
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.lambda
    }

    /// Exact unit eigenvector for eigenvalue index `k`: the k-th Hadamard
    /// column scaled by `1/sqrt(n)`.
    pub fn eigenvector(&self, k: usize) -> DVector<f64> {
        let n = self.lambda.len();
        let mut e = DVector::zeros(n);
        e[k] = 1.0;
        let mut col = e.as_mut_slice().to_vec();
        fwht(&mut col);
        DVector::from_vec(col).unscale((n as f64).sqrt())
    }

    pub fn eigenvector_block(&self, indices: &[usize]) -> DMatrix<f64> {
        let n = self.lambda.len();
        let mut x = DMatrix::zeros(n, indices.len());
        for (c, &k) in indices.iter().enumerate() {
            x.column_mut(c).copy_from(&self.eigenvector(k));
        }
        x
    }
}

/// In-place Walsh-Hadamard transform (unnormalized).
fn fwht(data: &mut [f64]) {
    let n = data.len();
    let mut h = 1;
    while h < n {
        let step = 2 * h;
        for block in (0..n).step_by(step) {
            for i in block..block + h {
                let (a, b) = (data[i], data[i + h]);
                data[i] = a + b;
                data[i + h] = a - b;
            }
        }
        h = step;
    }
}

use nalgebra::DVector;

impl chebslice::matrix::HermitianOp<f64> for WalshHermitian {
    fn dim(&self) -> usize {
        self.lambda.len()
    }

    fn apply_block_to(&self, x: &DMatrix<f64>, y: &mut DMatrix<f64>) {
        let n = self.lambda.len();
        assert_eq!(
            x.nrows(),
            n,
            "block row count must match operator dimension"
        );
        let scale = 1.0 / n as f64;
        let mut buf = vec![0.0_f64; n];
        for c in 0..x.ncols() {
            buf.copy_from_slice(x.column(c).as_slice());
            fwht(&mut buf);
            for (b, l) in buf.iter_mut().zip(self.lambda.iter()) {
                *b *= l;
            }
            fwht(&mut buf);
            for (i, b) in buf.iter().enumerate() {
                y[(i, c)] = b * scale;
            }
        }
    }

    fn norm_one(&self) -> f64 {
        self.norm_one
    }

    fn norm_inf(&self) -> f64 {
        self.norm_one
    }
}
