//! Chebyshev-Jackson filter construction and the filtered moment block.
//!
//! The filter approximates `p_k(t) * h(t)` where `h` is the indicator of the
//! mapped window and `p_k` are Chebyshev polynomials shifted and scaled to
//! that window. All `M` coefficient rows are built at once and the moment
//! block `S = (S_0, ..., S_{M-1})` is accumulated in a single pass of the
//! three-term recurrence, so building `S` costs exactly `d` block products.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{dense_qr, mat_axpy, HermitianOp, Scalar, SpectralBounds};

/// Spectral window in original coordinates together with its image in the
/// mapped `[-1, 1]` coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub a: f64,
    pub b: f64,
    pub a_m: f64,
    pub b_m: f64,
}

impl Window {
    /// Width of the mapped window.
    pub fn mapped_width(&self) -> f64 {
        self.b_m - self.a_m
    }

    /// Closed-interval membership test in original coordinates.
    pub fn contains(&self, lambda: f64) -> bool {
        self.a <= lambda && lambda <= self.b
    }

    /// The whole-spectrum window; its filter is identically one.
    pub fn full(bounds: &SpectralBounds) -> Self {
        Self {
            a: bounds.lambda_min_est,
            b: bounds.lambda_max_est,
            a_m: -1.0,
            b_m: 1.0,
        }
    }
}

/// Affine spectrum map `l(t) = (2t - max - min) / (max - min)` evaluated at
/// the window endpoints. Fails when `[a, b]` is not inside the estimated
/// bounds or the bounds are degenerate.
pub fn map_window(bounds: &SpectralBounds, a: f64, b: f64) -> Result<Window> {
    if bounds.is_degenerate() {
        return Err(Error::DegenerateBounds {
            lo: bounds.lambda_min_est,
            hi: bounds.lambda_max_est,
        });
    }
    if !(a < b) {
        return Err(Error::InvalidParameter(format!(
            "window endpoints must satisfy a < b, got [{a}, {b}]"
        )));
    }
    if a < bounds.lambda_min_est || b > bounds.lambda_max_est {
        return Err(Error::WindowOutsideBounds {
            a,
            b,
            lo: bounds.lambda_min_est,
            hi: bounds.lambda_max_est,
        });
    }
    let l = |t: f64| (2.0 * t - bounds.lambda_max_est - bounds.lambda_min_est) / bounds.spread();
    Ok(Window {
        a,
        b,
        a_m: l(a).clamp(-1.0, 1.0),
        b_m: l(b).clamp(-1.0, 1.0),
    })
}

/// Jackson damping factors `rho_{j,d}` for `j = 0..=d`.
///
/// `rho[0] = 1` by the formula and the sequence trends to
/// `2 sin^2(alpha_d) / (d + 2)` at `j = d`.
pub fn jackson_factors(d: usize) -> Vec<f64> {
    assert!(d >= 1, "jackson_factors needs degree >= 1");
    let alpha = std::f64::consts::PI / (d as f64 + 2.0);
    let sin_alpha = alpha.sin();
    (0..=d)
        .map(|j| {
            let jf = j as f64;
            ((jf + 1.0) * alpha).sin() / ((d as f64 + 2.0) * sin_alpha)
                + (1.0 - (jf + 1.0) / (d as f64 + 2.0)) * (jf * alpha).cos()
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Coefficient quadrature
// ---------------------------------------------------------------------------

/// Change of coefficient tables accepted when doubling the panel count.
const QUAD_DOUBLING_TOL: f64 = 1e-13;
/// Hard cap on total quadrature nodes.
const QUAD_NODE_CAP: usize = 1 << 20;
/// Gauss-Legendre order per panel.
const GL_ORDER: usize = 32;

/// Gauss-Legendre nodes and weights on `[-1, 1]`, by Newton iteration on the
/// Legendre recurrence.
fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    let n = order;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            // Legendre P_n(x) and its derivative via the three-term recurrence.
            let (mut p0, mut p1) = (1.0_f64, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let dp = (n as f64) * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (mut p0, mut p1) = (1.0_f64, x);
        for k in 2..=n {
            let kf = k as f64;
            let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
            p0 = p1;
            p1 = p2;
        }
        let dp = (n as f64) * (x * p1 - p0) / (x * x - 1.0);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// One composite-quadrature evaluation of the full coefficient table.
fn coefficient_table(
    window: &Window,
    moments: usize,
    degree: usize,
    panels: usize,
) -> Vec<Vec<f64>> {
    let theta_a = window.a_m.acos(); // larger angle
    let theta_b = window.b_m.acos(); // smaller angle
    let (gl_x, gl_w) = gauss_legendre(GL_ORDER);

    let mut table = vec![vec![0.0_f64; degree + 1]; moments];
    let width = window.b_m - window.a_m;
    let mut tk = vec![0.0_f64; moments.max(2)];
    let mut cj = vec![0.0_f64; degree + 1];

    for p in 0..panels {
        let lo = theta_b + (theta_a - theta_b) * (p as f64) / (panels as f64);
        let hi = theta_b + (theta_a - theta_b) * ((p + 1) as f64) / (panels as f64);
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        for (&x, &w) in gl_x.iter().zip(gl_w.iter()) {
            let theta = mid + half * x;
            let weight = w * half;
            let t = theta.cos();

            // p_k(t) = T_k((2t - a_m - b_m) / (b_m - a_m)) by recurrence.
            let y = if width > 0.0 {
                ((2.0 * t - window.a_m - window.b_m) / width).clamp(-1.0, 1.0)
            } else {
                0.0
            };
            tk[0] = 1.0;
            if moments > 1 {
                tk[1] = y;
                for k in 2..moments {
                    tk[k] = 2.0 * y * tk[k - 1] - tk[k - 2];
                }
            }

            // cos(j * theta) = T_j(cos theta) by recurrence.
            cj[0] = 1.0;
            if degree >= 1 {
                cj[1] = t;
                for j in 2..=degree {
                    cj[j] = 2.0 * t * cj[j - 1] - cj[j - 2];
                }
            }

            for k in 0..moments {
                let f = weight * tk[k];
                let row = &mut table[k];
                for (c, t_j) in row.iter_mut().zip(cj.iter()) {
                    *c += f * t_j;
                }
            }
        }
    }

    let scale = 2.0 / std::f64::consts::PI;
    for row in &mut table {
        for c in row.iter_mut() {
            *c *= scale;
        }
    }
    table
}

/// Chebyshev expansion coefficients `c_j^(k)` of `p_k * h` over the mapped
/// window, `k = 0..moments`, `j = 0..=degree`.
///
/// The endpoint singularity `1 / sqrt(1 - t^2)` is removed by the `t = cos
/// theta` substitution; composite Gauss-Legendre panels in `theta` are
/// doubled until no coefficient moves by more than `1e-13`.
pub fn chebyshev_coefficients(
    window: &Window,
    moments: usize,
    degree: usize,
) -> Result<Vec<Vec<f64>>> {
    if moments < 1 {
        return Err(Error::InvalidParameter("moment count must be >= 1".into()));
    }
    if degree + 1 < moments {
        return Err(Error::InvalidParameter(format!(
            "series degree {degree} must be >= moments - 1 = {}",
            moments - 1
        )));
    }
    if !(window.a_m < window.b_m) {
        return Err(Error::InvalidParameter(format!(
            "mapped window [{}, {}] is empty",
            window.a_m, window.b_m
        )));
    }

    let theta_span = window.a_m.acos() - window.b_m.acos();
    // Resolve every oscillation of cos(d * theta) with a few nodes per period
    // before the first doubling check.
    let oscillations =
        (degree as f64) * theta_span / (2.0 * std::f64::consts::PI) + 0.5 * (moments as f64);
    let mut panels = ((oscillations * 4.0 / GL_ORDER as f64).ceil() as usize).max(1);

    let mut coarse = coefficient_table(window, moments, degree, panels);
    loop {
        if 2 * panels * GL_ORDER > QUAD_NODE_CAP {
            let worst = worst_delta(&coarse, &coarse);
            return Err(Error::QuadratureNotConverged {
                worst_delta: worst,
                nodes: panels * GL_ORDER,
                cap: QUAD_NODE_CAP,
            });
        }
        let fine = coefficient_table(window, moments, degree, 2 * panels);
        let delta = worst_delta(&coarse, &fine);
        if delta <= QUAD_DOUBLING_TOL {
            return Ok(fine);
        }
        panels *= 2;
        coarse = fine;
    }
}

fn worst_delta(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let mut worst = 0.0_f64;
    for (ra, rb) in a.iter().zip(b.iter()) {
        for (&x, &y) in ra.iter().zip(rb.iter()) {
            worst = worst.max((x - y).abs());
        }
    }
    worst
}

// ---------------------------------------------------------------------------
// Filter plan
// ---------------------------------------------------------------------------

/// Degree, damping factors and the full coefficient table for one window.
/// Serializable so a plan can be cached between runs on the same window.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FilterPlan {
    pub window: Window,
    pub degree: usize,
    pub moments: usize,
    pub rho: Vec<f64>,
    pub coeff: Vec<Vec<f64>>,
}

impl FilterPlan {
    pub fn build(window: Window, moments: usize, degree: usize) -> Result<Self> {
        if degree < 1 {
            return Err(Error::InvalidParameter("series degree must be >= 1".into()));
        }
        let coeff = chebyshev_coefficients(&window, moments, degree)?;
        Ok(Self {
            window,
            degree,
            moments,
            rho: jackson_factors(degree),
            coeff,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s)
            .map_err(|e| Error::InvalidParameter(format!("cannot parse filter plan: {e}")))
    }
}

/// Evaluate the damped series for moment row `k` at mapped coordinate `t` by
/// the Clenshaw recurrence. This is the scalar oracle for the block
/// recurrence in [`build_moments`].
pub fn scalar_filter_eval(plan: &FilterPlan, k: usize, t: f64) -> f64 {
    assert!(k < plan.moments, "moment index {k} out of range");
    let row = &plan.coeff[k];
    let d = plan.degree;
    let (mut b1, mut b2) = (0.0_f64, 0.0_f64);
    for j in (1..=d).rev() {
        let e = plan.rho[j] * row[j];
        let b = 2.0 * t * b1 - b2 + e;
        b2 = b1;
        b1 = b;
    }
    0.5 * row[0] + t * b1 - b2
}

/// Practical series-degree estimate
/// `d = ceil(D pi^2 / w^(4/3) + pi^2 (M-1)^2 / (K^2 w)) - 2`, floored at 3,
/// where `w` is the mapped window width.
pub fn degree_heuristic(
    window: &Window,
    moments: usize,
    d_factor: f64,
    k_factor: f64,
) -> Result<usize> {
    if !(1.0..=8.0).contains(&d_factor) {
        return Err(Error::InvalidParameter(format!(
            "D must be in [1, 8], got {d_factor}"
        )));
    }
    if !(1.0..=10.0).contains(&k_factor) {
        return Err(Error::InvalidParameter(format!(
            "K must be in [1, 10], got {k_factor}"
        )));
    }
    let w = window.mapped_width();
    if !(w > 0.0) {
        return Err(Error::InvalidParameter(
            "mapped window width must be positive".into(),
        ));
    }
    let pi2 = std::f64::consts::PI * std::f64::consts::PI;
    let m1 = (moments as f64) - 1.0;
    let raw = d_factor * pi2 / w.powf(4.0 / 3.0) + pi2 * m1 * m1 / (k_factor * k_factor * w);
    let d = (raw.ceil() as i64) - 2;
    Ok(d.max(3) as usize)
}

// ---------------------------------------------------------------------------
// Moment block
// ---------------------------------------------------------------------------

/// The filtered block `S = (S_0, ..., S_{M-1})` and its orthonormal QR factors.
#[derive(Debug, Clone)]
pub struct MomentBlock<T: Scalar> {
    /// Raw moment block, `n x (M * ell)`.
    pub s: DMatrix<T>,
    /// Starting-block width.
    pub ell: usize,
    /// Orthonormal basis of the search subspace.
    pub u: DMatrix<T>,
    /// Upper-triangular factor with `s = u * r`.
    pub r: DMatrix<T>,
    /// Column indices whose R-diagonal fell below `1e-14 * ||S||`; loss of
    /// rank is recorded, not fatal.
    pub rank_warnings: Vec<usize>,
}

impl<T: Scalar> MomentBlock<T> {
    pub fn subspace_dim(&self) -> usize {
        self.s.ncols()
    }

    /// The next starting block: the first `ell` columns of `S`, i.e. `S_0`.
    pub fn restart_block(&self) -> DMatrix<T> {
        self.s.columns(0, self.ell).into_owned()
    }
}

/// Build all moment blocks in one pass of the Chebyshev recurrence
/// `W_0 = V`, `W_1 = A_m V`, `W_{j+1} = 2 A_m W_j - W_{j-1}`, accumulating
/// `S_k += rho_j c_j^(k) W_j`. Costs exactly `degree` block products. The
/// mapped operator `A_m = l(A)` is applied implicitly through the spectrum
/// bounds.
pub fn build_moments<T: Scalar>(
    a: &dyn HermitianOp<T>,
    bounds: &SpectralBounds,
    v: &DMatrix<T>,
    plan: &FilterPlan,
) -> Result<MomentBlock<T>> {
    let n = a.dim();
    let ell = v.ncols();
    let m = plan.moments;
    if v.nrows() != n {
        return Err(Error::DimensionMismatch(format!(
            "starting block has {} rows, operator dimension is {n}",
            v.nrows()
        )));
    }
    if m * ell > n {
        return Err(Error::InvalidParameter(format!(
            "subspace dimension M*ell = {} exceeds operator dimension {n}",
            m * ell
        )));
    }
    if bounds.is_degenerate() {
        return Err(Error::DegenerateBounds {
            lo: bounds.lambda_min_est,
            hi: bounds.lambda_max_est,
        });
    }

    let sigma = 0.5 * (bounds.lambda_max_est + bounds.lambda_min_est);
    let tau = 0.5 * bounds.spread();
    // y = (A x - sigma x) / tau, one block product per call.
    let apply_mapped = |x: &DMatrix<T>, y: &mut DMatrix<T>| {
        a.apply_block_to(x, y);
        mat_axpy(y, T::from_real(-sigma), x);
        y.unscale_mut(tau);
    };

    let mut s_blocks: Vec<DMatrix<T>> = (0..m).map(|k| v.scale(0.5 * plan.coeff[k][0])).collect();

    if plan.degree >= 1 {
        let mut w_prev = v.clone();
        let mut w_curr = DMatrix::zeros(n, ell);
        apply_mapped(v, &mut w_curr);
        for (k, s_k) in s_blocks.iter_mut().enumerate() {
            mat_axpy(s_k, T::from_real(plan.rho[1] * plan.coeff[k][1]), &w_curr);
        }
        let mut w_next = DMatrix::zeros(n, ell);
        for j in 2..=plan.degree {
            apply_mapped(&w_curr, &mut w_next);
            w_next.scale_mut(2.0);
            mat_axpy(&mut w_next, -T::one(), &w_prev);
            for (k, s_k) in s_blocks.iter_mut().enumerate() {
                mat_axpy(s_k, T::from_real(plan.rho[j] * plan.coeff[k][j]), &w_next);
            }
            std::mem::swap(&mut w_prev, &mut w_curr);
            std::mem::swap(&mut w_curr, &mut w_next);
        }
    }

    let mut s = DMatrix::zeros(n, m * ell);
    for (k, s_k) in s_blocks.into_iter().enumerate() {
        s.columns_mut(k * ell, ell).copy_from(&s_k);
    }

    let (u, r) = dense_qr(&s);
    let s_norm = s.norm();
    let rank_warnings: Vec<usize> = (0..r.ncols())
        .filter(|&i| r[(i, i)].modulus() < 1e-14 * s_norm)
        .collect();

    Ok(MomentBlock {
        s,
        ell,
        u,
        r,
        rank_warnings,
    })
}

// ---------------------------------------------------------------------------
// Eigenvalue counting
// ---------------------------------------------------------------------------

/// Stochastic estimate of the eigenvalue count inside a window.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EigencountEstimate {
    pub mean: f64,
    pub rounded: usize,
    pub std_error: f64,
}

/// Hutchinson trace estimator for `F_d(1)(A_m)`: the mean of `z^H F z` over
/// seeded Rademacher probes. The `k = 0` coefficient row is used, i.e. the
/// plain window indicator filter.
pub fn estimate_eigencount<T: Scalar>(
    a: &dyn HermitianOp<T>,
    bounds: &SpectralBounds,
    window: &Window,
    degree: usize,
    samples: usize,
    seed: u64,
) -> Result<EigencountEstimate> {
    if samples < 10 {
        return Err(Error::InvalidParameter(format!(
            "eigencount estimation needs samples >= 10, got {samples}"
        )));
    }
    let plan = FilterPlan::build(*window, 1, degree)?;
    let n = a.dim();
    if bounds.is_degenerate() {
        return Err(Error::DegenerateBounds {
            lo: bounds.lambda_min_est,
            hi: bounds.lambda_max_est,
        });
    }
    let sigma = 0.5 * (bounds.lambda_max_est + bounds.lambda_min_est);
    let tau = 0.5 * bounds.spread();
    let apply_mapped = |x: &DMatrix<T>, y: &mut DMatrix<T>| {
        a.apply_block_to(x, y);
        mat_axpy(y, T::from_real(-sigma), x);
        y.unscale_mut(tau);
    };

    let z = seeded_rademacher(n, samples, seed);
    let row = &plan.coeff[0];

    // Accumulate z_s^H F z_s column by column while running the recurrence.
    let mut quad = vec![0.0_f64; samples];
    let add_terms = |quad: &mut [f64], w: &DMatrix<T>, z: &DMatrix<T>, c: f64| {
        for (sq, (zc, wc)) in quad.iter_mut().zip(z.column_iter().zip(w.column_iter())) {
            *sq += c * zc.dotc(&wc).real();
        }
    };

    add_terms(&mut quad, &z, &z, 0.5 * row[0]);
    if degree >= 1 {
        let mut w_prev = z.clone();
        let mut w_curr = DMatrix::zeros(n, samples);
        apply_mapped(&z, &mut w_curr);
        add_terms(&mut quad, &w_curr, &z, plan.rho[1] * row[1]);
        let mut w_next = DMatrix::zeros(n, samples);
        for j in 2..=degree {
            apply_mapped(&w_curr, &mut w_next);
            w_next.scale_mut(2.0);
            mat_axpy(&mut w_next, -T::one(), &w_prev);
            add_terms(&mut quad, &w_next, &z, plan.rho[j] * row[j]);
            std::mem::swap(&mut w_prev, &mut w_curr);
            std::mem::swap(&mut w_curr, &mut w_next);
        }
    }

    let mean = quad.iter().sum::<f64>() / samples as f64;
    let var = quad.iter().map(|q| (q - mean) * (q - mean)).sum::<f64>() / (samples as f64 - 1.0);
    let std_error = (var / samples as f64).sqrt();
    Ok(EigencountEstimate {
        mean,
        rounded: mean.round().max(0.0) as usize,
        std_error,
    })
}

fn seeded_rademacher<T: Scalar>(n: usize, samples: usize, seed: u64) -> DMatrix<T> {
    crate::matrix::seeded_rademacher_block(n, samples, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{seeded_gaussian_block, SparseHermitian};
    use approx::assert_relative_eq;

    fn bounds_unit() -> SpectralBounds {
        SpectralBounds::exact(-1.0, 1.0)
    }

    #[test]
    fn map_window_identity_on_unit_bounds() {
        let w = map_window(&bounds_unit(), -0.5, 0.5).unwrap();
        assert_relative_eq!(w.a_m, -0.5, epsilon = 1e-15);
        assert_relative_eq!(w.b_m, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn map_window_hand_evaluated() {
        let b = SpectralBounds::exact(0.0, 4.0);
        let w = map_window(&b, 1.0, 3.0).unwrap();
        assert_relative_eq!(w.a_m, -0.5, epsilon = 1e-15);
        assert_relative_eq!(w.b_m, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn map_window_outside_bounds_errors() {
        let b = SpectralBounds::exact(0.0, 4.0);
        assert!(matches!(
            map_window(&b, -1.0, 3.0),
            Err(Error::WindowOutsideBounds { .. })
        ));
    }

    #[test]
    fn jackson_rho0_is_one() {
        for d in [1usize, 2, 5, 17, 100] {
            let rho = jackson_factors(d);
            assert_relative_eq!(rho[0], 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn jackson_d2_middle_value() {
        // alpha = pi/4: rho_1 = sin(pi/2)/(4 sin(pi/4)) + (1/2) cos(pi/4) = sqrt(2)/2.
        let rho = jackson_factors(2);
        assert_relative_eq!(rho[1], std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-14);
    }

    #[test]
    fn jackson_last_value_identity() {
        // sin((d+1) alpha) = sin(alpha) gives rho_d = 2 sin^2(alpha) / (d+2).
        for d in [1usize, 3, 8, 33] {
            let rho = jackson_factors(d);
            let alpha = std::f64::consts::PI / (d as f64 + 2.0);
            let expect = 2.0 * alpha.sin().powi(2) / (d as f64 + 2.0);
            assert_relative_eq!(rho[d], expect, epsilon = 1e-14);
        }
    }

    fn closed_form_row0(window: &Window, degree: usize) -> Vec<f64> {
        let theta_a = window.a_m.acos();
        let theta_b = window.b_m.acos();
        let mut row = vec![0.0; degree + 1];
        row[0] = 2.0 / std::f64::consts::PI * (theta_a - theta_b);
        for j in 1..=degree {
            let jf = j as f64;
            row[j] =
                2.0 / (jf * std::f64::consts::PI) * ((jf * theta_a).sin() - (jf * theta_b).sin());
        }
        row
    }

    #[test]
    fn quadrature_matches_closed_form_row0() {
        let b = bounds_unit();
        for (lo, hi, d) in [(-0.5, 0.5, 40), (0.1, 0.7, 80), (-0.9, -0.3, 60)] {
            let w = map_window(&b, lo, hi).unwrap();
            let coeff = chebyshev_coefficients(&w, 3, d).unwrap();
            let oracle = closed_form_row0(&w, d);
            for j in 0..=d {
                assert!(
                    (coeff[0][j] - oracle[j]).abs() <= 1e-12,
                    "j={j}: {} vs {}",
                    coeff[0][j],
                    oracle[j]
                );
            }
        }
    }

    #[test]
    fn symmetric_window_odd_coefficients_vanish() {
        let w = map_window(&bounds_unit(), -0.4, 0.4).unwrap();
        let coeff = chebyshev_coefficients(&w, 1, 50).unwrap();
        for j in (1..=50).step_by(2) {
            assert!(
                coeff[0][j].abs() <= 1e-13,
                "odd coefficient {j} = {}",
                coeff[0][j]
            );
        }
    }

    #[test]
    fn full_window_filter_is_one() {
        let w = Window::full(&bounds_unit());
        let plan = FilterPlan::build(w, 1, 30).unwrap();
        assert_relative_eq!(plan.coeff[0][0], 2.0, epsilon = 1e-13);
        for j in 1..=30 {
            assert!(plan.coeff[0][j].abs() <= 1e-13);
        }
        for &t in &[-0.99, -0.4, 0.0, 0.7, 1.0] {
            assert_relative_eq!(scalar_filter_eval(&plan, 0, t), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn degree_heuristic_hand_evaluated() {
        // w = 0.1, D = 2, K = 5, M = 8 gives d = 617.
        let w = Window {
            a: 0.0,
            b: 0.1,
            a_m: 0.0,
            b_m: 0.1,
        };
        assert_eq!(degree_heuristic(&w, 8, 2.0, 5.0).unwrap(), 617);
    }

    #[test]
    fn degree_heuristic_single_moment_reduces() {
        let w = Window {
            a: 0.0,
            b: 0.25,
            a_m: 0.0,
            b_m: 0.25,
        };
        let pi2 = std::f64::consts::PI * std::f64::consts::PI;
        let expect = ((pi2 / 0.25_f64.powf(4.0 / 3.0)).ceil() as i64 - 2).max(3) as usize;
        assert_eq!(degree_heuristic(&w, 1, 1.0, 5.0).unwrap(), expect);
    }

    #[test]
    fn degree_heuristic_clamps_at_three() {
        let w = Window {
            a: -0.95,
            b: 0.95,
            a_m: -0.95,
            b_m: 0.95,
        };
        assert_eq!(degree_heuristic(&w, 1, 1.0, 10.0).unwrap(), 3);
    }

    #[test]
    fn filter_value_at_midpoint_and_far_field() {
        let b = bounds_unit();
        let w = map_window(&b, -0.05, 0.05).unwrap();
        let d = degree_heuristic(&w, 1, 2.0, 5.0).unwrap();
        let plan = FilterPlan::build(w, 1, d).unwrap();
        let mid = scalar_filter_eval(&plan, 0, 0.0);
        assert!((0.5..=1.0 + 1e-10).contains(&mid), "midpoint value {mid}");
        for &t in &[-0.9, -0.6, 0.6, 0.9] {
            let v = scalar_filter_eval(&plan, 0, t);
            assert!(v.abs() <= 0.05, "far-field value {v} at {t}");
        }
    }

    #[test]
    fn filter_bounded_on_grid() {
        let b = bounds_unit();
        let w = map_window(&b, 0.2, 0.55).unwrap();
        let d = degree_heuristic(&w, 1, 2.0, 5.0).unwrap();
        let plan = FilterPlan::build(w, 1, d).unwrap();
        for i in 0..=2000 {
            let t = -1.0 + 2.0 * (i as f64) / 2000.0;
            let v = scalar_filter_eval(&plan, 0, t);
            assert!((-1e-10..=1.0 + 1e-10).contains(&v), "value {v} at {t}");
        }
    }

    #[test]
    fn filter_error_nonincreasing_under_degree_doubling() {
        // Away from the window edges the series error against the indicator
        // shrinks monotonically as the degree doubles.
        let b = bounds_unit();
        let w = map_window(&b, -0.1, 0.3).unwrap();
        let width = w.mapped_width();
        let h = |t: f64| {
            if t > w.a_m && t < w.b_m {
                1.0
            } else if t == w.a_m || t == w.b_m {
                0.5
            } else {
                0.0
            }
        };
        let max_err = |d: usize| {
            let plan = FilterPlan::build(w, 1, d).unwrap();
            let mut worst = 0.0_f64;
            for i in 0..=2000 {
                let t = -1.0 + 2.0 * i as f64 / 2000.0;
                if (t - w.a_m).abs() < width / 10.0 || (t - w.b_m).abs() < width / 10.0 {
                    continue;
                }
                worst = worst.max((scalar_filter_eval(&plan, 0, t) - h(t)).abs());
            }
            worst
        };
        let errs: Vec<f64> = [40usize, 80, 160, 320]
            .iter()
            .map(|&d| max_err(d))
            .collect();
        for pair in errs.windows(2) {
            assert!(pair[1] <= pair[0], "errors must not increase: {errs:?}");
        }
    }

    #[test]
    fn plan_json_roundtrip() {
        let w = map_window(&bounds_unit(), -0.3, 0.2).unwrap();
        let plan = FilterPlan::build(w, 2, 25).unwrap();
        let back = FilterPlan::from_json(&plan.to_json()).unwrap();
        assert_eq!(plan.degree, back.degree);
        assert_eq!(plan.coeff, back.coeff);
        assert_eq!(plan.rho, back.rho);
    }

    #[test]
    fn moments_diagonal_matches_scalar_oracle() {
        let diag: Vec<f64> = (0..12).map(|i| -1.0 + 2.0 * (i as f64) / 11.0).collect();
        let a = SparseHermitian::<f64>::from_diagonal(&diag);
        let bounds = bounds_unit();
        let w = map_window(&bounds, -0.4, 0.3).unwrap();
        let plan = FilterPlan::build(w, 2, 60).unwrap();
        let v = DMatrix::<f64>::identity(12, 12).columns(0, 6).into_owned();
        let mb = build_moments(&a, &bounds, &v, &plan).unwrap();
        for i in 0..6 {
            let expect = scalar_filter_eval(&plan, 0, diag[i]);
            for r in 0..12 {
                let want = if r == i { expect } else { 0.0 };
                assert!((mb.s[(r, i)] - want).abs() <= 1e-12, "entry ({r}, {i})");
            }
        }
    }

    #[test]
    fn moments_full_window_is_identity_filter() {
        let diag: Vec<f64> = (0..10).map(|i| i as f64 / 9.0).collect();
        let a = SparseHermitian::<f64>::from_diagonal(&diag);
        let bounds = SpectralBounds::exact(0.0, 1.0);
        let w = Window::full(&bounds);
        let plan = FilterPlan::build(w, 1, 20).unwrap();
        let v = seeded_gaussian_block::<f64>(10, 3, 2);
        let mb = build_moments(&a, &bounds, &v, &plan).unwrap();
        assert!((&mb.s - &v).norm() <= 1e-12 * v.norm());
    }

    #[test]
    fn moments_match_dense_eigendecomposition_oracle() {
        let g = seeded_gaussian_block::<f64>(100, 100, 15);
        let dense = (&g + g.transpose()).scale(0.5);
        let a = SparseHermitian::from_dense(&dense).unwrap();
        let (lam, x) = crate::matrix::hermitian_eig(&dense);
        let bounds = SpectralBounds::exact(lam[0], lam[99]);
        let w = map_window(&bounds, lam[40], lam[60]).unwrap();
        let plan = FilterPlan::build(w, 3, 80).unwrap();
        let v = seeded_gaussian_block::<f64>(100, 4, 3);

        let mb = build_moments(&a, &bounds, &v, &plan).unwrap();

        let l =
            |t: f64| (2.0 * t - bounds.lambda_max_est - bounds.lambda_min_est) / bounds.spread();
        for k in 0..3 {
            let fvals: Vec<f64> = lam
                .iter()
                .map(|&t| scalar_filter_eval(&plan, k, l(t)))
                .collect();
            let xv = x.ad_mul(&v);
            let mut fx = xv.clone();
            for (i, f) in fvals.iter().enumerate() {
                fx.row_mut(i).scale_mut(*f);
            }
            let oracle = &x * fx;
            let got = mb.s.columns(k * 4, 4);
            assert!(
                (got - &oracle).norm() <= 1e-10 * oracle.norm().max(1.0),
                "moment {k} mismatch"
            );
        }
    }

    #[test]
    fn moment_block_qr_consistency() {
        let diag: Vec<f64> = (0..40).map(|i| i as f64 / 39.0).collect();
        let a = SparseHermitian::<f64>::from_diagonal(&diag);
        let bounds = SpectralBounds::exact(0.0, 1.0);
        let w = map_window(&bounds, 0.3, 0.6).unwrap();
        let plan = FilterPlan::build(w, 2, 40).unwrap();
        let v = seeded_gaussian_block::<f64>(40, 3, 8);
        let mb = build_moments(&a, &bounds, &v, &plan).unwrap();
        assert!((&mb.u * &mb.r - &mb.s).norm() <= 1e-12 * mb.s.norm());
        let eye = DMatrix::<f64>::identity(6, 6);
        assert!((mb.u.ad_mul(&mb.u) - eye).norm() <= 1e-12 * 6.0);
        assert_eq!(mb.restart_block(), mb.s.columns(0, 3).into_owned());
    }

    #[test]
    fn eigencount_exact_window() {
        let diag: Vec<f64> = (0..=10).map(|i| i as f64).collect();
        let a = SparseHermitian::<f64>::from_diagonal(&diag);
        let bounds = SpectralBounds::exact(0.0, 10.0);
        // Window [3.5, 6.5] holds eigenvalues 4, 5, 6.
        let w = map_window(&bounds, 3.5, 6.5).unwrap();
        let est = estimate_eigencount(&a, &bounds, &w, 400, 200, 7).unwrap();
        assert!(
            (est.mean - 3.0).abs() <= 1.0,
            "estimate {} should be within 1 of 3",
            est.mean
        );
    }

    #[test]
    fn eigencount_full_window_is_dimension() {
        let diag: Vec<f64> = (0..=10).map(|i| i as f64).collect();
        let a = SparseHermitian::<f64>::from_diagonal(&diag);
        let bounds = SpectralBounds::exact(0.0, 10.0);
        let w = Window::full(&bounds);
        let est = estimate_eigencount(&a, &bounds, &w, 10, 50, 3).unwrap();
        assert_eq!(est.rounded, 11);
    }

    #[test]
    fn eigencount_empty_window_rounds_to_zero() {
        let diag: Vec<f64> = (0..=10).map(|i| i as f64).collect();
        let a = SparseHermitian::<f64>::from_diagonal(&diag);
        let bounds = SpectralBounds::exact(0.0, 10.0);
        // No eigenvalues in (4.1, 4.9).
        let w = map_window(&bounds, 4.2, 4.8).unwrap();
        let est = estimate_eigencount(&a, &bounds, &w, 600, 200, 11).unwrap();
        assert_eq!(est.rounded, 0, "estimate {} should round to 0", est.mean);
    }
}
