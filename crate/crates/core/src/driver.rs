//! Restarted outer loops: classical Rayleigh-Ritz extraction with baseline
//! removal ([`run_cjssrr`]) and refined extraction with the cluster/rank
//! removal ([`run_cjssrrr`]). A restart replaces the starting block with the
//! first `ell` columns of the moment block, i.e. the plain-filtered block.

use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{
    build_moments, degree_heuristic, estimate_eigencount, map_window, FilterPlan, MomentBlock,
    Window,
};
use crate::matrix::{HermitianOp, Scalar, SpectralBounds};
use crate::projection::{
    rayleigh_ritz_from_product, refine_set, select_potential, ReducedPencil, RefinedPath,
    RefinedSet, RitzSet,
};
use crate::spurion::{
    cluster_refined, refined_removal, residual_removal_from_norms, tsvd_removal, RemovalReport,
};

/// How in-window approximations are filtered before the convergence test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum RemovalMode {
    /// TSVD of the raw moment block, retain every in-window Ritz value.
    Tsvd { trunc_tol: f64 },
    /// Retain potential Ritz pairs with relative residual below `delta`.
    Residual { delta: f64 },
    /// Cluster refined values and keep the numerical rank per cluster.
    Refined { c_constant: f64, kappa: f64 },
}

/// Denominator of relative residual norms in the convergence test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualNorm {
    /// `max(|lambda_min|, |lambda_max|)` from the spectral bounds, the
    /// spectral-norm estimate.
    #[default]
    SpectralBound,
    /// `sqrt(||A||_1 ||A||_inf)`, the cheap replacement.
    OneInfGeomMean,
}

/// Series degree: explicit, or the practical heuristic with factors `D`, `K`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DegreeSpec {
    Explicit { d: usize },
    Auto { d_factor: f64, k_factor: f64 },
}

impl Default for DegreeSpec {
    fn default() -> Self {
        // Degree-estimate factors used throughout the experiments.
        DegreeSpec::Auto {
            d_factor: 2.0,
            k_factor: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Target interval `[a, b]` in original coordinates.
    pub window: (f64, f64),
    /// Moment count `M`.
    pub moments: usize,
    /// Starting-block width; `None` sizes it as `ceil(1.5 n_ev / M)`.
    pub ell: Option<usize>,
    pub degree: DegreeSpec,
    /// Convergence tolerance on relative residual norms.
    pub tol: f64,
    pub mode: RemovalMode,
    pub max_restarts: usize,
    pub seed: u64,
    /// Known eigenvalue count in the window; `None` invokes the stochastic
    /// estimator.
    pub n_ev: Option<usize>,
    /// Probe count for the stochastic estimator.
    pub count_samples: usize,
    /// Implementation used for refined directions.
    pub refined_path: RefinedPath,
    /// Residual-norm denominator for convergence testing.
    #[serde(default)]
    pub residual_norm: ResidualNorm,
}

impl SolverConfig {
    pub fn new(a: f64, b: f64) -> Self {
        Self {
            window: (a, b),
            moments: 4,
            ell: None,
            degree: DegreeSpec::default(),
            tol: 1e-12,
            mode: RemovalMode::Refined {
                c_constant: 1.0,
                kappa: 1.0,
            },
            max_restarts: 10,
            seed: 0,
            n_ev: None,
            count_samples: 200,
            refined_path: RefinedPath::QrPencil,
            residual_norm: ResidualNorm::SpectralBound,
        }
    }

    pub fn with_mode(mut self, mode: RemovalMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Outcome of one convergence test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvergenceStatus {
    Converged,
    NotConverged,
    /// More pairs retained than the target count; treated as
    /// non-convergence and surfaced as an anomaly.
    Overcount,
}

/// Retained pairs converge when their count matches the target and every
/// relative residual is below `tol`. An over-count never converges.
pub fn convergence_test(rel_residuals: &[f64], n_target: usize, tol: f64) -> ConvergenceStatus {
    if rel_residuals.len() > n_target {
        return ConvergenceStatus::Overcount;
    }
    if rel_residuals.len() < n_target || rel_residuals.iter().any(|&r| !(r < tol)) {
        return ConvergenceStatus::NotConverged;
    }
    ConvergenceStatus::Converged
}

/// The restart block: the first `ell` columns of the moment block, which is
/// the zeroth moment `S_0` since `p_0 = 1`.
pub fn restart_matrix<T: Scalar>(moments: &MomentBlock<T>) -> DMatrix<T> {
    moments.restart_block()
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct PhaseTiming {
    pub moments_ms: f64,
    pub projection_ms: f64,
    pub removal_ms: f64,
}

/// Per-restart diagnostics kept in the report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RestartTrace {
    pub restart: usize,
    /// Retained count after removal.
    pub n_in: usize,
    pub status: ConvergenceStatus,
    pub max_retained_relres: Option<f64>,
    pub rank_warnings: usize,
    pub timing: PhaseTiming,
}

/// Everything a harness may want to observe at the end of one restart.
pub struct RestartObservation<'a, T: Scalar> {
    pub restart: usize,
    /// Orthonormal basis of the moment subspace.
    pub basis: &'a DMatrix<T>,
    /// Ritz values of the working extraction set (the truncated basis set in
    /// TSVD mode).
    pub ritz_values: &'a [f64],
    pub removal: &'a RemovalReport,
    pub retained_values: &'a [f64],
    pub retained_vectors: &'a DMatrix<T>,
    pub retained_relres: &'a [f64],
    /// Refined triples, present in the refined driver only.
    pub refined: Option<&'a RefinedSet<T>>,
    /// Full Ritz set of the basis, present in the classical driver only.
    pub ritz: Option<&'a RitzSet<T>>,
}

/// Observer invoked once per restart, after removal and the convergence test.
pub type RestartObserver<'o, T> = dyn FnMut(&RestartObservation<'_, T>) + 'o;

/// Final report of one solve.
#[derive(Debug, Clone)]
pub struct SolveReport<T: Scalar> {
    pub algorithm: &'static str,
    pub converged: bool,
    /// Set when some restart retained more pairs than the target.
    pub anomaly_overcount: bool,
    pub restarts_used: usize,
    pub n_target: usize,
    /// Approximate eigenvalues of the final retained set, ascending.
    pub values: Vec<f64>,
    /// Relative residual norms aligned with `values`.
    pub rel_residuals: Vec<f64>,
    /// Approximate eigenvectors (columns, aligned with `values`).
    pub vectors: DMatrix<T>,
    /// Which norm divided the residuals.
    pub norm_convention: &'static str,
    pub norm_value: f64,
    pub trace: Vec<RestartTrace>,
    pub removal_history: Vec<RemovalReport>,
    pub config: SolverConfig,
    pub total_ms: f64,
}

/// Serializable view of a real-valued report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReportJson {
    pub algorithm: String,
    pub converged: bool,
    pub anomaly_overcount: bool,
    pub restarts_used: usize,
    pub n_target: usize,
    pub values: Vec<f64>,
    pub rel_residuals: Vec<f64>,
    /// Eigenvector columns (omitted when not requested).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vectors: Option<Vec<Vec<f64>>>,
    pub norm_convention: String,
    pub norm_value: f64,
    pub trace: Vec<RestartTrace>,
    pub removal_history: Vec<RemovalReport>,
    pub config: SolverConfig,
    pub total_ms: f64,
}

impl SolveReport<f64> {
    pub fn to_json_view(&self, include_vectors: bool) -> SolveReportJson {
        SolveReportJson {
            algorithm: self.algorithm.to_string(),
            converged: self.converged,
            anomaly_overcount: self.anomaly_overcount,
            restarts_used: self.restarts_used,
            n_target: self.n_target,
            values: self.values.clone(),
            rel_residuals: self.rel_residuals.clone(),
            vectors: include_vectors.then(|| {
                (0..self.vectors.ncols())
                    .map(|c| self.vectors.column(c).iter().copied().collect())
                    .collect()
            }),
            norm_convention: self.norm_convention.to_string(),
            norm_value: self.norm_value,
            trace: self.trace.clone(),
            removal_history: self.removal_history.clone(),
            config: self.config.clone(),
            total_ms: self.total_ms,
        }
    }

    pub fn to_json(&self, include_vectors: bool) -> String {
        serde_json::to_string_pretty(&self.to_json_view(include_vectors))
            .expect("report serializes")
    }

    /// JSON with every timing zeroed; two runs with the same configuration
    /// and seed produce bit-identical canonical JSON.
    pub fn to_canonical_json(&self, include_vectors: bool) -> String {
        let mut view = self.to_json_view(include_vectors);
        view.total_ms = 0.0;
        for t in &mut view.trace {
            t.timing = PhaseTiming::default();
        }
        serde_json::to_string_pretty(&view).expect("report serializes")
    }
}

// ---------------------------------------------------------------------------
// Shared preparation
// ---------------------------------------------------------------------------

struct Prepared {
    window: Window,
    plan: FilterPlan,
    ell: usize,
    n_target: usize,
}

fn prepare<T: Scalar>(
    a: &dyn HermitianOp<T>,
    bounds: &SpectralBounds,
    config: &SolverConfig,
) -> Result<Option<Prepared>> {
    if !(config.tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "tol must be positive, got {}",
            config.tol
        )));
    }
    if config.moments == 0 {
        return Err(Error::InvalidParameter("moment count must be >= 1".into()));
    }
    if config.max_restarts == 0 {
        return Err(Error::InvalidParameter("max_restarts must be >= 1".into()));
    }
    let window = map_window(bounds, config.window.0, config.window.1)?;
    let degree = match config.degree {
        DegreeSpec::Explicit { d } => d,
        DegreeSpec::Auto { d_factor, k_factor } => {
            degree_heuristic(&window, config.moments, d_factor, k_factor)?
        }
    };
    let n_target = match config.n_ev {
        Some(n) => n,
        None => {
            estimate_eigencount(
                a,
                bounds,
                &window,
                degree,
                config.count_samples,
                config.seed,
            )?
            .rounded
        }
    };
    if n_target == 0 {
        // Nothing to compute in this window: short-circuit.
        return Ok(None);
    }
    let ell = match config.ell {
        Some(l) => l,
        // M * ell >= 1.5 * n_ev, so the subspace strictly oversamples.
        None => (1.5 * n_target as f64 / config.moments as f64)
            .ceil()
            .max(1.0) as usize,
    };
    if config.moments * ell < n_target {
        return Err(Error::InvalidParameter(format!(
            "subspace dimension M*ell = {} is below the target eigenvalue count {n_target}",
            config.moments * ell
        )));
    }
    let plan = FilterPlan::build(window, config.moments, degree)?;
    Ok(Some(Prepared {
        window,
        plan,
        ell,
        n_target,
    }))
}

fn empty_report<T: Scalar>(
    algorithm: &'static str,
    a_dim: usize,
    config: &SolverConfig,
    norm_convention: &'static str,
    norm_value: f64,
    started: Instant,
) -> SolveReport<T> {
    SolveReport {
        algorithm,
        converged: true,
        anomaly_overcount: false,
        restarts_used: 0,
        n_target: 0,
        values: Vec::new(),
        rel_residuals: Vec::new(),
        vectors: DMatrix::zeros(a_dim, 0),
        norm_convention,
        norm_value,
        trace: Vec::new(),
        removal_history: Vec::new(),
        config: config.clone(),
        total_ms: started.elapsed().as_secs_f64() * 1e3,
    }
}

fn gather_columns<T: Scalar>(src: &DMatrix<T>, indices: &[usize]) -> DMatrix<T> {
    let mut out = DMatrix::zeros(src.nrows(), indices.len());
    for (c, &i) in indices.iter().enumerate() {
        out.column_mut(c).copy_from(&src.column(i));
    }
    out
}

/// Sort retained data ascending by value for deterministic reports.
fn sorted_retained<T: Scalar>(
    values: Vec<f64>,
    relres: Vec<f64>,
    vectors: DMatrix<T>,
) -> (Vec<f64>, Vec<f64>, DMatrix<T>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&x, &y| values[x].partial_cmp(&values[y]).unwrap().then(x.cmp(&y)));
    let v = order.iter().map(|&i| values[i]).collect();
    let r = order.iter().map(|&i| relres[i]).collect();
    let m = gather_columns(&vectors, &order);
    (v, r, m)
}

// ---------------------------------------------------------------------------
// Classical driver
// ---------------------------------------------------------------------------

/// Restarted solve with Rayleigh-Ritz extraction and a baseline removal
/// (`Tsvd` or `Residual` mode). Residuals are measured against
/// `sqrt(||A||_1 ||A||_inf)`.
pub fn run_cjssrr<T: Scalar>(
    a: &dyn HermitianOp<T>,
    bounds: &SpectralBounds,
    config: &SolverConfig,
) -> Result<SolveReport<T>> {
    run_cjssrr_observed(a, bounds, config, None, None)
}

pub fn run_cjssrr_observed<T: Scalar>(
    a: &dyn HermitianOp<T>,
    bounds: &SpectralBounds,
    config: &SolverConfig,
    initial_block: Option<&DMatrix<T>>,
    mut observer: Option<&mut RestartObserver<'_, T>>,
) -> Result<SolveReport<T>> {
    let started = Instant::now();
    let (norm_value, norm_convention) = match config.residual_norm {
        ResidualNorm::SpectralBound => (bounds.norm_bound(), "max_abs_bound_eig"),
        ResidualNorm::OneInfGeomMean => (a.norm_est(), "sqrt(norm1*norminf)"),
    };
    match config.mode {
        RemovalMode::Tsvd { .. } | RemovalMode::Residual { .. } => {}
        RemovalMode::Refined { .. } => return Err(Error::InvalidParameter(
            "run_cjssrr supports tsvd and residual removal; use run_cjssrrr for refined removal"
                .into(),
        )),
    }
    let prepared = match prepare(a, bounds, config)? {
        Some(p) => p,
        None => {
            return Ok(empty_report(
                "cjssrr",
                a.dim(),
                config,
                norm_convention,
                norm_value,
                started,
            ))
        }
    };
    let Prepared {
        window,
        plan,
        ell,
        n_target,
    } = prepared;

    let mut v = match initial_block {
        Some(v0) => {
            if v0.nrows() != a.dim() || v0.ncols() != ell {
                return Err(Error::DimensionMismatch(format!(
                    "initial block is {}x{}, expected {}x{ell}",
                    v0.nrows(),
                    v0.ncols(),
                    a.dim()
                )));
            }
            v0.clone()
        }
        None => crate::matrix::seeded_gaussian_block(a.dim(), ell, config.seed),
    };

    let mut trace = Vec::new();
    let mut removal_history = Vec::new();
    let mut anomaly = false;

    for restart in 0..config.max_restarts {
        let t0 = Instant::now();
        let mb = build_moments(a, bounds, &v, &plan)?;
        let moments_ms = t0.elapsed().as_secs_f64() * 1e3;

        let t1 = Instant::now();
        let au = a.apply_block(&mb.u);
        let ritz = rayleigh_ritz_from_product(&mb.u, &au);
        let projection_ms = t1.elapsed().as_secs_f64() * 1e3;

        let t2 = Instant::now();
        // The working extraction set: in TSVD mode the Ritz set of the
        // truncated basis replaces the full-basis one.
        let (working, report) = match config.mode {
            RemovalMode::Tsvd { trunc_tol } => {
                let (ritz_t, report) = tsvd_removal(&mb.s, a, &window, trunc_tol)?;
                (ritz_t, report)
            }
            RemovalMode::Residual { delta } => {
                let norms = residual_norms_from_product(&ritz, &au);
                let report =
                    residual_removal_from_norms(&ritz.values, &norms, &window, delta, norm_value);
                (ritz, report)
            }
            RemovalMode::Refined { .. } => unreachable!(),
        };

        let retained_values: Vec<f64> =
            report.retained.iter().map(|&i| working.values[i]).collect();
        let retained_vectors = gather_columns(&working.vectors, &report.retained);
        let working_norms = working.residual_norms(a);
        let retained_relres: Vec<f64> = report
            .retained
            .iter()
            .map(|&i| working_norms[i] / norm_value)
            .collect();
        let removal_ms = t2.elapsed().as_secs_f64() * 1e3;

        let status = convergence_test(&retained_relres, n_target, config.tol);
        anomaly |= status == ConvergenceStatus::Overcount;

        trace.push(RestartTrace {
            restart,
            n_in: report.n_retained(),
            status,
            max_retained_relres: retained_relres.iter().copied().reduce(f64::max),
            rank_warnings: mb.rank_warnings.len(),
            timing: PhaseTiming {
                moments_ms,
                projection_ms,
                removal_ms,
            },
        });

        if let Some(obs) = observer.as_deref_mut() {
            obs(&RestartObservation {
                restart,
                basis: &mb.u,
                ritz_values: &working.values,
                removal: &report,
                retained_values: &retained_values,
                retained_vectors: &retained_vectors,
                retained_relres: &retained_relres,
                refined: None,
                ritz: Some(&working),
            });
        }
        removal_history.push(report);

        if status == ConvergenceStatus::Converged {
            let (values, rel_residuals, vectors) =
                sorted_retained(retained_values, retained_relres, retained_vectors);
            return Ok(SolveReport {
                algorithm: "cjssrr",
                converged: true,
                anomaly_overcount: anomaly,
                restarts_used: restart + 1,
                n_target,
                values,
                rel_residuals,
                vectors,
                norm_convention,
                norm_value,
                trace,
                removal_history,
                config: config.clone(),
                total_ms: started.elapsed().as_secs_f64() * 1e3,
            });
        }

        v = mb.restart_block();
        if restart + 1 == config.max_restarts {
            let (values, rel_residuals, vectors) =
                sorted_retained(retained_values, retained_relres, retained_vectors);
            return Ok(SolveReport {
                algorithm: "cjssrr",
                converged: false,
                anomaly_overcount: anomaly,
                restarts_used: config.max_restarts,
                n_target,
                values,
                rel_residuals,
                vectors,
                norm_convention,
                norm_value,
                trace,
                removal_history,
                config: config.clone(),
                total_ms: started.elapsed().as_secs_f64() * 1e3,
            });
        }
    }
    unreachable!("loop returns on the last restart")
}

fn residual_norms_from_product<T: Scalar>(ritz: &RitzSet<T>, au: &DMatrix<T>) -> Vec<f64> {
    // A x_i = A U y_i = (AU) y_i, so no extra operator product is needed.
    let ax = au * &ritz.prim_vectors;
    (0..ritz.len())
        .map(|i| (ax.column(i) - ritz.vectors.column(i).scale(ritz.values[i])).norm())
        .collect()
}

// ---------------------------------------------------------------------------
// Refined driver
// ---------------------------------------------------------------------------

/// Restarted solve with refined extraction and the cluster/rank removal.
/// Residuals are measured against `max(|lambda_min|, |lambda_max|)`.
pub fn run_cjssrrr<T: Scalar>(
    a: &dyn HermitianOp<T>,
    bounds: &SpectralBounds,
    config: &SolverConfig,
) -> Result<SolveReport<T>> {
    run_cjssrrr_observed(a, bounds, config, None, None)
}

pub fn run_cjssrrr_observed<T: Scalar>(
    a: &dyn HermitianOp<T>,
    bounds: &SpectralBounds,
    config: &SolverConfig,
    initial_block: Option<&DMatrix<T>>,
    mut observer: Option<&mut RestartObserver<'_, T>>,
) -> Result<SolveReport<T>> {
    let started = Instant::now();
    let (norm_value, norm_convention) = match config.residual_norm {
        ResidualNorm::SpectralBound => (bounds.norm_bound(), "max_abs_bound_eig"),
        ResidualNorm::OneInfGeomMean => (a.norm_est(), "sqrt(norm1*norminf)"),
    };
    let (c_constant, kappa) = match config.mode {
        RemovalMode::Refined { c_constant, kappa } => (c_constant, kappa),
        _ => (1.0, 1.0), // the refined driver always uses the refined removal
    };
    let norm_gate = a.norm_est();

    let prepared = match prepare(a, bounds, config)? {
        Some(p) => p,
        None => {
            return Ok(empty_report(
                "cjssrrr",
                a.dim(),
                config,
                norm_convention,
                norm_value,
                started,
            ))
        }
    };
    let Prepared {
        window,
        plan,
        ell,
        n_target,
    } = prepared;
    if 2 * config.moments * ell > a.dim() {
        return Err(Error::InvalidParameter(format!(
            "refined extraction needs 2*M*ell <= n, got {} > {}",
            2 * config.moments * ell,
            a.dim()
        )));
    }

    let mut v = match initial_block {
        Some(v0) => {
            if v0.nrows() != a.dim() || v0.ncols() != ell {
                return Err(Error::DimensionMismatch(format!(
                    "initial block is {}x{}, expected {}x{ell}",
                    v0.nrows(),
                    v0.ncols(),
                    a.dim()
                )));
            }
            v0.clone()
        }
        None => crate::matrix::seeded_gaussian_block(a.dim(), ell, config.seed),
    };

    let mut trace = Vec::new();
    let mut removal_history = Vec::new();
    let mut anomaly = false;

    for restart in 0..config.max_restarts {
        let t0 = Instant::now();
        let mb = build_moments(a, bounds, &v, &plan)?;
        let moments_ms = t0.elapsed().as_secs_f64() * 1e3;

        let t1 = Instant::now();
        let au = a.apply_block(&mb.u);
        // Only Ritz values are needed on this path; vectors stay implicit.
        let ritz = rayleigh_ritz_from_product(&mb.u, &au);
        let potential = select_potential(&ritz, &window);
        let exterior: Vec<f64> = ritz
            .values
            .iter()
            .copied()
            .filter(|t| !window.contains(*t))
            .collect();

        let (refined, report, projection_ms, removal_ms) = if potential.is_empty() {
            let report = RemovalReport {
                mode: crate::spurion::RemovalModeTag::Refined,
                potential: Vec::new(),
                retained: Vec::new(),
                removed: Vec::new(),
                unconverged: Vec::new(),
                clusters: Vec::new(),
                rel_residuals: Vec::new(),
                tsvd_sigma: None,
                tsvd_kept_dim: None,
                notes: vec!["no potential Ritz values this restart".into()],
            };
            (None, report, t1.elapsed().as_secs_f64() * 1e3, 0.0)
        } else {
            let pencil = ReducedPencil::from_product(&mb.u, &au)?;
            let shifts: Vec<f64> = potential.iter().map(|&i| ritz.values[i]).collect();
            let refined = refine_set(&mb.u, &au, &pencil, &shifts, config.refined_path, a);
            let projection_ms = t1.elapsed().as_secs_f64() * 1e3;

            let t2 = Instant::now();
            let partition = cluster_refined(&refined, kappa, norm_gate);
            let report = refined_removal(&partition, &refined, c_constant, &exterior);
            (
                Some(refined),
                report,
                projection_ms,
                t2.elapsed().as_secs_f64() * 1e3,
            )
        };

        let (retained_values, retained_vectors, retained_relres) = match &refined {
            Some(set) => {
                let vals: Vec<f64> = report.retained.iter().map(|&i| set.ref_values[i]).collect();
                let vecs = gather_columns(&set.vectors, &report.retained);
                let rel: Vec<f64> = report
                    .retained
                    .iter()
                    .map(|&i| set.residual_norms[i] / norm_value)
                    .collect();
                (vals, vecs, rel)
            }
            None => (Vec::new(), DMatrix::zeros(a.dim(), 0), Vec::new()),
        };

        let status = convergence_test(&retained_relres, n_target, config.tol);
        anomaly |= status == ConvergenceStatus::Overcount;

        trace.push(RestartTrace {
            restart,
            n_in: report.n_retained(),
            status,
            max_retained_relres: retained_relres.iter().copied().reduce(f64::max),
            rank_warnings: mb.rank_warnings.len(),
            timing: PhaseTiming {
                moments_ms,
                projection_ms,
                removal_ms,
            },
        });

        if let Some(obs) = observer.as_deref_mut() {
            obs(&RestartObservation {
                restart,
                basis: &mb.u,
                ritz_values: &ritz.values,
                removal: &report,
                retained_values: &retained_values,
                retained_vectors: &retained_vectors,
                retained_relres: &retained_relres,
                refined: refined.as_ref(),
                ritz: None,
            });
        }
        removal_history.push(report);

        if status == ConvergenceStatus::Converged || restart + 1 == config.max_restarts {
            let converged = status == ConvergenceStatus::Converged;
            let (values, rel_residuals, vectors) =
                sorted_retained(retained_values, retained_relres, retained_vectors);
            return Ok(SolveReport {
                algorithm: "cjssrrr",
                converged,
                anomaly_overcount: anomaly,
                restarts_used: restart + 1,
                n_target,
                values,
                rel_residuals,
                vectors,
                norm_convention,
                norm_value,
                trace,
                removal_history,
                config: config.clone(),
                total_ms: started.elapsed().as_secs_f64() * 1e3,
            });
        }

        v = mb.restart_block();
    }
    unreachable!("loop returns on the last restart")
}
