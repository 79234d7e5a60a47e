//! Experiment harness: runs a grid of (problem, config, seed) solves with
//! per-restart instrumentation and emits machine-readable diagnostics.
//!
//! Every run is deterministic given its seed; runs execute in parallel and
//! rows are order-normalized before writing, so the emitted CSV is
//! byte-stable apart from the wall-time column.

use std::path::PathBuf;
use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use chebslice::driver::{
    run_cjssrr_observed, run_cjssrrr_observed, ConvergenceStatus, DegreeSpec, RemovalMode,
    RestartObservation, SolveReport, SolverConfig,
};
use chebslice::matrix::{estimate_bounds, HermitianOp, SpectralBounds};
use chebslice::projection::rayleigh_ritz_from_product;

use crate::deviation::{condition_number, sin_angle, subspace_deviation};
use crate::mm::{load_matrix_market, LoadedMatrix};
use crate::synthetic::{synthetic_spectrum, SyntheticSpec};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid experiment spec: {0}")]
    Invalid(String),
    #[error("problem {name}: {msg}")]
    Problem { name: String, msg: String },
    #[error(transparent)]
    Solver(#[from] chebslice::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    /// Rayleigh-Ritz extraction (TSVD or residual removal).
    Rr,
    /// Refined extraction with the cluster/rank removal.
    Rrr,
}

/// Where a problem's operator comes from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MatrixSource {
    MatrixMarket { path: PathBuf },
    Synthetic(SyntheticSpec),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub name: String,
    pub source: MatrixSource,
    /// Target interval `[a, b]`.
    pub window: (f64, f64),
    /// Known eigenvalue count; `None` invokes the stochastic estimator.
    #[serde(default)]
    pub n_ev: Option<usize>,
    /// Spectral bounds override; synthetic problems default to their exact
    /// spectrum hull, Matrix Market problems to a Lanczos estimate.
    #[serde(default)]
    pub bounds: Option<(f64, f64)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConfigSpec {
    pub label: String,
    pub algorithm: Algorithm,
    pub moments: usize,
    #[serde(default)]
    pub ell: Option<usize>,
    pub degree: DegreeSpec,
    pub tol: f64,
    pub mode: RemovalMode,
    #[serde(default = "default_max_restarts")]
    pub max_restarts: usize,
}

fn default_max_restarts() -> usize {
    10
}

impl ConfigSpec {
    pub fn to_solver_config(
        &self,
        window: (f64, f64),
        seed: u64,
        n_ev: Option<usize>,
    ) -> SolverConfig {
        let mut c = SolverConfig::new(window.0, window.1);
        c.moments = self.moments;
        c.ell = self.ell;
        c.degree = self.degree;
        c.tol = self.tol;
        c.mode = self.mode;
        c.max_restarts = self.max_restarts;
        c.seed = seed;
        c.n_ev = n_ev;
        c
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub problems: Vec<ProblemSpec>,
    pub configs: Vec<ConfigSpec>,
    pub seeds: Vec<u64>,
    /// Lanczos sweep length for Matrix Market bound estimation.
    #[serde(default = "default_bound_iters")]
    pub bound_iters: usize,
}

fn default_bound_iters() -> usize {
    80
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.configs.is_empty() {
            return Err(ExperimentError::Invalid(
                "at least one config is required".into(),
            ));
        }
        if self.problems.is_empty() {
            return Err(ExperimentError::Invalid(
                "at least one problem is required".into(),
            ));
        }
        if self.seeds.is_empty() {
            return Err(ExperimentError::Invalid(
                "at least one seed is required".into(),
            ));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(ExperimentError::Invalid("seeds must be distinct".into()));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Instrumented runs
// ---------------------------------------------------------------------------

/// Per-restart measurements taken by the harness observer.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RestartDiagnostics {
    pub restart: usize,
    /// Deviation of the reference eigenspace from the search subspace
    /// (`None` without a reference basis).
    pub eps_ev: Option<f64>,
    pub n_in: usize,
    /// Condition number of the retained vector block.
    pub kappa_xhat: Option<f64>,
    /// `sin` of the largest principal angle between the retained block and
    /// the reference eigenvectors (when the counts match).
    pub sin_angle: Option<f64>,
    pub max_retained_relres: Option<f64>,
    /// Worst residual-optimality slack `||(A-tI)x_hat|| - ||(A-tI)x_tilde||`
    /// over the potential pairs (refined runs with optimality tracking).
    pub optimality_gap: Option<f64>,
    pub status: ConvergenceStatus,
    pub wall_ms: f64,
}

pub struct InstrumentedRun {
    pub report: SolveReport<f64>,
    pub diagnostics: Vec<RestartDiagnostics>,
}

/// Run one solve while measuring per-restart subspace quality against an
/// optional reference eigenbasis.
pub fn run_instrumented(
    op: &dyn HermitianOp<f64>,
    bounds: &SpectralBounds,
    x_ref: Option<&DMatrix<f64>>,
    config: &SolverConfig,
    algorithm: Algorithm,
    track_optimality: bool,
) -> Result<InstrumentedRun, chebslice::Error> {
    let mut diags: Vec<RestartDiagnostics> = Vec::new();
    let report = {
        let diags = &mut diags;
        let mut observer = |obs: &RestartObservation<'_, f64>| {
            let eps_ev = x_ref.map(|x| subspace_deviation(obs.basis, x));
            let kappa_xhat =
                (obs.retained_vectors.ncols() > 0).then(|| condition_number(obs.retained_vectors));
            let sin = x_ref.and_then(|x| {
                (obs.retained_vectors.ncols() == x.ncols())
                    .then(|| sin_angle(obs.retained_vectors, x))
            });
            let optimality_gap = if track_optimality {
                obs.refined.map(|refined| {
                    // Recompute the Ritz vectors of the basis and compare the
                    // shifted residuals per potential pair: the refined vector
                    // must never do worse than the Ritz vector at its shift.
                    let au = op.apply_block(obs.basis);
                    let ritz = rayleigh_ritz_from_product(obs.basis, &au);
                    let a_xhat = op.apply_block(&refined.vectors);
                    let mut worst = f64::NEG_INFINITY;
                    for (k, &shift) in refined.base_values.iter().enumerate() {
                        let lhs =
                            (a_xhat.column(k) - refined.vectors.column(k).scale(shift)).norm();
                        let i = ritz
                            .values
                            .iter()
                            .enumerate()
                            .min_by(|(_, a), (_, b)| {
                                (*a - shift).abs().partial_cmp(&(*b - shift).abs()).unwrap()
                            })
                            .map(|(i, _)| i)
                            .expect("nonempty ritz set");
                        let ax = &au * ritz.prim_vectors.column(i);
                        let rhs = (ax - ritz.vectors.column(i).scale(shift)).norm();
                        worst = worst.max(lhs - rhs);
                    }
                    worst
                })
            } else {
                None
            };
            diags.push(RestartDiagnostics {
                restart: obs.restart,
                eps_ev,
                n_in: obs.removal.n_retained(),
                kappa_xhat,
                sin_angle: sin,
                max_retained_relres: obs.retained_relres.iter().copied().reduce(f64::max),
                optimality_gap,
                status: ConvergenceStatus::NotConverged, // filled from the trace below
                wall_ms: 0.0,
            });
        };
        match algorithm {
            Algorithm::Rr => run_cjssrr_observed(op, bounds, config, None, Some(&mut observer))?,
            Algorithm::Rrr => run_cjssrrr_observed(op, bounds, config, None, Some(&mut observer))?,
        }
    };
    for (d, t) in diags.iter_mut().zip(report.trace.iter()) {
        d.status = t.status;
        d.wall_ms = t.timing.moments_ms + t.timing.projection_ms + t.timing.removal_ms;
    }
    Ok(InstrumentedRun {
        report,
        diagnostics: diags,
    })
}

// ---------------------------------------------------------------------------
// Experiment grid
// ---------------------------------------------------------------------------

/// One CSV row: a restart of one run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiagnosticsRow {
    pub problem: String,
    pub config: String,
    pub seed: u64,
    pub restart: usize,
    pub eps_ev: Option<f64>,
    pub n_in: usize,
    pub n_ev: usize,
    pub kappa_xhat: Option<f64>,
    pub sin_angle: Option<f64>,
    pub wall_ms: f64,
    pub status: String,
}

/// Aggregate over the seeds of one (problem, config) cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SummaryRow {
    pub problem: String,
    pub config: String,
    pub runs: usize,
    pub converged_runs: usize,
    pub average_restarts: f64,
    /// Smallest deviation at which the retained count ever mismatched the
    /// target, if that ever happened.
    pub min_eps_with_mismatch: Option<f64>,
}

pub struct ExperimentOutput {
    pub rows: Vec<DiagnosticsRow>,
    pub summaries: Vec<SummaryRow>,
    /// Warnings from matrix loading and failed runs.
    pub notes: Vec<String>,
}

struct ProblemData {
    op: Box<dyn HermitianOp<f64> + Send + Sync>,
    bounds: SpectralBounds,
    x_ref: Option<DMatrix<f64>>,
    n_ev: Option<usize>,
}

fn prepare_problem(
    p: &ProblemSpec,
    bound_iters: usize,
    notes: &mut Vec<String>,
) -> Result<ProblemData, ExperimentError> {
    match &p.source {
        MatrixSource::Synthetic(spec) => {
            let m = synthetic_spectrum(spec).map_err(|msg| ExperimentError::Problem {
                name: p.name.clone(),
                msg,
            })?;
            let bounds = match p.bounds {
                Some((lo, hi)) => SpectralBounds::exact(lo, hi),
                None => m.exact_bounds(),
            };
            let n_ev = p.n_ev.or(Some(m.count_in_window(p.window.0, p.window.1)));
            let x_ref = m.window_eigenvectors(p.window.0, p.window.1);
            Ok(ProblemData {
                op: Box::new(m.op),
                bounds,
                x_ref: Some(x_ref),
                n_ev,
            })
        }
        MatrixSource::MatrixMarket { path } => {
            let loaded = load_matrix_market(path).map_err(|e| ExperimentError::Problem {
                name: p.name.clone(),
                msg: e.to_string(),
            })?;
            for w in &loaded.warnings {
                notes.push(format!("{}: {w}", p.name));
            }
            let a =
                match loaded.matrix {
                    LoadedMatrix::Real(a) => a,
                    LoadedMatrix::Complex(_) => return Err(ExperimentError::Problem {
                        name: p.name.clone(),
                        msg:
                            "complex matrices are supported by `solve`, not by the experiment grid"
                                .into(),
                    }),
                };
            let bounds = match p.bounds {
                Some((lo, hi)) => SpectralBounds::exact(lo, hi),
                None => estimate_bounds(&a, 0.01, bound_iters, 0)?,
            };
            Ok(ProblemData {
                op: Box::new(a),
                bounds,
                x_ref: None,
                n_ev: p.n_ev,
            })
        }
    }
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutput, ExperimentError> {
    spec.validate()?;
    let mut notes = Vec::new();
    let mut problems = Vec::new();
    for p in &spec.problems {
        problems.push((
            p.clone(),
            Arc::new(prepare_problem(p, spec.bound_iters, &mut notes)?),
        ));
    }

    let mut grid = Vec::new();
    for (p, data) in &problems {
        for c in &spec.configs {
            for &seed in &spec.seeds {
                grid.push((p.clone(), Arc::clone(data), c.clone(), seed));
            }
        }
    }

    let results: Vec<Result<(Vec<DiagnosticsRow>, SolveReport<f64>, String, String), String>> =
        grid.par_iter()
            .map(|(p, data, c, seed)| {
                let config = c.to_solver_config(p.window, *seed, data.n_ev);
                let run = run_instrumented(
                    data.op.as_ref(),
                    &data.bounds,
                    data.x_ref.as_ref(),
                    &config,
                    c.algorithm,
                    false,
                )
                .map_err(|e| format!("{}/{}/seed {}: {e}", p.name, c.label, seed))?;
                let n_ev = run.report.n_target;
                let rows = run
                    .diagnostics
                    .iter()
                    .map(|d| DiagnosticsRow {
                        problem: p.name.clone(),
                        config: c.label.clone(),
                        seed: *seed,
                        restart: d.restart,
                        eps_ev: d.eps_ev,
                        n_in: d.n_in,
                        n_ev,
                        kappa_xhat: d.kappa_xhat,
                        sin_angle: d.sin_angle,
                        wall_ms: d.wall_ms,
                        status: status_str(d.status).to_string(),
                    })
                    .collect();
                Ok((rows, run.report, p.name.clone(), c.label.clone()))
            })
            .collect();

    let mut rows: Vec<DiagnosticsRow> = Vec::new();
    let mut per_cell: std::collections::BTreeMap<(String, String), Vec<&SolveReport<f64>>> =
        Default::default();
    let mut reports = Vec::new();
    for r in &results {
        match r {
            Ok((rws, report, pname, clabel)) => {
                rows.extend(rws.iter().cloned());
                reports.push((pname.clone(), clabel.clone(), report));
            }
            Err(msg) => notes.push(format!("run failed: {msg}")),
        }
    }
    for (pname, clabel, report) in &reports {
        per_cell
            .entry((pname.clone(), clabel.clone()))
            .or_default()
            .push(report);
    }

    rows.sort_by(|a, b| {
        (&a.problem, &a.config, a.seed, a.restart).cmp(&(&b.problem, &b.config, b.seed, b.restart))
    });

    let mut summaries = Vec::new();
    for ((problem, config), cell) in per_cell {
        let runs = cell.len();
        let converged_runs = cell.iter().filter(|r| r.converged).count();
        let average_restarts =
            cell.iter().map(|r| r.restarts_used as f64).sum::<f64>() / runs.max(1) as f64;
        let min_eps_with_mismatch = rows
            .iter()
            .filter(|r| r.problem == problem && r.config == config && r.n_in != r.n_ev)
            .filter_map(|r| r.eps_ev)
            .fold(None::<f64>, |acc, e| Some(acc.map_or(e, |a| a.min(e))));
        summaries.push(SummaryRow {
            problem,
            config,
            runs,
            converged_runs,
            average_restarts,
            min_eps_with_mismatch,
        });
    }

    Ok(ExperimentOutput {
        rows,
        summaries,
        notes,
    })
}

fn status_str(s: ConvergenceStatus) -> &'static str {
    match s {
        ConvergenceStatus::Converged => "converged",
        ConvergenceStatus::NotConverged => "not_converged",
        ConvergenceStatus::Overcount => "overcount",
    }
}

// ---------------------------------------------------------------------------
// CSV emission
// ---------------------------------------------------------------------------

pub const CSV_HEADER: &str =
    "problem,config,seed,restart,eps_ev,n_in,n_ev,kappa_xhat,sin_angle,wall_ms,status";

/// Shortest round-trip-exact float formatting; empty for missing or
/// non-finite values.
pub fn fmt_float(x: Option<f64>) -> String {
    match x {
        Some(v) if v.is_finite() => serde_json::to_string(&v).expect("finite floats serialize"),
        _ => String::new(),
    }
}

pub fn rows_to_csv(rows: &[DiagnosticsRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            r.problem,
            r.config,
            r.seed,
            r.restart,
            fmt_float(r.eps_ev),
            r.n_in,
            r.n_ev,
            fmt_float(r.kappa_xhat),
            fmt_float(r.sin_angle),
            fmt_float(Some(r.wall_ms)),
            r.status
        ));
    }
    out
}

/// The CSV without the timing column, for byte-level determinism checks.
pub fn rows_to_csv_without_timing(rows: &[DiagnosticsRow]) -> String {
    let mut out =
        String::from("problem,config,seed,restart,eps_ev,n_in,n_ev,kappa_xhat,sin_angle,status");
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.problem,
            r.config,
            r.seed,
            r.restart,
            fmt_float(r.eps_ev),
            r.n_in,
            r.n_ev,
            fmt_float(r.kappa_xhat),
            fmt_float(r.sin_angle),
            r.status
        ));
    }
    out
}
