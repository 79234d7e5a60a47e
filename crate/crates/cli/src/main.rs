//! Command-line driver: single solves, experiment grids, filter tabulation
//! and window eigenvalue counting.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use chebslice::driver::{
    run_cjssrr, run_cjssrrr, DegreeSpec, RemovalMode, SolveReport, SolverConfig,
};
use chebslice::filter::{
    degree_heuristic, estimate_eigencount, map_window, scalar_filter_eval, FilterPlan, Window,
};
use chebslice::matrix::{estimate_bounds, HermitianOp, Scalar, SpectralBounds};
use chebslice_cli::experiment::{rows_to_csv, run_experiment, ExperimentSpec};
use chebslice_cli::mm::{load_matrix_market, LoadedMatrix};
use chebslice_cli::synthetic::{synthetic_spectrum, SyntheticSpec};

#[derive(Parser)]
#[command(
    name = "chebslice",
    about = "Interior eigensolver for sparse Hermitian matrices via Chebyshev-Jackson filtered moment subspaces",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one window of one matrix and emit a JSON report.
    Solve(SolveArgs),
    /// Run an experiment grid described by a JSON spec file.
    Bench(BenchArgs),
    /// Tabulate the scalar filter over a mapped-coordinate grid as CSV.
    FilterPlot(FilterPlotArgs),
    /// Estimate the eigenvalue count inside a window.
    Count(CountArgs),
}

#[derive(Args)]
struct MatrixArg {
    /// Matrix file: Matrix Market coordinate (*.mtx) or a synthetic-spectrum
    /// spec (*.json).
    #[arg(long)]
    matrix: PathBuf,
    /// Lanczos sweep length for spectral-bound estimation (Matrix Market
    /// sources only; synthetic sources use their exact spectrum hull).
    #[arg(long, default_value_t = 80)]
    bound_iters: usize,
    /// Safety margin applied to estimated spectral bounds.
    #[arg(long, default_value_t = 0.01)]
    bound_margin: f64,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    matrix: MatrixArg,
    /// Target interval as `a,b`.
    #[arg(long, value_parser = parse_window, allow_hyphen_values = true)]
    window: (f64, f64),
    /// Moment count M.
    #[arg(long, default_value_t = 4)]
    moments: usize,
    /// Starting-block width; defaults to ceil(1.5 n_ev / M).
    #[arg(long)]
    ell: Option<usize>,
    /// Explicit series degree.
    #[arg(long, conflicts_with = "auto_degree")]
    degree: Option<usize>,
    /// Degree heuristic factors as `D,K`.
    #[arg(long, value_parser = parse_window)]
    auto_degree: Option<(f64, f64)>,
    /// Extraction/removal mode.
    #[arg(long, default_value = "rrr", value_parser = ["rr-tsvd", "rr-residual", "rrr"])]
    mode: String,
    /// Convergence tolerance on relative residual norms.
    #[arg(long, default_value_t = 1e-12)]
    tol: f64,
    /// Residual-removal threshold (rr-residual mode).
    #[arg(long, default_value_t = 1e-4)]
    delta: f64,
    /// TSVD truncation tolerance (rr-tsvd mode).
    #[arg(long, default_value_t = 1e-12)]
    trunc_tol: f64,
    /// Conditioning constant C for the refined removal.
    #[arg(long, default_value_t = 1.0)]
    c_constant: f64,
    /// Clustering constant kappa for the refined removal.
    #[arg(long, default_value_t = 1.0)]
    kappa: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    max_restarts: usize,
    /// Known eigenvalue count in the window (skips the estimator).
    #[arg(long)]
    n_ev: Option<usize>,
    /// Probe count for the stochastic eigencount estimator.
    #[arg(long, default_value_t = 200)]
    samples: usize,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Include eigenvector columns in the report.
    #[arg(long, default_value_t = false)]
    vectors: bool,
}

#[derive(Args)]
struct BenchArgs {
    /// Experiment spec (JSON).
    #[arg(long)]
    spec: PathBuf,
    /// Diagnostics CSV output path.
    #[arg(long)]
    out_csv: Option<PathBuf>,
    /// Summary JSON output path.
    #[arg(long)]
    out_summary: Option<PathBuf>,
}

#[derive(Args)]
struct FilterPlotArgs {
    /// Window in mapped coordinates, `a,b` with -1 <= a < b <= 1.
    #[arg(long, value_parser = parse_window, allow_hyphen_values = true)]
    window: (f64, f64),
    #[arg(long, conflicts_with = "auto_degree")]
    degree: Option<usize>,
    /// Degree heuristic factors as `D,K`.
    #[arg(long, value_parser = parse_window)]
    auto_degree: Option<(f64, f64)>,
    /// Moment row to evaluate.
    #[arg(long, default_value_t = 0)]
    moment_index: usize,
    /// Moment count (coefficient rows built).
    #[arg(long, default_value_t = 1)]
    moments: usize,
    #[arg(long, default_value_t = 2001)]
    points: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CountArgs {
    #[command(flatten)]
    matrix: MatrixArg,
    #[arg(long, value_parser = parse_window, allow_hyphen_values = true)]
    window: (f64, f64),
    #[arg(long, conflicts_with = "auto_degree")]
    degree: Option<usize>,
    /// Degree heuristic factors as `D,K`.
    #[arg(long, value_parser = parse_window)]
    auto_degree: Option<(f64, f64)>,
    #[arg(long, default_value_t = 200)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn parse_window(s: &str) -> Result<(f64, f64), String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        return Err("expected two comma-separated numbers".into());
    }
    let a: f64 = parts[0]
        .trim()
        .parse()
        .map_err(|_| format!("cannot parse `{}`", parts[0]))?;
    let b: f64 = parts[1]
        .trim()
        .parse()
        .map_err(|_| format!("cannot parse `{}`", parts[1]))?;
    Ok((a, b))
}

enum Operator {
    Real(Box<dyn HermitianOp<f64>>),
    Complex(Box<dyn HermitianOp<nalgebra::Complex<f64>>>),
}

fn load_operator(arg: &MatrixArg) -> Result<(Operator, SpectralBounds, Vec<String>), String> {
    let path = &arg.matrix;
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    if ext.eq_ignore_ascii_case("json") {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        let spec: SyntheticSpec =
            serde_json::from_str(&text).map_err(|e| format!("invalid synthetic spec: {e}"))?;
        let m = synthetic_spectrum(&spec)?;
        let bounds = m.exact_bounds();
        Ok((Operator::Real(Box::new(m.op)), bounds, Vec::new()))
    } else {
        let loaded = load_matrix_market(Path::new(path)).map_err(|e| e.to_string())?;
        match loaded.matrix {
            LoadedMatrix::Real(a) => {
                let bounds = estimate_bounds(&a, arg.bound_margin, arg.bound_iters, 0)
                    .map_err(|e| e.to_string())?;
                Ok((Operator::Real(Box::new(a)), bounds, loaded.warnings))
            }
            LoadedMatrix::Complex(a) => {
                let bounds = estimate_bounds(&a, arg.bound_margin, arg.bound_iters, 0)
                    .map_err(|e| e.to_string())?;
                Ok((Operator::Complex(Box::new(a)), bounds, loaded.warnings))
            }
        }
    }
}

fn degree_spec(explicit: Option<usize>, auto: Option<(f64, f64)>) -> DegreeSpec {
    match (explicit, auto) {
        (Some(d), _) => DegreeSpec::Explicit { d },
        (None, Some((d_factor, k_factor))) => DegreeSpec::Auto { d_factor, k_factor },
        (None, None) => DegreeSpec::default(),
    }
}

fn write_or_print(out: &Option<PathBuf>, content: &str) -> Result<(), String> {
    match out {
        Some(path) => std::fs::write(path, content)
            .map_err(|e| format!("cannot write {}: {e}", path.display())),
        None => {
            if content.ends_with('\n') {
                print!("{content}");
            } else {
                println!("{content}");
            }
            Ok(())
        }
    }
}

fn solve_generic<T: Scalar>(
    op: &dyn HermitianOp<T>,
    bounds: &SpectralBounds,
    config: &SolverConfig,
    algorithm_rr: bool,
) -> Result<SolveReport<T>, String> {
    let r = if algorithm_rr {
        run_cjssrr(op, bounds, config)
    } else {
        run_cjssrrr(op, bounds, config)
    };
    r.map_err(|e| e.to_string())
}

fn cmd_solve(args: &SolveArgs) -> Result<(), String> {
    let (op, bounds, warnings) = load_operator(&args.matrix)?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    let mut config = SolverConfig::new(args.window.0, args.window.1);
    config.moments = args.moments;
    config.ell = args.ell;
    config.degree = degree_spec(args.degree, args.auto_degree);
    config.tol = args.tol;
    config.max_restarts = args.max_restarts;
    config.seed = args.seed;
    config.n_ev = args.n_ev;
    config.count_samples = args.samples;
    let algorithm_rr = match args.mode.as_str() {
        "rr-tsvd" => {
            config.mode = RemovalMode::Tsvd {
                trunc_tol: args.trunc_tol,
            };
            true
        }
        "rr-residual" => {
            config.mode = RemovalMode::Residual { delta: args.delta };
            true
        }
        _ => {
            config.mode = RemovalMode::Refined {
                c_constant: args.c_constant,
                kappa: args.kappa,
            };
            false
        }
    };

    match op {
        Operator::Real(a) => {
            let report = solve_generic(a.as_ref(), &bounds, &config, algorithm_rr)?;
            write_or_print(&args.out, &report.to_json(args.vectors))?;
            if !report.converged {
                return Err(format!(
                    "did not converge within {} restarts (retained {} of {})",
                    report.restarts_used,
                    report.values.len(),
                    report.n_target
                ));
            }
        }
        Operator::Complex(a) => {
            let report = solve_generic(a.as_ref(), &bounds, &config, algorithm_rr)?;
            // Complex eigenvector serialization is not wired up; report the
            // values, residuals and trace.
            let view = json!({
                "algorithm": report.algorithm,
                "converged": report.converged,
                "anomaly_overcount": report.anomaly_overcount,
                "restarts_used": report.restarts_used,
                "n_target": report.n_target,
                "values": report.values,
                "rel_residuals": report.rel_residuals,
                "norm_convention": report.norm_convention,
                "norm_value": report.norm_value,
                "total_ms": report.total_ms,
            });
            write_or_print(&args.out, &serde_json::to_string_pretty(&view).unwrap())?;
            if !report.converged {
                return Err("did not converge".into());
            }
        }
    }
    Ok(())
}

fn cmd_bench(args: &BenchArgs) -> Result<(), String> {
    let text = std::fs::read_to_string(&args.spec)
        .map_err(|e| format!("cannot read {}: {e}", args.spec.display()))?;
    let spec: ExperimentSpec =
        serde_json::from_str(&text).map_err(|e| format!("invalid experiment spec: {e}"))?;
    let out = run_experiment(&spec).map_err(|e| e.to_string())?;
    for n in &out.notes {
        eprintln!("note: {n}");
    }
    let csv = rows_to_csv(&out.rows);
    match &args.out_csv {
        Some(p) => {
            std::fs::write(p, &csv).map_err(|e| format!("cannot write {}: {e}", p.display()))?
        }
        None => print!("{csv}"),
    }
    let summary = serde_json::to_string_pretty(&out.summaries).unwrap();
    match &args.out_summary {
        Some(p) => {
            std::fs::write(p, &summary).map_err(|e| format!("cannot write {}: {e}", p.display()))?
        }
        None => println!("{summary}"),
    }
    Ok(())
}

fn cmd_filter_plot(args: &FilterPlotArgs) -> Result<(), String> {
    let (a, b) = args.window;
    if !(-1.0 <= a && a < b && b <= 1.0) {
        return Err(format!(
            "mapped window [{a}, {b}] must satisfy -1 <= a < b <= 1"
        ));
    }
    if args.points < 2 {
        return Err("need at least 2 grid points".into());
    }
    let window = Window {
        a,
        b,
        a_m: a,
        b_m: b,
    };
    let degree = match degree_spec(args.degree, args.auto_degree) {
        DegreeSpec::Explicit { d } => d,
        DegreeSpec::Auto { d_factor, k_factor } => {
            degree_heuristic(&window, args.moments.max(1), d_factor, k_factor)
                .map_err(|e| e.to_string())?
        }
    };
    let plan = FilterPlan::build(window, args.moments.max(args.moment_index + 1), degree)
        .map_err(|e| e.to_string())?;
    let mut csv = String::from("t,value\n");
    for i in 0..args.points {
        let t = -1.0 + 2.0 * i as f64 / (args.points - 1) as f64;
        let v = scalar_filter_eval(&plan, args.moment_index, t);
        csv.push_str(&format!(
            "{},{}\n",
            chebslice_cli::experiment::fmt_float(Some(t)),
            chebslice_cli::experiment::fmt_float(Some(v))
        ));
    }
    write_or_print(&args.out, &csv)
}

fn cmd_count(args: &CountArgs) -> Result<(), String> {
    let (op, bounds, warnings) = load_operator(&args.matrix)?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    let window = map_window(&bounds, args.window.0, args.window.1).map_err(|e| e.to_string())?;
    let degree = match degree_spec(args.degree, args.auto_degree) {
        DegreeSpec::Explicit { d } => d,
        DegreeSpec::Auto { d_factor, k_factor } => {
            degree_heuristic(&window, 1, d_factor, k_factor).map_err(|e| e.to_string())?
        }
    };
    let est = match &op {
        Operator::Real(a) => estimate_eigencount(
            a.as_ref(),
            &bounds,
            &window,
            degree,
            args.samples,
            args.seed,
        ),
        Operator::Complex(a) => estimate_eigencount(
            a.as_ref(),
            &bounds,
            &window,
            degree,
            args.samples,
            args.seed,
        ),
    }
    .map_err(|e| e.to_string())?;
    println!("{}", serde_json::to_string_pretty(&est).unwrap());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Solve(args) => cmd_solve(args),
        Command::Bench(args) => cmd_bench(args),
        Command::FilterPlot(args) => cmd_filter_plot(args),
        Command::Count(args) => cmd_count(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("{}", json!({ "error": msg }));
            ExitCode::FAILURE
        }
    }
}
