//! Matrix Market coordinate-format reader for Hermitian operators.
//!
//! Accepted header grammar:
//! `%%MatrixMarket matrix coordinate real|complex symmetric|hermitian|general`
//! (case-insensitive). Symmetric/Hermitian files may store one triangle;
//! general files must contain Hermitian content and are accepted with a
//! warning. Pattern and integer fields are rejected.

use std::io::BufRead;
use std::path::Path;

use nalgebra::Complex;
use thiserror::Error;

use chebslice::matrix::SparseHermitian;

/// General-header files must be Hermitian to this relative tolerance.
const GENERAL_HERMITIAN_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum MmError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("unsupported format: {0}")]
    Unsupported(String),
    #[error("matrix is {rows}x{cols}, not square")]
    NotSquare { rows: usize, cols: usize },
    #[error(transparent)]
    Build(#[from] chebslice::Error),
}

/// A loaded operator: real symmetric or complex Hermitian, plus any
/// warnings produced during validation.
pub enum LoadedMatrix {
    Real(SparseHermitian<f64>),
    Complex(SparseHermitian<Complex<f64>>),
}

impl LoadedMatrix {
    pub fn dim(&self) -> usize {
        match self {
            LoadedMatrix::Real(a) => chebslice::matrix::HermitianOp::dim(a),
            LoadedMatrix::Complex(a) => chebslice::matrix::HermitianOp::dim(a),
        }
    }

    pub fn nnz(&self) -> usize {
        match self {
            LoadedMatrix::Real(a) => a.nnz(),
            LoadedMatrix::Complex(a) => a.nnz(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Field {
    Real,
    Complex,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Symmetry {
    Symmetric,
    Hermitian,
    General,
}

pub struct LoadResult {
    pub matrix: LoadedMatrix,
    pub warnings: Vec<String>,
}

pub fn load_matrix_market(path: &Path) -> Result<LoadResult, MmError> {
    let file = std::fs::File::open(path).map_err(|e| MmError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let reader = std::io::BufReader::new(file);
    let mut lines = reader.lines().enumerate();

    // Header line.
    let (_, header) = lines.next().ok_or_else(|| MmError::Parse {
        line: 1,
        msg: "empty file".into(),
    })?;
    let header = header.map_err(|e| MmError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let tokens: Vec<String> = header
        .split_whitespace()
        .map(|t| t.to_lowercase())
        .collect();
    if tokens.len() < 5 || !tokens[0].eq_ignore_ascii_case("%%matrixmarket") {
        return Err(MmError::Parse {
            line: 1,
            msg: "header must start with %%MatrixMarket".into(),
        });
    }
    if tokens[1] != "matrix" || tokens[2] != "coordinate" {
        return Err(MmError::Unsupported(format!(
            "only `matrix coordinate` objects are supported, got `{} {}`",
            tokens[1], tokens[2]
        )));
    }
    let field = match tokens[3].as_str() {
        "real" => Field::Real,
        "complex" => Field::Complex,
        "pattern" => {
            return Err(MmError::Unsupported(
                "pattern files carry no values; numeric values are required".into(),
            ))
        }
        other => return Err(MmError::Unsupported(format!("field `{other}`"))),
    };
    let symmetry = match tokens[4].as_str() {
        "symmetric" => Symmetry::Symmetric,
        "hermitian" => Symmetry::Hermitian,
        "general" => Symmetry::General,
        other => return Err(MmError::Unsupported(format!("symmetry `{other}`"))),
    };

    // Size line (after comments).
    let mut size: Option<(usize, usize, usize)> = None;
    let mut entries_real: Vec<(usize, usize, f64)> = Vec::new();
    let mut entries_cplx: Vec<(usize, usize, Complex<f64>)> = Vec::new();

    for (idx, line) in lines {
        let lineno = idx + 1;
        let line = line.map_err(|e| MmError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('%') {
            continue;
        }
        let toks: Vec<&str> = trimmed.split_whitespace().collect();
        match size {
            None => {
                if toks.len() != 3 {
                    return Err(MmError::Parse {
                        line: lineno,
                        msg: "size line must be `rows cols nnz`".into(),
                    });
                }
                let rows = parse_usize(toks[0], lineno)?;
                let cols = parse_usize(toks[1], lineno)?;
                let nnz = parse_usize(toks[2], lineno)?;
                if rows != cols {
                    return Err(MmError::NotSquare { rows, cols });
                }
                size = Some((rows, cols, nnz));
                entries_real.reserve(nnz);
            }
            Some((rows, _, _)) => {
                let need = if field == Field::Complex { 4 } else { 3 };
                if toks.len() != need {
                    return Err(MmError::Parse {
                        line: lineno,
                        msg: format!("expected {need} fields per entry"),
                    });
                }
                let i = parse_usize(toks[0], lineno)?;
                let j = parse_usize(toks[1], lineno)?;
                if i == 0 || j == 0 || i > rows || j > rows {
                    return Err(MmError::Parse {
                        line: lineno,
                        msg: format!("index ({i}, {j}) out of range for dimension {rows}"),
                    });
                }
                match field {
                    Field::Real => {
                        entries_real.push((i - 1, j - 1, parse_f64(toks[2], lineno)?));
                    }
                    Field::Complex => {
                        let re = parse_f64(toks[2], lineno)?;
                        let im = parse_f64(toks[3], lineno)?;
                        entries_cplx.push((i - 1, j - 1, Complex::new(re, im)));
                    }
                }
            }
        }
    }

    let (n, _, declared_nnz) = size.ok_or(MmError::Parse {
        line: 0,
        msg: "missing size line".into(),
    })?;
    let stored = entries_real.len() + entries_cplx.len();
    if stored != declared_nnz {
        return Err(MmError::Parse {
            line: 0,
            msg: format!("size line declares {declared_nnz} entries, file has {stored}"),
        });
    }

    let mut warnings = Vec::new();
    let rel_tol = match symmetry {
        Symmetry::General => {
            warnings.push(format!(
                "header declares `general`; content validated as Hermitian to {GENERAL_HERMITIAN_TOL:.0e} relative"
            ));
            GENERAL_HERMITIAN_TOL
        }
        // One-triangle storage: mirrored pairs are exact by construction, so
        // only genuinely inconsistent duplicates can trip this.
        Symmetry::Symmetric | Symmetry::Hermitian => GENERAL_HERMITIAN_TOL,
    };

    let matrix = match field {
        Field::Real => {
            LoadedMatrix::Real(SparseHermitian::from_triplets(n, &entries_real, rel_tol)?)
        }
        Field::Complex => {
            LoadedMatrix::Complex(SparseHermitian::from_triplets(n, &entries_cplx, rel_tol)?)
        }
    };
    Ok(LoadResult { matrix, warnings })
}

fn parse_usize(tok: &str, line: usize) -> Result<usize, MmError> {
    tok.parse().map_err(|_| MmError::Parse {
        line,
        msg: format!("cannot parse `{tok}` as an index"),
    })
}

fn parse_f64(tok: &str, line: usize) -> Result<f64, MmError> {
    // Fortran-style exponents (1.5D+02) occur in the wild.
    let norm = tok.replace(['D', 'd'], "e");
    norm.parse().map_err(|_| MmError::Parse {
        line,
        msg: format!("cannot parse `{tok}` as a number"),
    })
}
