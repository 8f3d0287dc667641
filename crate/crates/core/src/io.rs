//! Matrix ingestion (dense CSV, MatrixMarket) and factor/trace output.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::DataMatrix;
use crate::error::{NmfError, Result};
use crate::solver::FitResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FormatKind {
    DenseCsv,
    MatrixMarket,
}

impl FromStr for FormatKind {
    type Err = NmfError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(FormatKind::DenseCsv),
            "mtx" | "mm" | "matrixmarket" => Ok(FormatKind::MatrixMarket),
            other => Err(NmfError::Config(format!("unknown matrix format {other:?} (expected csv or mtx)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatrixFormat {
    pub kind: FormatKind,
    /// Largest `F * N` allowed when densifying sparse input.
    pub densify_limit: usize,
}

pub const DEFAULT_DENSIFY_LIMIT: usize = 100_000_000;

impl MatrixFormat {
    pub fn new(kind: FormatKind) -> Self {
        Self { kind, densify_limit: DEFAULT_DENSIFY_LIMIT }
    }

    pub fn csv() -> Self {
        Self::new(FormatKind::DenseCsv)
    }

    pub fn matrix_market() -> Self {
        Self::new(FormatKind::MatrixMarket)
    }
}

/// Reads a nonnegative data matrix.
pub fn load_matrix(path: impl AsRef<Path>, format: MatrixFormat) -> Result<DataMatrix> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let values = match format.kind {
        FormatKind::DenseCsv => parse_csv(&text, path)?,
        FormatKind::MatrixMarket => parse_matrix_market(&text, path, format.densify_limit)?,
    };
    DataMatrix::new(values)
}

/// Reads a dense CSV matrix without the nonnegativity check, e.g. saved factors.
pub fn load_csv_array(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    let path = path.as_ref();
    parse_csv(&fs::read_to_string(path)?, path)
}

fn parse_error(path: &Path, line: usize, column: usize, message: impl Into<String>) -> NmfError {
    NmfError::Parse { path: path.to_path_buf(), line, column, message: message.into() }
}

/// Comma-separated, no quoting. A first row whose first field is not a
/// number is taken as a header and skipped. Blank lines are ignored.
pub(crate) fn parse_csv(text: &str, path: &Path) -> Result<Array2<f64>> {
    let mut values = Vec::new();
    let mut width = None;
    let mut rows = 0;
    let mut seen_first = false;
    for (index, line) in text.lines().enumerate() {
        let line_no = index + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if !seen_first {
            seen_first = true;
            if fields[0].parse::<f64>().is_err() {
                continue;
            }
        }
        match width {
            None => width = Some(fields.len()),
            Some(w) if w != fields.len() => {
                return Err(parse_error(path, line_no, 1, format!("expected {w} fields, found {}", fields.len())));
            }
            _ => {}
        }
        for (col, field) in fields.iter().enumerate() {
            let x = field
                .parse::<f64>()
                .map_err(|_| parse_error(path, line_no, col + 1, format!("invalid number {field:?}")))?;
            values.push(x);
        }
        rows += 1;
    }
    let width = width.ok_or(NmfError::Empty("CSV file has no data rows"))?;
    Ok(Array2::from_shape_vec((rows, width), values).expect("row widths checked"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum MmLayout {
    Coordinate,
    Array,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum MmField {
    Real,
    Pattern,
}

/// MatrixMarket `coordinate` (real, integer or pattern) and `array` (real or
/// integer) with `general` or `symmetric` symmetry. Coordinate entries are
/// 1-based; duplicates are summed and absent entries are zero.
pub(crate) fn parse_matrix_market(text: &str, path: &Path, densify_limit: usize) -> Result<Array2<f64>> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines.next().ok_or(NmfError::Empty("MatrixMarket file is empty"))?;
    let tokens: Vec<String> = header.split_whitespace().map(str::to_ascii_lowercase).collect();
    if tokens.len() != 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return Err(parse_error(path, 1, 1, "expected '%%MatrixMarket matrix <layout> <field> <symmetry>' header"));
    }
    let layout = match tokens[2].as_str() {
        "coordinate" => MmLayout::Coordinate,
        "array" => MmLayout::Array,
        other => return Err(parse_error(path, 1, 3, format!("unsupported layout {other:?}"))),
    };
    let field = match tokens[3].as_str() {
        "real" | "integer" | "double" => MmField::Real,
        "pattern" if layout == MmLayout::Coordinate => MmField::Pattern,
        other => return Err(parse_error(path, 1, 4, format!("unsupported field {other:?}"))),
    };
    let symmetric = match tokens[4].as_str() {
        "general" => false,
        "symmetric" => true,
        other => return Err(parse_error(path, 1, 5, format!("unsupported symmetry {other:?}"))),
    };

    let mut body = lines.filter(|(_, l)| {
        let t = l.trim();
        !t.is_empty() && !t.starts_with('%')
    });
    let (size_line, size_text) = body.next().ok_or_else(|| parse_error(path, 1, 1, "missing size line"))?;
    let sizes = parse_usizes(size_text, path, size_line)?;
    let expected = if layout == MmLayout::Coordinate { 3 } else { 2 };
    if sizes.len() != expected {
        return Err(parse_error(path, size_line, 1, format!("size line needs {expected} integers")));
    }
    let (rows, cols) = (sizes[0], sizes[1]);
    if rows == 0 || cols == 0 {
        return Err(NmfError::Empty("MatrixMarket matrix has a zero dimension"));
    }
    if symmetric && rows != cols {
        return Err(parse_error(path, size_line, 1, "symmetric matrix must be square"));
    }
    if rows.checked_mul(cols).is_none_or(|n| n > densify_limit) {
        return Err(NmfError::DensifyLimit { rows, cols, limit: densify_limit });
    }

    let mut dense = Array2::zeros((rows, cols));
    match layout {
        MmLayout::Coordinate => {
            let nnz = sizes[2];
            let mut count = 0;
            for (line_no, text) in body {
                let fields: Vec<&str> = text.split_whitespace().collect();
                let want = if field == MmField::Pattern { 2 } else { 3 };
                if fields.len() != want {
                    return Err(parse_error(
                        path,
                        line_no,
                        1,
                        format!("expected {want} fields, found {}", fields.len()),
                    ));
                }
                let index = |k: usize, bound: usize| -> Result<usize> {
                    match fields[k].parse::<usize>() {
                        Ok(i) if (1..=bound).contains(&i) => Ok(i - 1),
                        _ => {
                            Err(parse_error(path, line_no, k + 1, format!("index {:?} outside 1..={bound}", fields[k])))
                        }
                    }
                };
                let (i, j) = (index(0, rows)?, index(1, cols)?);
                let value = match field {
                    MmField::Pattern => 1.0,
                    MmField::Real => parse_f64(fields[2], path, line_no, 3)?,
                };
                dense[[i, j]] += value;
                if symmetric && i != j {
                    dense[[j, i]] += value;
                }
                count += 1;
            }
            if count != nnz {
                return Err(parse_error(
                    path,
                    size_line,
                    3,
                    format!("header declares {nnz} entries, file has {count}"),
                ));
            }
        }
        MmLayout::Array => {
            // Column-major; symmetric files store the lower triangle only.
            let mut slots = (0..cols).flat_map(|j| {
                let start = if symmetric { j } else { 0 };
                (start..rows).map(move |i| (i, j))
            });
            let mut last_line = size_line;
            for (line_no, text) in body {
                last_line = line_no;
                for (k, token) in text.split_whitespace().enumerate() {
                    let (i, j) = slots
                        .next()
                        .ok_or_else(|| parse_error(path, line_no, k + 1, "more values than the declared size"))?;
                    let value = parse_f64(token, path, line_no, k + 1)?;
                    dense[[i, j]] = value;
                    if symmetric {
                        dense[[j, i]] = value;
                    }
                }
            }
            if slots.next().is_some() {
                return Err(parse_error(path, last_line, 1, "fewer values than the declared size"));
            }
        }
    }
    Ok(dense)
}

fn parse_usizes(text: &str, path: &Path, line: usize) -> Result<Vec<usize>> {
    text.split_whitespace()
        .enumerate()
        .map(|(k, t)| t.parse().map_err(|_| parse_error(path, line, k + 1, format!("invalid integer {t:?}"))))
        .collect()
}

fn parse_f64(token: &str, path: &Path, line: usize, column: usize) -> Result<f64> {
    token.parse().map_err(|_| parse_error(path, line, column, format!("invalid number {token:?}")))
}

/// Writes `m` as CSV with 17 significant digits, enough to round-trip exactly.
pub fn write_csv_array(m: &Array2<f64>, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    for row in m.rows() {
        let mut first = true;
        for x in row {
            if !first {
                out.write_all(b",")?;
            }
            first = false;
            write!(out, "{x:.16e}")?;
        }
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Writes `W.csv` and `H.csv` into `dir`, creating it if needed.
pub fn save_factors(result: &FitResult, dir: impl AsRef<Path>) -> Result<(PathBuf, PathBuf)> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let (w_path, h_path) = (dir.join("W.csv"), dir.join("H.csv"));
    write_csv_array(result.factors.w(), &w_path)?;
    write_csv_array(result.factors.h(), &h_path)?;
    Ok((w_path, h_path))
}

pub const TRACE_HEADER: &str = "iter,objective,seconds,kkt_w,kkt_h";

/// One row per outer iteration; KKT columns are empty when not recorded.
pub fn save_trace(result: &FitResult, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    writeln!(out, "{TRACE_HEADER}")?;
    for row in &result.trace {
        write!(out, "{},{:.16e},{:.9}", row.iter, row.objective, row.seconds)?;
        match row.kkt {
            Some(k) => writeln!(out, ",{:.16e},{:.16e}", k.res_w, k.res_h)?,
            None => writeln!(out, ",,")?,
        }
    }
    out.flush()?;
    Ok(())
}
