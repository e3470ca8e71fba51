//! Numeric CSV, contrast files and the versioned fit-result JSON.
//!
//! Floats are written in the shortest form that parses back to the same
//! double, so write → parse is the identity on finite values.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fastica::{ComponentDiagnostics, FastIcaConfig};
use crate::inference::Contrast;
use crate::pipeline::PipelineOutput;

pub const SCHEMA_VERSION: u32 = 1;

/// Shortest round-trip representation; exponent form for very large or
/// small magnitudes.
pub fn format_f64(x: f64) -> String {
    format!("{x:?}")
}

fn parse_cell(cell: &str, row: usize, col: usize) -> Result<f64> {
    let t = cell.trim();
    let v: f64 = t.parse().map_err(|_| Error::Parse { row, col, msg: format!("not a number: {t:?}") })?;
    if !v.is_finite() {
        return Err(Error::Parse { row, col, msg: format!("non-finite value {t:?}") });
    }
    Ok(v)
}

/// Parses a numeric CSV. Rows and columns in errors are 1-based and count
/// the header line when there is one.
pub fn parse_matrix<R: Read>(reader: R, header: bool) -> Result<(DMatrix<f64>, Option<Vec<String>>)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(header).flexible(true).from_reader(reader);
    let names = if header {
        let h = rdr.headers().map_err(|e| csv_error(e, 1))?;
        Some(h.iter().map(|s| s.trim().to_string()).collect::<Vec<_>>())
    } else {
        None
    };
    let offset = usize::from(header);
    let mut values = Vec::new();
    let mut width = names.as_ref().map(Vec::len);
    let mut n = 0;
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1 + offset;
        let rec = rec.map_err(|e| csv_error(e, row))?;
        if rec.len() == 1 && rec[0].trim().is_empty() {
            continue;
        }
        match width {
            None => width = Some(rec.len()),
            Some(w) if w != rec.len() => {
                return Err(Error::Parse { row, col: rec.len().min(w) + 1, msg: format!("expected {w} fields, got {}", rec.len()) })
            }
            _ => {}
        }
        for (j, cell) in rec.iter().enumerate() {
            values.push(parse_cell(cell, row, j + 1)?);
        }
        n += 1;
    }
    let d = width.unwrap_or(0);
    if n == 0 || d == 0 {
        return Err(Error::Parse { row: 1 + offset, col: 1, msg: "no data rows".into() });
    }
    Ok((DMatrix::from_row_slice(n, d, &values), names))
}

fn csv_error(e: csv::Error, row: usize) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse { row, col: 1, msg: format!("{other:?}") },
    }
}

pub fn read_matrix(path: &Path, header: bool) -> Result<DMatrix<f64>> {
    Ok(parse_matrix(BufReader::new(File::open(path)?), header)?.0)
}

pub fn write_matrix<W: Write>(mut w: W, m: &DMatrix<f64>, header: Option<&[String]>) -> Result<()> {
    if let Some(h) = header {
        if h.len() != m.ncols() {
            return Err(Error::DimensionMismatch { expected: m.ncols(), got: h.len() });
        }
        writeln!(w, "{}", h.join(","))?;
    }
    let mut line = String::new();
    for i in 0..m.nrows() {
        line.clear();
        for j in 0..m.ncols() {
            let x = m[(i, j)];
            if !x.is_finite() {
                return Err(Error::NonFinite { row: i, col: j });
            }
            if j > 0 {
                line.push(',');
            }
            line.push_str(&format_f64(x));
        }
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_matrix_file(path: &Path, m: &DMatrix<f64>, header: Option<&[String]>) -> Result<()> {
    write_matrix(BufWriter::new(File::create(path)?), m, header)
}

/// Default column names `x1, …, xd`.
pub fn column_names(prefix: &str, d: usize) -> Vec<String> {
    (1..=d).map(|k| format!("{prefix}{k}")).collect()
}

pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub fn from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    let d = rows.first().map_or(0, Vec::len);
    if let Some(r) = rows.iter().find(|r| r.len() != d) {
        return Err(Error::DimensionMismatch { expected: d, got: r.len() });
    }
    Ok(DMatrix::from_fn(n, d, |i, j| rows[i][j]))
}

/// One contrast per line, fields separated by commas or whitespace, indices
/// 1-based:
///
/// ```text
/// entry, i, j
/// linear, j, u₁, …, u_d
/// bilinear, u₁, …, u_d, v₁, …, v_d
/// ```
///
/// Blank lines and lines starting with `#` are skipped.
pub fn parse_contrasts(text: &str, d: usize) -> Result<Vec<Contrast>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let row = i + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()).collect();
        let index = |col: usize| -> Result<usize> {
            let f = fields.get(col - 1).ok_or_else(|| Error::Parse { row, col, msg: "missing index".into() })?;
            match f.parse::<usize>() {
                Ok(k) if (1..=d).contains(&k) => Ok(k - 1),
                _ => Err(Error::Parse { row, col, msg: format!("index must be an integer in 1..={d}, got {f:?}") }),
            }
        };
        let numbers = |from: usize, len: usize| -> Result<Vec<f64>> {
            if fields.len() != from - 1 + len {
                return Err(Error::Parse {
                    row,
                    col: fields.len().min(from - 1 + len) + 1,
                    msg: format!("expected {} fields, got {}", from - 1 + len, fields.len()),
                });
            }
            (from..from + len).map(|col| parse_cell(fields[col - 1], row, col)).collect()
        };
        let tag = fields[0].to_ascii_lowercase();
        let c = match tag.as_str() {
            "entry" => {
                if fields.len() != 3 {
                    return Err(Error::Parse { row, col: fields.len().min(3) + 1, msg: "entry takes two indices".into() });
                }
                Contrast::Entry { i: index(2)?, j: index(3)? }
            }
            "linear" => Contrast::Linear { j: index(2)?, u: numbers(3, d)? },
            "bilinear" => {
                let uv = numbers(2, 2 * d)?;
                Contrast::Bilinear { u: uv[..d].to_vec(), v: uv[d..].to_vec() }
            }
            other => return Err(Error::Parse { row, col: 1, msg: format!("unknown contrast tag {other:?}") }),
        };
        out.push(c);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhiteningRecord {
    pub mode: String,
    pub sigma_half: Vec<Vec<f64>>,
    pub sigma_inv_half: Vec<Vec<f64>>,
    pub mean: Option<Vec<f64>>,
    /// Half-open row ranges `[start, end)` of the input.
    pub covariance_rows: [usize; 2],
    pub fitting_rows: [usize; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub max_coherence: f64,
    pub coherence_flag: bool,
    pub components: Vec<ComponentDiagnostics>,
}

/// The fit-result document. Matrices are arrays of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub schema: u32,
    pub d: usize,
    pub n: usize,
    pub n_fit: usize,
    /// Observation-scale columns `Σ̂^{1/2} âⱼ`.
    pub a_hat: Vec<Vec<f64>>,
    /// Orthonormal columns in whitened coordinates.
    pub a_hat_whitened: Vec<Vec<f64>>,
    pub kappa_hat: Vec<f64>,
    pub iters_used: Vec<usize>,
    pub config: FitConfigEcho,
    pub whitening: WhiteningRecord,
    pub diagnostics: FitDiagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfigEcho {
    pub input: Option<String>,
    pub init: String,
    pub slices: Option<usize>,
    pub max_iter: usize,
    pub conv_tol: f64,
    pub prewhiten: String,
    pub split_fraction: f64,
    pub seed: u64,
    pub components: usize,
}

impl FitRecord {
    pub fn new(out: &PipelineOutput, n: usize, cfg: &FastIcaConfig, prewhiten: &str, input: Option<String>) -> Self {
        let w = &out.whitening;
        let est = &out.estimate;
        let d = est.d();
        Self {
            schema: SCHEMA_VERSION,
            d,
            n,
            n_fit: out.n_fit(),
            a_hat: to_rows(&est.a_hat),
            a_hat_whitened: to_rows(&out.whitened_estimate.a_hat),
            kappa_hat: est.kappa_hat.clone(),
            iters_used: est.iters_used.clone(),
            config: FitConfigEcho {
                input,
                init: cfg.init.kind.name().to_string(),
                slices: cfg.init.slices,
                max_iter: cfg.iterations(d),
                conv_tol: cfg.conv_tol,
                prewhiten: prewhiten.to_string(),
                split_fraction: 0.5,
                seed: cfg.seed,
                components: est.components(),
            },
            whitening: WhiteningRecord {
                mode: prewhiten.split(':').next().unwrap_or("").to_string(),
                sigma_half: to_rows(&w.sigma_half),
                sigma_inv_half: to_rows(&w.sigma_inv_half),
                mean: w.mean.as_ref().map(|m| m.iter().copied().collect()),
                covariance_rows: [w.covariance_rows.start, w.covariance_rows.end],
                fitting_rows: [w.fitting_rows.start, w.fitting_rows.end],
            },
            diagnostics: FitDiagnostics {
                max_coherence: est.max_coherence(),
                coherence_flag: est.coherence_flag(),
                components: est.init_diagnostics.clone(),
            },
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let v: serde_json::Value = serde_json::from_str(text)?;
        match v.get("schema").and_then(serde_json::Value::as_u64) {
            Some(s) if s == u64::from(SCHEMA_VERSION) => Ok(serde_json::from_value(v)?),
            other => Err(Error::InvalidInput(format!("unsupported result schema {other:?}, expected {SCHEMA_VERSION}"))),
        }
    }

    pub fn a_hat(&self) -> Result<DMatrix<f64>> {
        from_rows(&self.a_hat)
    }

    pub fn a_hat_whitened(&self) -> Result<DMatrix<f64>> {
        from_rows(&self.a_hat_whitened)
    }
}

/// Reads a mixing estimate from either a fit-result JSON or a numeric CSV
/// (`d` rows, one column per direction).
pub fn read_estimate(path: &Path) -> Result<DMatrix<f64>> {
    let mut text = String::new();
    File::open(path)?.read_to_string(&mut text)?;
    if text.trim_start().starts_with('{') {
        FitRecord::from_json(&text)?.a_hat()
    } else {
        Ok(parse_matrix(text.as_bytes(), false)?.0)
    }
}
