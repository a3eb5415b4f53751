//! MatrixMarket exchange format and plain-text vector files.
//!
//! Supported headers: `%%MatrixMarket matrix coordinate {real|integer|pattern} {general|symmetric}`
//! and `%%MatrixMarket matrix array {real|integer} {general|symmetric}`. Symmetric
//! input is expanded on read; output is always `general`. Values are written
//! with the shortest round-trip representation, so write/read is lossless.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use super::MatrixHandle;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Layout {
    Coordinate,
    Array,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Field {
    Real,
    Pattern,
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

pub fn read_matrix_market(path: impl AsRef<Path>) -> Result<MatrixHandle> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| io_err(path, e))?;
    parse_matrix_market(BufReader::new(f), path)
}

/// Parses MatrixMarket text; `path` is only used in error messages.
pub fn parse_matrix_market(reader: impl BufRead, path: &Path) -> Result<MatrixHandle> {
    let mut lines = reader.lines().enumerate();

    let (lineno, header) = match lines.next() {
        Some((k, l)) => (k + 1, l.map_err(|e| io_err(path, e))?),
        None => return Err(parse_err(path, 1, "empty file")),
    };
    let tokens: Vec<String> = header
        .split_whitespace()
        .map(|t| t.to_ascii_lowercase())
        .collect();
    if tokens.len() != 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return Err(parse_err(path, lineno, "expected '%%MatrixMarket matrix' header"));
    }
    let layout = match tokens[2].as_str() {
        "coordinate" => Layout::Coordinate,
        "array" => Layout::Array,
        other => return Err(parse_err(path, lineno, format!("unsupported format '{other}'"))),
    };
    let field = match tokens[3].as_str() {
        "real" | "double" | "integer" => Field::Real,
        "pattern" if layout == Layout::Coordinate => Field::Pattern,
        other => return Err(parse_err(path, lineno, format!("unsupported field '{other}'"))),
    };
    let symmetric = match tokens[4].as_str() {
        "general" => false,
        "symmetric" => true,
        other => {
            return Err(parse_err(
                path,
                lineno,
                format!("unsupported symmetry '{other}'"),
            ))
        }
    };

    // Remaining non-comment lines, with their 1-based line numbers.
    let mut body = Vec::new();
    for (k, l) in lines {
        let l = l.map_err(|e| io_err(path, e))?;
        let t = l.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        body.push((k + 1, t.to_string()));
    }
    let mut body = body.into_iter();
    let (size_line, size) = body
        .next()
        .ok_or_else(|| parse_err(path, lineno, "missing size line"))?;
    let dims: Vec<usize> = size
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| parse_err(path, size_line, format!("bad size line: {e}")))?;

    let num = |line: usize, t: &str| -> Result<f64> {
        let v: f64 = t
            .parse()
            .map_err(|_| parse_err(path, line, format!("bad number '{t}'")))?;
        if !v.is_finite() {
            return Err(parse_err(path, line, "non-finite value"));
        }
        Ok(v)
    };

    match layout {
        Layout::Coordinate => {
            let [m, n, nnz] = dims[..] else {
                return Err(parse_err(path, size_line, "expected 'rows cols nnz'"));
            };
            if symmetric && m != n {
                return Err(parse_err(path, size_line, "symmetric matrix must be square"));
            }
            let mut trip = Vec::with_capacity(if symmetric { 2 * nnz } else { nnz });
            let mut count = 0;
            for (line, text) in body {
                let t: Vec<&str> = text.split_whitespace().collect();
                let want = if field == Field::Pattern { 2 } else { 3 };
                if t.len() != want {
                    return Err(parse_err(path, line, format!("expected {want} fields")));
                }
                let idx = |s: &str, lim: usize| -> Result<usize> {
                    let k: usize = s
                        .parse()
                        .map_err(|_| parse_err(path, line, format!("bad index '{s}'")))?;
                    if k == 0 || k > lim {
                        return Err(parse_err(path, line, format!("index {k} out of range 1..={lim}")));
                    }
                    Ok(k - 1)
                };
                let (r, c) = (idx(t[0], m)?, idx(t[1], n)?);
                let v = if field == Field::Pattern { 1.0 } else { num(line, t[2])? };
                trip.push((r, c, v));
                if symmetric && r != c {
                    trip.push((c, r, v));
                }
                count += 1;
            }
            if count != nnz {
                return Err(parse_err(
                    path,
                    size_line,
                    format!("header declares {nnz} entries, found {count}"),
                ));
            }
            MatrixHandle::from_triplets(m, n, trip)
        }
        Layout::Array => {
            let [m, n] = dims[..] else {
                return Err(parse_err(path, size_line, "expected 'rows cols'"));
            };
            if symmetric && m != n {
                return Err(parse_err(path, size_line, "symmetric matrix must be square"));
            }
            let mut vals = Vec::new();
            for (line, text) in body {
                for t in text.split_whitespace() {
                    vals.push(num(line, t)?);
                }
            }
            let mut data = vec![0.0; m * n];
            if symmetric {
                // Lower triangle, column-major.
                let want = n * (n + 1) / 2;
                if vals.len() != want {
                    return Err(parse_err(path, size_line, format!("expected {want} values, found {}", vals.len())));
                }
                let mut it = vals.into_iter();
                for j in 0..n {
                    for i in j..n {
                        let v = it.next().unwrap();
                        data[i * n + j] = v;
                        data[j * n + i] = v;
                    }
                }
            } else {
                if vals.len() != m * n {
                    return Err(parse_err(path, size_line, format!("expected {} values, found {}", m * n, vals.len())));
                }
                for (k, v) in vals.into_iter().enumerate() {
                    let (i, j) = (k % m, k / m);
                    data[i * n + j] = v;
                }
            }
            MatrixHandle::from_row_major(m, n, data)
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| io_err(path, e))
}

/// Writes `a` in coordinate format if sparse, array format if dense.
pub fn write_matrix_market(path: impl AsRef<Path>, a: &MatrixHandle) -> Result<()> {
    let path = path.as_ref();
    if a.is_sparse() {
        write_coordinate(path, a)
    } else {
        write_array(path, a.nrows(), a.ncols(), |i, j| a.get(i, j))
    }
}

pub fn write_coordinate(path: impl AsRef<Path>, a: &MatrixHandle) -> Result<()> {
    let path = path.as_ref();
    let trip = a.triplets();
    let mut w = create(path)?;
    let mut go = || -> std::io::Result<()> {
        writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(w, "{} {} {}", a.nrows(), a.ncols(), trip.len())?;
        for (i, j, v) in &trip {
            writeln!(w, "{} {} {}", i + 1, j + 1, v)?;
        }
        w.flush()
    };
    go().map_err(|e| io_err(path, e))
}

/// Writes a dense `rows × cols` matrix given by `entry(i, j)` in array
/// (column-major) format.
pub fn write_array(
    path: impl AsRef<Path>,
    rows: usize,
    cols: usize,
    entry: impl Fn(usize, usize) -> f64,
) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let mut go = || -> std::io::Result<()> {
        writeln!(w, "%%MatrixMarket matrix array real general")?;
        writeln!(w, "{rows} {cols}")?;
        for j in 0..cols {
            for i in 0..rows {
                writeln!(w, "{}", entry(i, j))?;
            }
        }
        w.flush()
    };
    go().map_err(|e| io_err(path, e))
}

/// Reads a vector file: one real per line, blank lines and `#` comments ignored.
pub fn read_vector(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| io_err(path, e))?;
    parse_vector(BufReader::new(f), path)
}

pub fn parse_vector(reader: impl BufRead, path: &Path) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (k, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        let t = line.split('#').next().unwrap_or("").trim();
        if t.is_empty() {
            continue;
        }
        let v: f64 = t
            .parse()
            .map_err(|_| parse_err(path, k + 1, format!("bad number '{t}'")))?;
        if !v.is_finite() {
            return Err(parse_err(path, k + 1, "non-finite value"));
        }
        out.push(v);
    }
    Ok(out)
}

pub fn write_vector(path: impl AsRef<Path>, v: &[f64]) -> Result<()> {
    write_vector_with_comment(path, v, None)
}

pub fn write_vector_with_comment(
    path: impl AsRef<Path>,
    v: &[f64],
    comment: Option<&str>,
) -> Result<()> {
    let path: PathBuf = path.as_ref().to_path_buf();
    let mut w = create(&path)?;
    let mut go = || -> std::io::Result<()> {
        if let Some(c) = comment {
            for l in c.lines() {
                writeln!(w, "# {l}")?;
            }
        }
        for x in v {
            writeln!(w, "{x}")?;
        }
        w.flush()
    };
    go().map_err(|e| io_err(&path, e))
}
