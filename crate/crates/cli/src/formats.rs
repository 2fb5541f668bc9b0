//! Plain-text input formats and the `start:stop:count` grid syntax.
//!
//! A vector file holds decimal numbers separated by any whitespace. A
//! matrix file holds one row per line, entries separated by commas or
//! whitespace; blank lines are ignored.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;

fn parse_number(token: &str, path: &str) -> Result<f64, String> {
    token
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| format!("{path}: '{token}' is not a finite number"))
}

fn read(path: &Path) -> Result<String, String> {
    std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

pub fn parse_vector(text: &str, origin: &str) -> Result<Vec<f64>, String> {
    let v = text
        .split_whitespace()
        .map(|t| parse_number(t, origin))
        .collect::<Result<Vec<_>, _>>()?;
    if v.is_empty() {
        return Err(format!("{origin}: no numbers found"));
    }
    Ok(v)
}

pub fn read_vector(path: &Path) -> Result<Vec<f64>, String> {
    parse_vector(&read(path)?, &path.display().to_string())
}

/// One number per line, shortest representation that reads back exactly.
pub fn format_vector(v: &[f64]) -> String {
    v.iter().fold(String::new(), |mut s, x| {
        let _ = writeln!(s, "{x:?}");
        s
    })
}

pub fn parse_matrix(text: &str, origin: &str) -> Result<DMatrix<f64>, String> {
    let rows = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.split(|c: char| c == ',' || c.is_whitespace())
                .filter(|t| !t.is_empty())
                .map(|t| parse_number(t, origin))
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    let n = rows.len();
    if n == 0 {
        return Err(format!("{origin}: empty matrix"));
    }
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != n) {
        return Err(format!(
            "{origin}: row {} has {} entries, expected {n}",
            i + 1,
            r.len()
        ));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>, String> {
    parse_matrix(&read(path)?, &path.display().to_string())
}

/// Rows on lines, entries comma-separated.
pub fn format_matrix(m: &DMatrix<f64>) -> String {
    let mut s = String::new();
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:?}", m[(i, j)])).collect();
        let _ = writeln!(s, "{}", row.join(","));
    }
    s
}

/// `count` evenly spaced points from `start` to `stop` inclusive.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = spec.split(':').collect();
    let [start, stop, count] = parts.as_slice() else {
        return Err(format!("grid '{spec}' must have the form start:stop:count"));
    };
    let start = parse_number(start.trim(), "grid")?;
    let stop = parse_number(stop.trim(), "grid")?;
    let count: usize = count
        .trim()
        .parse()
        .map_err(|_| format!("grid count '{count}' is not a positive integer"))?;
    if count == 0 {
        return Err("grid count must be at least 1".into());
    }
    if start < 0.0 || stop < start {
        return Err(format!("grid needs 0 <= start <= stop, got {start}:{stop}"));
    }
    if count == 1 {
        return Ok(vec![start]);
    }
    let step = (stop - start) / (count - 1) as f64;
    Ok((0..count)
        .map(|i| {
            if i + 1 == count {
                stop
            } else {
                start + step * i as f64
            }
        })
        .collect())
}

/// Comma-separated, strictly ascending levels in `(0, 1)`.
pub fn parse_alphas(spec: &str) -> Result<Vec<f64>, String> {
    let alphas = spec
        .split(',')
        .map(|t| parse_number(t.trim(), "alphas"))
        .collect::<Result<Vec<_>, _>>()?;
    if alphas.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
        return Err("every alpha must lie in (0, 1)".into());
    }
    if alphas.windows(2).any(|w| w[0] >= w[1]) {
        return Err("alphas must be strictly ascending".into());
    }
    Ok(alphas)
}

/// Fixed 17-significant-digit scientific notation.
pub fn csv_number(x: f64) -> String {
    format!("{x:.16e}")
}
