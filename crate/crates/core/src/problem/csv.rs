//! Dataset CSV format: `x_1,...,x_d,y` per row, optional header, UTF-8.

use super::LinearProblem;
use crate::{Error, Result};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

/// Writes a dataset with 17 significant digits per value, which round-trips
/// `f64` exactly.
pub fn export_csv(problem: &LinearProblem, path: &Path, header: bool) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?);
    let werr = |e: std::io::Error| Error::Io {
        path: path.display().to_string(),
        source: e,
    };
    if header {
        let cols: Vec<String> = (1..=problem.d())
            .map(|j| format!("x_{j}"))
            .chain(std::iter::once("y".to_string()))
            .collect();
        writeln!(out, "{}", cols.join(",")).map_err(werr)?;
    }
    for i in 0..problem.n() {
        let mut line = String::new();
        for v in problem.row(i) {
            line.push_str(&format!("{v:.16e},"));
        }
        line.push_str(&format!("{:.16e}", problem.target(i)));
        writeln!(out, "{line}").map_err(werr)?;
    }
    out.flush().map_err(werr)
}

/// Loads a dataset. Rows are `d` feature columns followed by one target
/// column; parse failures report the 1-based line number. Loaded problems
/// carry no stored true solution.
pub fn load_csv(path: &Path, has_header: bool) -> Result<LinearProblem> {
    let file = std::fs::File::open(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let reader = BufReader::new(file);
    let parse_err = |line: usize, message: String| Error::CsvParse {
        path: path.display().to_string(),
        line,
        message,
    };

    let mut features = Vec::new();
    let mut targets = Vec::new();
    let mut width: Option<usize> = None;
    let mut n = 0usize;
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| parse_err(lineno, e.to_string()))?;
        if idx == 0 && has_header {
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        match width {
            None => {
                if cells.len() < 2 {
                    return Err(parse_err(
                        lineno,
                        format!(
                            "need at least one feature and a target, got {} column(s)",
                            cells.len()
                        ),
                    ));
                }
                width = Some(cells.len());
            }
            Some(w) if w != cells.len() => {
                return Err(parse_err(
                    lineno,
                    format!("expected {w} columns, got {}", cells.len()),
                ));
            }
            _ => {}
        }
        for (col, cell) in cells.iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| {
                parse_err(
                    lineno,
                    format!("non-numeric cell {:?} in column {}", cell, col + 1),
                )
            })?;
            if col + 1 == cells.len() {
                targets.push(v);
            } else {
                features.push(v);
            }
        }
        n += 1;
    }
    let Some(width) = width else {
        return Err(parse_err(0, "empty dataset".into()));
    };
    if n == 0 {
        return Err(parse_err(0, "empty dataset".into()));
    }
    LinearProblem::from_parts(features, targets, n, width - 1, None, 0)
}
