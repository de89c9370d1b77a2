//! Plain-text grid format: a header line `x_inc=<µm>,y_inc=<µm>` followed by
//! one comma-separated line per row. An empty cell is a missing value.

use std::fmt::Write as _;

use super::{HeightField, ScanError};

pub fn read_grid_csv(text: &str) -> Result<HeightField, ScanError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| ScanError::Csv {
        line: 1,
        reason: "missing header `x_inc=<um>,y_inc=<um>`".into(),
    })?;
    let (x_inc, y_inc) = parse_header(header)?;

    let mut n_cols = None;
    let mut n_rows = 0;
    let mut heights = Vec::new();
    let mut mask = Vec::new();
    let mut body: Vec<(usize, &str)> = lines.collect();
    // A blank line is a missing cell in a one-column grid; otherwise trailing
    // blank lines are just layout.
    let single_column = body.first().is_some_and(|(_, l)| !l.contains(','));
    while !single_column && body.last().is_some_and(|(_, l)| l.trim().is_empty()) {
        body.pop();
    }
    for (idx, line) in body {
        let line_no = idx + 1;
        let cells: Vec<&str> = line.split(',').collect();
        match n_cols {
            None => n_cols = Some(cells.len()),
            Some(n) if n != cells.len() => {
                return Err(ScanError::Csv {
                    line: line_no,
                    reason: format!("ragged row: {} cells, expected {n}", cells.len()),
                })
            }
            Some(_) => {}
        }
        for cell in cells {
            let cell = cell.trim();
            if cell.is_empty() {
                heights.push(0.0);
                mask.push(false);
            } else {
                let v: f64 = cell.parse().map_err(|_| ScanError::Csv {
                    line: line_no,
                    reason: format!("non-numeric cell `{cell}`"),
                })?;
                if !v.is_finite() {
                    return Err(ScanError::Csv {
                        line: line_no,
                        reason: format!(
                            "non-finite cell `{cell}`; leave the cell empty for missing data"
                        ),
                    });
                }
                heights.push(v);
                mask.push(true);
            }
        }
        n_rows += 1;
    }
    let n_cols = n_cols.ok_or_else(|| ScanError::Csv {
        line: 2,
        reason: "no data rows".into(),
    })?;
    HeightField::new(n_cols, n_rows, x_inc, y_inc, heights, mask)
}

fn parse_header(header: &str) -> Result<(f64, f64), ScanError> {
    let bad = |reason: String| ScanError::Csv { line: 1, reason };
    let mut x_inc = None;
    let mut y_inc = None;
    for part in header.split(',') {
        let (key, value) = part.split_once('=').ok_or_else(|| {
            bad(format!(
                "missing header; expected `x_inc=<um>,y_inc=<um>`, found `{header}`"
            ))
        })?;
        let v: f64 = value
            .trim()
            .parse()
            .map_err(|_| bad(format!("header value `{}` is not a number", value.trim())))?;
        match key.trim() {
            "x_inc" => x_inc = Some(v),
            "y_inc" => y_inc = Some(v),
            other => return Err(bad(format!("unknown header key `{other}`"))),
        }
    }
    match (x_inc, y_inc) {
        (Some(x), Some(y)) => Ok((x, y)),
        _ => Err(bad("header must define both x_inc and y_inc".into())),
    }
}

/// Writes a field in the grid format. Values use the shortest representation
/// that parses back to the same `f64`, so the round trip is exact.
pub fn write_grid_csv(field: &HeightField) -> String {
    let mut out = String::new();
    writeln!(out, "x_inc={},y_inc={}", field.x_inc(), field.y_inc()).unwrap();
    for r in 0..field.n_rows() {
        let (heights, mask) = field.row(r);
        for (c, (h, m)) in heights.iter().zip(mask).enumerate() {
            if c > 0 {
                out.push(',');
            }
            if *m {
                write!(out, "{h}").unwrap();
            }
        }
        out.push('\n');
    }
    out
}
