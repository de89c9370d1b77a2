use serde::{Deserialize, Serialize};

use super::SignalError;
use crate::config::CrosscutConfig;
use crate::scan_io::HeightField;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrosscutChoice {
    /// µm from the low-y edge of the scan.
    pub y_location: f64,
    pub row: usize,
    /// True when no stable region was found and the densest row was used.
    pub fallback: bool,
}

/// Picks the crosscut: the lowest row (stepping upward by `step_um`) from
/// which `window` consecutive step-to-step row correlations all reach the
/// stability threshold. Without such a run, the row with the highest measured
/// fraction is returned and flagged.
pub fn select_crosscut(
    field: &HeightField,
    cfg: &CrosscutConfig,
) -> Result<CrosscutChoice, SignalError> {
    let n_rows = field.n_rows();
    let admissible: Vec<bool> = (0..n_rows)
        .map(|r| field.row_measured_fraction(r) >= cfg.min_row_fraction)
        .collect();
    let first = admissible
        .iter()
        .position(|&a| a)
        .ok_or(SignalError::NoAdmissibleRows {
            min_fraction: cfg.min_row_fraction,
        })?;

    let step = ((cfg.step_um / field.y_inc()).round() as usize).max(1);
    let window = cfg.window.max(1);

    let stable_pair = |a: usize, b: usize| -> bool {
        if !(admissible[a] && admissible[b]) {
            return false;
        }
        row_correlation(field, a, b).is_some_and(|r| r >= cfg.stability_threshold)
    };

    let mut start = first;
    while start + window * step < n_rows {
        if (0..window).all(|w| stable_pair(start + w * step, start + (w + 1) * step)) {
            return Ok(CrosscutChoice {
                y_location: start as f64 * field.y_inc(),
                row: start,
                fallback: false,
            });
        }
        start += step;
    }

    // Densest row; ties resolve to the lowest row.
    let mut best = first;
    let mut best_fraction = field.row_measured_fraction(first);
    for r in first + 1..n_rows {
        let f = field.row_measured_fraction(r);
        if f > best_fraction {
            best = r;
            best_fraction = f;
        }
    }
    Ok(CrosscutChoice {
        y_location: best as f64 * field.y_inc(),
        row: best,
        fallback: true,
    })
}

fn row_correlation(field: &HeightField, a: usize, b: usize) -> Option<f64> {
    let (ha, ma) = field.row(a);
    let (hb, mb) = field.row(b);
    let (xs, ys): (Vec<f64>, Vec<f64>) = (0..ha.len())
        .filter(|&i| ma[i] && mb[i])
        .map(|i| (ha[i], hb[i]))
        .unzip();
    crate::stats::pearson(&xs, &ys)
}
