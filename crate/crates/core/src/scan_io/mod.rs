//! Scan ingestion: height fields, x3p and grid-CSV readers, validation and
//! thumbnails.
//!
//! All heights and increments are micrometres from the moment a scan is
//! parsed. Missing cells are tracked in a boolean mask (`true` = measured);
//! the height stored under a masked cell is always `0.0` and carries no
//! meaning.

mod grid_csv;
mod manifest;
mod x3p;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use grid_csv::{read_grid_csv, write_grid_csv};
pub use manifest::{read_manifest, ManifestRow};
pub use x3p::{read_x3p, write_x3p, X3pScan};

/// Default lateral resolution of the 20x confocal scans, in µm per pixel.
pub const DEFAULT_INCREMENT_UM: f64 = 0.645;

#[derive(Debug, Error)]
pub enum ScanError {
    #[error("malformed zip container: {0}")]
    Zip(String),
    #[error("x3p container has no `{0}` entry")]
    MissingEntry(String),
    #[error("malformed XML metadata: {0}")]
    Xml(String),
    #[error("x3p field `{field}`: {reason}")]
    Field { field: String, reason: String },
    #[error("unsupported data type `{0}` (only F and D float matrices are read)")]
    UnsupportedDataType(String),
    #[error("grid csv line {line}: {reason}")]
    Csv { line: usize, reason: String },
    #[error("invalid height field: {0}")]
    InvalidField(String),
    #[error("downsample factor must be at least 1")]
    BadFactor,
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Rectangular grid of surface heights in µm, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeightField {
    n_cols: usize,
    n_rows: usize,
    x_inc: f64,
    y_inc: f64,
    heights: Vec<f64>,
    mask: Vec<bool>,
}

impl HeightField {
    /// Builds a field, checking the size, increment and finiteness invariants.
    /// Masked heights are normalised to `0.0`.
    pub fn new(
        n_cols: usize,
        n_rows: usize,
        x_inc: f64,
        y_inc: f64,
        mut heights: Vec<f64>,
        mask: Vec<bool>,
    ) -> Result<Self, ScanError> {
        let n = n_cols
            .checked_mul(n_rows)
            .ok_or_else(|| ScanError::InvalidField("grid dimensions overflow".into()))?;
        if heights.len() != n || mask.len() != n {
            return Err(ScanError::InvalidField(format!(
                "expected {n} cells ({n_cols} x {n_rows}), got {} heights and {} mask entries",
                heights.len(),
                mask.len()
            )));
        }
        if !(x_inc > 0.0 && x_inc.is_finite()) || !(y_inc > 0.0 && y_inc.is_finite()) {
            return Err(ScanError::InvalidField(format!(
                "increments must be positive, got x_inc={x_inc}, y_inc={y_inc}"
            )));
        }
        for (h, &m) in heights.iter_mut().zip(&mask) {
            if !m {
                *h = 0.0;
            } else if !h.is_finite() {
                return Err(ScanError::InvalidField(
                    "measured cell is not finite".into(),
                ));
            }
        }
        Ok(Self {
            n_cols,
            n_rows,
            x_inc,
            y_inc,
            heights,
            mask,
        })
    }

    /// Builds a field where every non-finite value becomes a masked cell.
    pub fn from_values(
        n_cols: usize,
        n_rows: usize,
        x_inc: f64,
        y_inc: f64,
        values: Vec<f64>,
    ) -> Result<Self, ScanError> {
        let mask = values.iter().map(|v| v.is_finite()).collect();
        Self::new(n_cols, n_rows, x_inc, y_inc, values, mask)
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn x_inc(&self) -> f64 {
        self.x_inc
    }

    pub fn y_inc(&self) -> f64 {
        self.y_inc
    }

    pub fn heights(&self) -> &[f64] {
        &self.heights
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    /// Height at `(row, col)`, or `None` when the cell is masked.
    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        let i = row * self.n_cols + col;
        self.mask[i].then(|| self.heights[i])
    }

    pub fn row(&self, row: usize) -> (&[f64], &[bool]) {
        let start = row * self.n_cols;
        let end = start + self.n_cols;
        (&self.heights[start..end], &self.mask[start..end])
    }

    pub fn measured_fraction(&self) -> f64 {
        if self.mask.is_empty() {
            return 0.0;
        }
        self.mask.iter().filter(|&&m| m).count() as f64 / self.mask.len() as f64
    }

    pub fn row_measured_fraction(&self, row: usize) -> f64 {
        let (_, mask) = self.row(row);
        if mask.is_empty() {
            return 0.0;
        }
        mask.iter().filter(|&&m| m).count() as f64 / mask.len() as f64
    }
}

/// Block-mean downsampling used for viewer thumbnails.
///
/// Edge blocks may be partial. A block without any measured cell is masked.
pub fn downsample(field: &HeightField, factor: usize) -> Result<HeightField, ScanError> {
    if factor == 0 {
        return Err(ScanError::BadFactor);
    }
    if factor == 1 {
        return Ok(field.clone());
    }
    let out_cols = field.n_cols.div_ceil(factor);
    let out_rows = field.n_rows.div_ceil(factor);
    let mut heights = Vec::with_capacity(out_cols * out_rows);
    let mut mask = Vec::with_capacity(out_cols * out_rows);
    for br in 0..out_rows {
        for bc in 0..out_cols {
            let (mut sum, mut count) = (0.0, 0usize);
            for r in br * factor..((br + 1) * factor).min(field.n_rows) {
                for c in bc * factor..((bc + 1) * factor).min(field.n_cols) {
                    if let Some(h) = field.get(r, c) {
                        sum += h;
                        count += 1;
                    }
                }
            }
            if count > 0 {
                heights.push(sum / count as f64);
                mask.push(true);
            } else {
                heights.push(0.0);
                mask.push(false);
            }
        }
    }
    HeightField::new(
        out_cols,
        out_rows,
        field.x_inc * factor as f64,
        field.y_inc * factor as f64,
        heights,
        mask,
    )
}

/// Identity of one LEA scan within the study design.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ScanMeta {
    pub barrel_id: String,
    pub bullet_id: String,
    pub shot_number: u32,
    /// 1-based land index, 1..=6.
    pub land_index: u8,
    pub source_path: String,
}

impl ScanMeta {
    pub fn new(barrel_id: &str, shot_number: u32, land_index: u8) -> Result<Self, ScanError> {
        Self::with_bullet_id(
            barrel_id,
            &default_bullet_id(barrel_id, shot_number),
            shot_number,
            land_index,
        )
    }

    pub fn with_bullet_id(
        barrel_id: &str,
        bullet_id: &str,
        shot_number: u32,
        land_index: u8,
    ) -> Result<Self, ScanError> {
        if !(1..=crate::LANDS as u8).contains(&land_index) {
            return Err(ScanError::InvalidField(format!(
                "land index {land_index} outside 1..=6"
            )));
        }
        Ok(Self {
            barrel_id: barrel_id.to_string(),
            bullet_id: bullet_id.to_string(),
            shot_number,
            land_index,
            source_path: String::new(),
        })
    }
}

/// Default bullet identifier: barrel id followed by the shot number, e.g. `B11`.
pub fn default_bullet_id(barrel_id: &str, shot_number: u32) -> String {
    format!("{barrel_id}{shot_number}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Exclusion {
    Included,
    Excluded { reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanRecord {
    pub meta: ScanMeta,
    pub field: HeightField,
    exclusion: Exclusion,
}

impl ScanRecord {
    pub fn new(meta: ScanMeta, field: HeightField) -> Self {
        Self {
            meta,
            field,
            exclusion: Exclusion::Included,
        }
    }

    /// Marks the record excluded.
    pub fn exclude(mut self, reason: impl Into<String>) -> Self {
        self.exclusion = Exclusion::Excluded {
            reason: exclusion_reason(&reason.into()),
        };
        self
    }

    pub fn is_excluded(&self) -> bool {
        matches!(self.exclusion, Exclusion::Excluded { .. })
    }

    pub fn exclusion_reason(&self) -> Option<&str> {
        match &self.exclusion {
            Exclusion::Included => None,
            Exclusion::Excluded { reason } => Some(reason),
        }
    }
}

/// Exclusion reason as recorded; a blank reason becomes a placeholder so that
/// excluded records always explain themselves.
pub fn exclusion_reason(reason: &str) -> String {
    if reason.trim().is_empty() {
        "excluded without stated reason".to_string()
    } else {
        reason.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationRules {
    pub min_measured_fraction: f64,
    pub min_cols: usize,
    pub min_rows: usize,
}

impl Default for ValidationRules {
    fn default() -> Self {
        let scan = crate::config::ScanConfig::default();
        Self::from(&scan)
    }
}

impl From<&crate::config::ScanConfig> for ValidationRules {
    fn from(c: &crate::config::ScanConfig) -> Self {
        Self {
            min_measured_fraction: c.min_measured_fraction,
            min_cols: c.min_cols,
            min_rows: c.min_rows,
        }
    }
}

/// Mechanical suitability check. Never fails; returns the exclusion reason.
/// A measured fraction exactly at the threshold passes.
pub fn validate(record: &ScanRecord, rules: &ValidationRules) -> Result<(), String> {
    let f = &record.field;
    if f.n_cols() < rules.min_cols || f.n_rows() < rules.min_rows {
        return Err(format!(
            "scan is {}x{} (cols x rows), below the minimum {}x{}",
            f.n_cols(),
            f.n_rows(),
            rules.min_cols,
            rules.min_rows
        ));
    }
    let fraction = f.measured_fraction();
    if fraction < rules.min_measured_fraction {
        return Err(format!(
            "measured fraction {fraction:.3} below threshold {:.3}",
            rules.min_measured_fraction
        ));
    }
    Ok(())
}
