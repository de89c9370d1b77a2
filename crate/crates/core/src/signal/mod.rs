//! From a height field to a 1D signal: crosscut selection, band-median
//! profile extraction, groove-shoulder trimming and curvature removal.

mod crosscut;
mod grooves;
pub mod loess;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scan_io::{HeightField, ScanMeta};

pub use crosscut::{select_crosscut, CrosscutChoice};
pub use grooves::detect_grooves;
pub use loess::{loess_smooth, LoessError, LoessFit, LoessParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SignalError {
    #[error(transparent)]
    Loess(#[from] LoessError),
    #[error("no row has a measured fraction of at least {min_fraction}")]
    NoAdmissibleRows { min_fraction: f64 },
    #[error("crosscut y = {y} µm lies outside the scan (0..{max} µm)")]
    OutOfRange { y: f64, max: f64 },
    #[error("profile has {have} unmasked samples, at least {need} required")]
    TooFewSamples { have: usize, need: usize },
    #[error("groove bounds {left}..={right} invalid for a profile of {len} samples")]
    InvalidBounds {
        left: usize,
        right: usize,
        len: usize,
    },
}

/// Heights along one crosscut.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    /// Crosscut location on the scan, µm from the low-y edge.
    pub y_location: f64,
    pub x_inc: f64,
    pub heights: Vec<f64>,
    pub mask: Vec<bool>,
}

impl Profile {
    pub fn len(&self) -> usize {
        self.heights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heights.is_empty()
    }

    /// Sample positions in µm.
    pub fn xs(&self) -> Vec<f64> {
        (0..self.len()).map(|i| i as f64 * self.x_inc).collect()
    }

    pub fn measured_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

/// Inclusive sample range of the land between the two groove shoulders.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrooveBounds {
    pub left_index: usize,
    pub right_index: usize,
    /// False when no shoulder was found on that side and the bound is the profile end.
    pub left_found: bool,
    pub right_found: bool,
}

impl GrooveBounds {
    pub fn full(len: usize) -> Self {
        Self {
            left_index: 0,
            right_index: len.saturating_sub(1),
            left_found: false,
            right_found: false,
        }
    }

    pub fn len(&self) -> usize {
        self.right_index - self.left_index + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn check(&self, len: usize) -> Result<(), SignalError> {
        if self.left_index < self.right_index && self.right_index < len {
            Ok(())
        } else {
            Err(SignalError::InvalidBounds {
                left: self.left_index,
                right: self.right_index,
                len,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalProvenance {
    pub meta: Option<ScanMeta>,
    pub y_location: f64,
    pub bounds: GrooveBounds,
}

/// Detrended heights (µm) of one land, the unit of comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Signal {
    pub values: Vec<f64>,
    /// `true` = measured.
    pub mask: Vec<bool>,
    pub x_inc: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<SignalProvenance>,
}

impl Signal {
    /// Fully measured signal without provenance.
    pub fn new(values: Vec<f64>, x_inc: f64) -> Self {
        let mask = vec![true; values.len()];
        Self {
            values,
            mask,
            x_inc,
            provenance: None,
        }
    }

    /// Signal whose non-finite values are masked (and stored as `0.0`).
    pub fn from_optional(values: &[Option<f64>], x_inc: f64) -> Self {
        let mask: Vec<bool> = values
            .iter()
            .map(|v| v.is_some_and(f64::is_finite))
            .collect();
        let values = values
            .iter()
            .zip(&mask)
            .map(|(v, &m)| if m { v.unwrap() } else { 0.0 })
            .collect();
        Self {
            values,
            mask,
            x_inc,
            provenance: None,
        }
    }

    pub fn with_mask(mut values: Vec<f64>, mask: Vec<bool>, x_inc: f64) -> Self {
        assert_eq!(values.len(), mask.len(), "values and mask lengths differ");
        for (v, &m) in values.iter_mut().zip(&mask) {
            if !m {
                *v = 0.0;
            }
        }
        Self {
            values,
            mask,
            x_inc,
            provenance: None,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<f64> {
        self.mask[i].then(|| self.values[i])
    }

    pub fn measured_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn has_missing(&self) -> bool {
        self.mask.iter().any(|&m| !m)
    }
}

/// Per-column median over the `2 * band_halfwidth + 1` rows centred on the
/// row nearest `y_location`. Columns without a measured cell in the band are
/// masked.
pub fn extract_profile(
    field: &HeightField,
    y_location: f64,
    band_halfwidth: usize,
) -> Result<Profile, SignalError> {
    let max = field.n_rows() as f64 * field.y_inc();
    let row = (y_location / field.y_inc()).round();
    if !y_location.is_finite() || y_location < 0.0 || row >= field.n_rows() as f64 {
        return Err(SignalError::OutOfRange { y: y_location, max });
    }
    let row = row as usize;
    let first = row.saturating_sub(band_halfwidth);
    let last = (row + band_halfwidth).min(field.n_rows() - 1);

    let mut heights = Vec::with_capacity(field.n_cols());
    let mut mask = Vec::with_capacity(field.n_cols());
    let mut column = Vec::with_capacity(last - first + 1);
    for c in 0..field.n_cols() {
        column.clear();
        column.extend((first..=last).filter_map(|r| field.get(r, c)));
        match crate::stats::median(&column) {
            Some(m) => {
                heights.push(m);
                mask.push(true);
            }
            None => {
                heights.push(0.0);
                mask.push(false);
            }
        }
    }
    Ok(Profile {
        y_location: row as f64 * field.y_inc(),
        x_inc: field.x_inc(),
        heights,
        mask,
    })
}

/// Restricts the profile to the groove bounds and subtracts a LOESS fit.
///
/// The residual is re-centred to zero mean over its measured samples.
pub fn extract_signal(
    profile: &Profile,
    bounds: &GrooveBounds,
    params: &LoessParams,
) -> Result<Signal, SignalError> {
    bounds.check(profile.len())?;
    let range = bounds.left_index..=bounds.right_index;
    let heights = &profile.heights[range.clone()];
    let mask = &profile.mask[range];
    let xs: Vec<f64> = (0..heights.len())
        .map(|i| i as f64 * profile.x_inc)
        .collect();
    let fitted = loess_smooth(&xs, heights, mask, params)?;

    let mut values: Vec<f64> = heights
        .iter()
        .zip(&fitted)
        .map(|(h, f)| f.map_or(0.0, |f| h - f))
        .collect();
    let measured = mask.iter().filter(|&&m| m).count();
    let mean = values
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(v, _)| v)
        .sum::<f64>()
        / measured as f64;
    for (v, &m) in values.iter_mut().zip(mask) {
        if m {
            *v -= mean;
        }
    }
    let mut signal = Signal::with_mask(values, mask.to_vec(), profile.x_inc);
    signal.provenance = Some(SignalProvenance {
        meta: None,
        y_location: profile.y_location,
        bounds: *bounds,
    });
    Ok(signal)
}
