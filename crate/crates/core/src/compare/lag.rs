//! Lagged Pearson correlation and the bounded maximum-correlation lag search.
//!
//! Lag convention: at lag `k`, sample `x[s]` is paired with `y[s + k]`. A
//! positive lag therefore means the features of `y` occur `k` samples later
//! than those of `x`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::signal::Signal;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LagError {
    #[error("lag {lag} outside the search window ±{max_lag}")]
    LagOutOfRange { lag: i64, max_lag: usize },
    #[error("only {have} pairwise-complete samples, {need} required")]
    InsufficientOverlap { have: usize, need: usize },
    #[error("correlation undefined: constant overlap segment")]
    UndefinedCorrelation,
    #[error("signals do not overlap at lag {lag}")]
    EmptyOverlap { lag: i64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LagSearchParams {
    /// Largest absolute lag searched, in samples.
    pub max_lag: usize,
    /// Fixed minimum number of pairwise-complete samples. When unset, the
    /// requirement is the shorter signal's length minus `max_lag`.
    pub min_overlap: Option<usize>,
    /// Lower bound applied to the requirement in either case.
    pub min_overlap_floor: usize,
}

impl Default for LagSearchParams {
    fn default() -> Self {
        Self {
            max_lag: 500,
            min_overlap: None,
            min_overlap_floor: 10,
        }
    }
}

impl LagSearchParams {
    pub fn with_max_lag(max_lag: usize) -> Self {
        Self {
            max_lag,
            ..Self::default()
        }
    }

    pub fn required_overlap(&self, len_x: usize, len_y: usize) -> usize {
        let base = self
            .min_overlap
            .unwrap_or_else(|| len_x.min(len_y).saturating_sub(self.max_lag));
        base.max(self.min_overlap_floor).max(2)
    }
}

/// Correlation at one lag, with the number of complete pairs it used.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LagCorrelation {
    pub value: f64,
    pub overlap: usize,
}

/// Maximised correlation for one pair of lands.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LandPairResult {
    /// `None` when no lag in the window had a defined correlation on
    /// sufficient overlap.
    pub ccf: Option<f64>,
    pub lag: i64,
    pub overlap: usize,
}

impl LandPairResult {
    pub const INVALID: Self = Self {
        ccf: None,
        lag: 0,
        overlap: 0,
    };

    pub fn is_valid(&self) -> bool {
        self.ccf.is_some()
    }
}

/// Centred values of one signal plus the bookkeeping the kernel needs.
struct Prepared {
    /// Values minus the mean of the measured samples; `0.0` where masked.
    centred: Vec<f64>,
    /// Squared centred values; `0.0` where masked.
    squared: Vec<f64>,
    /// Measurement indicator as `1.0`/`0.0`, present only when something is masked.
    indicator: Option<Vec<f64>>,
    /// Prefix sums of `centred` and `squared`, used when nothing is masked.
    prefix: Vec<f64>,
    prefix_sq: Vec<f64>,
}

impl Prepared {
    fn new(s: &Signal) -> Self {
        let measured = s.measured_count();
        let mean = if measured > 0 {
            s.values
                .iter()
                .zip(&s.mask)
                .filter(|(_, &m)| m)
                .map(|(v, _)| v)
                .sum::<f64>()
                / measured as f64
        } else {
            0.0
        };
        let centred: Vec<f64> = s
            .values
            .iter()
            .zip(&s.mask)
            .map(|(v, &m)| if m { v - mean } else { 0.0 })
            .collect();
        let squared: Vec<f64> = centred.iter().map(|v| v * v).collect();
        let indicator = s
            .has_missing()
            .then(|| s.mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect());
        let (prefix, prefix_sq) = if indicator.is_none() {
            (prefix_sums(&centred), prefix_sums(&squared))
        } else {
            (Vec::new(), Vec::new())
        };
        Self {
            centred,
            squared,
            indicator,
            prefix,
            prefix_sq,
        }
    }

    fn len(&self) -> usize {
        self.centred.len()
    }
}

fn prefix_sums(v: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(v.len() + 1);
    let mut acc = 0.0;
    out.push(acc);
    for x in v {
        acc += x;
        out.push(acc);
    }
    out
}

/// Dot product with eight independent accumulators.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for i in 0..8 {
            acc[i] += x[i] * y[i];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// Index range of `x` that overlaps `y` at lag `k`.
fn overlap_range(len_x: usize, len_y: usize, k: i64) -> Option<(usize, usize)> {
    let start = (-k).max(0);
    let end = (len_x as i64).min(len_y as i64 - k);
    (end > start).then_some((start as usize, end as usize))
}

fn kernel(x: &Prepared, y: &Prepared, k: i64, need: usize) -> Result<LagCorrelation, LagError> {
    let (s0, s1) = overlap_range(x.len(), y.len(), k)
        .ok_or(LagError::InsufficientOverlap { have: 0, need })?;
    let (t0, t1) = ((s0 as i64 + k) as usize, (s1 as i64 + k) as usize);
    let xs = &x.centred[s0..s1];
    let ys = &y.centred[t0..t1];

    let (n, sx, sy, sxx, syy) = match (&x.indicator, &y.indicator) {
        (None, None) => (
            (s1 - s0) as f64,
            x.prefix[s1] - x.prefix[s0],
            y.prefix[t1] - y.prefix[t0],
            x.prefix_sq[s1] - x.prefix_sq[s0],
            y.prefix_sq[t1] - y.prefix_sq[t0],
        ),
        (mx, my) => {
            let ones;
            let (mx, my): (&[f64], &[f64]) = match (mx, my) {
                (Some(a), Some(b)) => (&a[s0..s1], &b[t0..t1]),
                (Some(a), None) => {
                    ones = vec![1.0; s1 - s0];
                    (&a[s0..s1], &ones[..])
                }
                (None, Some(b)) => {
                    ones = vec![1.0; s1 - s0];
                    (&ones[..], &b[t0..t1])
                }
                (None, None) => unreachable!(),
            };
            (
                dot(mx, my),
                dot(xs, my),
                dot(mx, ys),
                dot(&x.squared[s0..s1], my),
                dot(mx, &y.squared[t0..t1]),
            )
        }
    };
    let overlap = n as usize;
    if overlap < need {
        return Err(LagError::InsufficientOverlap {
            have: overlap,
            need,
        });
    }
    let sxy = dot(xs, ys);
    let vx = sxx - sx * sx / n;
    let vy = syy - sy * sy / n;
    if vx.is_nan() || vy.is_nan() || vx <= 1e-12 * sxx || vy <= 1e-12 * syy {
        return Err(LagError::UndefinedCorrelation);
    }
    let cov = sxy - sx * sy / n;
    let value = (cov / (vx * vy).sqrt()).clamp(-1.0, 1.0);
    Ok(LagCorrelation { value, overlap })
}

/// Pearson correlation between `x[s]` and `y[s + lag]` over the
/// pairwise-complete samples.
pub fn corr_at_lag(
    x: &Signal,
    y: &Signal,
    lag: i64,
    params: &LagSearchParams,
) -> Result<LagCorrelation, LagError> {
    if lag.unsigned_abs() as usize > params.max_lag {
        return Err(LagError::LagOutOfRange {
            lag,
            max_lag: params.max_lag,
        });
    }
    let need = params.required_overlap(x.len(), y.len());
    kernel(&Prepared::new(x), &Prepared::new(y), lag, need)
}

/// Lags in search order: 0, -1, 1, -2, 2, ... Updating only on a strictly
/// larger value then breaks ties toward the smallest |lag|, negative first.
fn search_order(max_lag: usize) -> impl Iterator<Item = i64> {
    std::iter::once(0).chain((1..=max_lag as i64).flat_map(|k| [-k, k]))
}

/// Maximum lagged correlation over `[-max_lag, max_lag]` and its lag.
pub fn ccf_max(x: &Signal, y: &Signal, params: &LagSearchParams) -> LandPairResult {
    if x.is_empty() || y.is_empty() {
        return LandPairResult::INVALID;
    }
    let need = params.required_overlap(x.len(), y.len());
    let (px, py) = (Prepared::new(x), Prepared::new(y));
    let mut best = LandPairResult::INVALID;
    for k in search_order(params.max_lag) {
        if let Ok(c) = kernel(&px, &py, k, need) {
            if best.ccf.is_none_or(|b| c.value > b) {
                best = LandPairResult {
                    ccf: Some(c.value),
                    lag: k,
                    overlap: c.overlap,
                };
            }
        }
    }
    best
}

/// Two signals placed on a common index axis at a given lag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedPair {
    pub lag: i64,
    /// First index of `x` (and `x_start + lag` of `y`) in the overlap.
    pub x_start: usize,
    pub y_start: usize,
    pub x: Vec<Option<f64>>,
    pub y: Vec<Option<f64>>,
}

impl AlignedPair {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

/// Restricts both signals to their overlap at `lag`, with `y` shifted.
pub fn align(x: &Signal, y: &Signal, lag: i64) -> Result<AlignedPair, LagError> {
    let (s0, s1) = overlap_range(x.len(), y.len(), lag).ok_or(LagError::EmptyOverlap { lag })?;
    let t0 = (s0 as i64 + lag) as usize;
    Ok(AlignedPair {
        lag,
        x_start: s0,
        y_start: t0,
        x: (s0..s1).map(|s| x.get(s)).collect(),
        y: (s0..s1).map(|s| y.get((s as i64 + lag) as usize)).collect(),
    })
}
