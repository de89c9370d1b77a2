//! Robust locally weighted polynomial regression (Cleveland-style LOESS).
//!
//! For an evaluation point `x0` the bandwidth `h` is the distance to the
//! `q`-th nearest observation, `q = ceil(span * n)`. Observations closer than
//! `h` get tricube weights `(1 - (d/h)^3)^3`; those at or beyond `h` get zero,
//! which makes the fit independent of how equidistant neighbours are ordered.
//! Robust passes multiply in bisquare weights of the residuals scaled by six
//! times their median absolute value.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LoessError {
    #[error("LOESS needs at least {need} unmasked points, got {have}")]
    InsufficientPoints { have: usize, need: usize },
    #[error("invalid LOESS parameters: {0}")]
    InvalidParams(String),
    #[error("xs, ys and mask lengths differ")]
    LengthMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoessParams {
    /// Fraction of the unmasked points in each local window, in `(0, 1]`.
    pub span: f64,
    /// Local polynomial degree, 1 or 2.
    pub degree: usize,
    pub robust_iterations: usize,
}

impl Default for LoessParams {
    fn default() -> Self {
        Self {
            span: 0.75,
            degree: 2,
            robust_iterations: 2,
        }
    }
}

impl LoessParams {
    pub fn validate(&self) -> Result<(), LoessError> {
        if !(self.span > 0.0 && self.span <= 1.0) {
            return Err(LoessError::InvalidParams(format!(
                "span {} outside (0, 1]",
                self.span
            )));
        }
        if !(1..=2).contains(&self.degree) {
            return Err(LoessError::InvalidParams(format!(
                "degree {} not in {{1, 2}}",
                self.degree
            )));
        }
        Ok(())
    }

    /// Number of neighbours in each local window for `n` usable points.
    pub fn window_size(&self, n: usize) -> usize {
        // The small offset keeps e.g. 0.1 * 30 from rounding up to 4.
        let q = (self.span * n as f64 - 1e-9).ceil() as usize;
        q.clamp(1, n.max(1))
    }
}

/// Tricube kernel on `u = d / h`.
#[inline]
pub(crate) fn tricube(u: f64) -> f64 {
    if u < 1.0 {
        let t = 1.0 - u * u * u;
        t * t * t
    } else {
        0.0
    }
}

/// Bisquare kernel on `u = r / (6 s)`.
#[inline]
pub(crate) fn bisquare(u: f64) -> f64 {
    let a = u.abs();
    if a < 1.0 {
        let t = 1.0 - a * a;
        t * t
    } else {
        0.0
    }
}

/// Relative MAD below which the robust passes stop (the fit is already exact).
const ROBUST_CONVERGED: f64 = 1e-7;

/// A fitted LOESS model that can be evaluated anywhere in the data range.
#[derive(Debug, Clone)]
pub struct LoessFit {
    /// Unmasked xs in ascending order, with their original indices.
    xs: Vec<f64>,
    ys: Vec<f64>,
    order: Vec<usize>,
    robustness: Vec<f64>,
    q: usize,
    degree: usize,
    n_input: usize,
    fitted: Vec<f64>,
}

impl LoessFit {
    pub fn new(
        xs: &[f64],
        ys: &[f64],
        mask: &[bool],
        params: &LoessParams,
    ) -> Result<Self, LoessError> {
        params.validate()?;
        if xs.len() != ys.len() || xs.len() != mask.len() {
            return Err(LoessError::LengthMismatch);
        }
        let mut order: Vec<usize> = (0..xs.len()).filter(|&i| mask[i]).collect();
        order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]).then(a.cmp(&b)));
        let n = order.len();
        let need = params.degree + 1;
        if n < need {
            return Err(LoessError::InsufficientPoints { have: n, need });
        }
        let q = params.window_size(n);
        if q < need {
            return Err(LoessError::InsufficientPoints { have: q, need });
        }
        let sx: Vec<f64> = order.iter().map(|&i| xs[i]).collect();
        let sy: Vec<f64> = order.iter().map(|&i| ys[i]).collect();
        let mut fit = Self {
            xs: sx,
            ys: sy,
            order,
            robustness: vec![1.0; n],
            q,
            degree: params.degree,
            n_input: xs.len(),
            fitted: Vec::new(),
        };
        fit.fitted = fit.fit_all();

        let y_mean = fit.ys.iter().sum::<f64>() / n as f64;
        let spread = fit.ys.iter().map(|y| (y - y_mean).abs()).sum::<f64>() / n as f64;
        for _ in 0..params.robust_iterations {
            let residuals: Vec<f64> = fit.ys.iter().zip(&fit.fitted).map(|(y, f)| y - f).collect();
            let abs: Vec<f64> = residuals.iter().map(|r| r.abs()).collect();
            let s = crate::stats::median(&abs).unwrap_or(0.0);
            if s <= ROBUST_CONVERGED * spread || s == 0.0 {
                break;
            }
            fit.robustness = residuals.iter().map(|r| bisquare(r / (6.0 * s))).collect();
            fit.fitted = fit.fit_all();
        }
        Ok(fit)
    }

    fn fit_all(&self) -> Vec<f64> {
        self.xs.iter().map(|&x0| self.predict(x0)).collect()
    }

    /// Fitted values at the input positions; masked inputs stay `None`.
    pub fn fitted(&self) -> Vec<Option<f64>> {
        let mut out = vec![None; self.n_input];
        for (k, &i) in self.order.iter().enumerate() {
            out[i] = Some(self.fitted[k]);
        }
        out
    }

    pub fn robustness_weights(&self) -> Vec<Option<f64>> {
        let mut out = vec![None; self.n_input];
        for (k, &i) in self.order.iter().enumerate() {
            out[i] = Some(self.robustness[k]);
        }
        out
    }

    /// Local fit evaluated at an arbitrary `x0`.
    pub fn predict(&self, x0: f64) -> f64 {
        let n = self.xs.len();
        let pos = self.xs.partition_point(|&x| x < x0);
        let (mut lo, mut hi) = (pos, pos);
        let mut h = 0.0;
        for _ in 0..self.q {
            let dl = if lo > 0 {
                x0 - self.xs[lo - 1]
            } else {
                f64::INFINITY
            };
            let dr = if hi < n {
                self.xs[hi] - x0
            } else {
                f64::INFINITY
            };
            if dl <= dr {
                lo -= 1;
                h = dl;
            } else {
                hi += 1;
                h = dr;
            }
        }

        if h <= 0.0 {
            // All q nearest coincide with x0: weighted mean of the coincident points.
            while lo > 0 && self.xs[lo - 1] == x0 {
                lo -= 1;
            }
            while hi < n && self.xs[hi] == x0 {
                hi += 1;
            }
            let pts: Vec<(usize, f64)> = (lo..hi).map(|i| (i, 1.0)).collect();
            return self.solve_local(&pts, x0, 1.0, 0);
        }

        let pts: Vec<(usize, f64)> = (lo..hi)
            .map(|i| (i, tricube((self.xs[i] - x0).abs() / h)))
            .filter(|&(_, w)| w > 0.0)
            .collect();
        self.solve_local(&pts, x0, h, self.degree)
    }

    /// Weighted least squares in `u = (x - x0) / h`; returns the intercept.
    /// Falls back to lower degrees when the local system is rank deficient.
    fn solve_local(&self, pts: &[(usize, f64)], x0: f64, h: f64, degree: usize) -> f64 {
        let robust_total: f64 = pts.iter().map(|&(i, w)| w * self.robustness[i]).sum();
        let use_robust = robust_total > 0.0;
        let weight = |i: usize, w: f64| {
            if use_robust {
                w * self.robustness[i]
            } else {
                w
            }
        };

        let mut degree = degree;
        loop {
            let m = degree + 1;
            let mut a = [[0.0f64; 3]; 3];
            let mut b = [0.0f64; 3];
            for &(i, w) in pts {
                let w = weight(i, w);
                if w == 0.0 {
                    continue;
                }
                let u = (self.xs[i] - x0) / h;
                let powers = [1.0, u, u * u];
                for r in 0..m {
                    b[r] += w * powers[r] * self.ys[i];
                    for c in 0..m {
                        a[r][c] += w * powers[r] * powers[c];
                    }
                }
            }
            if let Some(beta0) = solve_intercept(&mut a, &mut b, m) {
                return beta0;
            }
            if degree == 0 {
                // Only reachable when every weight is zero.
                let (sum, cnt) = pts
                    .iter()
                    .fold((0.0, 0.0), |(s, c), &(i, _)| (s + self.ys[i], c + 1.0));
                return if cnt > 0.0 { sum / cnt } else { 0.0 };
            }
            degree -= 1;
        }
    }
}

/// Gaussian elimination with partial pivoting on the leading `m x m` block.
/// Returns the first solution component, or `None` when numerically singular.
fn solve_intercept(a: &mut [[f64; 3]; 3], b: &mut [f64; 3], m: usize) -> Option<f64> {
    let scale = a[0][0];
    if scale.is_nan() || scale <= 0.0 {
        return None;
    }
    let tol = 1e-10 * scale;
    for col in 0..m {
        let pivot = (col..m).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() <= tol {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..m {
            let f = a[row][col] / a[col][col];
            for c in col..m {
                a[row][c] -= f * a[col][c];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0f64; 3];
    for row in (0..m).rev() {
        let mut acc = b[row];
        for c in row + 1..m {
            acc -= a[row][c] * x[c];
        }
        x[row] = acc / a[row][row];
    }
    Some(x[0])
}

/// Fitted values at every input position; masked positions stay `None`.
pub fn loess_smooth(
    xs: &[f64],
    ys: &[f64],
    mask: &[bool],
    params: &LoessParams,
) -> Result<Vec<Option<f64>>, LoessError> {
    Ok(LoessFit::new(xs, ys, mask, params)?.fitted())
}
