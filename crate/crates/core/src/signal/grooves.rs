use super::{loess::LoessFit, GrooveBounds, LoessParams, Profile, SignalError};
use crate::config::GrooveConfig;

/// Residual thresholds below one picometre are treated as numerical noise.
const MIN_THRESHOLD_UM: f64 = 1e-6;

/// Locates the groove shoulders at both ends of a profile.
///
/// A global robust quadratic LOESS (span 1) models the curvature. The
/// threshold is `shoulder_multiplier` times the `shoulder_quantile` of the
/// absolute residuals in the central half of the profile. In the outer
/// `edge_fraction` on each side, the innermost sample whose residual rises
/// above the threshold marks the shoulder; the bound sits one sample inside
/// it. A side without a shoulder keeps the profile end and is flagged.
pub fn detect_grooves(profile: &Profile, cfg: &GrooveConfig) -> Result<GrooveBounds, SignalError> {
    let n = profile.len();
    let have = profile.measured_count();
    let need = cfg.min_samples.max(8);
    if have < need {
        return Err(SignalError::TooFewSamples { have, need });
    }

    let params = LoessParams {
        span: 1.0,
        degree: 2,
        robust_iterations: cfg.robust_iterations,
    };
    let fit = LoessFit::new(&profile.xs(), &profile.heights, &profile.mask, &params)?;
    let residuals: Vec<Option<f64>> = fit
        .fitted()
        .iter()
        .zip(&profile.heights)
        .map(|(f, h)| f.map(|f| h - f))
        .collect();

    let mid: Vec<f64> = residuals[n / 4..(3 * n) / 4]
        .iter()
        .flatten()
        .map(|r| r.abs())
        .collect();
    let q = crate::stats::quantile(&mid, cfg.shoulder_quantile).unwrap_or(0.0);
    let threshold = (cfg.shoulder_multiplier * q).max(MIN_THRESHOLD_UM);
    let exceeds = |i: usize| residuals[i].is_some_and(|r| r > threshold);

    let edge = ((cfg.edge_fraction * n as f64).ceil() as usize).clamp(1, n / 2 - 1);

    let mut bounds = GrooveBounds::full(n);
    if let Some(i) = (0..edge).rev().find(|&i| exceeds(i)) {
        bounds.left_index = i + 1;
        bounds.left_found = true;
    }
    if let Some(i) = (n - edge..n).find(|&i| exceeds(i)) {
        bounds.right_index = i - 1;
        bounds.right_found = true;
    }
    bounds.check(n)?;
    Ok(bounds)
}
