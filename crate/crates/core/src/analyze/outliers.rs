use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::AnalyzeError;
use crate::compare::ScoreTable;

/// Scale factor that makes the MAD a consistent estimate of a normal sigma.
const MAD_TO_SIGMA: f64 = 1.4826;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BulletMedian {
    pub bullet: String,
    /// Median of the bullet's reliable off-diagonal scores.
    pub median: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierFlag {
    pub bullet: String,
    pub median: f64,
    /// Below the normal-quantile line of the robust band.
    pub below_quantile_band: bool,
    /// Also below the stricter `centre - 3 MAD` line.
    pub below_three_mad: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierReport {
    /// All per-bullet medians, ascending.
    pub medians: Vec<BulletMedian>,
    pub centre: f64,
    pub mad: f64,
    pub quantile_threshold: f64,
    pub mad_threshold: f64,
    /// Flagged bullets, ascending by median.
    pub flagged: Vec<OutlierFlag>,
}

impl OutlierReport {
    pub fn flagged_ids(&self) -> Vec<&str> {
        self.flagged.iter().map(|f| f.bullet.as_str()).collect()
    }
}

/// Flags bullets that do not score like the rest of their set.
///
/// Each bullet is summarised by the median of its reliable scores against the
/// other bullets. The reference band is the median of those medians with the
/// MAD as spread; a bullet is flagged when its median lies below the band's
/// `quantile` under a normal model (`centre + z_quantile * 1.4826 * MAD`).
pub fn flag_outliers(table: &ScoreTable, quantile: f64) -> Result<OutlierReport, AnalyzeError> {
    let k = table.len();
    if k < 4 {
        return Err(AnalyzeError::TooFewBullets { have: k, need: 4 });
    }
    if !(quantile > 0.0 && quantile < 1.0) {
        return Err(AnalyzeError::InvalidQuantile(quantile));
    }
    let mut medians: Vec<BulletMedian> = (0..k)
        .filter_map(|i| {
            let scores: Vec<f64> = (0..k)
                .filter(|&j| j != i)
                .map(|j| table.score(i, j))
                .filter(|s| !s.unreliable)
                .map(|s| s.ccf_diff)
                .collect();
            crate::stats::median(&scores).map(|median| BulletMedian {
                bullet: table.bullet_ids[i].clone(),
                median,
            })
        })
        .collect();
    medians.sort_by(|a, b| {
        a.median
            .total_cmp(&b.median)
            .then_with(|| a.bullet.cmp(&b.bullet))
    });

    let values: Vec<f64> = medians.iter().map(|m| m.median).collect();
    let centre = crate::stats::median(&values).unwrap_or(0.0);
    let mad = crate::stats::mad(&values).unwrap_or(0.0);
    let z = Normal::standard().inverse_cdf(quantile);
    let quantile_threshold = centre + z * MAD_TO_SIGMA * mad;
    let mad_threshold = centre - 3.0 * mad;

    let flagged = medians
        .iter()
        .filter(|m| m.median < quantile_threshold)
        .map(|m| OutlierFlag {
            bullet: m.bullet.clone(),
            median: m.median,
            below_quantile_band: true,
            below_three_mad: m.median < mad_threshold,
        })
        .collect();
    Ok(OutlierReport {
        medians,
        centre,
        mad,
        quantile_threshold,
        mad_threshold,
        flagged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compare::BulletScore;

    fn table(k: usize, score: impl Fn(usize, usize) -> f64) -> ScoreTable {
        let mut scores = Vec::new();
        for i in 0..k {
            for j in i..k {
                let mut s = BulletScore::undefined();
                s.ccf_diff = score(i, j);
                s.unreliable = false;
                scores.push(s);
            }
        }
        ScoreTable {
            bullet_ids: (0..k).map(|i| format!("b{i}")).collect(),
            scores,
        }
    }

    #[test]
    fn equal_scores_flag_nothing() {
        let r = flag_outliers(&table(6, |_, _| 0.4), 0.05).unwrap();
        assert!(r.flagged.is_empty());
        assert_eq!(r.medians.len(), 6);
    }

    #[test]
    fn depressed_bullet_flagged() {
        let r = flag_outliers(
            &table(4, |i, j| if i == 2 || j == 2 { 0.05 } else { 0.6 }),
            0.05,
        )
        .unwrap();
        assert_eq!(r.flagged_ids(), vec!["b2"]);
        assert!(r.flagged[0].below_three_mad);
    }

    #[test]
    fn too_few_bullets() {
        assert_eq!(
            flag_outliers(&table(3, |_, _| 0.0), 0.05).unwrap_err(),
            AnalyzeError::TooFewBullets { have: 3, need: 4 }
        );
    }

    #[test]
    fn sorted_ascending() {
        let r = flag_outliers(&table(6, |i, j| (i + j) as f64 * 0.1), 0.05).unwrap();
        assert!(r.medians.windows(2).all(|w| w[0].median <= w[1].median));
    }
}
