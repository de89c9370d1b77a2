//! Second-order structure of a score matrix: clustering, shot-distance
//! variograms and outlier flags.

mod linkage;
mod outliers;
mod variogram;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::compare::ScoreTable;
use crate::config::AnalysisConfig;

pub use linkage::{complete_linkage, leaf_order, Dendrogram, LeafOrder, Merge};
pub use outliers::{flag_outliers, BulletMedian, OutlierFlag, OutlierReport};
pub use variogram::{variogram, TrendCurve, Variogram, VariogramPoint};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalyzeError {
    #[error("bullet `{0}` has no shot number")]
    MissingShot(String),
    #[error("shot number {shot} is used by both `{first}` and `{second}`")]
    DuplicateShot {
        shot: u32,
        first: String,
        second: String,
    },
    #[error("outlier flagging needs at least {need} bullets, got {have}")]
    TooFewBullets { have: usize, need: usize },
    #[error("outlier quantile {0} outside (0, 1)")]
    InvalidQuantile(f64),
    #[error("score table is empty")]
    Empty,
}

/// Symmetric bullet-to-bullet dissimilarities, row-major `K x K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceMatrix {
    pub ids: Vec<String>,
    pub values: Vec<f64>,
    /// Pairs `(i, j)`, `i < j`, whose score was unreliable and whose distance
    /// was therefore set to the matrix maximum.
    pub flagged: Vec<(usize, usize)>,
}

impl DistanceMatrix {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.len() + j]
    }
}

/// Converts scores to distances `s_max - s`, where `s_max` is the largest
/// reliable score between distinct bullets. Self-distances are zero.
/// Unreliable pairs get the largest reliable distance and are listed in
/// `flagged`.
pub fn score_to_distance(table: &ScoreTable) -> DistanceMatrix {
    let k = table.len();
    let off_diagonal = || (0..k).flat_map(move |i| (i + 1..k).map(move |j| (i, j)));
    let reliable: Vec<f64> = off_diagonal()
        .map(|(i, j)| table.score(i, j))
        .filter(|s| !s.unreliable)
        .map(|s| s.ccf_diff)
        .collect();
    let s_max = reliable.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let d_max = reliable.iter().map(|s| s_max - s).fold(0.0, f64::max);

    let mut values = vec![0.0; k * k];
    let mut flagged = Vec::new();
    for (i, j) in off_diagonal() {
        let s = table.score(i, j);
        let d = if s.unreliable {
            flagged.push((i, j));
            d_max
        } else {
            s_max - s.ccf_diff
        };
        values[i * k + j] = d;
        values[j * k + i] = d;
    }
    DistanceMatrix {
        ids: table.bullet_ids.clone(),
        values,
        flagged,
    }
}

/// Shot number and barrel of one bullet, for the variogram.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BulletInfo {
    pub bullet: String,
    pub barrel: String,
    pub shot_number: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarrelVariogram {
    pub barrel: String,
    #[serde(flatten)]
    pub variogram: Variogram,
}

/// Everything derived from one score table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub bullet_ids: Vec<String>,
    pub distances: DistanceMatrix,
    pub dendrogram: Dendrogram,
    pub leaf_order: LeafOrder,
    /// One variogram per barrel; shot distances only make sense within a barrel.
    pub variograms: Vec<BarrelVariogram>,
    /// Absent for fewer than four bullets.
    pub outliers: Option<OutlierReport>,
}

/// Runs all analyses. Variograms are computed only for barrels whose bullets
/// all appear in `bullets`; pass an empty slice to skip them.
pub fn analyze(
    table: &ScoreTable,
    bullets: &[BulletInfo],
    cfg: &AnalysisConfig,
) -> Result<AnalysisReport, AnalyzeError> {
    if table.is_empty() {
        return Err(AnalyzeError::Empty);
    }
    let distances = score_to_distance(table);
    let dendrogram = complete_linkage(&distances);
    let leaf_order = leaf_order(&dendrogram);

    let mut by_barrel: BTreeMap<&str, Vec<&BulletInfo>> = BTreeMap::new();
    for b in bullets {
        by_barrel.entry(b.barrel.as_str()).or_default().push(b);
    }
    let mut variograms = Vec::new();
    for (barrel, members) in by_barrel {
        let ids: Vec<String> = table
            .bullet_ids
            .iter()
            .filter(|id| members.iter().any(|m| &m.bullet == *id))
            .cloned()
            .collect();
        let sub = sub_table(table, &ids);
        let shots = members
            .iter()
            .map(|m| (m.bullet.clone(), m.shot_number))
            .collect();
        variograms.push(BarrelVariogram {
            barrel: barrel.to_string(),
            variogram: variogram(&sub, &shots, &cfg.trend)?,
        });
    }

    let outliers = match flag_outliers(table, cfg.outlier_quantile) {
        Ok(r) => Some(r),
        Err(AnalyzeError::TooFewBullets { .. }) => None,
        Err(e) => return Err(e),
    };
    Ok(AnalysisReport {
        bullet_ids: table.bullet_ids.clone(),
        distances,
        dendrogram,
        leaf_order,
        variograms,
        outliers,
    })
}

/// Restriction of a score table to `ids` (which must all be present), in the given order.
pub fn sub_table(table: &ScoreTable, ids: &[String]) -> ScoreTable {
    let idx: Vec<usize> = ids
        .iter()
        .map(|id| {
            table
                .bullet_ids
                .iter()
                .position(|b| b == id)
                .expect("id present in table")
        })
        .collect();
    let mut scores = Vec::new();
    for a in 0..idx.len() {
        for b in a..idx.len() {
            scores.push(*table.score(idx[a], idx[b]));
        }
    }
    ScoreTable {
        bullet_ids: ids.to_vec(),
        scores,
    }
}
