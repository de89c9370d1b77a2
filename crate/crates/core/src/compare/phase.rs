use serde::{Deserialize, Serialize};

use super::lag::{ccf_max, LagSearchParams, LandPairResult};
use super::{BulletLands, CompareError};
use crate::LANDS;

/// All land-to-land results for one pair of bullets.
/// `entries[i][j]` compares land `i + 1` of bullet 1 with land `j + 1` of bullet 2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandMatrix {
    pub bullet1_id: String,
    pub bullet2_id: String,
    pub entries: [[LandPairResult; LANDS]; LANDS],
}

impl LandMatrix {
    /// Builds a matrix directly from correlation values (`None` = invalid).
    pub fn from_values(values: [[Option<f64>; LANDS]; LANDS]) -> Self {
        let entries = values.map(|row| {
            row.map(|ccf| LandPairResult {
                ccf,
                lag: 0,
                overlap: 0,
            })
        });
        Self {
            bullet1_id: String::new(),
            bullet2_id: String::new(),
            entries,
        }
    }

    pub fn value(&self, i: usize, j: usize) -> Option<f64> {
        self.entries[i][j].ccf
    }

    pub fn valid_count(&self) -> usize {
        self.entries
            .iter()
            .flatten()
            .filter(|e| e.is_valid())
            .count()
    }

    /// Relabels bullet 2's lands cyclically: new land `j` is old land `j + offset`.
    pub fn rotate_bullet2(&self, offset: usize) -> Self {
        let mut out = self.clone();
        for i in 0..LANDS {
            for j in 0..LANDS {
                out.entries[i][j] = self.entries[i][(j + offset) % LANDS];
            }
        }
        out
    }
}

/// Land of bullet 2 paired with land `i` (0-based) at cyclic offset `phase`.
#[inline]
pub fn in_phase_partner(i: usize, phase: usize) -> usize {
    (i + phase) % LANDS
}

/// Compares every land of `b1` with every land of `b2`. Excluded lands
/// produce invalid entries.
pub fn land_matrix(b1: &BulletLands, b2: &BulletLands, params: &LagSearchParams) -> LandMatrix {
    let mut entries = [[LandPairResult::INVALID; LANDS]; LANDS];
    for (i, row) in entries.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            if let (Some(x), Some(y)) = (&b1.lands[i], &b2.lands[j]) {
                *cell = ccf_max(x, y, params);
            }
        }
    }
    LandMatrix {
        bullet1_id: b1.id.clone(),
        bullet2_id: b2.id.clone(),
        entries,
    }
}

fn in_phase_mean(m: &LandMatrix, phase: usize) -> Option<(f64, usize)> {
    let vals: Vec<f64> = (0..LANDS)
        .filter_map(|i| m.value(i, in_phase_partner(i, phase)))
        .collect();
    crate::stats::mean_compensated(&vals).map(|m| (m, vals.len()))
}

/// Cyclic offset whose valid in-phase entries have the largest mean.
/// Ties resolve to the smallest offset; phases without any valid entry are skipped.
pub fn best_phase(m: &LandMatrix) -> Result<usize, CompareError> {
    let mut best: Option<(usize, f64)> = None;
    for phase in 0..LANDS {
        if let Some((mean, _)) = in_phase_mean(m, phase) {
            if best.is_none_or(|(_, b)| mean > b) {
                best = Some((phase, mean));
            }
        }
    }
    best.map(|(p, _)| p).ok_or(CompareError::NoValidPhase)
}

/// Bullet-level score of one land matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BulletScore {
    /// Cyclic land offset: land `i` of bullet 1 pairs with land `i + phase` (mod 6) of bullet 2.
    pub phase: usize,
    pub in_phase_avg: f64,
    pub out_phase_avg: f64,
    pub ccf_diff: f64,
    /// Valid entries behind each average (6 and 30 when nothing is excluded).
    pub n_in_phase: usize,
    pub n_out_phase: usize,
    pub unreliable: bool,
}

impl BulletScore {
    /// True when exclusions forced averages over fewer than 6 / 30 entries.
    pub fn exclusion_adjusted(&self) -> bool {
        self.n_in_phase < LANDS || self.n_out_phase < LANDS * (LANDS - 1)
    }

    /// Placeholder for matrices without a single valid entry.
    pub fn undefined() -> Self {
        Self {
            phase: 0,
            in_phase_avg: 0.0,
            out_phase_avg: 0.0,
            ccf_diff: 0.0,
            n_in_phase: 0,
            n_out_phase: 0,
            unreliable: true,
        }
    }
}

/// In-phase average minus out-of-phase average at the best phase.
///
/// Averages run over valid entries only. Fewer than `min_in_phase` valid
/// in-phase entries, or no valid out-of-phase entry, marks the score unreliable.
pub fn ccf_diff(m: &LandMatrix, min_in_phase: usize) -> Result<BulletScore, CompareError> {
    let phase = best_phase(m)?;
    let (in_avg, n_in) = in_phase_mean(m, phase).expect("best phase has a valid entry");
    let out: Vec<f64> = (0..LANDS)
        .flat_map(|i| (0..LANDS).map(move |j| (i, j)))
        .filter(|&(i, j)| j != in_phase_partner(i, phase))
        .filter_map(|(i, j)| m.value(i, j))
        .collect();
    let n_out = out.len();
    let out_avg = crate::stats::mean_compensated(&out).unwrap_or(0.0);
    Ok(BulletScore {
        phase,
        in_phase_avg: in_avg,
        out_phase_avg: out_avg,
        ccf_diff: in_avg - out_avg,
        n_in_phase: n_in,
        n_out_phase: n_out,
        unreliable: n_in < min_in_phase || n_out == 0,
    })
}
