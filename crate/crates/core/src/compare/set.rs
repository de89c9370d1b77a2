use std::collections::{BTreeMap, BTreeSet, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::phase::{ccf_diff, land_matrix, BulletScore, LandMatrix};
use super::{BulletLands, CompareError, CompareParams};
use crate::LANDS;

/// Land matrix and bullet score for one pair of bullets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairComparison {
    pub matrix: LandMatrix,
    pub score: BulletScore,
}

/// Full land matrix plus bullet score for one pair.
pub fn score_pair(b1: &BulletLands, b2: &BulletLands, params: &CompareParams) -> PairComparison {
    let matrix = land_matrix(b1, b2, &params.lag);
    let score = ccf_diff(&matrix, params.min_in_phase).unwrap_or_else(|_| BulletScore::undefined());
    PairComparison { matrix, score }
}

/// Number of stored pairs for `k` bullets, self-comparisons included.
fn stored_pairs(k: usize) -> usize {
    k * (k + 1) / 2
}

/// Position of `(i, j)`, `i <= j`, in upper-triangular row-major order.
fn pair_index(k: usize, i: usize, j: usize) -> usize {
    debug_assert!(i <= j && j < k);
    // Row r holds k - r entries.
    i * k - i * i.saturating_sub(1) / 2 + (j - i)
}

fn upper_pairs(k: usize) -> Vec<(usize, usize)> {
    (0..k).flat_map(|i| (i..k).map(move |j| (i, j))).collect()
}

/// Every pairwise comparison of a set of bullets, self-comparisons included.
///
/// Only `(i, j)` with `i <= j` is computed and stored; `(j, i)` reads the same
/// entry.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonSet {
    bullets: Vec<BulletLands>,
    pairs: Vec<PairComparison>,
}

impl ComparisonSet {
    pub fn len(&self) -> usize {
        self.bullets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bullets.is_empty()
    }

    pub fn bullets(&self) -> &[BulletLands] {
        &self.bullets
    }

    pub fn bullet_ids(&self) -> Vec<String> {
        self.bullets.iter().map(|b| b.id.clone()).collect()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.bullets.iter().position(|b| b.id == id)
    }

    /// Stored pairs in upper-triangular row-major order.
    pub fn pairs(&self) -> &[PairComparison] {
        &self.pairs
    }

    /// The stored comparison for `{i, j}` in either order.
    pub fn pair(&self, i: usize, j: usize) -> &PairComparison {
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        &self.pairs[pair_index(self.len(), a, b)]
    }

    pub fn score(&self, i: usize, j: usize) -> &BulletScore {
        &self.pair(i, j).score
    }

    pub fn records(&self) -> Vec<ScoreRecord> {
        self.pairs.iter().map(ScoreRecord::from).collect()
    }

    pub fn score_table(&self) -> ScoreTable {
        ScoreTable {
            bullet_ids: self.bullet_ids(),
            scores: self.pairs.iter().map(|p| p.score).collect(),
        }
    }
}

fn check_unique(bullets: &[BulletLands]) -> Result<(), CompareError> {
    let mut seen = BTreeSet::new();
    for b in bullets {
        if !seen.insert(b.id.as_str()) {
            return Err(CompareError::DuplicateBullet(b.id.clone()));
        }
    }
    Ok(())
}

/// Compares all unordered pairs of `bullets`, including each bullet with itself.
///
/// Pairs are evaluated in parallel and collected by position, so the result
/// does not depend on the number of worker threads.
pub fn compare_set(
    bullets: Vec<BulletLands>,
    params: &CompareParams,
) -> Result<ComparisonSet, CompareError> {
    check_unique(&bullets)?;
    let pairs = upper_pairs(bullets.len())
        .into_par_iter()
        .map(|(i, j)| score_pair(&bullets[i], &bullets[j], params))
        .collect();
    Ok(ComparisonSet { bullets, pairs })
}

/// Scores one probe bullet against every reference bullet.
pub fn cross_set_compare(
    probe: &BulletLands,
    references: &[BulletLands],
    params: &CompareParams,
) -> Vec<PairComparison> {
    references
        .par_iter()
        .map(|r| score_pair(probe, r, params))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SubstitutionReport {
    /// Bullet id pairs whose comparison was recomputed.
    pub recomputed: Vec<(String, String)>,
}

/// Replaces the land signals of some bullets and recomputes only the pairs
/// that involve them. Every other pair is carried over unchanged.
pub fn substitute_bullets(
    set: &ComparisonSet,
    replacements: &BTreeMap<String, [Option<crate::signal::Signal>; LANDS]>,
    params: &CompareParams,
) -> Result<(ComparisonSet, SubstitutionReport), CompareError> {
    let mut bullets = set.bullets.clone();
    let mut touched = vec![false; bullets.len()];
    for (id, lands) in replacements {
        let idx = set
            .index_of(id)
            .ok_or_else(|| CompareError::UnknownBullet(id.clone()))?;
        bullets[idx].lands = lands.clone();
        touched[idx] = true;
    }

    let k = bullets.len();
    let results: Vec<(PairComparison, bool)> = upper_pairs(k)
        .into_par_iter()
        .map(|(i, j)| {
            if touched[i] || touched[j] {
                (score_pair(&bullets[i], &bullets[j], params), true)
            } else {
                (set.pairs[pair_index(k, i, j)].clone(), false)
            }
        })
        .collect();

    let mut report = SubstitutionReport::default();
    let mut pairs = Vec::with_capacity(results.len());
    for (p, recomputed) in results {
        if recomputed {
            report
                .recomputed
                .push((p.matrix.bullet1_id.clone(), p.matrix.bullet2_id.clone()));
        }
        pairs.push(p);
    }
    Ok((ComparisonSet { bullets, pairs }, report))
}

/// One land-pair entry of the scores file; land indices are 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LandEntry {
    pub i: usize,
    pub j: usize,
    pub ccf: Option<f64>,
    pub lag: i64,
    pub overlap: usize,
    pub valid: bool,
}

/// One bullet pair in the scores file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub bullet1: String,
    pub bullet2: String,
    pub phase: usize,
    pub in_phase_avg: f64,
    pub out_phase_avg: f64,
    pub ccf_diff: f64,
    pub unreliable_flag: bool,
    pub n_in_phase: usize,
    pub n_out_phase: usize,
    pub land_entries: Vec<LandEntry>,
}

impl From<&PairComparison> for ScoreRecord {
    fn from(p: &PairComparison) -> Self {
        let s = &p.score;
        let land_entries = (0..LANDS)
            .flat_map(|i| (0..LANDS).map(move |j| (i, j)))
            .map(|(i, j)| {
                let e = p.matrix.entries[i][j];
                LandEntry {
                    i: i + 1,
                    j: j + 1,
                    ccf: e.ccf,
                    lag: e.lag,
                    overlap: e.overlap,
                    valid: e.is_valid(),
                }
            })
            .collect();
        Self {
            bullet1: p.matrix.bullet1_id.clone(),
            bullet2: p.matrix.bullet2_id.clone(),
            phase: s.phase,
            in_phase_avg: s.in_phase_avg,
            out_phase_avg: s.out_phase_avg,
            ccf_diff: s.ccf_diff,
            unreliable_flag: s.unreliable,
            n_in_phase: s.n_in_phase,
            n_out_phase: s.n_out_phase,
            land_entries,
        }
    }
}

impl ScoreRecord {
    pub fn score(&self) -> BulletScore {
        BulletScore {
            phase: self.phase,
            in_phase_avg: self.in_phase_avg,
            out_phase_avg: self.out_phase_avg,
            ccf_diff: self.ccf_diff,
            n_in_phase: self.n_in_phase,
            n_out_phase: self.n_out_phase,
            unreliable: self.unreliable_flag,
        }
    }

    pub fn matrix(&self) -> Result<LandMatrix, CompareError> {
        let mut m = LandMatrix::from_values([[None; LANDS]; LANDS]);
        m.bullet1_id = self.bullet1.clone();
        m.bullet2_id = self.bullet2.clone();
        if self.land_entries.len() != LANDS * LANDS {
            return Err(CompareError::InconsistentScores(format!(
                "{}/{} has {} land entries",
                self.bullet1,
                self.bullet2,
                self.land_entries.len()
            )));
        }
        for e in &self.land_entries {
            if !(1..=LANDS).contains(&e.i) || !(1..=LANDS).contains(&e.j) {
                return Err(CompareError::InconsistentScores(format!(
                    "land index {}/{} out of range",
                    e.i, e.j
                )));
            }
            m.entries[e.i - 1][e.j - 1] = super::LandPairResult {
                ccf: if e.valid { e.ccf } else { None },
                lag: e.lag,
                overlap: e.overlap,
            };
        }
        Ok(m)
    }
}

/// Bullet scores without land detail, as needed by the analyses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreTable {
    pub bullet_ids: Vec<String>,
    /// Upper-triangular row-major, diagonal included.
    pub scores: Vec<BulletScore>,
}

impl ScoreTable {
    pub fn len(&self) -> usize {
        self.bullet_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bullet_ids.is_empty()
    }

    pub fn score(&self, i: usize, j: usize) -> &BulletScore {
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        &self.scores[pair_index(self.len(), a, b)]
    }

    /// Rebuilds the table from scores-file records. Bullet order is the order
    /// of first appearance; every pair (and self-pair) must occur exactly once.
    pub fn from_records(records: &[ScoreRecord]) -> Result<Self, CompareError> {
        let mut ids: Vec<String> = Vec::new();
        let mut index: HashMap<&str, usize> = HashMap::new();
        for r in records {
            for id in [&r.bullet1, &r.bullet2] {
                if !index.contains_key(id.as_str()) {
                    index.insert(id.as_str(), ids.len());
                    ids.push(id.clone());
                }
            }
        }
        let k = ids.len();
        if records.len() != stored_pairs(k) {
            return Err(CompareError::InconsistentScores(format!(
                "{} bullets need {} records, found {}",
                k,
                stored_pairs(k),
                records.len()
            )));
        }
        let mut slots: Vec<Option<BulletScore>> = vec![None; stored_pairs(k)];
        for r in records {
            let (a, b) = (index[r.bullet1.as_str()], index[r.bullet2.as_str()]);
            let (i, j) = if a <= b { (a, b) } else { (b, a) };
            let slot = &mut slots[pair_index(k, i, j)];
            if slot.is_some() {
                return Err(CompareError::InconsistentScores(format!(
                    "pair {}/{} listed twice",
                    r.bullet1, r.bullet2
                )));
            }
            *slot = Some(r.score());
        }
        Ok(Self {
            bullet_ids: ids,
            scores: slots
                .into_iter()
                .map(|s| s.expect("all slots filled"))
                .collect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::Signal;

    #[test]
    fn pair_index_is_dense() {
        for k in 1..8 {
            let idx: Vec<usize> = upper_pairs(k)
                .iter()
                .map(|&(i, j)| pair_index(k, i, j))
                .collect();
            assert_eq!(idx, (0..stored_pairs(k)).collect::<Vec<_>>());
        }
    }

    fn bullet(id: &str, seed: f64) -> BulletLands {
        let lands = (0..LANDS)
            .map(|l| {
                let v = (0..120)
                    .map(|i| {
                        ((i as f64 + seed * 17.0 + l as f64 * 31.0) * 0.41).sin()
                            + ((i as f64 * (0.13 + 0.01 * l as f64)) + seed).cos()
                    })
                    .collect();
                Signal::new(v, 1.0)
            })
            .collect();
        BulletLands::from_signals(id, lands)
    }

    fn params() -> CompareParams {
        CompareParams {
            lag: super::super::LagSearchParams {
                max_lag: 10,
                min_overlap: None,
                min_overlap_floor: 10,
            },
            min_in_phase: 3,
        }
    }

    #[test]
    fn single_bullet_self_score() {
        let set = compare_set(vec![bullet("A", 0.0)], &params()).unwrap();
        assert_eq!(set.pairs().len(), 1);
        let s = set.score(0, 0);
        assert_eq!(s.phase, 0);
        assert!((s.in_phase_avg - 1.0).abs() < 1e-12);
    }

    #[test]
    fn three_bullets_store_six_scores() {
        let set = compare_set(
            vec![bullet("A", 0.0), bullet("B", 1.0), bullet("C", 2.0)],
            &params(),
        )
        .unwrap();
        assert_eq!(set.pairs().len(), 6);
        assert_eq!(set.score(2, 0), set.score(0, 2));
        assert_eq!(set.pair(0, 2).matrix.bullet1_id, "A");
    }

    #[test]
    fn duplicate_ids_rejected() {
        let err = compare_set(vec![bullet("A", 0.0), bullet("A", 1.0)], &params()).unwrap_err();
        assert_eq!(err, CompareError::DuplicateBullet("A".into()));
    }

    #[test]
    fn excluded_land_counts() {
        let mut b = bullet("B", 1.0);
        b.lands[2] = None;
        let m = land_matrix(&bullet("A", 0.0), &b, &params().lag);
        assert_eq!(m.valid_count(), 30);
        let m = land_matrix(&b, &b, &params().lag);
        assert_eq!(LANDS * LANDS - m.valid_count(), 11);
    }

    #[test]
    fn records_round_trip_through_table() {
        let set = compare_set(
            vec![bullet("A", 0.0), bullet("B", 1.0), bullet("C", 2.0)],
            &params(),
        )
        .unwrap();
        let records = set.records();
        let table = ScoreTable::from_records(&records).unwrap();
        assert_eq!(table, set.score_table());
        assert_eq!(records[1].matrix().unwrap(), set.pairs()[1].matrix);
        assert!(ScoreTable::from_records(&records[1..]).is_err());
    }

    #[test]
    fn substitution_bookkeeping() {
        let bullets: Vec<_> = (0..4).map(|i| bullet(&format!("B{i}"), i as f64)).collect();
        let set = compare_set(bullets.clone(), &params()).unwrap();

        let (same, report) = substitute_bullets(&set, &BTreeMap::new(), &params()).unwrap();
        assert_eq!(same, set);
        assert!(report.recomputed.is_empty());

        let mut repl = BTreeMap::new();
        repl.insert("B2".to_string(), bullets[2].lands.clone());
        let (again, report) = substitute_bullets(&set, &repl, &params()).unwrap();
        assert_eq!(again, set);
        assert_eq!(report.recomputed.len(), 4);

        repl.insert("nope".to_string(), bullets[0].lands.clone());
        assert_eq!(
            substitute_bullets(&set, &repl, &params()).unwrap_err(),
            CompareError::UnknownBullet("nope".into())
        );
    }

    #[test]
    fn cross_compare_empty_reference() {
        assert!(cross_set_compare(&bullet("A", 0.0), &[], &params()).is_empty());
    }
}
