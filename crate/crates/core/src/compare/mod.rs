//! Land-to-land and bullet-to-bullet comparison.

mod lag;
mod phase;
mod set;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::signal::Signal;
use crate::LANDS;

pub use lag::{
    align, ccf_max, corr_at_lag, AlignedPair, LagCorrelation, LagError, LagSearchParams,
    LandPairResult,
};
pub use phase::{best_phase, ccf_diff, in_phase_partner, land_matrix, BulletScore, LandMatrix};
pub use set::{
    compare_set, cross_set_compare, score_pair, substitute_bullets, ComparisonSet, LandEntry,
    PairComparison, ScoreRecord, ScoreTable, SubstitutionReport,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CompareError {
    #[error("no cyclic phase has a valid in-phase land comparison")]
    NoValidPhase,
    #[error("unknown bullet id `{0}`")]
    UnknownBullet(String),
    #[error("duplicate bullet id `{0}`")]
    DuplicateBullet(String),
    #[error("scores table is inconsistent: {0}")]
    InconsistentScores(String),
}

/// The six land signals of one bullet; `None` marks an excluded land.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BulletLands {
    pub id: String,
    pub lands: [Option<Signal>; LANDS],
}

impl BulletLands {
    pub fn new(id: impl Into<String>, lands: [Option<Signal>; LANDS]) -> Self {
        Self {
            id: id.into(),
            lands,
        }
    }

    pub fn from_signals(id: impl Into<String>, signals: Vec<Signal>) -> Self {
        assert_eq!(signals.len(), LANDS, "a bullet has exactly six lands");
        let mut it = signals.into_iter();
        Self::new(id, std::array::from_fn(|_| it.next()))
    }

    pub fn excluded_lands(&self) -> usize {
        self.lands.iter().filter(|l| l.is_none()).count()
    }
}

/// Parameters shared by every bullet comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompareParams {
    pub lag: LagSearchParams,
    pub min_in_phase: usize,
}

impl Default for CompareParams {
    fn default() -> Self {
        Self {
            lag: LagSearchParams::default(),
            min_in_phase: 3,
        }
    }
}

impl From<&crate::config::PipelineConfig> for CompareParams {
    fn from(c: &crate::config::PipelineConfig) -> Self {
        Self {
            lag: c.lag,
            min_in_phase: c.score.min_in_phase,
        }
    }
}
