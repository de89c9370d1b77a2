//! The viewer bundle: one versioned JSON document holding every signal,
//! score, land matrix and analysis result of a study.
//!
//! Floats are written with nine significant digits. [`build_bundle`] applies
//! the same rounding to the in-memory value, so a built bundle serialises to
//! identical bytes every time and reads back field for field.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{self, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analyze::AnalysisReport;
use crate::compare::ScoreRecord;
use crate::config::PipelineConfig;
use crate::pipeline::{bullet_infos, LandRecord, PipelineError};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum BundleError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("malformed bundle JSON at byte {offset}: {message}")]
    Json { offset: usize, message: String },
    #[error(
        "bundle schema version {found:?} is not supported (this build reads version {supported})"
    )]
    VersionMismatch { found: Option<u64>, supported: u32 },
    #[error("dangling reference: {0}")]
    DanglingReference(String),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestBullet {
    pub id: String,
    pub barrel_id: String,
    pub shot_number: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestExclusion {
    pub bullet: String,
    pub land: u8,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub barrels: Vec<String>,
    pub bullets: Vec<ManifestBullet>,
    pub exclusions: Vec<ManifestExclusion>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreRange {
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bundle {
    pub schema_version: u32,
    pub manifest: BundleManifest,
    /// Land records ordered by manifest bullet order, then land index.
    pub lands: Vec<LandRecord>,
    pub scores: Vec<ScoreRecord>,
    pub score_range: Option<ScoreRange>,
    pub analysis: AnalysisReport,
    pub config: PipelineConfig,
    pub provenance: BTreeMap<String, String>,
}

impl Bundle {
    pub fn land(&self, bullet: &str, land: u8) -> Option<&LandRecord> {
        self.lands
            .iter()
            .find(|r| r.meta.bullet_id == bullet && r.meta.land_index == land)
    }

    /// The stored score for `{b1, b2}`; the flag is true when it was stored
    /// as `(b2, b1)`.
    pub fn score(&self, b1: &str, b2: &str) -> Option<(&ScoreRecord, bool)> {
        self.scores.iter().find_map(|s| {
            if s.bullet1 == b1 && s.bullet2 == b2 {
                Some((s, false))
            } else if s.bullet1 == b2 && s.bullet2 == b1 {
                Some((s, true))
            } else {
                None
            }
        })
    }

    pub fn has_bullet(&self, id: &str) -> bool {
        self.manifest.bullets.iter().any(|b| b.id == id)
    }
}

/// Assembles and validates a bundle. Signal provenance is dropped (the land
/// record already carries it) and every float is rounded to nine significant
/// digits.
pub fn build_bundle(
    records: Vec<LandRecord>,
    scores: Vec<ScoreRecord>,
    analysis: AnalysisReport,
    config: PipelineConfig,
) -> Result<Bundle, BundleError> {
    let infos = bullet_infos(&records)?;
    let order: BTreeMap<&str, usize> = infos
        .iter()
        .enumerate()
        .map(|(i, b)| (b.bullet.as_str(), i))
        .collect();

    for s in &scores {
        for id in [&s.bullet1, &s.bullet2] {
            if !order.contains_key(id.as_str()) {
                return Err(BundleError::DanglingReference(format!(
                    "score {}/{} names bullet `{id}` which has no land records",
                    s.bullet1, s.bullet2
                )));
            }
        }
    }
    for id in analysis.bullet_ids.iter().chain(&analysis.leaf_order.ids) {
        if !order.contains_key(id.as_str()) {
            return Err(BundleError::DanglingReference(format!(
                "analysis names unknown bullet `{id}`"
            )));
        }
    }

    let mut lands = records;
    for r in &mut lands {
        if let Some(s) = &mut r.signal {
            s.provenance = None;
        }
    }
    lands.sort_by_key(|r| (order[r.meta.bullet_id.as_str()], r.meta.land_index));

    let barrels: Vec<String> = infos
        .iter()
        .map(|b| b.barrel.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let exclusions = lands
        .iter()
        .filter_map(|r| {
            r.exclusion.as_ref().map(|reason| ManifestExclusion {
                bullet: r.meta.bullet_id.clone(),
                land: r.meta.land_index,
                reason: reason.clone(),
            })
        })
        .collect();
    let manifest = BundleManifest {
        barrels,
        bullets: infos
            .iter()
            .map(|b| ManifestBullet {
                id: b.bullet.clone(),
                barrel_id: b.barrel.clone(),
                shot_number: b.shot_number,
            })
            .collect(),
        exclusions,
    };

    let off_diagonal: Vec<f64> = scores
        .iter()
        .filter(|s| s.bullet1 != s.bullet2 && !s.unreliable_flag)
        .map(|s| s.ccf_diff)
        .collect();
    let score_range = (!off_diagonal.is_empty()).then(|| ScoreRange {
        min: off_diagonal.iter().copied().fold(f64::INFINITY, f64::min),
        max: off_diagonal
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max),
    });

    let mut provenance = BTreeMap::new();
    provenance.insert(
        "generator".to_string(),
        format!("fbcv-core {}", env!("CARGO_PKG_VERSION")),
    );
    provenance.insert("float_digits".to_string(), "9".to_string());

    let bundle = Bundle {
        schema_version: SCHEMA_VERSION,
        manifest,
        lands,
        scores,
        score_range,
        analysis,
        config,
        provenance,
    };
    canonicalise(&bundle)
}

fn canonicalise(bundle: &Bundle) -> Result<Bundle, BundleError> {
    from_json_bytes(&to_json_bytes(bundle))
}

/// JSON formatter that prints every float with nine significant digits.
struct NineDigits;

impl serde_json::ser::Formatter for NineDigits {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        let rounded: f64 = format!("{value:.8e}")
            .parse()
            .expect("formatted float parses");
        let mut buf = ryu::Buffer::new();
        writer.write_all(buf.format_finite(rounded).as_bytes())
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }
}

/// Canonical serialisation: compact JSON, nine-digit floats.
pub fn to_json_bytes(bundle: &Bundle) -> Vec<u8> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, NineDigits);
    bundle
        .serialize(&mut ser)
        .expect("bundle serialisation cannot fail");
    out
}

/// Parses a bundle, checking the schema version before the full structure so
/// that a future version is reported as such.
pub fn from_json_bytes(bytes: &[u8]) -> Result<Bundle, BundleError> {
    #[derive(Deserialize)]
    struct Probe {
        schema_version: Option<serde_json::Value>,
    }
    let probe: Probe = serde_json::from_slice(bytes).map_err(|e| json_error(bytes, &e))?;
    let found = probe
        .schema_version
        .as_ref()
        .and_then(serde_json::Value::as_u64);
    if found != Some(SCHEMA_VERSION as u64) {
        return Err(BundleError::VersionMismatch {
            found,
            supported: SCHEMA_VERSION,
        });
    }
    serde_json::from_slice(bytes).map_err(|e| json_error(bytes, &e))
}

fn json_error(bytes: &[u8], e: &serde_json::Error) -> BundleError {
    BundleError::Json {
        offset: byte_offset(bytes, e.line(), e.column()),
        message: e.to_string(),
    }
}

/// Converts serde_json's 1-based line / byte column into an absolute offset.
fn byte_offset(bytes: &[u8], line: usize, column: usize) -> usize {
    let line_start: usize = bytes
        .split_inclusive(|&b| b == b'\n')
        .take(line.saturating_sub(1))
        .map(<[u8]>::len)
        .sum();
    (line_start + column.saturating_sub(1)).min(bytes.len())
}

fn is_gzip_path(path: &Path) -> bool {
    path.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("gz"))
}

/// Writes the canonical JSON; gzip-compressed when the path ends in `.gz`.
pub fn write_bundle(bundle: &Bundle, path: &Path) -> Result<(), BundleError> {
    let io_err = |source| BundleError::Io {
        path: path.display().to_string(),
        source,
    };
    let json = to_json_bytes(bundle);
    let bytes = if is_gzip_path(path) {
        let mut enc = flate2::write::GzEncoder::new(Vec::new(), flate2::Compression::default());
        enc.write_all(&json).map_err(io_err)?;
        enc.finish().map_err(io_err)?
    } else {
        json
    };
    std::fs::write(path, bytes).map_err(io_err)
}

/// Reads a bundle written by [`write_bundle`]. Gzip input is detected by its
/// magic bytes.
pub fn read_bundle(path: &Path) -> Result<Bundle, BundleError> {
    let io_err = |source| BundleError::Io {
        path: path.display().to_string(),
        source,
    };
    let raw = std::fs::read(path).map_err(io_err)?;
    let bytes = if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        flate2::read::GzDecoder::new(&raw[..])
            .read_to_end(&mut out)
            .map_err(io_err)?;
        out
    } else {
        raw
    };
    from_json_bytes(&bytes)
}
