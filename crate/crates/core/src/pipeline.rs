//! From scans on disk to per-land signal records and per-bullet signal sets.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analyze::BulletInfo;
use crate::compare::BulletLands;
use crate::config::PipelineConfig;
use crate::scan_io::{
    self, downsample, read_grid_csv, read_manifest, read_x3p, validate, HeightField, ManifestRow,
    ScanError, ScanMeta, ScanRecord, ValidationRules,
};
use crate::signal::{
    detect_grooves, extract_profile, extract_signal, select_crosscut, CrosscutChoice, GrooveBounds,
    Profile, Signal, SignalProvenance,
};
use crate::LANDS;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Scan(#[from] ScanError),
    #[error("bullet `{bullet}` has land {land} more than once")]
    DuplicateLand { bullet: String, land: u8 },
    #[error("bullet `{bullet}` appears with barrels `{first}` and `{second}`")]
    InconsistentBullet {
        bullet: String,
        first: String,
        second: String,
    },
    #[error("unsupported scan file extension: {0}")]
    UnsupportedFormat(String),
}

/// A parsed scan file: the height field plus any container metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedScan {
    pub field: HeightField,
    pub metadata: BTreeMap<String, String>,
}

/// Reads an `.x3p` container or a grid CSV (`.csv` / `.txt`).
pub fn load_scan(path: &Path) -> Result<LoadedScan, PipelineError> {
    let io = |source| ScanError::Io {
        path: path.display().to_string(),
        source,
    };
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase();
    match ext.as_str() {
        "x3p" => {
            let bytes = std::fs::read(path).map_err(io)?;
            let scan = read_x3p(&bytes)?;
            Ok(LoadedScan {
                field: scan.field,
                metadata: scan.metadata,
            })
        }
        "csv" | "txt" => {
            let text = std::fs::read_to_string(path).map_err(io)?;
            Ok(LoadedScan {
                field: read_grid_csv(&text)?,
                metadata: BTreeMap::new(),
            })
        }
        _ => Err(PipelineError::UnsupportedFormat(path.display().to_string())),
    }
}

/// Everything the pipeline knows about one land scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandRecord {
    pub meta: ScanMeta,
    /// Set when the land was excluded (by the manifest, by validation, or by a
    /// processing failure); the signal is then absent.
    pub exclusion: Option<String>,
    pub crosscut: Option<CrosscutChoice>,
    pub profile: Option<Profile>,
    pub bounds: Option<GrooveBounds>,
    pub signal: Option<Signal>,
    pub thumbnail: Option<HeightField>,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

impl LandRecord {
    fn excluded(meta: ScanMeta, reason: String) -> Self {
        Self {
            meta,
            exclusion: Some(reason),
            crosscut: None,
            profile: None,
            bounds: None,
            signal: None,
            thumbnail: None,
            metadata: BTreeMap::new(),
        }
    }

    pub fn is_excluded(&self) -> bool {
        self.exclusion.is_some()
    }

    /// Human-readable quality flags: crosscut fallback and missing shoulders.
    pub fn flags(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.crosscut.is_some_and(|c| c.fallback) {
            out.push("crosscut: no stable region, densest row used".to_string());
        }
        if let Some(b) = self.bounds {
            if !b.left_found {
                out.push("grooves: left shoulder not found".to_string());
            }
            if !b.right_found {
                out.push("grooves: right shoulder not found".to_string());
            }
        }
        out
    }
}

/// Runs one scan through crosscut selection, profile extraction, groove
/// detection and curvature removal. Failures turn into exclusions with the
/// error as reason; the thumbnail is kept whenever the field is available.
pub fn process_scan(
    record: &ScanRecord,
    crosscut_override: Option<f64>,
    cfg: &PipelineConfig,
) -> LandRecord {
    let mut out = LandRecord::excluded(record.meta.clone(), String::new());
    out.exclusion = None;
    out.thumbnail = downsample(&record.field, cfg.scan.thumbnail_factor.max(1)).ok();
    if let Some(reason) = record.exclusion_reason() {
        out.exclusion = Some(reason.to_string());
        return out;
    }
    if let Err(reason) = validate(record, &ValidationRules::from(&cfg.scan)) {
        out.exclusion = Some(reason);
        return out;
    }

    let result = (|| {
        let choice = match crosscut_override {
            Some(y) => CrosscutChoice {
                y_location: y,
                row: (y / record.field.y_inc()).round() as usize,
                fallback: false,
            },
            None => select_crosscut(&record.field, &cfg.crosscut)?,
        };
        let profile = extract_profile(
            &record.field,
            choice.y_location,
            cfg.crosscut.band_halfwidth,
        )?;
        let bounds = detect_grooves(&profile, &cfg.grooves)?;
        let mut signal = extract_signal(&profile, &bounds, &cfg.loess)?;
        signal.provenance = Some(SignalProvenance {
            meta: Some(record.meta.clone()),
            y_location: profile.y_location,
            bounds,
        });
        Ok::<_, crate::signal::SignalError>((choice, profile, bounds, signal))
    })();
    match result {
        Ok((choice, profile, bounds, signal)) => {
            out.crosscut = Some(choice);
            out.profile = Some(profile);
            out.bounds = Some(bounds);
            out.signal = Some(signal);
        }
        Err(e) => out.exclusion = Some(format!("signal extraction failed: {e}")),
    }
    out
}

/// Resolves a manifest path relative to the manifest's directory.
pub fn resolve(manifest_dir: &Path, path: &str) -> PathBuf {
    let p = Path::new(path);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        manifest_dir.join(p)
    }
}

/// Loads and processes every manifest row, in manifest order. Unreadable
/// files become excluded records.
pub fn process_manifest(
    manifest: &Path,
    cfg: &PipelineConfig,
) -> Result<Vec<LandRecord>, PipelineError> {
    let rows = read_manifest(manifest)?;
    let dir = manifest.parent().unwrap_or(Path::new("."));
    Ok(process_rows(&rows, dir, cfg))
}

pub fn process_rows(rows: &[ManifestRow], dir: &Path, cfg: &PipelineConfig) -> Vec<LandRecord> {
    rows.par_iter()
        .map(|row| {
            let meta = row.meta().expect("manifest rows are validated on read");
            match load_scan(&resolve(dir, &row.path)) {
                Ok(scan) => {
                    let mut rec = ScanRecord::new(meta, scan.field);
                    if row.excluded {
                        rec = rec.exclude(row.reason.clone());
                    }
                    let mut out = process_scan(&rec, row.crosscut_y, cfg);
                    out.metadata = scan.metadata;
                    out
                }
                Err(e) if row.excluded => {
                    let mut out =
                        LandRecord::excluded(meta, scan_io::exclusion_reason(&row.reason));
                    out.metadata.insert("load_error".into(), e.to_string());
                    out
                }
                Err(e) => LandRecord::excluded(meta, format!("unreadable scan: {e}")),
            }
        })
        .collect()
}

/// Groups land records into bullets ordered by barrel, shot number and id.
/// Lands without a record or without a signal are `None`.
pub fn group_bullets(records: &[LandRecord]) -> Result<Vec<BulletLands>, PipelineError> {
    let infos = bullet_infos(records)?;
    let mut lands: BTreeMap<&str, [Option<Signal>; LANDS]> = BTreeMap::new();
    let mut seen = std::collections::BTreeSet::new();
    for r in records {
        let id = r.meta.bullet_id.as_str();
        if !seen.insert((id, r.meta.land_index)) {
            return Err(PipelineError::DuplicateLand {
                bullet: id.to_string(),
                land: r.meta.land_index,
            });
        }
        lands
            .entry(id)
            .or_insert_with(|| std::array::from_fn(|_| None))[r.meta.land_index as usize - 1] =
            r.signal.clone();
    }
    Ok(infos
        .into_iter()
        .map(|b| BulletLands::new(b.bullet.clone(), lands[b.bullet.as_str()].clone()))
        .collect())
}

/// One entry per bullet, ordered by barrel, shot number and id.
pub fn bullet_infos(records: &[LandRecord]) -> Result<Vec<BulletInfo>, PipelineError> {
    let mut by_id: BTreeMap<&str, BulletInfo> = BTreeMap::new();
    for r in records {
        let m = &r.meta;
        let info = by_id
            .entry(m.bullet_id.as_str())
            .or_insert_with(|| BulletInfo {
                bullet: m.bullet_id.clone(),
                barrel: m.barrel_id.clone(),
                shot_number: m.shot_number,
            });
        if info.barrel != m.barrel_id || info.shot_number != m.shot_number {
            return Err(PipelineError::InconsistentBullet {
                bullet: m.bullet_id.clone(),
                first: format!("{}#{}", info.barrel, info.shot_number),
                second: format!("{}#{}", m.barrel_id, m.shot_number),
            });
        }
    }
    let mut out: Vec<BulletInfo> = by_id.into_values().collect();
    out.sort_by(|a, b| {
        (&a.barrel, a.shot_number, &a.bullet).cmp(&(&b.barrel, b.shot_number, &b.bullet))
    });
    Ok(out)
}

/// Record file name used by the CLI for one land: `<bullet>_L<land>.json`.
pub fn record_file_name(meta: &ScanMeta) -> String {
    let safe: String = meta
        .bullet_id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("{safe}_L{}.json", meta.land_index)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field(n_cols: usize, n_rows: usize) -> HeightField {
        let mut v = Vec::with_capacity(n_cols * n_rows);
        for _ in 0..n_rows {
            for c in 0..n_cols {
                let x = c as f64 - n_cols as f64 / 2.0;
                v.push(1e-4 * x * x + (c as f64 * 0.3).sin() + 0.5 * (c as f64 * 0.07).cos());
            }
        }
        HeightField::from_values(n_cols, n_rows, 0.645, 6.45, v).unwrap()
    }

    fn meta(bullet: &str, land: u8) -> ScanMeta {
        ScanMeta::with_bullet_id("A", bullet, 1, land).unwrap()
    }

    #[test]
    fn processes_valid_scan() {
        let rec = ScanRecord::new(meta("A1", 1), field(400, 12));
        let out = process_scan(&rec, None, &PipelineConfig::default());
        assert!(out.exclusion.is_none(), "{:?}", out.exclusion);
        let s = out.signal.unwrap();
        assert_eq!(s.len(), 400);
        assert_eq!(s.provenance.unwrap().meta.unwrap().bullet_id, "A1");
        assert_eq!(out.thumbnail.unwrap().n_cols(), 50);
    }

    #[test]
    fn manifest_exclusion_kept() {
        let rec = ScanRecord::new(meta("A1", 2), field(400, 12)).exclude("tank rash");
        let out = process_scan(&rec, None, &PipelineConfig::default());
        assert_eq!(out.exclusion.as_deref(), Some("tank rash"));
        assert!(out.signal.is_none());
        assert!(out.thumbnail.is_some());
    }

    #[test]
    fn validation_failure_excludes() {
        let rec = ScanRecord::new(meta("A1", 3), field(50, 12));
        let out = process_scan(&rec, None, &PipelineConfig::default());
        assert!(out.exclusion.unwrap().contains("below the minimum"));
    }

    #[test]
    fn grouping_fills_missing_lands() {
        let cfg = PipelineConfig::default();
        let recs: Vec<LandRecord> = [1u8, 2, 4]
            .iter()
            .map(|&l| process_scan(&ScanRecord::new(meta("A1", l), field(300, 10)), None, &cfg))
            .collect();
        let bullets = group_bullets(&recs).unwrap();
        assert_eq!(bullets.len(), 1);
        assert_eq!(bullets[0].excluded_lands(), 3);
        let dup = vec![recs[0].clone(), recs[0].clone()];
        assert!(matches!(
            group_bullets(&dup),
            Err(PipelineError::DuplicateLand { land: 1, .. })
        ));
    }

    #[test]
    fn file_names_are_sanitised() {
        assert_eq!(record_file_name(&meta("A/1", 3)), "A_1_L3.json");
    }
}
