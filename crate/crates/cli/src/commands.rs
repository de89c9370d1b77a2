//! One function per subcommand. Each reads its inputs from disk, runs the
//! matching core stage and writes JSON.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use fbcv_core::analyze::{analyze, AnalysisReport, BulletInfo};
use fbcv_core::bundle::{build_bundle, write_bundle};
use fbcv_core::compare::{compare_set, CompareParams, ScoreRecord, ScoreTable};
use fbcv_core::pipeline::{group_bullets, load_scan, process_manifest, record_file_name, resolve};
use fbcv_core::scan_io::{read_manifest, validate, write_x3p, ScanRecord, ValidationRules};
use fbcv_core::synth::{SynthParams, SynthStudy};
use fbcv_core::{LandRecord, PipelineConfig, LANDS};
use serde::Serialize;

pub const FLAGS_FILE: &str = "flags.json";

pub fn load_config(path: Option<&Path>) -> Result<PipelineConfig> {
    match path {
        Some(p) => {
            PipelineConfig::load(p).with_context(|| format!("loading config {}", p.display()))
        }
        None => Ok(PipelineConfig::default()),
    }
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let text = serde_json::to_vec_pretty(value)?;
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_slice(&bytes).with_context(|| format!("parsing {}", path.display()))
}

#[derive(Debug, Serialize)]
pub struct IngestEntry {
    pub bullet: String,
    pub land: u8,
    pub path: String,
    pub n_cols: Option<usize>,
    pub n_rows: Option<usize>,
    pub x_inc: Option<f64>,
    pub y_inc: Option<f64>,
    pub measured_fraction: Option<f64>,
    pub excluded: bool,
    pub reason: Option<String>,
}

/// Loads and validates every scan in the manifest without extracting signals.
/// Scan paths are resolved against `dir`.
pub fn ingest(dir: &Path, manifest: &Path, cfg: &PipelineConfig) -> Result<Vec<IngestEntry>> {
    let rows = read_manifest(manifest)?;
    let rules = ValidationRules::from(&cfg.scan);
    let mut out = Vec::with_capacity(rows.len());
    for row in &rows {
        let meta = row.meta()?;
        let mut entry = IngestEntry {
            bullet: meta.bullet_id.clone(),
            land: meta.land_index,
            path: row.path.clone(),
            n_cols: None,
            n_rows: None,
            x_inc: None,
            y_inc: None,
            measured_fraction: None,
            excluded: row.excluded,
            reason: row
                .excluded
                .then(|| fbcv_core::scan_io::exclusion_reason(&row.reason)),
        };
        match load_scan(&resolve(dir, &row.path)) {
            Ok(scan) => {
                let f = &scan.field;
                entry.n_cols = Some(f.n_cols());
                entry.n_rows = Some(f.n_rows());
                entry.x_inc = Some(f.x_inc());
                entry.y_inc = Some(f.y_inc());
                entry.measured_fraction = Some(f.measured_fraction());
                if !row.excluded {
                    if let Err(reason) = validate(&ScanRecord::new(meta, scan.field), &rules) {
                        entry.excluded = true;
                        entry.reason = Some(reason);
                    }
                }
            }
            Err(e) if !row.excluded => {
                entry.excluded = true;
                entry.reason = Some(format!("unreadable scan: {e}"));
            }
            Err(_) => {}
        }
        out.push(entry);
    }
    Ok(out)
}

#[derive(Debug, Serialize)]
pub struct FlagEntry {
    pub bullet: String,
    pub land: u8,
    pub exclusion: Option<String>,
    pub flags: Vec<String>,
}

/// Extracts one signal record per manifest row into `out`, plus `flags.json`.
pub fn signal(manifest: &Path, cfg: &PipelineConfig, out: &Path) -> Result<Vec<FlagEntry>> {
    let records = process_manifest(manifest, cfg)?;
    group_bullets(&records)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut flags = Vec::new();
    for r in &records {
        write_json(&out.join(record_file_name(&r.meta)), r)?;
        let f = r.flags();
        if r.is_excluded() || !f.is_empty() {
            flags.push(FlagEntry {
                bullet: r.meta.bullet_id.clone(),
                land: r.meta.land_index,
                exclusion: r.exclusion.clone(),
                flags: f,
            });
        }
    }
    write_json(&out.join(FLAGS_FILE), &flags)?;
    Ok(flags)
}

/// Every land record in a signals directory, in file-name order.
pub fn read_records(dir: &Path) -> Result<Vec<LandRecord>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    paths.retain(|p| {
        p.extension().is_some_and(|e| e == "json") && p.file_name().is_some_and(|n| n != FLAGS_FILE)
    });
    paths.sort();
    if paths.is_empty() {
        bail!("no signal records in {}", dir.display());
    }
    paths.iter().map(|p| read_json(p)).collect()
}

pub fn compare(signals: &Path, cfg: &PipelineConfig) -> Result<Vec<ScoreRecord>> {
    let records = read_records(signals)?;
    let bullets = group_bullets(&records)?;
    tracing::info!(bullets = bullets.len(), "comparing");
    let set = compare_set(bullets, &CompareParams::from(cfg))?;
    Ok(set.records())
}

/// Barrel and shot number per bullet, from a scan manifest.
pub fn manifest_bullets(manifest: &Path) -> Result<Vec<BulletInfo>> {
    let mut by_id: BTreeMap<String, BulletInfo> = BTreeMap::new();
    for row in read_manifest(manifest)? {
        let meta = row.meta()?;
        let info = BulletInfo {
            bullet: meta.bullet_id.clone(),
            barrel: meta.barrel_id.clone(),
            shot_number: meta.shot_number,
        };
        if let Some(prev) = by_id.get(&info.bullet) {
            if prev != &info {
                bail!(
                    "bullet `{}` has conflicting barrel or shot number in the manifest",
                    info.bullet
                );
            }
        }
        by_id.insert(info.bullet.clone(), info);
    }
    Ok(by_id.into_values().collect())
}

pub fn analyze_scores(
    scores: &Path,
    bullets: &[BulletInfo],
    cfg: &PipelineConfig,
) -> Result<AnalysisReport> {
    let records: Vec<ScoreRecord> = read_json(scores)?;
    let table = ScoreTable::from_records(&records)?;
    Ok(analyze(&table, bullets, &cfg.analysis)?)
}

pub fn bundle(
    signals: &Path,
    scores: &Path,
    analysis: &Path,
    cfg: PipelineConfig,
    out: &Path,
) -> Result<fbcv_core::Bundle> {
    let records = read_records(signals)?;
    let scores: Vec<ScoreRecord> = read_json(scores)?;
    let analysis: AnalysisReport = read_json(analysis)?;
    let b = build_bundle(records, scores, analysis, cfg)?;
    write_bundle(&b, out)?;
    Ok(b)
}

/// Writes a synthetic study as x3p scans with `manifest.csv` and the planted
/// ground truth in `truth.json`. Returns the manifest path.
pub fn synth(params: &SynthParams, out: &Path) -> Result<PathBuf> {
    let study = SynthStudy::generate(params);
    let scans = out.join("scans");
    fs::create_dir_all(&scans).with_context(|| format!("creating {}", scans.display()))?;
    let mut manifest = String::from("path,barrel_id,shot_number,land_index,excluded,reason\n");
    for (b, bullet) in study.bullets.iter().enumerate() {
        for l in 0..LANDS {
            let (scan, _, _) = study.land_scan(b, l);
            let name = format!("scans/{}_L{}.x3p", bullet.bullet_id, l + 1);
            fs::write(out.join(&name), write_x3p(&scan.field)?)
                .with_context(|| format!("writing {name}"))?;
            manifest.push_str(&format!(
                "{name},{},{},{},false,\n",
                bullet.barrel_id,
                bullet.shot_number,
                l + 1
            ));
        }
    }
    let path = out.join("manifest.csv");
    fs::write(&path, manifest).with_context(|| format!("writing {}", path.display()))?;

    #[derive(Serialize)]
    struct Truth<'a> {
        params: &'a SynthParams,
        bullets: &'a [fbcv_core::synth::SynthBullet],
    }
    write_json(
        &out.join("truth.json"),
        &Truth {
            params,
            bullets: &study.bullets,
        },
    )?;
    Ok(path)
}

pub fn save<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    write_json(path, value)
}
