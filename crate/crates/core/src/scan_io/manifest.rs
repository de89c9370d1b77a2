//! Scan manifest: CSV with columns
//! `path, barrel_id, shot_number, land_index, excluded, reason` and the
//! optional columns `bullet_id` and `crosscut_y` (manual crosscut in µm).

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{default_bullet_id, ScanError, ScanMeta};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub path: String,
    pub barrel_id: String,
    pub shot_number: u32,
    pub land_index: u8,
    #[serde(default, deserialize_with = "lenient_bool")]
    pub excluded: bool,
    #[serde(default)]
    pub reason: String,
    #[serde(default)]
    pub bullet_id: Option<String>,
    #[serde(default)]
    pub crosscut_y: Option<f64>,
}

impl ManifestRow {
    pub fn meta(&self) -> Result<ScanMeta, ScanError> {
        let bullet = self
            .bullet_id
            .clone()
            .filter(|b| !b.trim().is_empty())
            .unwrap_or_else(|| default_bullet_id(&self.barrel_id, self.shot_number));
        let mut meta =
            ScanMeta::with_bullet_id(&self.barrel_id, &bullet, self.shot_number, self.land_index)?;
        meta.source_path = self.path.clone();
        Ok(meta)
    }
}

fn lenient_bool<'de, D: serde::Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
    let raw = String::deserialize(d)?;
    match raw.trim().to_ascii_lowercase().as_str() {
        "" | "0" | "false" | "no" | "f" | "n" => Ok(false),
        "1" | "true" | "yes" | "t" | "y" => Ok(true),
        other => Err(serde::de::Error::custom(format!(
            "`{other}` is not a boolean"
        ))),
    }
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRow>, ScanError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScanError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_manifest(&text)
}

pub(crate) fn parse_manifest(text: &str) -> Result<Vec<ManifestRow>, ScanError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (i, row) in reader.deserialize::<ManifestRow>().enumerate() {
        let row = row.map_err(|e| ScanError::Manifest(format!("row {}: {e}", i + 1)))?;
        row.meta()
            .map_err(|e| ScanError::Manifest(format!("row {}: {e}", i + 1)))?;
        rows.push(row);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_required_and_optional_columns() {
        let text = "path,barrel_id,shot_number,land_index,excluded,reason,crosscut_y\n\
                    a.x3p,B,11,1,false,,\n\
                    b.x3p,B,11,2,true,tank rash,120.5\n";
        let rows = parse_manifest(text).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(!rows[0].excluded);
        assert_eq!(rows[0].meta().unwrap().bullet_id, "B11");
        assert!(rows[1].excluded);
        assert_eq!(rows[1].reason, "tank rash");
        assert_eq!(rows[1].crosscut_y, Some(120.5));
    }

    #[test]
    fn bad_land_index_rejected() {
        let text = "path,barrel_id,shot_number,land_index,excluded,reason\na,B,11,9,0,\n";
        assert!(parse_manifest(text).is_err());
    }
}
