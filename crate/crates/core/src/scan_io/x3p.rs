use std::collections::BTreeMap;
use std::io::{Cursor, Read};

use super::{HeightField, ScanError};

const METRES_TO_UM: f64 = 1e6;
const DEFAULT_DATA_LINK: &str = "bindata/data.bin";

/// A parsed x3p container.
#[derive(Debug, Clone, PartialEq)]
pub struct X3pScan {
    pub field: HeightField,
    /// Every leaf element of `main.xml`, keyed by its slash-joined element path
    /// (e.g. `Record2/Date`). Carried opaquely into bundle provenance.
    pub metadata: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum DataType {
    F32,
    F64,
}

impl DataType {
    fn width(self) -> usize {
        match self {
            DataType::F32 => 4,
            DataType::F64 => 8,
        }
    }
}

/// Reads an x3p container (ZIP holding `main.xml` plus a binary height matrix).
///
/// Only the matrix dimensions, the x/y increments and the z data type are
/// interpreted. Increments and heights are converted from metres to µm; NaN
/// heights become masked cells.
pub fn read_x3p(bytes: &[u8]) -> Result<X3pScan, ScanError> {
    let mut archive =
        zip::ZipArchive::new(Cursor::new(bytes)).map_err(|e| ScanError::Zip(e.to_string()))?;

    let xml = read_entry(&mut archive, "main.xml")?;
    let xml = String::from_utf8(xml).map_err(|e| ScanError::Xml(e.to_string()))?;
    let doc = roxmltree::Document::parse(&xml).map_err(|e| ScanError::Xml(e.to_string()))?;
    let metadata = collect_leaves(&doc);

    let size_x = parse_count(&metadata, "Record3/MatrixDimension/SizeX")?;
    let size_y = parse_count(&metadata, "Record3/MatrixDimension/SizeY")?;
    if let Some(z) = metadata.get("Record3/MatrixDimension/SizeZ") {
        if z.trim() != "1" {
            return Err(ScanError::Field {
                field: "Record3/MatrixDimension/SizeZ".into(),
                reason: format!("expected 1 layer, found `{z}`"),
            });
        }
    }
    let x_inc = parse_increment(&metadata, "Record1/Axes/CX/Increment")?;
    let y_inc = parse_increment(&metadata, "Record1/Axes/CY/Increment")?;
    let dtype = match require(&metadata, "Record1/Axes/CZ/DataType")?.trim() {
        "D" => DataType::F64,
        "F" => DataType::F32,
        other => return Err(ScanError::UnsupportedDataType(other.to_string())),
    };

    let link = metadata
        .get("Record3/DataLink/PointDataLink")
        .map(|s| s.trim().to_string())
        .unwrap_or_else(|| DEFAULT_DATA_LINK.to_string());
    let payload = read_entry(&mut archive, &link)?;

    let cells = size_x.checked_mul(size_y).ok_or_else(|| ScanError::Field {
        field: "Record3/MatrixDimension".into(),
        reason: "dimensions overflow".into(),
    })?;
    let expected = cells * dtype.width();
    if payload.len() != expected {
        return Err(ScanError::Field {
            field: "Record3/MatrixDimension".into(),
            reason: format!(
                "declared {size_x}x{size_y} grid needs {expected} bytes of {dtype:?} data, payload `{link}` has {}",
                payload.len()
            ),
        });
    }

    let values: Vec<f64> = match dtype {
        DataType::F64 => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
        DataType::F32 => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect(),
    };
    let heights = values.iter().map(|v| v * METRES_TO_UM).collect();
    let field = HeightField::from_values(
        size_x,
        size_y,
        x_inc * METRES_TO_UM,
        y_inc * METRES_TO_UM,
        heights,
    )?;
    Ok(X3pScan { field, metadata })
}

/// Writes a field as a minimal x3p container: `main.xml` with the matrix
/// dimensions, axis increments and a `D` (f64) z axis, plus the binary matrix.
/// Masked cells are stored as NaN. Values are written in metres.
pub fn write_x3p(field: &HeightField) -> Result<Vec<u8>, ScanError> {
    use std::io::Write;

    let xml = format!(
        r#"<?xml version="1.0" encoding="UTF-8"?>
<p:ISO5436_2 xmlns:p="http://www.opengps.eu/2008/ISO5436_2">
  <Record1>
    <Revision>ISO5436 - 2000</Revision>
    <FeatureType>SUR</FeatureType>
    <Axes>
      <CX><AxisType>I</AxisType><DataType>D</DataType><Increment>{x:e}</Increment><Offset>0</Offset></CX>
      <CY><AxisType>I</AxisType><DataType>D</DataType><Increment>{y:e}</Increment><Offset>0</Offset></CY>
      <CZ><AxisType>A</AxisType><DataType>D</DataType></CZ>
    </Axes>
  </Record1>
  <Record3>
    <MatrixDimension><SizeX>{nx}</SizeX><SizeY>{ny}</SizeY><SizeZ>1</SizeZ></MatrixDimension>
    <DataLink><PointDataLink>{DEFAULT_DATA_LINK}</PointDataLink></DataLink>
  </Record3>
</p:ISO5436_2>
"#,
        x = field.x_inc() / METRES_TO_UM,
        y = field.y_inc() / METRES_TO_UM,
        nx = field.n_cols(),
        ny = field.n_rows(),
    );
    let mut payload = Vec::with_capacity(field.heights().len() * 8);
    for (h, &m) in field.heights().iter().zip(field.mask()) {
        let v = if m { h / METRES_TO_UM } else { f64::NAN };
        payload.extend_from_slice(&v.to_le_bytes());
    }

    let zip_err = |e: zip::result::ZipError| ScanError::Zip(e.to_string());
    let io_err = |e: std::io::Error| ScanError::Zip(e.to_string());
    let mut out = zip::ZipWriter::new(Cursor::new(Vec::new()));
    let opts = zip::write::SimpleFileOptions::default()
        .compression_method(zip::CompressionMethod::Deflated);
    out.start_file("main.xml", opts).map_err(zip_err)?;
    out.write_all(xml.as_bytes()).map_err(io_err)?;
    out.start_file(DEFAULT_DATA_LINK, opts).map_err(zip_err)?;
    out.write_all(&payload).map_err(io_err)?;
    Ok(out.finish().map_err(zip_err)?.into_inner())
}

fn read_entry<R: Read + std::io::Seek>(
    archive: &mut zip::ZipArchive<R>,
    name: &str,
) -> Result<Vec<u8>, ScanError> {
    let mut entry = match archive.by_name(name) {
        Ok(e) => e,
        Err(zip::result::ZipError::FileNotFound) => {
            return Err(ScanError::MissingEntry(name.to_string()))
        }
        Err(e) => return Err(ScanError::Zip(e.to_string())),
    };
    let mut buf = Vec::with_capacity(entry.size() as usize);
    entry
        .read_to_end(&mut buf)
        .map_err(|e| ScanError::Zip(format!("{name}: {e}")))?;
    Ok(buf)
}

/// Flattens the XML tree below the root element into `path -> text` pairs.
fn collect_leaves(doc: &roxmltree::Document) -> BTreeMap<String, String> {
    fn walk(node: roxmltree::Node, prefix: &str, out: &mut BTreeMap<String, String>) {
        let elements: Vec<_> = node.children().filter(|c| c.is_element()).collect();
        if elements.is_empty() {
            if !prefix.is_empty() {
                out.insert(
                    prefix.to_string(),
                    node.text().unwrap_or("").trim().to_string(),
                );
            }
            return;
        }
        for child in elements {
            let name = child.tag_name().name();
            let path = if prefix.is_empty() {
                name.to_string()
            } else {
                format!("{prefix}/{name}")
            };
            walk(child, &path, out);
        }
    }
    let mut out = BTreeMap::new();
    walk(doc.root_element(), "", &mut out);
    out
}

fn require<'a>(meta: &'a BTreeMap<String, String>, field: &str) -> Result<&'a str, ScanError> {
    meta.get(field)
        .map(String::as_str)
        .ok_or_else(|| ScanError::Field {
            field: field.to_string(),
            reason: "missing".into(),
        })
}

fn parse_count(meta: &BTreeMap<String, String>, field: &str) -> Result<usize, ScanError> {
    let raw = require(meta, field)?;
    match raw.trim().parse::<usize>() {
        Ok(n) if n > 0 => Ok(n),
        _ => Err(ScanError::Field {
            field: field.to_string(),
            reason: format!("expected a positive integer, found `{raw}`"),
        }),
    }
}

fn parse_increment(meta: &BTreeMap<String, String>, field: &str) -> Result<f64, ScanError> {
    let raw = require(meta, field)?;
    match raw.trim().parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        _ => Err(ScanError::Field {
            field: field.to_string(),
            reason: format!("expected a positive increment in metres, found `{raw}`"),
        }),
    }
}
