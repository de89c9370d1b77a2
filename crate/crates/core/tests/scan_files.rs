use std::io::Write;
use std::path::Path;

use fbcv_core::bundle::{read_bundle, write_bundle, BundleError};
use fbcv_core::pipeline::{bullet_infos, group_bullets, process_manifest};
use fbcv_core::scan_io::{read_grid_csv, read_x3p, write_grid_csv, write_x3p, ScanError};
use fbcv_core::synth::{SynthParams, SynthStudy};
use fbcv_core::{HeightField, PipelineConfig};

fn small_study() -> SynthStudy {
    SynthStudy::generate(&SynthParams {
        bullets_per_barrel: 2,
        signal_len: 500,
        max_shift: 20,
        rows: 12,
        shoulder_width: (30, 50),
        ..SynthParams::default()
    })
}

fn zip_with(entries: &[(&str, &[u8])]) -> Vec<u8> {
    let mut w = zip::ZipWriter::new(std::io::Cursor::new(Vec::new()));
    for (name, bytes) in entries {
        w.start_file(*name, zip::write::SimpleFileOptions::default())
            .unwrap();
        w.write_all(bytes).unwrap();
    }
    w.finish().unwrap().into_inner()
}

fn main_xml(size_x: usize, size_y: usize, dtype: &str) -> String {
    format!(
        "<p:ISO5436_2 xmlns:p=\"http://www.opengps.eu/2008/ISO5436_2\">\
         <Record1><Axes><CX><Increment>6.45e-7</Increment></CX><CY><Increment>1e-6</Increment></CY>\
         <CZ><DataType>{dtype}</DataType></CZ></Axes></Record1>\
         <Record2><Date>2020-01-01</Date></Record2>\
         <Record3><MatrixDimension><SizeX>{size_x}</SizeX><SizeY>{size_y}</SizeY><SizeZ>1</SizeZ></MatrixDimension></Record3>\
         </p:ISO5436_2>"
    )
}

#[test]
fn x3p_round_trip_keeps_heights_mask_and_increments() {
    let values: Vec<f64> = (0..12)
        .map(|i| {
            if i == 5 {
                f64::NAN
            } else {
                i as f64 * 0.25 - 1.0
            }
        })
        .collect();
    let field = HeightField::from_values(4, 3, 0.645, 1.5, values).unwrap();
    let back = read_x3p(&write_x3p(&field).unwrap()).unwrap();
    assert_eq!(back.field.n_cols(), 4);
    assert_eq!(back.field.n_rows(), 3);
    assert_eq!(back.field.mask(), field.mask());
    assert!((back.field.x_inc() - 0.645).abs() < 1e-12);
    assert!((back.field.y_inc() - 1.5).abs() < 1e-12);
    for (a, b) in back.field.heights().iter().zip(field.heights()) {
        assert!((a - b).abs() < 1e-9);
    }
}

#[test]
fn hand_built_x3p_reads_f32_and_metadata() {
    let data: Vec<u8> = [1e-6f32, 2e-6, f32::NAN, 4e-6, 5e-6, 6e-6]
        .iter()
        .flat_map(|v| v.to_le_bytes())
        .collect();
    let xml = main_xml(3, 2, "F");
    let scan = read_x3p(&zip_with(&[
        ("main.xml", xml.as_bytes()),
        ("bindata/data.bin", &data),
    ]))
    .unwrap();
    assert_eq!(scan.field.get(0, 0).map(|v| (v * 1e3).round()), Some(1e3));
    assert_eq!(scan.field.get(0, 2), None);
    assert_eq!(
        scan.metadata.get("Record2/Date").map(String::as_str),
        Some("2020-01-01")
    );
    assert!((scan.field.x_inc() - 0.645).abs() < 1e-9);
}

#[test]
fn x3p_errors_are_specific() {
    assert!(matches!(read_x3p(b"not a zip"), Err(ScanError::Zip(_))));

    let only_data = zip_with(&[("bindata/data.bin", &[0u8; 8])]);
    assert!(matches!(read_x3p(&only_data), Err(ScanError::MissingEntry(e)) if e == "main.xml"));

    let xml = main_xml(2, 2, "I");
    let int_type = zip_with(&[
        ("main.xml", xml.as_bytes()),
        ("bindata/data.bin", &[0u8; 16]),
    ]);
    assert!(matches!(read_x3p(&int_type), Err(ScanError::UnsupportedDataType(t)) if t == "I"));

    let xml = main_xml(2, 2, "D");
    let short = zip_with(&[
        ("main.xml", xml.as_bytes()),
        ("bindata/data.bin", &[0u8; 24]),
    ]);
    match read_x3p(&short) {
        Err(ScanError::Field { reason, .. }) => assert!(reason.contains("32 bytes"), "{reason}"),
        other => panic!("expected size mismatch, got {other:?}"),
    }

    let bad_xml = zip_with(&[("main.xml", b"<open>"), ("bindata/data.bin", &[0u8; 8])]);
    assert!(matches!(read_x3p(&bad_xml), Err(ScanError::Xml(_))));
}

#[test]
fn grid_csv_round_trip() {
    let field =
        HeightField::from_values(3, 2, 0.5, 2.0, vec![1.0, f64::NAN, 3.0, 4.0, 5.5, -6.0]).unwrap();
    assert_eq!(read_grid_csv(&write_grid_csv(&field)).unwrap(), field);
}

fn write_manifest(dir: &Path, rows: &[String]) -> std::path::PathBuf {
    let path = dir.join("manifest.csv");
    let mut text = String::from("path,barrel_id,shot_number,land_index,excluded,reason\n");
    for r in rows {
        text.push_str(r);
        text.push('\n');
    }
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn manifest_pipeline_handles_formats_and_exclusions() {
    let study = small_study();
    let dir = tempfile::tempdir().unwrap();
    let mut rows = Vec::new();
    for b in 0..2 {
        for l in 0..6 {
            let (scan, _, _) = study.land_scan(b, l);
            let m = &scan.meta;
            let name = if l % 2 == 0 {
                let name = format!("{}_{l}.x3p", m.bullet_id);
                std::fs::write(dir.path().join(&name), write_x3p(&scan.field).unwrap()).unwrap();
                name
            } else {
                let name = format!("{}_{l}.csv", m.bullet_id);
                std::fs::write(dir.path().join(&name), write_grid_csv(&scan.field)).unwrap();
                name
            };
            let excluded = if b == 1 && l == 3 {
                "true,tank rash"
            } else {
                "false,"
            };
            rows.push(format!(
                "{name},{},{},{},{excluded}",
                m.barrel_id,
                m.shot_number,
                l + 1
            ));
        }
    }
    rows.push("missing.x3p,B,9,1,false,".to_string());
    let manifest = write_manifest(dir.path(), &rows);

    let records = process_manifest(&manifest, &PipelineConfig::default()).unwrap();
    assert_eq!(records.len(), 13);
    let excluded: Vec<_> = records.iter().filter(|r| r.is_excluded()).collect();
    assert_eq!(excluded.len(), 2);
    assert_eq!(excluded[0].exclusion.as_deref(), Some("tank rash"));
    assert!(excluded[0].thumbnail.is_some());
    assert!(excluded[1]
        .exclusion
        .as_deref()
        .unwrap()
        .starts_with("unreadable scan"));
    assert!(records
        .iter()
        .filter(|r| !r.is_excluded())
        .all(|r| r.signal.is_some()));
    assert!(records[0]
        .metadata
        .contains_key("Record1/Axes/CX/Increment"));

    let bullets = group_bullets(&records).unwrap();
    assert_eq!(bullets.len(), 3);
    assert_eq!(bullets[1].excluded_lands(), 1);
    assert_eq!(bullet_infos(&records).unwrap()[2].barrel, "B");
}

#[test]
fn duplicate_land_rows_are_rejected() {
    let study = small_study();
    let (scan, _, _) = study.land_scan(0, 0);
    let rec = fbcv_core::pipeline::process_scan(&scan, None, &PipelineConfig::default());
    assert!(group_bullets(&[rec.clone(), rec]).is_err());
}

#[test]
fn bundle_read_reports_offset_and_version() {
    let dir = tempfile::tempdir().unwrap();
    let truncated = dir.path().join("broken.json");
    std::fs::write(&truncated, br#"{"schema_version":1,"lands":[{"meta":"#).unwrap();
    match read_bundle(&truncated) {
        Err(BundleError::Json { offset, .. }) => assert!(offset >= 30, "{offset}"),
        other => panic!("{other:?}"),
    }
    let future = dir.path().join("future.json");
    std::fs::write(&future, br#"{"schema_version":7}"#).unwrap();
    assert!(matches!(
        read_bundle(&future),
        Err(BundleError::VersionMismatch { found: Some(7), .. })
    ));
    assert!(matches!(
        read_bundle(&dir.path().join("absent.json")),
        Err(BundleError::Io { .. })
    ));
}

#[test]
fn bundle_write_creates_gzip_for_gz_paths() {
    use fbcv_core::analyze::analyze;
    use fbcv_core::bundle::build_bundle;
    use fbcv_core::compare::{compare_set, CompareParams};

    let study = small_study();
    let cfg = PipelineConfig::default();
    let records: Vec<_> = (0..study.bullets.len())
        .flat_map(|b| (0..6).map(move |l| (b, l)))
        .map(|(b, l)| fbcv_core::pipeline::process_scan(&study.land_scan(b, l).0, None, &cfg))
        .collect();
    let set = compare_set(group_bullets(&records).unwrap(), &CompareParams::from(&cfg)).unwrap();
    let report = analyze(
        &set.score_table(),
        &bullet_infos(&records).unwrap(),
        &cfg.analysis,
    )
    .unwrap();
    let bundle = build_bundle(records, set.records(), report, cfg).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let gz = dir.path().join("b.json.gz");
    write_bundle(&bundle, &gz).unwrap();
    assert_eq!(&std::fs::read(&gz).unwrap()[..2], &[0x1f, 0x8b]);
    // Compression is detected from content, not from the name.
    let renamed = dir.path().join("b.json");
    std::fs::rename(&gz, &renamed).unwrap();
    assert_eq!(read_bundle(&renamed).unwrap(), bundle);
    assert!(bundle.land("A1", 1).is_some());
    let (_, mirrored) = bundle.score("B2", "A1").unwrap();
    assert!(mirrored);
}
