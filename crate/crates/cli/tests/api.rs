use std::sync::OnceLock;

use axum::body::{to_bytes, Body};
use axum::http::{header, Request, StatusCode};
use axum::Router;
use fbcv_cli::server;
use fbcv_core::analyze::analyze;
use fbcv_core::bundle::build_bundle;
use fbcv_core::compare::{compare_set, CompareParams};
use fbcv_core::pipeline::{bullet_infos, group_bullets, process_scan};
use fbcv_core::synth::{SynthParams, SynthStudy};
use fbcv_core::{Bundle, PipelineConfig, LANDS};
use serde_json::Value;
use tower::ServiceExt;

fn bundle() -> &'static Bundle {
    static BUNDLE: OnceLock<Bundle> = OnceLock::new();
    BUNDLE.get_or_init(|| {
        let study = SynthStudy::generate(&SynthParams {
            bullets_per_barrel: 2,
            signal_len: 1200,
            max_shift: 40,
            rows: 12,
            ..SynthParams::default()
        });
        let mut cfg = PipelineConfig::default();
        cfg.lag.max_lag = 100;
        let records: Vec<_> = (0..study.bullets.len())
            .flat_map(|b| (0..LANDS).map(move |l| (b, l)))
            .map(|(b, l)| process_scan(&study.land_scan(b, l).0, None, &cfg))
            .collect();
        let set =
            compare_set(group_bullets(&records).unwrap(), &CompareParams::from(&cfg)).unwrap();
        let report = analyze(
            &set.score_table(),
            &bullet_infos(&records).unwrap(),
            &cfg.analysis,
        )
        .unwrap();
        build_bundle(records, set.records(), report, cfg).unwrap()
    })
}

fn app(static_dir: Option<std::path::PathBuf>) -> Router {
    server::router(bundle().clone(), static_dir)
}

async fn get(app: Router, uri: &str) -> (StatusCode, Option<String>, Vec<u8>) {
    let res = app
        .oneshot(Request::get(uri).body(Body::empty()).unwrap())
        .await
        .unwrap();
    let status = res.status();
    let ctype = res
        .headers()
        .get(header::CONTENT_TYPE)
        .map(|v| v.to_str().unwrap().to_string());
    let body = to_bytes(res.into_body(), usize::MAX)
        .await
        .unwrap()
        .to_vec();
    (status, ctype, body)
}

async fn get_json(app: Router, uri: &str) -> (StatusCode, Value) {
    let (status, ctype, body) = get(app, uri).await;
    assert_eq!(ctype.as_deref(), Some("application/json"), "{uri}");
    (status, serde_json::from_slice(&body).unwrap())
}

#[tokio::test]
async fn manifest_is_the_bundle_manifest_verbatim() {
    let (status, body) = get_json(app(None), "/api/manifest").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, serde_json::to_value(&bundle().manifest).unwrap());
}

#[tokio::test]
async fn scores_carry_leaf_order_and_flags() {
    let (status, body) = get_json(app(None), "/api/scores").await;
    assert_eq!(status, StatusCode::OK);
    let scores = body["scores"].as_array().unwrap();
    assert_eq!(scores.len(), bundle().scores.len());
    for (got, want) in scores.iter().zip(&bundle().scores) {
        assert_eq!(got["ccf_diff"].as_f64().unwrap(), want.ccf_diff);
        assert!(got.get("land_entries").is_none());
    }
    assert_eq!(body["leaf_order"]["ids"].as_array().unwrap().len(), 4);
    assert!(body["outliers"].is_object());
}

#[tokio::test]
async fn pair_returns_stored_matrix_and_signals() {
    let stored = bundle().score("A1", "A2").unwrap().0;
    let (status, body) = get_json(app(None), "/api/pair/A1/A2").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["mirrored"], false);
    let entries = body["land_entries"].as_array().unwrap();
    assert_eq!(entries.len(), 36);
    for (got, want) in entries.iter().zip(&stored.land_entries) {
        assert_eq!(got["ccf"].as_f64(), want.ccf);
        assert_eq!(got["lag"].as_i64().unwrap(), want.lag);
    }
    assert_eq!(body["signals1"].as_array().unwrap().len(), 6);
    assert!(body["signals2"][0]["values"].is_array());
}

#[tokio::test]
async fn reversed_pair_is_transposed() {
    let stored = bundle().score("A1", "A2").unwrap().0;
    let (_, body) = get_json(app(None), "/api/pair/A2/A1").await;
    assert_eq!(body["mirrored"], true);
    assert_eq!(
        body["phase"].as_u64().unwrap() as usize,
        (6 - stored.phase) % 6
    );
    let entries = body["land_entries"].as_array().unwrap();
    for e in &stored.land_entries {
        let m = &entries[(e.j - 1) * 6 + (e.i - 1)];
        assert_eq!(m["i"].as_u64().unwrap() as usize, e.j);
        assert_eq!(m["j"].as_u64().unwrap() as usize, e.i);
        assert_eq!(m["lag"].as_i64().unwrap(), -e.lag);
        assert_eq!(m["ccf"].as_f64(), e.ccf);
    }
}

#[tokio::test]
async fn unknown_bullets_and_lands_are_json_404() {
    for uri in [
        "/api/pair/A1/NOPE",
        "/api/land/NOPE/1",
        "/api/land/A1/7",
        "/api/land/A1/x",
    ] {
        let (status, body) = get_json(app(None), uri).await;
        assert_eq!(status, StatusCode::NOT_FOUND, "{uri}");
        assert!(body["error"].is_string());
    }
}

#[tokio::test]
async fn land_has_signal_profile_bounds_and_thumbnail() {
    let (status, body) = get_json(app(None), "/api/land/B2/3").await;
    assert_eq!(status, StatusCode::OK);
    for key in [
        "signal",
        "profile",
        "bounds",
        "thumbnail",
        "crosscut",
        "flags",
    ] {
        assert!(!body[key].is_null(), "{key}");
    }
    assert_eq!(body["meta"]["land_index"], 3);
}

#[tokio::test]
async fn analysis_matches_bundle() {
    let (status, body) = get_json(app(None), "/api/analysis").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, serde_json::to_value(&bundle().analysis).unwrap());
}

#[tokio::test]
async fn static_files_and_fallback() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("index.html"), "<html>viewer</html>").unwrap();
    std::fs::write(dir.path().join("app.js"), "console.log(1)").unwrap();

    let (status, ctype, body) = get(app(Some(dir.path().into())), "/").await;
    assert_eq!(status, StatusCode::OK);
    assert!(ctype.unwrap().starts_with("text/html"));
    assert_eq!(body, b"<html>viewer</html>");

    let (status, _, body) = get(app(Some(dir.path().into())), "/app.js").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, b"console.log(1)");

    for uri in ["/missing.css", "/api/nothing", "/api/pair/A1"] {
        let (status, body) = get_json(app(Some(dir.path().into())), uri).await;
        assert_eq!(status, StatusCode::NOT_FOUND, "{uri}");
        assert!(body["error"].as_str().unwrap().contains("no route"));
    }
    let (status, _) = get_json(app(None), "/").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn occupied_port_is_reported() {
    let taken = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let err = server::bind(taken.local_addr().unwrap()).await.unwrap_err();
    assert!(err.to_string().contains("already in use"), "{err}");
}
