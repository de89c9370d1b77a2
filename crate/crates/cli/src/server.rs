//! Read-only HTTP API over one in-memory bundle, plus the viewer's static files.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use fbcv_core::analyze::OutlierReport;
use fbcv_core::bundle::ScoreRange;
use fbcv_core::compare::{LandEntry, ScoreRecord};
use fbcv_core::{Bundle, LeafOrder, Signal, LANDS};
use serde::Serialize;
use tokio::net::TcpListener;
use tower_http::services::ServeDir;

type Shared = Arc<Bundle>;

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn not_found(message: impl Into<String>) -> Self {
        Self {
            status: StatusCode::NOT_FOUND,
            message: message.into(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        #[derive(Serialize)]
        struct Body {
            error: String,
            status: u16,
        }
        let body = Body {
            error: self.message,
            status: self.status.as_u16(),
        };
        (self.status, Json(body)).into_response()
    }
}

/// Bullet score without its 36 land entries.
#[derive(Debug, Serialize)]
struct ScoreSummary<'a> {
    bullet1: &'a str,
    bullet2: &'a str,
    phase: usize,
    in_phase_avg: f64,
    out_phase_avg: f64,
    ccf_diff: f64,
    unreliable_flag: bool,
    n_in_phase: usize,
    n_out_phase: usize,
}

#[derive(Debug, Serialize)]
struct ScoresResponse<'a> {
    bullet_ids: &'a [String],
    scores: Vec<ScoreSummary<'a>>,
    leaf_order: &'a LeafOrder,
    outliers: Option<&'a OutlierReport>,
    score_range: Option<ScoreRange>,
}

/// One bullet pair oriented as requested. When the bundle stores the pair the
/// other way round, the matrix is transposed, lags negated and the phase
/// reflected.
#[derive(Debug, Serialize)]
struct PairResponse<'a> {
    bullet1: &'a str,
    bullet2: &'a str,
    mirrored: bool,
    phase: usize,
    in_phase_avg: f64,
    out_phase_avg: f64,
    ccf_diff: f64,
    unreliable_flag: bool,
    land_entries: Vec<LandEntry>,
    signals1: Vec<Option<&'a Signal>>,
    signals2: Vec<Option<&'a Signal>>,
}

fn orient(record: &ScoreRecord, mirrored: bool) -> Vec<LandEntry> {
    let mut entries: Vec<LandEntry> = record
        .land_entries
        .iter()
        .map(|e| {
            if mirrored {
                LandEntry {
                    i: e.j,
                    j: e.i,
                    lag: -e.lag,
                    ..*e
                }
            } else {
                *e
            }
        })
        .collect();
    entries.sort_by_key(|e| (e.i, e.j));
    entries
}

fn bullet_signals<'a>(bundle: &'a Bundle, bullet: &str) -> Vec<Option<&'a Signal>> {
    (1..=LANDS as u8)
        .map(|l| bundle.land(bullet, l).and_then(|r| r.signal.as_ref()))
        .collect()
}

async fn manifest(State(b): State<Shared>) -> Response {
    Json(&b.manifest).into_response()
}

async fn scores(State(b): State<Shared>) -> Response {
    let scores = b
        .scores
        .iter()
        .map(|s| ScoreSummary {
            bullet1: &s.bullet1,
            bullet2: &s.bullet2,
            phase: s.phase,
            in_phase_avg: s.in_phase_avg,
            out_phase_avg: s.out_phase_avg,
            ccf_diff: s.ccf_diff,
            unreliable_flag: s.unreliable_flag,
            n_in_phase: s.n_in_phase,
            n_out_phase: s.n_out_phase,
        })
        .collect();
    Json(ScoresResponse {
        bullet_ids: &b.analysis.bullet_ids,
        scores,
        leaf_order: &b.analysis.leaf_order,
        outliers: b.analysis.outliers.as_ref(),
        score_range: b.score_range,
    })
    .into_response()
}

async fn pair(
    State(b): State<Shared>,
    Path((b1, b2)): Path<(String, String)>,
) -> Result<Response, ApiError> {
    for id in [&b1, &b2] {
        if !b.has_bullet(id) {
            return Err(ApiError::not_found(format!("unknown bullet `{id}`")));
        }
    }
    let (record, mirrored) = b
        .score(&b1, &b2)
        .ok_or_else(|| ApiError::not_found(format!("no score for {b1}/{b2}")))?;
    let phase = if mirrored {
        (LANDS - record.phase) % LANDS
    } else {
        record.phase
    };
    Ok(Json(PairResponse {
        bullet1: &b1,
        bullet2: &b2,
        mirrored,
        phase,
        in_phase_avg: record.in_phase_avg,
        out_phase_avg: record.out_phase_avg,
        ccf_diff: record.ccf_diff,
        unreliable_flag: record.unreliable_flag,
        land_entries: orient(record, mirrored),
        signals1: bullet_signals(&b, &b1),
        signals2: bullet_signals(&b, &b2),
    })
    .into_response())
}

async fn land(
    State(b): State<Shared>,
    Path((bullet, land)): Path<(String, String)>,
) -> Result<Response, ApiError> {
    if !b.has_bullet(&bullet) {
        return Err(ApiError::not_found(format!("unknown bullet `{bullet}`")));
    }
    let record = land
        .parse::<u8>()
        .ok()
        .and_then(|l| b.land(&bullet, l))
        .ok_or_else(|| ApiError::not_found(format!("bullet `{bullet}` has no land `{land}`")))?;

    #[derive(Serialize)]
    struct LandResponse<'a> {
        #[serde(flatten)]
        record: &'a fbcv_core::LandRecord,
        flags: Vec<String>,
    }
    Ok(Json(LandResponse {
        record,
        flags: record.flags(),
    })
    .into_response())
}

async fn analysis(State(b): State<Shared>) -> Response {
    Json(&b.analysis).into_response()
}

async fn not_found(uri: axum::http::Uri) -> ApiError {
    ApiError::not_found(format!("no route for {}", uri.path()))
}

/// Routes for the API; everything else is looked up in `static_dir` (with
/// `index.html` for `/`) and answers a JSON 404 when absent.
pub fn router(bundle: Bundle, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/manifest", get(manifest))
        .route("/api/scores", get(scores))
        .route("/api/pair/{b1}/{b2}", get(pair))
        .route("/api/land/{bullet}/{land}", get(land))
        .route("/api/analysis", get(analysis))
        .route("/api/{*rest}", get(not_found))
        .with_state(Arc::new(bundle));
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir).fallback(get(not_found))),
        None => api.fallback(not_found),
    }
}

/// Binds the listener, reporting an occupied port in plain words.
pub async fn bind(addr: SocketAddr) -> anyhow::Result<TcpListener> {
    TcpListener::bind(addr).await.map_err(|e| {
        if e.kind() == std::io::ErrorKind::AddrInUse {
            anyhow::anyhow!("port {} is already in use on {}", addr.port(), addr.ip())
        } else {
            anyhow::anyhow!("cannot listen on {addr}: {e}")
        }
    })
}

pub async fn serve(listener: TcpListener, app: Router) -> anyhow::Result<()> {
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
