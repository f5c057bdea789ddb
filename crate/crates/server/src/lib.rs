//! HTTP service for the sketching studio.
//!
//! Models are loaded once at startup and only read afterwards. Inference runs
//! on the blocking pool behind a semaphore that bounds concurrent forwards.
//! Images travel as base64-encoded PNG.

use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;
use tokio::sync::Semaphore;

use hairsketch::braid::{autocomplete_braid, BraidRequest};
use hairsketch::color::{nearest_indices, parse_hex_rgb, snap_color, to_hex_rgb, ColorDatabase};
use hairsketch::data::seeded_background;
use hairsketch::diffusion::{autocomplete_unbraided, ColorPolicy};
use hairsketch::matte::Matte;
use hairsketch::nn::{CheckpointKind, S2INet, S2MNet};
use hairsketch::raster::{decode_rgb_png, encode_rgb_png, Grid};
use hairsketch::sketch::{rasterize_color, rasterize_mono, Sketch};
use hairsketch::Error;

pub const DEFAULT_PORT: u16 = 8080;
pub const DEFAULT_NOISE_SEED: u64 = 0;
pub const DEFAULT_MAX_INFLIGHT: usize = 2;

/// Artifacts and limits of one server process.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub s2m: Option<PathBuf>,
    pub s2i_unbraided: Option<PathBuf>,
    pub s2i_braided: Option<PathBuf>,
    pub color_db: Option<PathBuf>,
    /// Canvas side used when no model fixes it.
    pub canvas: usize,
    pub noise_seed: u64,
    pub max_inflight: usize,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            s2m: None,
            s2i_unbraided: None,
            s2i_braided: None,
            color_db: None,
            canvas: 512,
            noise_seed: DEFAULT_NOISE_SEED,
            max_inflight: DEFAULT_MAX_INFLIGHT,
        }
    }
}

impl SessionConfig {
    /// Reads `HAIRSKETCH_S2M`, `HAIRSKETCH_S2I_UNBRAIDED`, `HAIRSKETCH_S2I_BRAIDED`,
    /// `HAIRSKETCH_COLOR_DB`, `HAIRSKETCH_CANVAS`, `HAIRSKETCH_NOISE_SEED` and
    /// `HAIRSKETCH_MAX_INFLIGHT`.
    pub fn from_env() -> Self {
        let path = |k: &str| std::env::var_os(k).map(PathBuf::from);
        let num = |k: &str| std::env::var(k).ok().and_then(|v| v.parse().ok());
        let d = Self::default();
        Self {
            s2m: path("HAIRSKETCH_S2M"),
            s2i_unbraided: path("HAIRSKETCH_S2I_UNBRAIDED"),
            s2i_braided: path("HAIRSKETCH_S2I_BRAIDED"),
            color_db: path("HAIRSKETCH_COLOR_DB"),
            canvas: num("HAIRSKETCH_CANVAS").unwrap_or(d.canvas),
            noise_seed: num("HAIRSKETCH_NOISE_SEED")
                .map(|v: usize| v as u64)
                .unwrap_or(d.noise_seed),
            max_inflight: num("HAIRSKETCH_MAX_INFLIGHT").unwrap_or(d.max_inflight),
        }
    }
}

/// Loaded models and color database.
pub struct AppState {
    pub config: SessionConfig,
    pub s2m: Option<S2MNet>,
    pub s2i_unbraided: Option<S2INet>,
    pub s2i_braided: Option<S2INet>,
    pub colors: Option<ColorDatabase>,
    inference: Semaphore,
}

impl AppState {
    /// Loads every configured artifact; any failure aborts startup.
    pub fn load(config: SessionConfig) -> hairsketch::Result<Self> {
        let s2m = config.s2m.as_ref().map(S2MNet::load).transpose()?;
        let image =
            |p: &Option<PathBuf>, want: CheckpointKind| -> hairsketch::Result<Option<S2INet>> {
                let Some(p) = p else { return Ok(None) };
                let (net, kind) = S2INet::load(p)?;
                if kind != want {
                    return Err(Error::Checkpoint(format!(
                        "{} holds a {} model, expected {}",
                        p.display(),
                        kind.as_str(),
                        want.as_str()
                    )));
                }
                Ok(Some(net))
            };
        let s2i_unbraided = image(&config.s2i_unbraided, CheckpointKind::S2iUnbraided)?;
        let s2i_braided = image(&config.s2i_braided, CheckpointKind::S2iBraided)?;
        let colors = config
            .color_db
            .as_ref()
            .map(ColorDatabase::load)
            .transpose()?;
        Ok(Self {
            inference: Semaphore::new(config.max_inflight.max(1)),
            config,
            s2m,
            s2i_unbraided,
            s2i_braided,
            colors,
        })
    }

    /// Canvas side: the loaded models' input size, else the configured one.
    pub fn canvas(&self) -> usize {
        self.s2m
            .as_ref()
            .map(|n| n.config.image_size)
            .or_else(|| self.s2i_unbraided.as_ref().map(|n| n.config.image_size))
            .or_else(|| self.s2i_braided.as_ref().map(|n| n.config.image_size))
            .unwrap_or(self.config.canvas)
    }
}

/// JSON error body `{error, message}` with an HTTP status.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
        }
    }

    fn bad_request(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, message)
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::InvalidInput(_)
            | Error::DimensionMismatch { .. }
            | Error::NoHairStrokes
            | Error::Json(_)
            | Error::Image(_) => StatusCode::BAD_REQUEST,
            Error::DegenerateBraid(_)
            | Error::CoincidentStrands(..)
            | Error::AttentionTooLarge { .. }
            | Error::MatteOffCanvas(_)
            | Error::MissingCheckpoint(_) => StatusCode::UNPROCESSABLE_ENTITY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self::new(status, e.code(), e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (
            self.status,
            Json(json!({ "error": self.code, "message": self.message })),
        )
            .into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

fn parse_sketch(body: &str) -> Result<Sketch, ApiError> {
    Sketch::from_json(body).map_err(|e| ApiError::bad_request("invalid_sketch", e.to_string()))
}

fn parse_json<T: serde::de::DeserializeOwned>(body: &str) -> Result<T, ApiError> {
    serde_json::from_str(body).map_err(|e| ApiError::bad_request("invalid_json", e.to_string()))
}

fn decode_b64(field: &'static str, text: &str) -> Result<Vec<u8>, ApiError> {
    B64.decode(text.trim())
        .map_err(|e| ApiError::bad_request("invalid_base64", format!("{field}: {e}")))
}

fn decode_matte(text: &str, dims: (usize, usize)) -> Result<(Matte, Vec<u8>), ApiError> {
    let bytes = decode_b64("matte", text)?;
    let matte = Matte::from_png(&bytes)
        .map_err(|e| ApiError::bad_request("invalid_matte", e.to_string()))?;
    if matte.dims() != dims {
        return Err(ApiError::bad_request(
            "invalid_matte",
            format!("matte is {:?}, canvas is {:?}", matte.dims(), dims),
        ));
    }
    Ok((matte, bytes))
}

fn require_hair(sketch: &Sketch) -> Result<(), ApiError> {
    if sketch.has_hair() {
        Ok(())
    } else {
        Err(Error::NoHairStrokes.into())
    }
}

fn require_canvas(sketch: &Sketch, side: usize) -> Result<(), ApiError> {
    if sketch.dims() != (side, side) {
        return Err(Error::DimensionMismatch {
            expected: (side, side),
            actual: sketch.dims(),
        }
        .into());
    }
    Ok(())
}

/// Runs `f` on the blocking pool once an inference slot is free.
async fn infer<T: Send + 'static>(
    state: &Arc<AppState>,
    f: impl FnOnce(&AppState) -> Result<T, ApiError> + Send + 'static,
) -> Result<T, ApiError> {
    let _permit = state.inference.acquire().await.map_err(|_| {
        ApiError::new(
            StatusCode::SERVICE_UNAVAILABLE,
            "shutting_down",
            "server is stopping",
        )
    })?;
    let st = state.clone();
    tokio::task::spawn_blocking(move || f(&st))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
}

fn elapsed_ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub s2m: bool,
    pub s2i_unbraided: bool,
    pub s2i_braided: bool,
    pub color_db: bool,
}

async fn health(State(st): State<Arc<AppState>>) -> Json<Health> {
    let h = Health {
        status: String::new(),
        s2m: st.s2m.is_some(),
        s2i_unbraided: st.s2i_unbraided.is_some(),
        s2i_braided: st.s2i_braided.is_some(),
        color_db: st.colors.is_some(),
    };
    let ready = h.s2m && h.s2i_unbraided && h.s2i_braided && h.color_db;
    Json(Health {
        status: if ready { "ok" } else { "degraded" }.into(),
        ..h
    })
}

async fn config(State(st): State<Arc<AppState>>) -> Json<serde_json::Value> {
    Json(json!({
        "canvas": st.canvas(),
        "noise_seed": st.config.noise_seed,
        "max_inflight": st.config.max_inflight,
        "s2m": st.s2m.as_ref().map(|n| &n.config),
        "s2i_unbraided": st.s2i_unbraided.as_ref().map(|n| &n.config),
        "s2i_braided": st.s2i_braided.as_ref().map(|n| &n.config),
        "color_db_entries": st.colors.as_ref().map(|d| d.len()),
    }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MatteResponse {
    /// Base64 grayscale PNG.
    pub matte: String,
    pub latency_ms: f64,
}

fn run_s2m(st: &AppState, sketch: &Sketch) -> Result<Matte, ApiError> {
    let net = st.s2m.as_ref().ok_or_else(|| {
        ApiError::new(
            StatusCode::SERVICE_UNAVAILABLE,
            "model_unavailable",
            "no matte checkpoint loaded",
        )
    })?;
    require_canvas(sketch, net.config.image_size)?;
    Ok(net.s2m_forward(&rasterize_mono(sketch))?)
}

async fn matte(State(st): State<Arc<AppState>>, body: String) -> ApiResult<MatteResponse> {
    let sketch = parse_sketch(&body)?;
    require_hair(&sketch)?;
    if st.s2m.is_none() {
        return Err(ApiError::new(
            StatusCode::SERVICE_UNAVAILABLE,
            "model_unavailable",
            "no matte checkpoint loaded",
        ));
    }
    let start = Instant::now();
    let png = infer(&st, move |st| Ok(run_s2m(st, &sketch)?.to_png()?)).await?;
    Ok(Json(MatteResponse {
        matte: B64.encode(png),
        latency_ms: elapsed_ms(start),
    }))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Style {
    #[default]
    Unbraided,
    Braided,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ImageRequest {
    pub sketch: Sketch,
    /// Base64 grayscale PNG; required when `freeze_matte` is set.
    #[serde(default)]
    pub matte: Option<String>,
    /// Base64 RGB PNG; white when absent.
    #[serde(default)]
    pub background: Option<String>,
    #[serde(default)]
    pub style: Style,
    #[serde(default)]
    pub freeze_matte: bool,
    /// Draw fresh background noise instead of the configured seed.
    #[serde(default)]
    pub vary: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ImageResponse {
    /// Base64 RGB PNG.
    pub image: String,
    /// The matte actually used, base64 grayscale PNG.
    pub matte: String,
    pub noise_seed: u64,
    pub latency_ms: f64,
}

fn fresh_seed() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_nanos() as u64)
        .unwrap_or(0)
}

async fn image(State(st): State<Arc<AppState>>, body: String) -> ApiResult<ImageResponse> {
    let req: ImageRequest = parse_json(&body)?;
    let mut sketch = req.sketch;
    sketch
        .validate()
        .map_err(|e| ApiError::bad_request("invalid_sketch", e.to_string()))?;
    require_hair(&sketch)?;
    let has_model = match req.style {
        Style::Unbraided => st.s2i_unbraided.is_some(),
        Style::Braided => st.s2i_braided.is_some(),
    };
    if !has_model {
        return Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "missing_checkpoint",
            format!("no {:?} image checkpoint loaded", req.style).to_lowercase(),
        ));
    }
    let dims = sketch.dims();
    let frozen = match (&req.matte, req.freeze_matte) {
        (Some(m), true) => Some(decode_matte(m, dims)?),
        (None, true) => {
            return Err(ApiError::bad_request(
                "invalid_matte",
                "freeze_matte needs a matte",
            ))
        }
        (Some(m), false) => {
            decode_matte(m, dims)?;
            None
        }
        (None, false) => None,
    };
    let background = match &req.background {
        Some(b) => {
            let img = decode_rgb_png(&decode_b64("background", b)?)
                .map_err(|e| ApiError::bad_request("invalid_background", e.to_string()))?;
            if img.dims() != dims {
                return Err(ApiError::bad_request(
                    "invalid_background",
                    "background size differs from canvas",
                ));
            }
            img
        }
        None => Grid::new(dims.0, dims.1, [1.0; 3]),
    };
    let noise_seed = if req.vary {
        fresh_seed()
    } else {
        st.config.noise_seed
    };
    let style = req.style;
    let start = Instant::now();
    let (image_png, matte_png) = infer(&st, move |st| {
        let (matte, matte_png) = match frozen {
            Some((m, bytes)) => (m, bytes),
            None => {
                let m = run_s2m(st, &sketch)?;
                let png = m.to_png()?;
                (m, png)
            }
        };
        let net = match style {
            Style::Unbraided => st.s2i_unbraided.as_ref(),
            Style::Braided => st.s2i_braided.as_ref(),
        }
        .expect("checked above");
        require_canvas(&sketch, net.config.image_size)?;
        let hair = sketch.hair_only();
        let bg = seeded_background(&background, &matte, noise_seed);
        let out = net.s2i_forward(&rasterize_color(&hair), &matte, &bg)?;
        Ok((encode_rgb_png(&out)?, matte_png))
    })
    .await?;
    Ok(Json(ImageResponse {
        image: B64.encode(image_png),
        matte: B64.encode(matte_png),
        noise_seed,
        latency_ms: elapsed_ms(start),
    }))
}

async fn braid(body: String) -> ApiResult<Sketch> {
    let req: BraidRequest = parse_json(&body)?;
    let sketch = tokio::task::spawn_blocking(move || autocomplete_braid(&req))
        .await
        .map_err(|e| {
            ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())
        })??;
    Ok(Json(sketch))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct UnbraidedRequest {
    pub sketch: Sketch,
    /// Base64 grayscale PNG.
    pub matte: String,
    #[serde(default)]
    pub policy: ColorPolicy,
}

async fn unbraided(body: String) -> ApiResult<Sketch> {
    let req: UnbraidedRequest = parse_json(&body)?;
    let mut sketch = req.sketch;
    sketch
        .validate()
        .map_err(|e| ApiError::bad_request("invalid_sketch", e.to_string()))?;
    let (matte, _) = decode_matte(&req.matte, sketch.dims())?;
    let policy = req.policy;
    let done = tokio::task::spawn_blocking(move || autocomplete_unbraided(&sketch, &matte, policy))
        .await
        .map_err(|e| {
            ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())
        })??;
    Ok(Json(done))
}

#[derive(Debug, Deserialize)]
pub struct NearestQuery {
    pub rgb: String,
    #[serde(default = "default_k")]
    pub k: usize,
    /// Seed of the random top-k pick returned as `snap`.
    pub seed: Option<u64>,
}

fn default_k() -> usize {
    hairsketch::color::SNAP_CANDIDATES
}

#[derive(Debug, Serialize, Deserialize)]
pub struct NearestColor {
    pub rgb: String,
    pub lab: [f64; 3],
    pub distance: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct NearestResponse {
    pub query: String,
    pub colors: Vec<NearestColor>,
    /// One of the top candidates picked at random.
    pub snap: String,
}

async fn nearest(
    State(st): State<Arc<AppState>>,
    Query(q): Query<NearestQuery>,
) -> ApiResult<NearestResponse> {
    let db = st.colors.as_ref().ok_or_else(|| {
        ApiError::new(
            StatusCode::SERVICE_UNAVAILABLE,
            "model_unavailable",
            "no color database loaded",
        )
    })?;
    let query = parse_hex_rgb(&q.rgb)?;
    if q.k == 0 {
        return Err(ApiError::bad_request("invalid_input", "k must be positive"));
    }
    let colors = nearest_indices(db, query, q.k)?
        .into_iter()
        .map(|(i, distance)| {
            let e = &db.entries[i];
            NearestColor {
                rgb: to_hex_rgb(e.rgb),
                lab: e.lab,
                distance,
            }
        })
        .collect();
    let seed = q.seed.unwrap_or_else(fresh_seed);
    Ok(Json(NearestResponse {
        query: to_hex_rgb(query),
        colors,
        snap: to_hex_rgb(snap_color(db, query, seed)?),
    }))
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/config", get(config))
        .route("/matte", post(matte))
        .route("/image", post(image))
        .route("/autocomplete/braid", post(braid))
        .route("/autocomplete/unbraided", post(unbraided))
        .route("/colors/nearest", get(nearest))
        .with_state(state)
}

/// Binds `addr` and serves until the process is stopped.
pub async fn serve(state: AppState, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(Arc::new(state))).await
}
