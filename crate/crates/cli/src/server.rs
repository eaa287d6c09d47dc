//! HTTP/JSON service over a [`SceneStore`].
//!
//! | Route | Body | Response |
//! |---|---|---|
//! | `POST /scenes` | [`LoadRequest`] | 201, [`SceneSummary`] |
//! | `GET /scenes` | | list of [`SceneSummary`] |
//! | `GET /scenes/{id}` | | [`SceneSummary`] |
//! | `POST /scenes/{id}/render` | [`RenderRequest`] | `image/png` |
//! | `GET /scenes/{id}/depth?x&y[&image&aperture&focus]` | | [`DepthProbe`] |
//! | `POST /scenes/{id}/keyframes` | [`KeyframeRequest`] | [`KeyframeResponse`] |
//!
//! Errors are `{"error": "..."}` with status 404 for an unknown scene, 422 for
//! a body or query that fails the schema or value checks, and 400 for a pixel
//! outside the image.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::QueryRejection;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::Engine;
use lensdof_core::{CocShape, LensParams};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::frame::{render_png, FocusSpec, FrameError, RenderSettings};
use crate::scene::{LoadRequest, Scene, SceneStore};

/// Longest focus-pull sequence one request may ask for.
pub const MAX_KEYFRAME_SPAN: usize = 1000;

#[derive(Debug)]
pub enum ApiError {
    NotFound(String),
    Unprocessable(String),
    BadRequest(String),
    Internal(String),
}

impl ApiError {
    fn status(&self) -> StatusCode {
        match self {
            ApiError::NotFound(_) => StatusCode::NOT_FOUND,
            ApiError::Unprocessable(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ApiError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl From<FrameError> for ApiError {
    fn from(e: FrameError) -> Self {
        match e {
            FrameError::OutOfBounds { .. } => ApiError::BadRequest(e.to_string()),
            _ => ApiError::Unprocessable(e.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = self.status();
        let (ApiError::NotFound(msg)
        | ApiError::Unprocessable(msg)
        | ApiError::BadRequest(msg)
        | ApiError::Internal(msg)) = self;
        (status, Json(serde_json::json!({ "error": msg }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// Parses a JSON body, reporting the offending field path on failure.
fn parse_body<T: DeserializeOwned>(body: &[u8]) -> ApiResult<T> {
    let de = &mut serde_json::Deserializer::from_slice(body);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        if path == "." {
            ApiError::Unprocessable(inner.to_string())
        } else {
            ApiError::Unprocessable(format!("{path}: {inner}"))
        }
    })
}

fn scene(store: &SceneStore, id: &str) -> ApiResult<Arc<Scene>> {
    store
        .get(id)
        .ok_or_else(|| ApiError::NotFound(format!("unknown scene `{id}`")))
}

/// Runs CPU-bound work off the async workers.
async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> ApiResult<T> + Send + 'static,
) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))?
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PixelRef {
    pub x: usize,
    pub y: usize,
}

/// Bokeh settings shared by single renders and focus pulls. Unset values take
/// the renderer defaults.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Look {
    pub shape: CocShape,
    pub rotation: f64,
    pub alpha: Option<f64>,
    pub max_radius_px: Option<f64>,
    pub gamma: Option<f64>,
    pub adaptation: bool,
}

macro_rules! look_of {
    ($req:expr) => {
        Look {
            shape: $req.shape,
            rotation: $req.rotation,
            alpha: $req.alpha,
            max_radius_px: $req.max_radius_px,
            gamma: $req.gamma,
            adaptation: $req.adaptation,
        }
    };
}

impl Look {
    fn settings(&self, aperture: f64, focus: FocusSpec) -> RenderSettings {
        let d = RenderSettings::default();
        RenderSettings {
            aperture,
            focus,
            shape: self.shape,
            rotation: self.rotation,
            alpha: self.alpha.unwrap_or(d.alpha),
            max_radius_px: self.max_radius_px.unwrap_or(d.max_radius_px),
            gamma: self.gamma.unwrap_or(d.gamma),
            adaptation: self.adaptation,
        }
    }
}

/// Body of `POST /scenes/{id}/render`. Exactly one of `focus` and
/// `focus_pixel` must be set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenderRequest {
    #[serde(default)]
    pub image: usize,
    pub aperture: f64,
    #[serde(default)]
    pub focus: Option<f64>,
    #[serde(default)]
    pub focus_pixel: Option<PixelRef>,
    #[serde(default)]
    pub shape: CocShape,
    /// Polygon rotation in radians.
    #[serde(default)]
    pub rotation: f64,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub max_radius_px: Option<f64>,
    #[serde(default)]
    pub gamma: Option<f64>,
    /// Shrink the aperture away from the focal plane.
    #[serde(default)]
    pub adaptation: bool,
}

impl RenderRequest {
    pub fn settings(&self) -> Result<RenderSettings, FrameError> {
        let focus = match (self.focus, self.focus_pixel) {
            (Some(f), None) => FocusSpec::Disparity(f),
            (None, Some(p)) => FocusSpec::Pixel { x: p.x, y: p.y },
            _ => {
                return Err(FrameError::Invalid(
                    "give exactly one of focus or focus_pixel".into(),
                ))
            }
        };
        Ok(look_of!(self).settings(self.aperture, focus))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Keyframe {
    pub frame: usize,
    pub aperture: f64,
    pub focus: f64,
}

/// Body of `POST /scenes/{id}/keyframes`. Keyframes must be strictly
/// increasing in `frame`; the sequence runs from the first keyframe's frame to
/// the last one's, interpolating aperture and focus linearly in between.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeyframeRequest {
    #[serde(default)]
    pub image: usize,
    pub keyframes: Vec<Keyframe>,
    #[serde(default)]
    pub shape: CocShape,
    /// Polygon rotation in radians.
    #[serde(default)]
    pub rotation: f64,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub max_radius_px: Option<f64>,
    #[serde(default)]
    pub gamma: Option<f64>,
    /// Shrink the aperture away from the focal plane.
    #[serde(default)]
    pub adaptation: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceFrame {
    pub frame: usize,
    pub aperture: f64,
    pub focus: f64,
    /// Base64-encoded PNG.
    pub png: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyframeResponse {
    pub frames: Vec<SequenceFrame>,
}

/// Lens settings for every frame from the first keyframe to the last.
pub fn interpolate_keyframes(keys: &[Keyframe]) -> Result<Vec<(usize, LensParams)>, FrameError> {
    if keys.len() < 2 {
        return Err(FrameError::Invalid(
            "a focus pull needs at least 2 keyframes".into(),
        ));
    }
    if keys.windows(2).any(|w| w[1].frame <= w[0].frame) {
        return Err(FrameError::Invalid(
            "keyframe frames must be strictly increasing".into(),
        ));
    }
    let (first, last) = (keys[0].frame, keys[keys.len() - 1].frame);
    if last - first >= MAX_KEYFRAME_SPAN {
        return Err(FrameError::Invalid(format!(
            "sequence of {} frames exceeds the limit of {MAX_KEYFRAME_SPAN}",
            last - first + 1
        )));
    }
    for k in keys {
        LensParams::new(k.aperture, k.focus)?;
    }
    let mut out = Vec::with_capacity(last - first + 1);
    for w in keys.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let span = (b.frame - a.frame) as f64;
        for frame in a.frame..b.frame {
            let t = (frame - a.frame) as f64 / span;
            let lerp = |u: f64, v: f64| (1.0 - t) * u + t * v;
            out.push((
                frame,
                LensParams {
                    aperture: lerp(a.aperture, b.aperture),
                    focus: lerp(a.focus, b.focus),
                },
            ));
        }
    }
    let end = &keys[keys.len() - 1];
    out.push((
        end.frame,
        LensParams {
            aperture: end.aperture,
            focus: end.focus,
        },
    ));
    Ok(out)
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DepthQuery {
    pub x: usize,
    pub y: usize,
    #[serde(default)]
    pub image: usize,
    #[serde(default)]
    pub aperture: Option<f64>,
    #[serde(default)]
    pub focus: Option<f64>,
}

/// Depth lookup at a pixel. `focus` is the value a render with that pixel as
/// `focus_pixel` would use. `coc_radius_px` is reported when the query gives
/// an aperture; it uses the query's focus, or the pixel's own focus if none.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthProbe {
    pub image: usize,
    pub x: usize,
    pub y: usize,
    pub depth: f64,
    pub disparity: f64,
    pub focus: f64,
    pub coc_radius_px: Option<f64>,
}

pub fn router(store: Arc<SceneStore>) -> Router {
    Router::new()
        .route("/scenes", post(load_scene).get(list_scenes))
        .route("/scenes/{id}", get(get_scene))
        .route("/scenes/{id}/render", post(render))
        .route("/scenes/{id}/depth", get(depth))
        .route("/scenes/{id}/keyframes", post(keyframes))
        .with_state(store)
}

async fn load_scene(
    State(store): State<Arc<SceneStore>>,
    body: Bytes,
) -> ApiResult<impl IntoResponse> {
    let req: LoadRequest = parse_body(&body)?;
    let scene = blocking(move || Ok(store.load(&req)?)).await?;
    Ok((StatusCode::CREATED, Json(scene.summary())))
}

async fn list_scenes(State(store): State<Arc<SceneStore>>) -> impl IntoResponse {
    Json(store.list())
}

async fn get_scene(
    State(store): State<Arc<SceneStore>>,
    Path(id): Path<String>,
) -> ApiResult<impl IntoResponse> {
    Ok(Json(scene(&store, &id)?.summary()))
}

async fn render(
    State(store): State<Arc<SceneStore>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Response> {
    let scene = scene(&store, &id)?;
    let req: RenderRequest = parse_body(&body)?;
    let (png, lens) = blocking(move || {
        let frame = scene.frame(req.image)?;
        let settings = req.settings()?;
        let lens = settings.lens(frame)?;
        Ok((render_png(frame, &settings)?, lens))
    })
    .await?;
    let mut response = ([(header::CONTENT_TYPE, "image/png")], png).into_response();
    let headers = response.headers_mut();
    for (name, value) in [
        ("x-lensdof-aperture", lens.aperture),
        ("x-lensdof-focus", lens.focus),
    ] {
        if let Ok(v) = HeaderValue::from_str(&value.to_string()) {
            headers.insert(name, v);
        }
    }
    Ok(response)
}

async fn depth(
    State(store): State<Arc<SceneStore>>,
    Path(id): Path<String>,
    query: Result<Query<DepthQuery>, QueryRejection>,
) -> ApiResult<Json<DepthProbe>> {
    let scene = scene(&store, &id)?;
    let Query(q) = query.map_err(|e| ApiError::Unprocessable(e.body_text()))?;
    let frame = scene.frame(q.image)?;
    let (depth, disparity) = frame.probe(q.x, q.y)?;
    let focus = FocusSpec::Pixel { x: q.x, y: q.y }.resolve(frame)?;
    let coc_radius_px = match q.aperture {
        Some(aperture) => {
            let lens =
                LensParams::new(aperture, q.focus.unwrap_or(focus)).map_err(FrameError::from)?;
            Some(frame.coc_radius_at(q.x, q.y, &lens)?)
        }
        None if q.focus.is_some() => {
            return Err(ApiError::Unprocessable(
                "focus given without aperture".into(),
            ));
        }
        None => None,
    };
    Ok(Json(DepthProbe {
        image: q.image,
        x: q.x,
        y: q.y,
        depth,
        disparity,
        focus,
        coc_radius_px,
    }))
}

async fn keyframes(
    State(store): State<Arc<SceneStore>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Json<KeyframeResponse>> {
    let scene = scene(&store, &id)?;
    let req: KeyframeRequest = parse_body(&body)?;
    let frames = blocking(move || {
        let frame = scene.frame(req.image)?;
        let look = look_of!(req);
        let b64 = base64::engine::general_purpose::STANDARD;
        interpolate_keyframes(&req.keyframes)?
            .into_iter()
            .map(|(index, lens)| {
                let settings = look.settings(lens.aperture, FocusSpec::Disparity(lens.focus));
                Ok(SequenceFrame {
                    frame: index,
                    aperture: lens.aperture,
                    focus: lens.focus,
                    png: b64.encode(render_png(frame, &settings)?),
                })
            })
            .collect::<ApiResult<Vec<_>>>()
    })
    .await?;
    Ok(Json(KeyframeResponse { frames }))
}
