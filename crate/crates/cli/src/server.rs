//! HTTP service. Every endpoint is stateless; images travel as PNG parts of
//! `multipart/form-data` bodies.
//!
//! | route | parts | reply |
//! |---|---|---|
//! | `GET /health` | | `{"status": "ok"}` |
//! | `POST /deform` | `image`, `mask`, `target` or `alpha`, optional `model`, `eyelid` | PNG |
//! | `POST /match` | `image_a`, `mask_a`, `image_b`, `mask_b` | `{"hamming", "filter_distance", "shift"}` |
//! | `POST /mask/target` | `mask`, `op` (`dilate`, `constrict`, `circular`), `radius` or `alpha`, optional `eyelid` | PNG |
//! | `GET /ui/*` | | examiner UI assets |
//!
//! Failures reply with `{"error": <name>, "message": <text>}`: 400 for
//! malformed input, 422 for geometric failures, 503 when the external
//! deformer cannot be reached.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{DefaultBodyLimit, Multipart, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use irisdeform::deformation::deform;
use irisdeform::geometry::{
    circular_target_mask, fit_circles, target_mask_constrict, target_mask_dilate,
};
use irisdeform::pipeline::Config;
use irisdeform::recognition::{default_gabor_bank, FilterBank, DEFAULT_MAX_SHIFT};
use irisdeform::{Error, GrayImage, IrisMask};
use serde_json::json;
use tower_http::services::ServeDir;

use crate::app::compare_irises;

const BODY_LIMIT: usize = 64 * 1024 * 1024;

#[derive(Debug, Clone)]
pub struct ServiceState {
    config: Arc<Config>,
    bank: Arc<FilterBank>,
    ui_dir: PathBuf,
}

impl ServiceState {
    pub fn new(config: Config, ui_dir: impl Into<PathBuf>) -> Self {
        Self {
            config: Arc::new(config),
            bank: Arc::new(default_gabor_bank()),
            ui_dir: ui_dir.into(),
        }
    }
}

pub fn router(state: ServiceState) -> Router {
    let ui = ServeDir::new(&state.ui_dir);
    Router::new()
        .route("/health", get(health))
        .route("/deform", post(deform_handler))
        .route("/match", post(match_handler))
        .route("/mask/target", post(mask_target_handler))
        .nest_service("/ui", ui)
        .layer(DefaultBodyLimit::max(BODY_LIMIT))
        .with_state(state)
}

pub struct ApiError {
    status: StatusCode,
    name: &'static str,
    message: String,
}

impl ApiError {
    fn bad_request(message: impl Into<String>) -> Self {
        Self {
            status: StatusCode::BAD_REQUEST,
            name: "BadRequest",
            message: message.into(),
        }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::ExternalUnavailable(_) => StatusCode::SERVICE_UNAVAILABLE,
            e if e.is_geometric() => StatusCode::UNPROCESSABLE_ENTITY,
            Error::Io { .. } => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::BAD_REQUEST,
        };
        Self {
            status,
            name: e.name(),
            message: e.to_string(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (
            self.status,
            Json(json!({ "error": self.name, "message": self.message })),
        )
            .into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

async fn health() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok" }))
}

struct Parts(HashMap<String, Vec<u8>>);

impl Parts {
    async fn read(mut form: Multipart) -> ApiResult<Self> {
        let mut parts = HashMap::new();
        while let Some(field) = form
            .next_field()
            .await
            .map_err(|e| ApiError::bad_request(format!("multipart: {e}")))?
        {
            let name = field.name().unwrap_or_default().to_string();
            let bytes = field
                .bytes()
                .await
                .map_err(|e| ApiError::bad_request(format!("part '{name}': {e}")))?;
            parts.insert(name, bytes.to_vec());
        }
        Ok(Self(parts))
    }

    fn bytes(&self, name: &str) -> ApiResult<&[u8]> {
        self.0
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| ApiError::bad_request(format!("missing part '{name}'")))
    }

    fn image(&self, name: &str) -> ApiResult<GrayImage> {
        Ok(GrayImage::decode_png(self.bytes(name)?)?)
    }

    fn mask(&self, name: &str) -> ApiResult<IrisMask> {
        Ok(IrisMask::decode_png(self.bytes(name)?)?)
    }

    fn optional_mask(&self, name: &str) -> ApiResult<Option<IrisMask>> {
        if self.0.contains_key(name) {
            self.mask(name).map(Some)
        } else {
            Ok(None)
        }
    }

    fn text(&self, name: &str) -> ApiResult<Option<String>> {
        self.0
            .get(name)
            .map(|b| {
                String::from_utf8(b.clone())
                    .map(|s| s.trim().to_string())
                    .map_err(|_| ApiError::bad_request(format!("part '{name}' is not text")))
            })
            .transpose()
    }

    fn number(&self, name: &str) -> ApiResult<Option<f64>> {
        self.text(name)?
            .map(|s| {
                s.parse::<f64>().map_err(|_| {
                    ApiError::bad_request(format!("part '{name}' is not a number: '{s}'"))
                })
            })
            .transpose()
    }
}

fn png(bytes: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, "image/png")], bytes).into_response()
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> ApiResult<T> + Send + 'static,
) -> ApiResult<T> {
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError {
        status: StatusCode::INTERNAL_SERVER_ERROR,
        name: "Internal",
        message: e.to_string(),
    })?
}

fn same_dims(mask: &IrisMask, other: &IrisMask) -> ApiResult<()> {
    Ok(mask.ensure_same_dims(other)?)
}

async fn deform_handler(State(state): State<ServiceState>, form: Multipart) -> ApiResult<Response> {
    let parts = Parts::read(form).await?;
    let img = parts.image("image")?;
    let mask = parts.mask("mask")?;
    let target = parts.optional_mask("target")?;
    let alpha = parts.number("alpha")?;
    let eyelid = parts.optional_mask("eyelid")?;
    let model_name = parts.text("model")?;
    if target.is_none() && alpha.is_none() {
        return Err(ApiError::bad_request(
            "provide a 'target' mask or an 'alpha' ratio",
        ));
    }
    let bytes = blocking(move || {
        let model = state.config.model(model_name.as_deref())?;
        let target = match target {
            Some(t) => t,
            None => {
                let c = fit_circles(&mask)?;
                let eyelid = match eyelid {
                    Some(e) => e,
                    None => IrisMask::full(mask.width(), mask.height())?,
                };
                same_dims(&mask, &eyelid)?;
                circular_target_mask(&c, alpha.expect("checked above"), &eyelid)?
            }
        };
        let (out, _) = deform(&img, &mask, &target, &model)?;
        Ok(out.encode_png()?)
    })
    .await?;
    Ok(png(bytes))
}

async fn match_handler(State(state): State<ServiceState>, form: Multipart) -> ApiResult<Response> {
    let parts = Parts::read(form).await?;
    let a = (parts.image("image_a")?, parts.mask("mask_a")?);
    let b = (parts.image("image_b")?, parts.mask("mask_b")?);
    let report = blocking(move || {
        let shift = state.config.max_shift.unwrap_or(DEFAULT_MAX_SHIFT);
        Ok(compare_irises(
            (&a.0, &a.1),
            (&b.0, &b.1),
            &state.bank,
            shift,
        )?)
    })
    .await?;
    Ok(Json(report).into_response())
}

async fn mask_target_handler(form: Multipart) -> ApiResult<Response> {
    let parts = Parts::read(form).await?;
    let mask = parts.mask("mask")?;
    let op = parts
        .text("op")?
        .ok_or_else(|| ApiError::bad_request("missing part 'op'"))?;
    let radius = parts.number("radius")?;
    let alpha = parts.number("alpha")?;
    let eyelid = parts.optional_mask("eyelid")?;
    let need = |v: Option<f64>, name: &str| {
        v.ok_or_else(|| ApiError::bad_request(format!("op '{op}' needs '{name}'")))
    };
    let bytes = match op.as_str() {
        "dilate" => {
            let r = need(radius, "radius")?;
            blocking(move || Ok(target_mask_dilate(&mask, &fit_circles(&mask)?, r)?.encode_png()?))
                .await?
        }
        "constrict" | "circular" => {
            let value = if op == "constrict" {
                need(radius, "radius")?
            } else {
                need(alpha, "alpha")?
            };
            let constrict = op == "constrict";
            blocking(move || {
                let c = fit_circles(&mask)?;
                let eyelid = match eyelid {
                    Some(e) => e,
                    None => IrisMask::full(mask.width(), mask.height())?,
                };
                same_dims(&mask, &eyelid)?;
                let out = if constrict {
                    target_mask_constrict(&mask, &c, value, &eyelid)?
                } else {
                    circular_target_mask(&c, value, &eyelid)?
                };
                Ok(out.encode_png()?)
            })
            .await?
        }
        other => {
            return Err(ApiError::bad_request(format!(
                "unknown op '{other}' (expected dilate, constrict or circular)"
            )))
        }
    };
    Ok(png(bytes))
}
