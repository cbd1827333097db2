//! HTTP facade over scenario evaluation.
//!
//! Request bodies are scenario files; responses use the same JSON shapes as the CLI.
//! Nothing is kept between requests.
//!
//! | route | body | response |
//! |---|---|---|
//! | `POST /api/evaluate` | scenario | verdicts keyed by rule set id |
//! | `POST /api/sweep` | scenario with `sweep` | array of `{value, ruleset, status, effective}` |
//! | `POST /api/crossing?ruleset=<id>&tol_ooms=<x>` | scenario with `sweep` | crossing |
//! | `GET /api/rulesets` | | built-in rule sets with derived thresholds |
//! | `GET /api/defaults` | | default scaling configuration |
//!
//! Errors are `{"error": {"code", "message", "field"?}}` with status 400 for bad input,
//! 413 for bodies over 1 MiB and 422 when a crossing does not exist.

use std::collections::BTreeMap;
use std::net::SocketAddr;

use axum::body::Bytes;
use axum::extract::rejection::BytesRejection;
use axum::extract::{DefaultBodyLimit, Query};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use ctl_core::rulesets::builtin_rulesets;
use ctl_core::scenario::{
    find_crossing, parse_scenario, render_report, sweep, ReportFormat, ScenarioError,
    DEFAULT_TOLERANCE_OOMS,
};
use ctl_core::{Compute, Ruleset, Scaling};
use serde::{Deserialize, Serialize};
use serde_json::json;

pub const MAX_BODY_BYTES: usize = 1 << 20;

/// Address used when `CTL_BIND` is unset.
pub const DEFAULT_BIND: &str = "127.0.0.1";

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: String,
    message: String,
    field: Option<String>,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            code: code.to_string(),
            message: message.into(),
            field: None,
        }
    }
}

impl From<ScenarioError> for ApiError {
    fn from(e: ScenarioError) -> Self {
        let status = match &e {
            ScenarioError::NoCrossing(_) | ScenarioError::NonMonotone(_) => {
                StatusCode::UNPROCESSABLE_ENTITY
            }
            ScenarioError::Rule(ctl_core::rulesets::RuleError::RecursionDepthExceeded) => {
                StatusCode::UNPROCESSABLE_ENTITY
            }
            _ => StatusCode::BAD_REQUEST,
        };
        ApiError {
            status,
            code: e.code().to_string(),
            field: e.field().map(str::to_string),
            message: e.to_string(),
        }
    }
}

impl From<BytesRejection> for ApiError {
    fn from(r: BytesRejection) -> Self {
        let status = r.status();
        let code = if status == StatusCode::PAYLOAD_TOO_LARGE {
            "PayloadTooLarge"
        } else {
            "BadRequest"
        };
        ApiError::new(status, code, r.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut error = json!({ "code": self.code });
        if self.status.is_server_error() {
            return (self.status, axum::Json(json!({ "error": error }))).into_response();
        }
        error["message"] = json!(self.message);
        if let Some(field) = self.field {
            error["field"] = json!(field);
        }
        (self.status, axum::Json(json!({ "error": error }))).into_response()
    }
}

fn json_text(body: String) -> Response {
    ([(header::CONTENT_TYPE, "application/json")], body).into_response()
}

fn to_json<T: Serialize>(value: &T) -> Result<Response, ApiError> {
    serde_json::to_string_pretty(value)
        .map(|mut s| {
            s.push('\n');
            json_text(s)
        })
        .map_err(|_| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", ""))
}

fn body_text(body: &Bytes) -> Result<&str, ApiError> {
    std::str::from_utf8(body)
        .map_err(|_| ApiError::new(StatusCode::BAD_REQUEST, "SyntaxError", "body is not UTF-8"))
}

async fn evaluate(body: Result<Bytes, BytesRejection>) -> Result<Response, ApiError> {
    let body = body?;
    let scenario = parse_scenario(body_text(&body)?)?;
    let report = scenario.evaluate()?;
    Ok(json_text(render_report(&report, ReportFormat::Json)))
}

async fn sweep_rows(body: Result<Bytes, BytesRejection>) -> Result<Response, ApiError> {
    let body = body?;
    let scenario = parse_scenario(body_text(&body)?)?;
    let rows = sweep(&scenario, &scenario.selected_rulesets())?;
    to_json(&rows)
}

#[derive(Debug, Deserialize)]
struct CrossingQuery {
    ruleset: Option<String>,
    tol_ooms: Option<f64>,
}

async fn crossing(
    Query(q): Query<CrossingQuery>,
    body: Result<Bytes, BytesRejection>,
) -> Result<Response, ApiError> {
    let body = body?;
    let scenario = parse_scenario(body_text(&body)?)?;
    let selected = scenario.selected_rulesets();
    let ruleset = match &q.ruleset {
        Some(id) => selected
            .iter()
            .chain(builtin_rulesets().iter())
            .find(|r| &r.id == id)
            .cloned(),
        None if selected.len() == 1 => selected.first().cloned(),
        None => None,
    };
    let Some(ruleset) = ruleset else {
        let mut e = ApiError::new(
            StatusCode::BAD_REQUEST,
            "SchemaError",
            match &q.ruleset {
                Some(id) => format!("unknown rule set `{id}`"),
                None => "name one rule set with ?ruleset=<id>".to_string(),
            },
        );
        e.field = Some("ruleset".into());
        return Err(e);
    };
    let c = find_crossing(
        &scenario,
        &ruleset,
        q.tol_ooms.unwrap_or(DEFAULT_TOLERANCE_OOMS),
    )?;
    to_json(&c)
}

/// A rule set plus the thresholds its adjustments imply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RulesetInfo {
    #[serde(flatten)]
    pub ruleset: Ruleset,
    pub derived_thresholds: BTreeMap<String, Compute>,
}

impl RulesetInfo {
    pub fn new(ruleset: Ruleset) -> Self {
        let mut derived_thresholds = BTreeMap::new();
        if let Some(t) = ruleset.reuse_threshold() {
            derived_thresholds.insert("reuse".to_string(), t);
        }
        if let Some(t) = ruleset.expansion_threshold() {
            derived_thresholds.insert("expansion".to_string(), t);
        }
        Self {
            ruleset,
            derived_thresholds,
        }
    }
}

async fn rulesets() -> Result<Response, ApiError> {
    let infos: Vec<RulesetInfo> = builtin_rulesets()
        .into_iter()
        .map(RulesetInfo::new)
        .collect();
    to_json(&infos)
}

async fn defaults() -> Result<Response, ApiError> {
    to_json(&Scaling::default())
}

pub fn router() -> Router {
    Router::new()
        .route("/api/evaluate", post(evaluate))
        .route("/api/sweep", post(sweep_rows))
        .route("/api/crossing", post(crossing))
        .route("/api/rulesets", get(rulesets))
        .route("/api/defaults", get(defaults))
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
}

/// `CTL_BIND` (default 127.0.0.1) plus `port`.
pub fn bind_address(port: u16) -> Result<SocketAddr, String> {
    let host = std::env::var("CTL_BIND").unwrap_or_else(|_| DEFAULT_BIND.to_string());
    let ip: std::net::IpAddr = host
        .parse()
        .map_err(|_| format!("CTL_BIND `{host}` is not an IP address"))?;
    Ok(SocketAddr::new(ip, port))
}

pub async fn serve(addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router()).await
}
