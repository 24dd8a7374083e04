//! HTTP routes under `/v1`.

use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::routing::{get, post};
use axum::{Json, Router};
use pollaudit_core::bench::Evaluator;
use pollaudit_core::exact::{conditional_eval, forward_dp, max_risk};
use pollaudit_core::montecarlo::simulate;
use pollaudit_core::TrueTally;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::api::{
    method_catalog, CalibrateRequest, ContestRequest, ContestView, EvaluateCell, EvaluateRequest,
    EvaluateResponse, MethodInfo, ProjectionResponse, ProjectionRow, RoundRequest, RoundResponse,
};
use crate::error::ApiError;
use crate::store::Store;

/// Most round sizes or margins accepted in one projection request.
const MAX_PROJECTION_AXIS: usize = 64;

type ApiResult<T> = Result<T, ApiError>;

pub fn router(store: Arc<Store>) -> Router {
    let v1 = Router::new()
        .route("/contests", post(create_contest))
        .route("/contests/{id}", get(get_contest))
        .route("/contests/{id}/rounds", post(post_round))
        .route("/contests/{id}/projection", get(get_projection))
        .route("/methods", get(list_methods))
        .route("/calibrate", post(calibrate))
        .route("/evaluate", post(evaluate));
    Router::new()
        .route("/healthz", get(healthz))
        .nest("/v1", v1)
        .with_state(store)
}

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> ApiResult<T> {
    payload
        .map(|Json(v)| v)
        .map_err(|e| ApiError::BadRequest(e.body_text()))
}

/// Runs CPU- or disk-bound work off the async workers.
async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> ApiResult<T> + Send + 'static,
) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))?
}

async fn healthz() -> Json<Value> {
    Json(json!({ "status": "ok" }))
}

async fn create_contest(
    State(store): State<Arc<Store>>,
    headers: HeaderMap,
    payload: Result<Json<ContestRequest>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<ContestView>)> {
    let request = body(payload)?;
    let key = match headers.get("idempotency-key") {
        Some(v) => Some(
            v.to_str()
                .ok()
                .filter(|k| !k.is_empty() && k.len() <= 255)
                .ok_or_else(|| {
                    ApiError::BadRequest(
                        "Idempotency-Key must be 1 to 255 visible characters".into(),
                    )
                })?
                .to_string(),
        ),
        None => None,
    };
    let view = blocking(move || store.create(request, key)).await?;
    Ok((StatusCode::CREATED, Json(view.as_ref().clone())))
}

async fn get_contest(
    State(store): State<Arc<Store>>,
    Path(id): Path<String>,
) -> ApiResult<Json<ContestView>> {
    Ok(Json(store.contest(&id)?.view().as_ref().clone()))
}

async fn post_round(
    State(store): State<Arc<Store>>,
    Path(id): Path<String>,
    payload: Result<Json<RoundRequest>, JsonRejection>,
) -> ApiResult<Json<RoundResponse>> {
    let request = body(payload)?;
    Ok(Json(
        blocking(move || store.append_round(&id, &request)).await?,
    ))
}

#[derive(Debug, Deserialize)]
struct ProjectionQuery {
    round_sizes: String,
    margins: String,
}

fn parse_list<T: std::str::FromStr>(name: &str, raw: &str) -> ApiResult<Vec<T>> {
    let values = raw
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<T>()
                .map_err(|_| ApiError::BadRequest(format!("{name}: cannot parse {s:?}")))
        })
        .collect::<ApiResult<Vec<T>>>()?;
    if values.is_empty() || values.len() > MAX_PROJECTION_AXIS {
        return Err(ApiError::BadRequest(format!(
            "{name} needs 1 to {MAX_PROJECTION_AXIS} values"
        )));
    }
    Ok(values)
}

async fn get_projection(
    State(store): State<Arc<Store>>,
    Path(id): Path<String>,
    query: Result<Query<ProjectionQuery>, axum::extract::rejection::QueryRejection>,
) -> ApiResult<Json<ProjectionResponse>> {
    let Query(query) = query.map_err(|e| ApiError::BadRequest(e.body_text()))?;
    let round_sizes: Vec<u64> = parse_list("round_sizes", &query.round_sizes)?;
    let margins: Vec<f64> = parse_list("margins", &query.margins)?;
    if let Some(m) = margins.iter().find(|m| !(**m > -1.0 && **m <= 1.0)) {
        return Err(ApiError::BadRequest(format!(
            "margin {m} must lie in (-1, 1]"
        )));
    }
    let contest = store.contest(&id)?;
    let view = contest.view();
    if !view.status.is_open() {
        return Err(ApiError::Gone(format!("contest {id} is {}", view.status)));
    }
    let config = contest.config().clone();
    let (n, winners) = (view.n, view.winners);
    let rows = blocking(move || {
        let shares: Vec<f64> = margins.iter().map(|m| (1.0 + m) / 2.0).collect();
        let tallies: Vec<TrueTally> = shares.iter().map(|&p| TrueTally::share(p)).collect();
        let state = pollaudit_core::SampleCounts { n, winners };
        let projections = conditional_eval(
            state,
            &config.method,
            &config.rule,
            &config.scheme,
            &tallies,
            &round_sizes,
        )?;
        // projections come tally-major, matching the order of `margins`
        Ok(projections
            .into_iter()
            .enumerate()
            .map(|(i, p)| {
                let k = i / round_sizes.len();
                ProjectionRow {
                    round_size: p.round_size,
                    margin: margins[k],
                    share: shares[k],
                    end_n: p.end_n,
                    certify_probability: p.certify_probability,
                }
            })
            .collect())
    })
    .await?;
    Ok(Json(ProjectionResponse {
        contest_id: id,
        n,
        winners,
        rows,
    }))
}

async fn list_methods() -> Json<Vec<MethodInfo>> {
    Json(method_catalog())
}

async fn calibrate(
    payload: Result<Json<CalibrateRequest>, JsonRejection>,
) -> ApiResult<Json<Value>> {
    let request = body(payload)?;
    let cal = blocking(move || request.run()).await?;
    serde_json::to_value(cal)
        .map(Json)
        .map_err(|e| ApiError::Internal(e.to_string()))
}

async fn evaluate(
    payload: Result<Json<EvaluateRequest>, JsonRejection>,
) -> ApiResult<Json<EvaluateResponse>> {
    let request = body(payload)?;
    let response = blocking(move || {
        let scheme = request.scheme()?;
        if request.shares.is_empty() {
            return Err(ApiError::BadRequest("shares must not be empty".into()));
        }
        let order_dependent = request.method.is_order_dependent(&scheme);
        let mut cells = Vec::with_capacity(request.shares.len());
        if order_dependent {
            let sim = request.simulation.ok_or_else(|| {
                ApiError::Unprocessable(format!(
                    "{} depends on draw order here; give simulation settings",
                    request.method.label()
                ))
            })?;
            for &share in &request.shares {
                let r = simulate(
                    &request.method,
                    &request.rule,
                    &scheme,
                    &TrueTally::share(share),
                    sim.trials,
                    sim.seed,
                )?;
                cells.push(EvaluateCell::simulated(share, r, request.include_pmf));
            }
            return Ok(EvaluateResponse {
                evaluator: Evaluator::MonteCarlo,
                max_risk: None,
                cells,
            });
        }
        for &share in &request.shares {
            let r = forward_dp(
                &request.method,
                &request.rule,
                &scheme,
                &TrueTally::share(share),
            )?;
            cells.push(EvaluateCell::exact(share, r, request.include_pmf));
        }
        let risk = max_risk(&request.method, &request.rule, &scheme)?;
        Ok(EvaluateResponse {
            evaluator: Evaluator::Exact,
            max_risk: Some(risk),
            cells,
        })
    })
    .await?;
    Ok(Json(response))
}
