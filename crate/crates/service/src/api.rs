//! JSON API over the registry. Handlers are thin: every number comes from a
//! library call on the stored artifact.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::{FromRequest, FromRequestParts, Multipart, Path, Request, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::Semaphore;

use noshow_core::dataset::{AppointmentRecord, DayOfWeek, Gender, Outcome, RecordSet, Service, ZoneIncome};
use noshow_core::evaluation::{
    assign_groups, compare_models, evaluate_policy, CutoffPolicy, Group, InterventionMetrics,
};
use noshow_core::explain::{lrp_record, relevance_heatmap, HeatmapTable, RelevanceMap};
use noshow_core::pipeline::{Evaluation, TrainedArtifact};
use noshow_core::strategy::StrategyRegistry;

use crate::error::{ServiceError, ServiceResult};
use crate::ops::{self, TrainRequest};
use crate::store::{DatasetEntry, ModelRegistryEntry, PolicyRecord, Store};

/// Body extractor whose rejections use the API error shape.
#[derive(FromRequest)]
#[from_request(via(axum::Json), rejection(ServiceError))]
pub struct ApiJson<T>(pub T);

#[derive(FromRequestParts)]
#[from_request(via(axum::extract::Query), rejection(ServiceError))]
pub struct ApiQuery<T>(pub T);

type Scored = Arc<Vec<(u64, f64, u8)>>;

#[derive(Clone)]
pub struct AppState {
    store: Arc<Store>,
    registry: Arc<StrategyRegistry>,
    training: Arc<Semaphore>,
    scores: Arc<RwLock<HashMap<(String, String), Scored>>>,
}

impl AppState {
    pub fn new(store: Store, max_training: usize) -> Self {
        AppState {
            store: Arc::new(store),
            registry: Arc::new(StrategyRegistry::with_defaults()),
            training: Arc::new(Semaphore::new(max_training.max(1))),
            scores: Arc::new(RwLock::new(HashMap::new())),
        }
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    /// Scores of a dataset under a model, cached per pair.
    fn scored(&self, model_id: &str, dataset_id: &str) -> ServiceResult<(Arc<TrainedArtifact>, Scored)> {
        let artifact = self.store.artifact(model_id)?;
        let key = (model_id.to_string(), dataset_id.to_string());
        if let Some(s) = self.scores.read().expect("score cache").get(&key) {
            return Ok((artifact, s.clone()));
        }
        let records = self.store.records(dataset_id)?;
        let scored = Arc::new(ops::score_labelled(&artifact, &records)?);
        self.scores.write().expect("score cache").insert(key, scored.clone());
        Ok((artifact, scored))
    }

    /// The requested dataset, else the one the model was trained on.
    fn dataset_for(&self, model_id: &str, dataset_id: Option<String>) -> ServiceResult<String> {
        match dataset_id {
            Some(d) => Ok(d),
            None => Ok(self.store.model_entry(model_id)?.dataset_id),
        }
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/datasets", post(upload_dataset).get(list_datasets))
        .route("/models", post(create_model).get(list_models))
        .route("/models/{id}/report", get(model_report))
        .route("/models/{id}/score", post(score))
        .route("/policy/preview", post(preview_policy))
        .route("/policy", put(commit_policy).get(get_policy))
        .route("/patients/{record_id}/explanation", get(explanation))
        .route("/cohort", get(cohort))
        .route("/heatmap", get(heatmap))
        .route("/comparison", get(comparison))
        .with_state(state)
}

async fn health() -> Json<Value> {
    Json(json!({ "status": "ok" }))
}

async fn upload_dataset(State(state): State<AppState>, req: Request) -> ServiceResult<Response> {
    let is_multipart = req
        .headers()
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("multipart/form-data"));
    let bytes = if is_multipart {
        let mut form = Multipart::from_request(req, &()).await?;
        let field = form
            .next_field()
            .await?
            .ok_or_else(|| ServiceError::validation("multipart body has no file part"))?;
        field.bytes().await?
    } else {
        Bytes::from_request(req, &())
            .await
            .map_err(|e| ServiceError::validation(e.body_text()))?
    };
    let store = state.store.clone();
    let (entry, created) = blocking(move || store.add_dataset(&bytes)).await?;
    let status = if created { StatusCode::CREATED } else { StatusCode::OK };
    Ok((status, Json(entry)).into_response())
}

async fn list_datasets(State(state): State<AppState>) -> ServiceResult<Json<Vec<DatasetEntry>>> {
    Ok(Json(state.store.datasets()?))
}

#[derive(Debug, Deserialize)]
struct CreateModel {
    dataset_id: String,
    #[serde(flatten)]
    request: TrainRequest,
}

fn model_id_for(dataset_id: &str, req: &TrainRequest, registry: &StrategyRegistry) -> ServiceResult<String> {
    let kind = registry.get(&req.kind)?.kind();
    let canonical = json!({ "dataset_id": dataset_id, "kind": kind, "request": req });
    let hash = crate::store::sha256_hex(canonical.to_string().as_bytes());
    Ok(format!("m-{}", &hash[..16]))
}

async fn create_model(State(state): State<AppState>, ApiJson(body): ApiJson<CreateModel>) -> ServiceResult<Response> {
    let mut req = body.request;
    req.kind = state.registry.get(&req.kind)?.name().to_string();
    let model_id = model_id_for(&body.dataset_id, &req, &state.registry)?;
    if let Ok(existing) = state.store.model_entry(&model_id) {
        return Ok((StatusCode::OK, Json(existing)).into_response());
    }
    let records = state.store.records(&body.dataset_id)?;
    let _permit = state
        .training
        .clone()
        .acquire_owned()
        .await
        .map_err(|_| ServiceError::internal("training queue closed"))?;
    let (store, registry, dataset_id) = (state.store.clone(), state.registry.clone(), body.dataset_id.clone());
    let entry = blocking(move || {
        let artifact = ops::train(&registry, &records, &req)?;
        store.commit_model(&model_id, &dataset_id, artifact)
    })
    .await?;
    Ok((StatusCode::CREATED, Json(entry)).into_response())
}

async fn list_models(State(state): State<AppState>) -> ServiceResult<Json<Vec<ModelRegistryEntry>>> {
    Ok(Json(state.store.models()?))
}

#[derive(Debug, Serialize)]
struct ModelReport {
    entry: ModelRegistryEntry,
    hyperparameters: Value,
    cv_report: Option<noshow_core::evaluation::CvReport>,
    test_metrics: Evaluation,
}

async fn model_report(State(state): State<AppState>, Path(id): Path<String>) -> ServiceResult<Json<ModelReport>> {
    let entry = state.store.model_entry(&id)?;
    let artifact = state.store.artifact(&id)?;
    Ok(Json(ModelReport {
        entry,
        hyperparameters: artifact.hyperparameters.clone(),
        cv_report: artifact.cv_report.clone(),
        test_metrics: artifact.test_metrics.clone(),
    }))
}

/// A record to score; the outcome is optional for new appointments.
#[derive(Debug, Deserialize)]
struct ScoreRecord {
    record_id: u64,
    gender: Gender,
    age_years: u32,
    zone_id: String,
    zone_income: ZoneIncome,
    service: Service,
    facility_id: String,
    lead_time_days: u32,
    month: u8,
    day_of_week: DayOfWeek,
    #[serde(default)]
    outcome: Option<Outcome>,
}

#[derive(Debug, Deserialize)]
struct ScoreBody {
    #[serde(default)]
    records: Option<Vec<ScoreRecord>>,
    #[serde(default)]
    dataset_id: Option<String>,
}

#[derive(Debug, Serialize)]
struct ScoredRecord {
    record_id: u64,
    probability: f64,
    /// Group under the committed policy, by score alone.
    group: Option<Group>,
}

async fn score(
    State(state): State<AppState>,
    Path(id): Path<String>,
    ApiJson(body): ApiJson<ScoreBody>,
) -> ServiceResult<Json<Value>> {
    let artifact = state.store.artifact(&id)?;
    let scores: Vec<(u64, f64)> = match (body.records, body.dataset_id) {
        (Some(records), None) => {
            let records: Vec<AppointmentRecord> = records
                .into_iter()
                .map(|r| AppointmentRecord {
                    record_id: r.record_id,
                    gender: r.gender,
                    age_years: r.age_years,
                    zone_id: r.zone_id,
                    zone_income: r.zone_income,
                    service: r.service,
                    facility_id: r.facility_id,
                    lead_time_days: r.lead_time_days,
                    month: r.month,
                    day_of_week: r.day_of_week,
                    outcome: r.outcome.unwrap_or(Outcome::Show),
                })
                .collect();
            artifact.score_records(&RecordSet::new(records)?)?
        }
        (None, Some(dataset_id)) => state.scored(&id, &dataset_id)?.1.iter().map(|&(i, p, _)| (i, p)).collect(),
        _ => return Err(ServiceError::validation("give exactly one of records or dataset_id")),
    };
    let policy = state.store.policy(&id)?;
    let out: Vec<ScoredRecord> = scores
        .into_iter()
        .map(|(record_id, probability)| ScoredRecord {
            record_id,
            probability,
            group: policy.as_ref().map(|p| p.policy.group_of_score(probability)),
        })
        .collect();
    Ok(Json(json!({ "model_id": id, "scores": out })))
}

#[derive(Debug, Deserialize)]
struct PolicyBody {
    model_id: String,
    #[serde(default)]
    dataset_id: Option<String>,
    fractions: [f64; 3],
}

#[derive(Debug, Serialize)]
struct PolicyPreview {
    model_id: String,
    dataset_id: String,
    policy: CutoffPolicy,
    metrics: InterventionMetrics,
    group_sizes: [usize; 3],
}

fn run_policy(state: &AppState, body: PolicyBody) -> ServiceResult<PolicyPreview> {
    let fractions = ops::fractions(Some(body.fractions))?;
    let dataset_id = state.dataset_for(&body.model_id, body.dataset_id)?;
    let (_, scored) = state.scored(&body.model_id, &dataset_id)?;
    let (policy, metrics) = evaluate_policy(&scored, fractions)?;
    Ok(PolicyPreview {
        model_id: body.model_id,
        dataset_id,
        group_sizes: policy.group_sizes,
        policy,
        metrics,
    })
}

async fn preview_policy(
    State(state): State<AppState>,
    ApiJson(body): ApiJson<PolicyBody>,
) -> ServiceResult<Json<PolicyPreview>> {
    Ok(Json(blocking(move || run_policy(&state, body)).await?))
}

async fn commit_policy(
    State(state): State<AppState>,
    ApiJson(body): ApiJson<PolicyBody>,
) -> ServiceResult<Json<PolicyRecord>> {
    let record = blocking(move || {
        let p = run_policy(&state, body)?;
        state.store.commit_policy(&p.model_id, &p.dataset_id, p.policy, p.metrics)
    })
    .await?;
    Ok(Json(record))
}

#[derive(Debug, Deserialize)]
struct ModelQuery {
    model_id: String,
    #[serde(default)]
    dataset_id: Option<String>,
    #[serde(default)]
    group: Option<String>,
    #[serde(default)]
    limit: Option<usize>,
}

async fn get_policy(
    State(state): State<AppState>,
    ApiQuery(q): ApiQuery<ModelQuery>,
) -> ServiceResult<Json<PolicyRecord>> {
    state
        .store
        .policy(&q.model_id)?
        .map(Json)
        .ok_or_else(|| ServiceError::not_found("policy for model", &q.model_id))
}

async fn explanation(
    State(state): State<AppState>,
    Path(record_id): Path<u64>,
    ApiQuery(q): ApiQuery<ModelQuery>,
) -> ServiceResult<Json<RelevanceMap>> {
    let artifact = state.store.artifact(&q.model_id)?;
    let dataset_id = state.dataset_for(&q.model_id, q.dataset_id)?;
    let records = state.store.records(&dataset_id)?;
    let record = records
        .iter()
        .find(|r| r.record_id == record_id)
        .ok_or_else(|| ServiceError::not_found("record", &record_id.to_string()))?;
    Ok(Json(explain_one(&artifact, record)?))
}

fn explain_one(artifact: &TrainedArtifact, record: &AppointmentRecord) -> ServiceResult<RelevanceMap> {
    let mlp = artifact.model.as_mlp().ok_or_else(|| {
        ServiceError::validation(format!("explanations need an mlp model, this one is {}", artifact.kind))
    })?;
    let x = artifact.encode(&RecordSet::new(vec![record.clone()])?)?;
    Ok(lrp_record(mlp, x.row(0), record.record_id)?)
}

#[derive(Debug, Serialize)]
struct Assignment {
    record_id: u64,
    probability: f64,
    group: Group,
    label: u8,
}

#[derive(Debug, Serialize)]
struct Cohort {
    model_id: String,
    dataset_id: String,
    /// True when the groups come from a committed policy rather than the
    /// default fractions.
    committed: bool,
    policy: CutoffPolicy,
    assignments: Vec<Assignment>,
}

fn cohort_of(state: &AppState, q: &ModelQuery) -> ServiceResult<Cohort> {
    let committed = state.store.policy(&q.model_id)?;
    let dataset_id = match (&q.dataset_id, &committed) {
        (Some(d), _) => d.clone(),
        (None, Some(p)) => p.dataset_id.clone(),
        (None, None) => state.dataset_for(&q.model_id, None)?,
    };
    let fractions = committed.as_ref().map(|p| p.fractions).unwrap_or_default();
    let (_, scored) = state.scored(&q.model_id, &dataset_id)?;
    let (policy, _) = evaluate_policy(&scored, fractions)?;
    let group: Option<Group> = q.group.as_deref().map(str::parse).transpose()?;
    let scores: Vec<(u64, f64)> = scored.iter().map(|&(i, p, _)| (i, p)).collect();
    let groups = assign_groups(&scores, &policy);
    let mut assignments: Vec<Assignment> = scored
        .iter()
        .map(|&(record_id, probability, label)| Assignment {
            record_id,
            probability,
            group: groups[&record_id],
            label,
        })
        .filter(|a| group.is_none_or(|g| a.group == g))
        .collect();
    assignments.sort_by(|a, b| b.probability.total_cmp(&a.probability).then(a.record_id.cmp(&b.record_id)));
    if let Some(limit) = q.limit {
        assignments.truncate(limit);
    }
    Ok(Cohort {
        model_id: q.model_id.clone(),
        dataset_id,
        committed: committed.is_some(),
        policy,
        assignments,
    })
}

async fn cohort(State(state): State<AppState>, ApiQuery(q): ApiQuery<ModelQuery>) -> ServiceResult<Json<Cohort>> {
    Ok(Json(blocking(move || cohort_of(&state, &q)).await?))
}

/// Relevance heatmap of a cohort's highest-probability patients.
async fn heatmap(
    State(state): State<AppState>,
    ApiQuery(mut q): ApiQuery<ModelQuery>,
) -> ServiceResult<Json<HeatmapTable>> {
    q.limit = Some(q.limit.unwrap_or(20).min(500));
    let table = blocking(move || {
        let c = cohort_of(&state, &q)?;
        let artifact = state.store.artifact(&q.model_id)?;
        let records = state.store.records(&c.dataset_id)?;
        let wanted: HashMap<u64, usize> = c.assignments.iter().enumerate().map(|(i, a)| (a.record_id, i)).collect();
        let mut maps = Vec::with_capacity(wanted.len());
        for r in records.iter().filter(|r| wanted.contains_key(&r.record_id)) {
            maps.push(explain_one(&artifact, r)?);
        }
        if maps.is_empty() {
            return Err(ServiceError::validation("cohort is empty"));
        }
        Ok(relevance_heatmap(&maps)?)
    })
    .await?;
    Ok(Json(table))
}

async fn comparison(State(state): State<AppState>) -> ServiceResult<Json<Value>> {
    let mut reports = Vec::new();
    let mut metrics = Vec::new();
    for entry in state.store.models()? {
        let artifact = state.store.artifact(&entry.model_id)?;
        let service = artifact.service.map_or("ALL".to_string(), |s| s.code().to_string());
        let tag = format!("{service}/{}", artifact.kind.tag());
        let mut report = match &artifact.cv_report {
            Some(r) => r.clone(),
            None => continue,
        };
        report.model_tag = tag.clone();
        reports.push(report);
        metrics.push((tag, artifact.test_metrics.metrics.clone()));
    }
    let table = compare_models(&reports, &metrics)?;
    Ok(Json(json!({ "rows": table.rows, "lines": table.render_lines() })))
}

async fn blocking<T, F>(f: F) -> ServiceResult<T>
where
    F: FnOnce() -> ServiceResult<T> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ServiceError::internal(format!("worker failed: {e}")))?
}
