use axum::body::Body;
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use noshow_core::evaluation::{evaluate_policy, GroupFractions};
use noshow_core::explain::lrp_record;
use noshow_core::strategy::StrategyRegistry;
use noshow_core::synth::{generate, GeneratorSpec};
use noshow_service::api::{router, AppState};
use noshow_service::ops::{self, TrainRequest};
use noshow_service::store::Store;

fn app(dir: &std::path::Path) -> Router {
    router(AppState::new(Store::open(dir).unwrap(), 1))
}

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header(header::CONTENT_TYPE, "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    send(app, req.body(body).unwrap()).await
}

async fn send(app: &Router, req: Request<Body>) -> (StatusCode, Value) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, value)
}

async fn upload(app: &Router, csv: &str) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(Method::POST)
        .uri("/datasets")
        .header(header::CONTENT_TYPE, "text/csv")
        .body(Body::from(csv.to_string()))
        .unwrap();
    send(app, req).await
}

fn dataset_csv(n: usize, seed: u64) -> String {
    let mut spec = GeneratorSpec::uniform(n, seed);
    spec.true_coefficients.insert("gender=F".into(), 0.8);
    spec.true_coefficients.insert("lead_time=60+".into(), 0.6);
    generate(&spec).unwrap().to_csv_string().unwrap()
}

fn assert_error(status: StatusCode, body: &Value, expected: StatusCode, code: &str) {
    assert_eq!(status, expected, "{body}");
    assert_eq!(body["code"], code);
    assert!(body["message"].is_string());
    assert!(body.get("detail").is_some());
}

#[tokio::test]
async fn dataset_upload_is_content_addressed() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let csv = dataset_csv(300, 1);
    let (s1, first) = upload(&app, &csv).await;
    assert_eq!(s1, StatusCode::CREATED);
    assert_eq!(first["n_records"], 300);
    let (s2, again) = upload(&app, &csv).await;
    assert_eq!(s2, StatusCode::OK);
    assert_eq!(again["dataset_id"], first["dataset_id"]);

    // Same bytes as a multipart form.
    let boundary = "XBOUNDARYX";
    let body = format!(
        "--{boundary}\r\nContent-Disposition: form-data; name=\"file\"; filename=\"d.csv\"\r\nContent-Type: text/csv\r\n\r\n{csv}\r\n--{boundary}--\r\n"
    );
    let req = Request::builder()
        .method(Method::POST)
        .uri("/datasets")
        .header(header::CONTENT_TYPE, format!("multipart/form-data; boundary={boundary}"))
        .body(Body::from(body))
        .unwrap();
    let (s3, multi) = send(&app, req).await;
    assert_eq!(s3, StatusCode::OK);
    assert_eq!(multi["dataset_id"], first["dataset_id"]);

    let (s, body) = upload(&app, "record_id,gender\n1,F\n").await;
    assert_error(s, &body, StatusCode::BAD_REQUEST, "validation_error");
    let (_, list) = call(&app, Method::GET, "/datasets", None).await;
    assert_eq!(list.as_array().unwrap().len(), 1);
}

#[tokio::test]
async fn api_numbers_equal_library_calls() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let csv = dataset_csv(1200, 2);
    let (_, ds) = upload(&app, &csv).await;
    let dataset_id = ds["dataset_id"].as_str().unwrap().to_string();

    let (status, entry) = call(
        &app,
        Method::POST,
        "/models",
        Some(json!({ "kind": "nn", "dataset_id": dataset_id, "seed": 4, "folds": 3 })),
    )
    .await;
    assert_eq!(status, StatusCode::CREATED, "{entry}");
    assert_eq!(entry["kind"], "mlp");
    let model_id = entry["model_id"].as_str().unwrap().to_string();
    let (again, same) = call(
        &app,
        Method::POST,
        "/models",
        Some(json!({ "kind": "mlp", "dataset_id": dataset_id, "seed": 4, "folds": 3 })),
    )
    .await;
    assert_eq!(again, StatusCode::OK);
    assert_eq!(same["model_id"], entry["model_id"]);

    // The same training run through the library.
    let records = noshow_core::dataset::ingest_reader(csv.as_bytes(), None).unwrap().records;
    let req = TrainRequest {
        kind: "mlp".into(),
        seed: 4,
        service: None,
        grid: None,
        folds: 3,
        reps: 1,
        fractions: None,
    };
    let artifact = ops::train(&StrategyRegistry::with_defaults(), &records, &req).unwrap();

    let (_, report) = call(&app, Method::GET, &format!("/models/{model_id}/report"), None).await;
    assert_eq!(report["test_metrics"], serde_json::to_value(&artifact.test_metrics).unwrap());
    assert_eq!(report["cv_report"], serde_json::to_value(&artifact.cv_report).unwrap());
    assert_eq!(report["cv_report"]["fold_scores"].as_array().unwrap().len(), 3);

    let (_, preview) = call(
        &app,
        Method::POST,
        "/policy/preview",
        Some(json!({ "model_id": model_id, "fractions": [0.3, 0.4, 0.3] })),
    )
    .await;
    let scored = ops::score_labelled(&artifact, &records).unwrap();
    let (policy, metrics) = evaluate_policy(&scored, GroupFractions::default()).unwrap();
    assert_eq!(preview["policy"], serde_json::to_value(&policy).unwrap());
    assert_eq!(preview["metrics"], serde_json::to_value(&metrics).unwrap());
    assert_eq!(preview["group_sizes"], json!([360, 480, 360]));

    let (_, scores) = call(
        &app,
        Method::POST,
        &format!("/models/{model_id}/score"),
        Some(json!({ "dataset_id": dataset_id })),
    )
    .await;
    let api_scores = scores["scores"].as_array().unwrap();
    assert_eq!(api_scores.len(), scored.len());
    for (a, (id, p, _)) in api_scores.iter().zip(&scored) {
        assert_eq!(a["record_id"], *id);
        assert_eq!(a["probability"].as_f64().unwrap().to_bits(), p.to_bits());
    }

    let target = &records.records()[17];
    let (status, expl) = call(
        &app,
        Method::GET,
        &format!("/patients/{}/explanation?model_id={model_id}", target.record_id),
        None,
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{expl}");
    let x = artifact
        .encode(&noshow_core::dataset::RecordSet::new(vec![target.clone()]).unwrap())
        .unwrap();
    let direct = lrp_record(artifact.model.as_mlp().unwrap(), x.row(0), target.record_id).unwrap();
    assert_eq!(expl, serde_json::to_value(&direct).unwrap());
    let total: f64 = expl["per_column"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).sum();
    let logit = expl["output_relevance"].as_f64().unwrap();
    assert!((total + expl["bias_absorbed"].as_f64().unwrap() - logit).abs() < 1e-9);

    let (s, body) = call(&app, Method::GET, &format!("/patients/999999/explanation?model_id={model_id}"), None).await;
    assert_error(s, &body, StatusCode::NOT_FOUND, "not_found");
}

#[tokio::test]
async fn policy_preview_commit_and_cohort() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    // No effects at all: the lasso keeps no columns, so scores carry no
    // information and the groups behave like random ones.
    let csv = generate(&GeneratorSpec::uniform(20_000, 5)).unwrap().to_csv_string().unwrap();
    let (_, ds) = upload(&app, &csv).await;
    let dataset_id = ds["dataset_id"].as_str().unwrap();
    let (_, entry) = call(
        &app,
        Method::POST,
        "/models",
        Some(json!({ "kind": "linear", "dataset_id": dataset_id, "seed": 1, "folds": 2 })),
    )
    .await;
    let model_id = entry["model_id"].as_str().unwrap().to_string();

    let (s, bad) = call(
        &app,
        Method::POST,
        "/policy/preview",
        Some(json!({ "model_id": model_id, "fractions": [0.3, 0.4, 0.4] })),
    )
    .await;
    assert_error(s, &bad, StatusCode::BAD_REQUEST, "validation_error");
    let (s, bad) = call(&app, Method::POST, "/policy/preview", Some(json!({ "model_id": model_id }))).await;
    assert_error(s, &bad, StatusCode::BAD_REQUEST, "validation_error");
    let (s, missing) = call(
        &app,
        Method::POST,
        "/policy/preview",
        Some(json!({ "model_id": "m-0000", "fractions": [0.3, 0.4, 0.3] })),
    )
    .await;
    assert_error(s, &missing, StatusCode::NOT_FOUND, "not_found");

    let (s, preview) = call(
        &app,
        Method::POST,
        "/policy/preview",
        Some(json!({ "model_id": model_id, "fractions": [0.3, 0.4, 0.3] })),
    )
    .await;
    assert_eq!(s, StatusCode::OK);
    let coverage = preview["metrics"]["coverage"].as_f64().unwrap();
    let risk = preview["metrics"]["risk"].as_f64().unwrap();
    assert!((coverage - 0.3).abs() < 0.03 && (risk - 0.3).abs() < 0.03, "{coverage} {risk}");

    // Previews never persist.
    let (s, _) = call(&app, Method::GET, &format!("/policy?model_id={model_id}"), None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);

    let (s, committed) = call(
        &app,
        Method::PUT,
        "/policy",
        Some(json!({ "model_id": model_id, "fractions": [0.2, 0.5, 0.3] })),
    )
    .await;
    assert_eq!(s, StatusCode::OK, "{committed}");
    let (_, stored) = call(&app, Method::GET, &format!("/policy?model_id={model_id}"), None).await;
    assert_eq!(stored["policy"], committed["policy"]);

    let (_, cohort) = call(&app, Method::GET, &format!("/cohort?model_id={model_id}&group=C"), None).await;
    assert_eq!(cohort["committed"], true);
    let members = cohort["assignments"].as_array().unwrap();
    assert_eq!(json!(members.len()), committed["policy"]["group_sizes"][2]);
    assert!(members.iter().all(|m| m["group"] == "C"));
    let (s, bad) = call(&app, Method::GET, &format!("/cohort?model_id={model_id}&group=D"), None).await;
    assert_error(s, &bad, StatusCode::BAD_REQUEST, "validation_error");

    // Explanations are only defined for networks.
    let (s, body) = call(&app, Method::GET, &format!("/patients/1/explanation?model_id={model_id}"), None).await;
    assert_error(s, &body, StatusCode::BAD_REQUEST, "validation_error");
}

#[tokio::test]
async fn schema_mismatch_is_a_conflict_and_models_survive_restart() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dataset_csv(800, 6);
    let (model_id, before) = {
        let app = app(dir.path());
        let (_, ds) = upload(&app, &csv).await;
        let (_, entry) = call(
            &app,
            Method::POST,
            "/models",
            Some(json!({ "kind": "rf", "dataset_id": ds["dataset_id"], "seed": 2, "folds": 2 })),
        )
        .await;
        let model_id = entry["model_id"].as_str().unwrap().to_string();
        let (_, scores) = call(
            &app,
            Method::POST,
            &format!("/models/{model_id}/score"),
            Some(json!({ "dataset_id": ds["dataset_id"] })),
        )
        .await;
        (model_id, scores)
    };
    // A fresh server on the same directory reads the artifact from disk.
    let app = app(dir.path());
    let (_, list) = call(&app, Method::GET, "/datasets", None).await;
    let ds = list[0]["dataset_id"].clone();
    let (_, after) = call(&app, Method::POST, &format!("/models/{model_id}/score"), Some(json!({ "dataset_id": ds }))).await;
    assert_eq!(before, after);

    let record = json!({
        "record_id": 1, "gender": "F", "age_years": 30, "zone_id": "Z01", "zone_income": "low",
        "service": "OH", "facility_id": "F99", "lead_time_days": 10, "month": 3, "day_of_week": "MON"
    });
    let (s, body) = call(&app, Method::POST, &format!("/models/{model_id}/score"), Some(json!({ "records": [record] }))).await;
    assert_error(s, &body, StatusCode::CONFLICT, "schema_mismatch");

    let mut ok = record.clone();
    ok["facility_id"] = json!("F01");
    let (s, body) = call(&app, Method::POST, &format!("/models/{model_id}/score"), Some(json!({ "records": [ok] }))).await;
    assert_eq!(s, StatusCode::OK, "{body}");
    let p = body["scores"][0]["probability"].as_f64().unwrap();
    assert!(p > 0.0 && p < 1.0);

    let (s, body) = call(&app, Method::GET, "/models/m-ffff/report", None).await;
    assert_error(s, &body, StatusCode::NOT_FOUND, "not_found");
    let (s, body) = call(&app, Method::POST, "/models", Some(json!({ "kind": "svm", "dataset_id": ds, "seed": 1 }))).await;
    assert_error(s, &body, StatusCode::BAD_REQUEST, "validation_error");
    let (_, cmp) = call(&app, Method::GET, "/comparison", None).await;
    assert_eq!(cmp["rows"][0]["model"], "RF");
}

#[tokio::test]
async fn heatmap_orders_patients_by_probability() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let (_, ds) = upload(&app, &dataset_csv(600, 8)).await;
    let (_, entry) = call(
        &app,
        Method::POST,
        "/models",
        Some(json!({ "kind": "mlp", "dataset_id": ds["dataset_id"], "seed": 3, "folds": 2 })),
    )
    .await;
    let model_id = entry["model_id"].as_str().unwrap();
    let (s, table) = call(&app, Method::GET, &format!("/heatmap?model_id={model_id}&group=C&limit=12"), None).await;
    assert_eq!(s, StatusCode::OK, "{table}");
    let probs: Vec<f64> = table["columns"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["probability"].as_f64().unwrap())
        .collect();
    assert_eq!(probs.len(), 12);
    assert!(probs.windows(2).all(|w| w[0] >= w[1]));
}
