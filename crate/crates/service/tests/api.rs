use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use dflsim_service::{router, AppState, Store};

fn app(dir: &std::path::Path) -> Router {
    router(AppState::new(Store::open(dir).unwrap(), 7))
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder().method(method).uri(uri).header("content-type", "application/json");
    let req = match body {
        Some(b) => req.body(Body::from(b.to_string())).unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
}

fn parse(bytes: &[u8]) -> Value {
    serde_json::from_slice(bytes).unwrap()
}

async fn trained(app: &Router) -> (String, String) {
    let (s, body) = call(app, "POST", "/datasets", Some(json!({ "source": "synthesize", "seed": 11 }))).await;
    assert_eq!(s, StatusCode::CREATED);
    let ds = parse(&body)["id"].as_str().unwrap().to_string();
    let req = json!({
        "dataset_id": ds,
        "families": ["linear"],
        "split": { "test_fraction": 0.2, "strata_field": "country", "folds": 3, "seed": 7 }
    });
    let (s, body) = call(app, "POST", "/models", Some(req)).await;
    assert_eq!(s, StatusCode::ACCEPTED);
    let rec = parse(&body);
    assert_eq!(rec["status"], "running");
    let id = rec["id"].as_str().unwrap().to_string();
    for _ in 0..600 {
        let (_, body) = call(app, "GET", &format!("/models/{id}"), None).await;
        match parse(&body)["status"].as_str().unwrap() {
            "running" => tokio::time::sleep(Duration::from_millis(100)).await,
            "completed" => return (ds, id),
            other => panic!("training ended {other}: {}", String::from_utf8_lossy(&body)),
        }
    }
    panic!("training did not finish");
}

#[tokio::test(flavor = "multi_thread")]
async fn full_flow_persists_across_restart() {
    let dir = tempfile::tempdir().unwrap();
    let app1 = app(dir.path());
    let (s, body) = call(&app1, "GET", "/health", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(parse(&body)["status"], "ok");

    let (ds, model) = trained(&app1).await;
    let (_, body) = call(&app1, "GET", "/datasets", None).await;
    let list = parse(&body);
    assert_eq!(list[0]["summary"]["total"], 10108);

    let (s, p1) = call(&app1, "GET", &format!("/datasets/{ds}/profile"), None).await;
    assert_eq!(s, StatusCode::OK);
    let (_, p2) = call(&app1, "GET", &format!("/datasets/{ds}/profile"), None).await;
    assert_eq!(p1, p2);
    assert_eq!(parse(&p1)["result"]["country_stats"].as_array().unwrap().len(), 7);

    let (_, body) = call(&app1, "GET", &format!("/models/{model}"), None).await;
    let m = parse(&body);
    assert_eq!(m["result"]["selection"]["chosen"], "linear");
    assert!(m["result"]["lever_table"]["rows"].as_array().unwrap().len() > 40);
    assert_eq!(m["result"]["seed"], 7);

    let sim = json!({ "model_id": model, "scenario": "digital_capability", "by": ["gender", "area"] });
    let (s, a) = call(&app1, "POST", "/simulations", Some(sim.clone())).await;
    assert_eq!(s, StatusCode::CREATED);
    let (_, b) = call(&app1, "POST", "/simulations", Some(sim)).await;
    let (a, b) = (parse(&a), parse(&b));
    assert_ne!(a["id"], b["id"]);
    assert_eq!(a["result"], b["result"]);
    assert_eq!(a["fingerprints"], b["fingerprints"]);
    let subgroups = a["result"]["simulation"]["subgroups"].as_array().unwrap();
    assert_eq!(subgroups.len(), 2);

    let sim_id = a["id"].as_str().unwrap().to_string();
    let (_, first) = call(&app1, "GET", &format!("/simulations/{sim_id}"), None).await;
    drop(app1);

    let app2 = app(dir.path());
    let (_, body) = call(&app2, "GET", "/simulations", None).await;
    assert_eq!(parse(&body).as_array().unwrap().len(), 2);
    let (_, again) = call(&app2, "GET", &format!("/simulations/{sim_id}"), None).await;
    assert_eq!(first, again);
    // models reload from disk for new simulations
    let doc = json!({
        "model_id": model,
        "scenario": { "name": "custom", "assignments": { "budget_management": "yes" }, "filter": { "area": ["Rural"] } },
        "clip": false
    });
    let (s, body) = call(&app2, "POST", "/simulations", Some(doc)).await;
    assert_eq!(s, StatusCode::CREATED, "{}", String::from_utf8_lossy(&body));
    assert_eq!(parse(&body)["result"]["simulation"]["scenario"]["clip"], false);
}

#[tokio::test(flavor = "multi_thread")]
async fn errors_are_reported_with_status() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let (s, _) = call(&app, "GET", "/simulations/sim-999999", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = call(&app, "GET", "/datasets/nope/profile", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = call(&app, "POST", "/models", Some(json!({ "dataset_id": "ds-000042" }))).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, body) = call(&app, "POST", "/datasets", Some(json!({ "source": "ingest", "csv": "record_id,colour\nr1,red\n" }))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(parse(&body)["error"].as_str().unwrap().contains("colour"));
    let (s, _) = call(&app, "POST", "/datasets", Some(json!({ "source": "synthesize", "calibration": "mars" }))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test(flavor = "multi_thread")]
async fn ensemble_selection_reports_lever_scope_error() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let (_, body) = call(&app, "POST", "/datasets", Some(json!({ "source": "synthesize", "seed": 2 }))).await;
    let ds = parse(&body)["id"].as_str().unwrap().to_string();
    let mut spec = json!({ "dataset_id": ds, "families": ["boosting"] });
    spec["split"] = json!({ "test_fraction": 0.2, "strata_field": "country", "folds": 2, "seed": 1 });
    let (_, body) = call(&app, "POST", "/models", Some(spec)).await;
    let id = parse(&body)["id"].as_str().unwrap().to_string();
    let rec = loop {
        let (_, body) = call(&app, "GET", &format!("/models/{id}"), None).await;
        let v = parse(&body);
        if v["status"] != "running" {
            break v;
        }
        tokio::time::sleep(Duration::from_millis(100)).await;
    };
    assert_eq!(rec["status"], "completed");
    assert!(rec["result"]["lever_table"].is_null());
    assert!(rec["result"]["lever_error"].as_str().unwrap().contains("lever extraction requires the transparent model"));
}
