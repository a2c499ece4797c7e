//! HTTP front end over the dflsim pipeline.
//!
//! State lives in a [`Store`] directory. Training runs in the background and
//! is polled through `GET /models/{id}`; simulations answer synchronously.

mod error;
pub mod store;

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde::Deserialize;

use dflsim::codebook::{default_codebook, Codebook};
use dflsim::competency::score_dataset;
use dflsim::dataset::{parse_csv, Provenance};
use dflsim::models::ModelRegistry;
use dflsim::pipeline::SplitSpec;
use dflsim::profiling::{profile, DEFAULT_MIN_CELL};
use dflsim::scenario::{disaggregate, partition_responders, simulate, ResponderConfig, Scenario};
use dflsim::synth::{synthesize_with_codebook, SynthesisSpec};
use dflsim::training::{train, TrainingOutcome, TrainingRequest};

pub use error::ServiceError;
pub use store::{DatasetMeta, RunKind, RunRecord, RunStatus, Store};

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub bind: SocketAddr,
    pub data_dir: PathBuf,
    /// Seed used when a request does not carry one.
    pub default_seed: u64,
}

#[derive(Clone)]
pub struct AppState {
    store: Arc<Store>,
    default_seed: u64,
}

impl AppState {
    pub fn new(store: Store, default_seed: u64) -> Self {
        AppState { store: Arc::new(store), default_seed }
    }

    pub fn store(&self) -> &Store {
        &self.store
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/datasets", get(list_datasets).post(create_dataset))
        .route("/datasets/{id}/profile", get(dataset_profile))
        .route("/models", get(list_models).post(create_model))
        .route("/models/{id}", get(get_model))
        .route("/simulations", get(list_simulations).post(create_simulation))
        .route("/simulations/{id}", get(get_simulation))
        .with_state(state)
}

pub async fn serve(config: ServiceConfig) -> Result<(), ServiceError> {
    let store = Store::open(&config.data_dir)?;
    let listener = tokio::net::TcpListener::bind(config.bind)
        .await
        .map_err(|e| ServiceError::Storage(format!("cannot bind {}: {e}", config.bind)))?;
    log::info!("listening on {} with data in {}", config.bind, config.data_dir.display());
    axum::serve(listener, router(AppState::new(store, config.default_seed)))
        .await
        .map_err(|e| ServiceError::Storage(e.to_string()))
}

type ApiResult<T> = Result<T, ServiceError>;

fn raw_json(bytes: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, "application/json")], bytes).into_response()
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ServiceError::Storage(format!("worker failed: {e}")))?
}

async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok", "version": env!("CARGO_PKG_VERSION") }))
}

async fn list_datasets(State(st): State<AppState>) -> ApiResult<Json<Vec<DatasetMeta>>> {
    Ok(Json(st.store.list_datasets()?))
}

#[derive(Debug, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
enum DatasetRequest {
    Synthesize {
        #[serde(default = "appendix")]
        calibration: String,
        seed: Option<u64>,
    },
    Ingest {
        codebook: Option<Codebook>,
        csv: String,
    },
}

fn appendix() -> String {
    "appendixA".into()
}

async fn create_dataset(
    State(st): State<AppState>,
    Json(req): Json<DatasetRequest>,
) -> ApiResult<(StatusCode, Json<DatasetMeta>)> {
    let seed = st.default_seed;
    let store = st.store.clone();
    let meta = blocking(move || {
        let data = match req {
            DatasetRequest::Synthesize { calibration, seed: s } => {
                let spec = SynthesisSpec::preset(&calibration)
                    .ok_or_else(|| ServiceError::BadRequest(format!("unknown calibration {calibration:?}")))?;
                synthesize_with_codebook(&spec, &default_codebook(), s.unwrap_or(seed))?
            }
            DatasetRequest::Ingest { codebook, csv } => {
                let cb = match codebook {
                    Some(c) => Codebook::new(c.name, c.country_field, c.fields)?,
                    None => default_codebook(),
                };
                parse_csv(cb, &csv, Provenance::Ingested)?
            }
        };
        store.add_dataset(data)
    })
    .await?;
    Ok((StatusCode::CREATED, Json(meta)))
}

async fn dataset_profile(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let store = st.store.clone();
    blocking(move || {
        let meta = store.dataset_meta(&id)?;
        // one profile run per dataset; later reads return the stored document
        if let Some(rec) = store
            .list_runs(RunKind::Profile)?
            .into_iter()
            .find(|r| r.request["dataset_id"] == id.as_str())
        {
            return Ok(raw_json(store.run_bytes(RunKind::Profile, &rec.id)?));
        }
        let data = store.dataset(&id)?;
        let report = profile(&data, &score_dataset(&data), DEFAULT_MIN_CELL)?;
        let fps = BTreeMap::from([("dataset".to_string(), meta.fingerprint)]);
        let rec = store.create_run(
            RunKind::Profile,
            RunStatus::Completed,
            serde_json::json!({ "dataset_id": id, "min_cell": DEFAULT_MIN_CELL }),
            Some(serde_json::to_value(&report)?),
            fps,
        )?;
        Ok(raw_json(store.run_bytes(RunKind::Profile, &rec.id)?))
    })
    .await
}

#[derive(Debug, Deserialize, serde::Serialize)]
struct ModelRequest {
    dataset_id: String,
    split: Option<SplitSpec>,
    families: Option<Vec<String>>,
    tolerance: Option<f64>,
}

/// What a training run reports over HTTP: everything but the fitted
/// parameters, which stay in the artifact file.
fn training_summary(dataset_id: &str, t: &TrainingOutcome) -> serde_json::Value {
    let candidates: Vec<_> = t
        .results
        .iter()
        .map(|r| {
            serde_json::json!({
                "name": r.candidate.name,
                "family": r.candidate.family,
                "transparency_rank": r.candidate.transparency_rank,
                "config": r.model.config,
                "report": r.candidate.report,
                "cv": r.cv,
                "model_fingerprint": r.model.fingerprint(),
            })
        })
        .collect();
    serde_json::json!({
        "dataset_id": dataset_id,
        "dataset_fingerprint": t.dataset_fingerprint,
        "request": t.request,
        "seed": t.request.split.seed,
        "train_size": t.train_size,
        "test_size": t.test_size,
        "candidates": candidates,
        "selection": t.selection,
        "lever_table": t.lever_table,
        "lever_error": t.lever_error,
    })
}

async fn create_model(
    State(st): State<AppState>,
    Json(req): Json<ModelRequest>,
) -> ApiResult<(StatusCode, Json<RunRecord>)> {
    let meta = st.store.dataset_meta(&req.dataset_id)?;
    let mut treq = TrainingRequest::default();
    treq.split.seed = st.default_seed;
    if let Some(s) = req.split.clone() {
        treq.split = s;
    }
    if let Some(f) = req.families.clone() {
        treq.families = f;
    }
    if let Some(t) = req.tolerance {
        treq.tolerance = t;
    }
    treq.split.validate()?;
    ModelRegistry::with_defaults().resolve(&treq.families.join(","))?;
    let request = serde_json::json!({ "dataset_id": req.dataset_id, "training": treq });
    let fps = BTreeMap::from([("dataset".to_string(), meta.fingerprint)]);
    let rec = st.store.create_run(RunKind::Training, RunStatus::Running, request, None, fps)?;
    let store = st.store.clone();
    let mut done = rec.clone();
    let dataset_id = req.dataset_id;
    tokio::task::spawn_blocking(move || {
        let outcome = store
            .dataset(&dataset_id)
            .and_then(|d| Ok(train(&d, &ModelRegistry::with_defaults(), &treq)?));
        match outcome {
            Ok(t) => {
                done.result = Some(training_summary(&dataset_id, &t));
                done.fingerprints.insert("model".into(), t.chosen().fingerprint());
                match store.save_model(&done.id, t) {
                    Ok(_) => done.status = RunStatus::Completed,
                    Err(e) => {
                        done.status = RunStatus::Failed;
                        done.result = None;
                        done.error = Some(e.to_string());
                    }
                }
            }
            Err(e) => {
                done.status = RunStatus::Failed;
                done.error = Some(e.to_string());
            }
        }
        if let Err(e) = store.write_run(&done) {
            log::error!("could not finalize {}: {e}", done.id);
        }
    });
    Ok((StatusCode::ACCEPTED, Json(rec)))
}

async fn list_models(State(st): State<AppState>) -> ApiResult<Json<Vec<serde_json::Value>>> {
    let runs = st.store.list_runs(RunKind::Training)?;
    Ok(Json(
        runs.iter()
            .map(|r| serde_json::json!({ "id": r.id, "status": r.status, "created_at": r.created_at }))
            .collect(),
    ))
}

async fn get_model(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    Ok(raw_json(st.store.run_bytes(RunKind::Training, &id)?))
}

#[derive(Debug, Deserialize, serde::Serialize)]
#[serde(untagged)]
enum ScenarioSpec {
    Preset(String),
    Document(Scenario),
}

#[derive(Debug, Deserialize, serde::Serialize)]
struct SimulationRequest {
    model_id: String,
    /// Family name within the training run; the selected model by default.
    model: Option<String>,
    dataset_id: Option<String>,
    scenario: ScenarioSpec,
    clip: Option<bool>,
    #[serde(default)]
    by: Vec<String>,
}

async fn create_simulation(
    State(st): State<AppState>,
    Json(req): Json<SimulationRequest>,
) -> ApiResult<(StatusCode, Response)> {
    let store = st.store.clone();
    blocking(move || {
        let run = store.run(RunKind::Training, &req.model_id)?;
        if run.status != RunStatus::Completed {
            return Err(ServiceError::Conflict(format!("model {} is {:?}", req.model_id, run.status)));
        }
        let outcome = store.model(&req.model_id)?;
        let model = match &req.model {
            Some(name) => outcome
                .model(name)
                .ok_or_else(|| ServiceError::NotFound(format!("family {name} in {}", req.model_id)))?,
            None => outcome.chosen(),
        };
        let dataset_id = match &req.dataset_id {
            Some(d) => d.clone(),
            None => run.request["dataset_id"].as_str().unwrap_or_default().to_string(),
        };
        let data = store.dataset(&dataset_id)?;
        let mut scenario = match &req.scenario {
            ScenarioSpec::Preset(name) => Scenario::preset(name, &data.codebook)?,
            ScenarioSpec::Document(s) => s.clone(),
        };
        if let Some(c) = req.clip {
            scenario.clip = c;
        }
        let mut result = simulate(&data, model, &scenario)?;
        let by: Vec<&str> = req.by.iter().map(String::as_str).collect();
        result.subgroups = disaggregate(&result, &data, &by)?;
        let responders = partition_responders(std::slice::from_ref(&result), &data, &ResponderConfig::default())?;
        let fps = BTreeMap::from([
            ("dataset".to_string(), result.dataset_fingerprint.clone()),
            ("model".to_string(), result.model_fingerprint.clone()),
        ]);
        let payload = serde_json::json!({
            "model_id": req.model_id,
            "model": model.name,
            "dataset_id": dataset_id,
            "seed": model.seed,
            "simulation": result,
            "responders": responders,
        });
        let rec = store.create_run(
            RunKind::Simulation,
            RunStatus::Completed,
            serde_json::to_value(&req)?,
            Some(payload),
            fps,
        )?;
        Ok((StatusCode::CREATED, raw_json(store.run_bytes(RunKind::Simulation, &rec.id)?)))
    })
    .await
}

async fn list_simulations(State(st): State<AppState>) -> ApiResult<Json<Vec<serde_json::Value>>> {
    let runs = st.store.list_runs(RunKind::Simulation)?;
    Ok(Json(
        runs.iter()
            .map(|r| {
                let sim = r.result.as_ref().map(|v| &v["simulation"]);
                serde_json::json!({
                    "id": r.id,
                    "created_at": r.created_at,
                    "scenario": sim.map(|s| s["scenario"]["name"].clone()),
                    "reach": sim.map(|s| s["reach"].clone()),
                    "population_gain_pct": sim.map(|s| s["population_gain_pct"].clone()),
                })
            })
            .collect(),
    ))
}

async fn get_simulation(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    Ok(raw_json(st.store.run_bytes(RunKind::Simulation, &id)?))
}
