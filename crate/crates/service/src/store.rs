//! File-backed run store. Every dataset, run and model is a JSON or CSV
//! document under the data directory; nothing is kept only in memory.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use dflsim::codebook::Codebook;
use dflsim::dataset::{parse_csv, Dataset, DatasetSummary, Provenance};
use dflsim::training::TrainingOutcome;

use crate::error::ServiceError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunKind {
    Profile,
    Training,
    Simulation,
}

impl RunKind {
    fn dir(self) -> &'static str {
        match self {
            RunKind::Profile => "profiles",
            RunKind::Training => "models",
            RunKind::Simulation => "simulations",
        }
    }

    fn prefix(self) -> &'static str {
        match self {
            RunKind::Profile => "prof",
            RunKind::Training => "model",
            RunKind::Simulation => "sim",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Completed,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub id: String,
    pub kind: RunKind,
    pub status: RunStatus,
    pub request: serde_json::Value,
    pub result: Option<serde_json::Value>,
    pub error: Option<String>,
    pub created_at: String,
    pub fingerprints: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub id: String,
    pub fingerprint: String,
    pub provenance: Provenance,
    pub summary: DatasetSummary,
    pub created_at: String,
}

pub struct Store {
    root: PathBuf,
    /// Serializes id allocation and writes.
    lock: Mutex<()>,
    datasets: Mutex<BTreeMap<String, Arc<Dataset>>>,
    models: Mutex<BTreeMap<String, Arc<TrainingOutcome>>>,
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

fn io(path: &Path, e: std::io::Error) -> ServiceError {
    ServiceError::Storage(format!("{}: {e}", path.display()))
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), ServiceError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| io(path, e))
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-')
}

impl Store {
    /// Opens (creating if needed) a store rooted at `root`. Runs left in the
    /// running state by a previous process are marked failed.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, ServiceError> {
        let root = root.into();
        for sub in ["datasets", "profiles", "models", "simulations", "artifacts"] {
            let d = root.join(sub);
            fs::create_dir_all(&d).map_err(|e| io(&d, e))?;
        }
        let probe = root.join(".write-probe");
        fs::write(&probe, b"ok").map_err(|e| io(&probe, e))?;
        let _ = fs::remove_file(&probe);
        let store = Store {
            root,
            lock: Mutex::new(()),
            datasets: Mutex::new(BTreeMap::new()),
            models: Mutex::new(BTreeMap::new()),
        };
        for mut rec in store.list_runs(RunKind::Training)? {
            if rec.status == RunStatus::Running {
                rec.status = RunStatus::Failed;
                rec.error = Some("interrupted by service restart".into());
                store.write_run(&rec)?;
            }
        }
        Ok(store)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn next_id(&self, dir: &Path, prefix: &str) -> Result<String, ServiceError> {
        let mut max = 0u64;
        for entry in fs::read_dir(dir).map_err(|e| io(dir, e))? {
            let name = entry.map_err(|e| io(dir, e))?.file_name();
            let name = name.to_string_lossy();
            let stem = name.trim_end_matches(".json");
            if let Some(n) = stem.strip_prefix(prefix).and_then(|s| s.strip_prefix('-')).and_then(|s| s.parse().ok()) {
                max = max.max(n);
            }
        }
        Ok(format!("{prefix}-{:06}", max + 1))
    }

    pub fn add_dataset(&self, dataset: Dataset) -> Result<DatasetMeta, ServiceError> {
        let _g = self.lock.lock().expect("store lock");
        let base = self.root.join("datasets");
        let id = self.next_id(&base, "ds")?;
        let dir = base.join(&id);
        fs::create_dir_all(&dir).map_err(|e| io(&dir, e))?;
        let meta = DatasetMeta {
            id: id.clone(),
            fingerprint: dataset.fingerprint(),
            provenance: dataset.provenance,
            summary: dataset.summarize(),
            created_at: now(),
        };
        write_atomic(&dir.join("codebook.json"), serde_json::to_string_pretty(&dataset.codebook)?.as_bytes())?;
        write_atomic(&dir.join("survey.csv"), dataset.to_csv_string().as_bytes())?;
        write_atomic(&dir.join("meta.json"), serde_json::to_string_pretty(&meta)?.as_bytes())?;
        self.datasets.lock().expect("cache lock").insert(id, Arc::new(dataset));
        Ok(meta)
    }

    pub fn list_datasets(&self) -> Result<Vec<DatasetMeta>, ServiceError> {
        let base = self.root.join("datasets");
        let mut out = Vec::new();
        for entry in fs::read_dir(&base).map_err(|e| io(&base, e))? {
            let p = entry.map_err(|e| io(&base, e))?.path().join("meta.json");
            if p.exists() {
                let text = fs::read_to_string(&p).map_err(|e| io(&p, e))?;
                out.push(serde_json::from_str::<DatasetMeta>(&text)?);
            }
        }
        out.sort_by(|a, b| a.id.cmp(&b.id));
        Ok(out)
    }

    pub fn dataset_meta(&self, id: &str) -> Result<DatasetMeta, ServiceError> {
        let p = self.dataset_dir(id)?.join("meta.json");
        let text = fs::read_to_string(&p).map_err(|e| io(&p, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    fn dataset_dir(&self, id: &str) -> Result<PathBuf, ServiceError> {
        let dir = self.root.join("datasets").join(id);
        if !valid_id(id) || !dir.join("meta.json").exists() {
            return Err(ServiceError::NotFound(format!("dataset {id}")));
        }
        Ok(dir)
    }

    pub fn dataset(&self, id: &str) -> Result<Arc<Dataset>, ServiceError> {
        if let Some(d) = self.datasets.lock().expect("cache lock").get(id) {
            return Ok(d.clone());
        }
        let dir = self.dataset_dir(id)?;
        let meta = self.dataset_meta(id)?;
        let codebook = Codebook::load(&dir.join("codebook.json"))?;
        let p = dir.join("survey.csv");
        let text = fs::read_to_string(&p).map_err(|e| io(&p, e))?;
        let d = Arc::new(parse_csv(codebook, &text, meta.provenance)?);
        self.datasets.lock().expect("cache lock").insert(id.to_string(), d.clone());
        Ok(d)
    }

    fn run_path(&self, kind: RunKind, id: &str) -> Result<PathBuf, ServiceError> {
        if !valid_id(id) {
            return Err(ServiceError::NotFound(format!("run {id}")));
        }
        Ok(self.root.join(kind.dir()).join(format!("{id}.json")))
    }

    /// Allocates an id and persists a new record.
    pub fn create_run(
        &self,
        kind: RunKind,
        status: RunStatus,
        request: serde_json::Value,
        result: Option<serde_json::Value>,
        fingerprints: BTreeMap<String, String>,
    ) -> Result<RunRecord, ServiceError> {
        let _g = self.lock.lock().expect("store lock");
        let id = self.next_id(&self.root.join(kind.dir()), kind.prefix())?;
        let rec = RunRecord { id, kind, status, request, result, error: None, created_at: now(), fingerprints };
        self.write_run_locked(&rec)?;
        Ok(rec)
    }

    /// Rewrites a record. Completed and failed records are final.
    pub fn write_run(&self, rec: &RunRecord) -> Result<(), ServiceError> {
        let _g = self.lock.lock().expect("store lock");
        if let Ok(old) = self.run(rec.kind, &rec.id) {
            if old.status != RunStatus::Running {
                return Err(ServiceError::Conflict(format!("run {} is final", rec.id)));
            }
        }
        self.write_run_locked(rec)
    }

    fn write_run_locked(&self, rec: &RunRecord) -> Result<(), ServiceError> {
        let path = self.run_path(rec.kind, &rec.id)?;
        write_atomic(&path, serde_json::to_string_pretty(rec)?.as_bytes())
    }

    /// The stored document, byte for byte.
    pub fn run_bytes(&self, kind: RunKind, id: &str) -> Result<Vec<u8>, ServiceError> {
        let path = self.run_path(kind, id)?;
        fs::read(&path).map_err(|_| ServiceError::NotFound(format!("run {id}")))
    }

    pub fn run(&self, kind: RunKind, id: &str) -> Result<RunRecord, ServiceError> {
        Ok(serde_json::from_slice(&self.run_bytes(kind, id)?)?)
    }

    pub fn list_runs(&self, kind: RunKind) -> Result<Vec<RunRecord>, ServiceError> {
        let dir = self.root.join(kind.dir());
        let mut names: Vec<String> = fs::read_dir(&dir)
            .map_err(|e| io(&dir, e))?
            .filter_map(|e| e.ok())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .filter(|n| n.ends_with(".json"))
            .collect();
        names.sort();
        names
            .iter()
            .map(|n| self.run(kind, n.trim_end_matches(".json")))
            .collect()
    }

    pub fn save_model(&self, id: &str, outcome: TrainingOutcome) -> Result<Arc<TrainingOutcome>, ServiceError> {
        let path = self.root.join("artifacts").join(format!("{id}.json"));
        write_atomic(&path, serde_json::to_string(&outcome)?.as_bytes())?;
        let outcome = Arc::new(outcome);
        self.models.lock().expect("cache lock").insert(id.to_string(), outcome.clone());
        Ok(outcome)
    }

    pub fn model(&self, id: &str) -> Result<Arc<TrainingOutcome>, ServiceError> {
        if let Some(m) = self.models.lock().expect("cache lock").get(id) {
            return Ok(m.clone());
        }
        if !valid_id(id) {
            return Err(ServiceError::NotFound(format!("model {id}")));
        }
        let path = self.root.join("artifacts").join(format!("{id}.json"));
        let bytes = fs::read(&path).map_err(|_| ServiceError::NotFound(format!("trained model {id}")))?;
        let m = Arc::new(serde_json::from_slice::<TrainingOutcome>(&bytes)?);
        self.models.lock().expect("cache lock").insert(id.to_string(), m.clone());
        Ok(m)
    }
}
