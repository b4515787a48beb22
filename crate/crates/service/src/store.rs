//! File-backed registry of uploaded datasets, trained models and committed
//! policies.
//!
//! Layout under the root:
//!
//! ```text
//! datasets/<id>.csv, datasets/<id>.json
//! models/<id>.json (artifact), models/<id>.entry.json
//! policies/<model_id>.json
//! ```
//!
//! Every file is written to a temporary sibling and renamed into place. A
//! model becomes visible when its entry file appears, which happens after
//! the artifact is complete.

use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use noshow_core::dataset::{ingest_reader, RecordSet, Service};
use noshow_core::evaluation::{CutoffPolicy, CvReport, GroupFractions, InterventionMetrics};
use noshow_core::pipeline::TrainedArtifact;
use noshow_core::strategy::ModelKind;

use crate::error::{ServiceError, ServiceResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub dataset_id: String,
    pub sha256: String,
    pub n_records: usize,
    pub n_no_show: usize,
    pub rejected_rows: Vec<RejectedRow>,
    pub created_at: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectedRow {
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRegistryEntry {
    pub model_id: String,
    pub kind: ModelKind,
    pub service: Option<Service>,
    pub schema_version: u32,
    /// Seconds since the Unix epoch.
    pub created_at: u64,
    /// Relative to the registry root.
    pub artifact_path: String,
    pub dataset_id: String,
    pub seed: u64,
    pub cv_report: Option<CvReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyRecord {
    pub model_id: String,
    pub dataset_id: String,
    pub fractions: GroupFractions,
    pub policy: CutoffPolicy,
    pub metrics: InterventionMetrics,
    pub committed_at: u64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

fn check_id(id: &str) -> ServiceResult<()> {
    let ok = !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-');
    if ok {
        Ok(())
    } else {
        Err(ServiceError::validation(format!("malformed id {id:?}")))
    }
}

pub struct Store {
    root: PathBuf,
    /// Serializes registry commits.
    commit: Mutex<()>,
    models: RwLock<HashMap<String, Arc<TrainedArtifact>>>,
    datasets: RwLock<HashMap<String, Arc<RecordSet>>>,
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> ServiceResult<Store> {
        let root = root.into();
        for dir in ["datasets", "models", "policies"] {
            std::fs::create_dir_all(root.join(dir))?;
        }
        Ok(Store {
            root,
            commit: Mutex::new(()),
            models: RwLock::new(HashMap::new()),
            datasets: RwLock::new(HashMap::new()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn read_json<T: for<'de> Deserialize<'de>>(&self, path: &Path, what: &str, id: &str) -> ServiceResult<T> {
        match std::fs::read_to_string(path) {
            Ok(text) => serde_json::from_str(&text)
                .map_err(|e| ServiceError::internal(format!("corrupt {what} record {id}: {e}"))),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(ServiceError::not_found(what, id)),
            Err(e) => Err(e.into()),
        }
    }

    fn list<T: for<'de> Deserialize<'de>>(&self, dir: &str, suffix: &str, what: &str) -> ServiceResult<Vec<T>> {
        let mut names: Vec<String> = std::fs::read_dir(self.root.join(dir))?
            .filter_map(|e| e.ok())
            .filter_map(|e| e.file_name().into_string().ok())
            .filter(|n| n.ends_with(suffix) && !n.starts_with('.'))
            .collect();
        names.sort();
        names
            .iter()
            .filter(|n| suffix != ".json" || !n.ends_with(".entry.json"))
            .map(|n| self.read_json(&self.root.join(dir).join(n), what, n))
            .collect()
    }

    /// Store an uploaded CSV. Content-addressed, so re-uploading the same
    /// bytes returns the existing entry.
    pub fn add_dataset(&self, csv: &[u8]) -> ServiceResult<(DatasetEntry, bool)> {
        let sha = sha256_hex(csv);
        let id = format!("ds-{}", &sha[..16]);
        if let Ok(existing) = self.dataset_entry(&id) {
            return Ok((existing, false));
        }
        // A malformed upload is bad input, not a clash with a stored model.
        let ingested = ingest_reader(csv, None).map_err(|e| ServiceError::validation(e.to_string()))?;
        if ingested.records.is_empty() {
            return Err(ServiceError::validation("dataset has no valid rows").with_detail(serde_json::json!({
                "rejected_rows": ingested.rejects.len()
            })));
        }
        let entry = DatasetEntry {
            dataset_id: id.clone(),
            sha256: sha,
            n_records: ingested.records.len(),
            n_no_show: ingested.records.labels().iter().filter(|&&y| y == 1).count(),
            rejected_rows: ingested
                .rejects
                .iter()
                .map(|r| RejectedRow {
                    line: r.line,
                    reason: r.reason.clone(),
                })
                .collect(),
            created_at: now(),
        };
        let _guard = self.commit.lock().expect("commit lock");
        write_atomic(&self.dataset_dir().join(format!("{id}.csv")), csv)?;
        write_atomic(
            &self.dataset_dir().join(format!("{id}.json")),
            serde_json::to_string_pretty(&entry)?.as_bytes(),
        )?;
        self.datasets
            .write()
            .expect("dataset cache")
            .insert(id, Arc::new(ingested.records));
        Ok((entry, true))
    }

    fn dataset_dir(&self) -> PathBuf {
        self.root.join("datasets")
    }

    fn model_dir(&self) -> PathBuf {
        self.root.join("models")
    }

    pub fn dataset_entry(&self, id: &str) -> ServiceResult<DatasetEntry> {
        check_id(id)?;
        self.read_json(&self.dataset_dir().join(format!("{id}.json")), "dataset", id)
    }

    pub fn datasets(&self) -> ServiceResult<Vec<DatasetEntry>> {
        self.list("datasets", ".json", "dataset")
    }

    pub fn records(&self, id: &str) -> ServiceResult<Arc<RecordSet>> {
        if let Some(r) = self.datasets.read().expect("dataset cache").get(id) {
            return Ok(r.clone());
        }
        self.dataset_entry(id)?;
        let file = std::fs::File::open(self.dataset_dir().join(format!("{id}.csv")))?;
        let records = Arc::new(ingest_reader(file, None)?.records);
        self.datasets
            .write()
            .expect("dataset cache")
            .insert(id.to_string(), records.clone());
        Ok(records)
    }

    pub fn model_entry(&self, id: &str) -> ServiceResult<ModelRegistryEntry> {
        check_id(id)?;
        self.read_json(&self.model_dir().join(format!("{id}.entry.json")), "model", id)
    }

    pub fn models(&self) -> ServiceResult<Vec<ModelRegistryEntry>> {
        self.list("models", ".entry.json", "model")
    }

    pub fn artifact(&self, id: &str) -> ServiceResult<Arc<TrainedArtifact>> {
        if let Some(a) = self.models.read().expect("model cache").get(id) {
            return Ok(a.clone());
        }
        let entry = self.model_entry(id)?;
        let text = std::fs::read_to_string(self.root.join(&entry.artifact_path))?;
        let artifact = Arc::new(TrainedArtifact::from_json(&text)?);
        self.models
            .write()
            .expect("model cache")
            .insert(id.to_string(), artifact.clone());
        Ok(artifact)
    }

    /// Persist a trained artifact and its entry. If another writer already
    /// committed the same id, that entry wins.
    pub fn commit_model(
        &self,
        model_id: &str,
        dataset_id: &str,
        artifact: TrainedArtifact,
    ) -> ServiceResult<ModelRegistryEntry> {
        check_id(model_id)?;
        let _guard = self.commit.lock().expect("commit lock");
        if let Ok(existing) = self.model_entry(model_id) {
            return Ok(existing);
        }
        let artifact_path = format!("models/{model_id}.json");
        write_atomic(&self.root.join(&artifact_path), artifact.to_json()?.as_bytes())?;
        let entry = ModelRegistryEntry {
            model_id: model_id.to_string(),
            kind: artifact.kind,
            service: artifact.service,
            schema_version: artifact.schema_version,
            created_at: now(),
            artifact_path,
            dataset_id: dataset_id.to_string(),
            seed: artifact.seed,
            cv_report: artifact.cv_report.clone(),
        };
        write_atomic(
            &self.model_dir().join(format!("{model_id}.entry.json")),
            serde_json::to_string_pretty(&entry)?.as_bytes(),
        )?;
        self.models
            .write()
            .expect("model cache")
            .insert(model_id.to_string(), Arc::new(artifact));
        Ok(entry)
    }

    pub fn commit_policy(
        &self,
        model_id: &str,
        dataset_id: &str,
        policy: CutoffPolicy,
        metrics: InterventionMetrics,
    ) -> ServiceResult<PolicyRecord> {
        let record = PolicyRecord {
            model_id: model_id.to_string(),
            dataset_id: dataset_id.to_string(),
            fractions: policy.fractions,
            policy,
            metrics,
            committed_at: now(),
        };
        let _guard = self.commit.lock().expect("commit lock");
        write_atomic(
            &self.root.join("policies").join(format!("{model_id}.json")),
            serde_json::to_string_pretty(&record)?.as_bytes(),
        )?;
        Ok(record)
    }

    pub fn policy(&self, model_id: &str) -> ServiceResult<Option<PolicyRecord>> {
        check_id(model_id)?;
        match self.read_json(&self.root.join("policies").join(format!("{model_id}.json")), "policy", model_id) {
            Ok(p) => Ok(Some(p)),
            Err(e) if e.kind == crate::error::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e),
        }
    }
}
