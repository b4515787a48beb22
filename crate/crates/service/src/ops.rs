//! Operations shared by the CLI and the HTTP API.

use noshow_core::dataset::{RecordSet, Service};
use noshow_core::evaluation::{CvPlan, GroupFractions};
use noshow_core::pipeline::{train_model, PipelineOptions, TrainedArtifact};
use noshow_core::strategy::{GridMode, StrategyRegistry};
use serde::{Deserialize, Serialize};

use crate::error::{ServiceError, ServiceResult};

pub const DEFAULT_FOLDS: usize = 5;
pub const DEFAULT_REPS: usize = 1;

/// Everything that determines a trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRequest {
    pub kind: String,
    pub seed: u64,
    #[serde(default)]
    pub service: Option<Service>,
    #[serde(default)]
    pub grid: Option<GridMode>,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default)]
    pub fractions: Option<[f64; 3]>,
}

fn default_folds() -> usize {
    DEFAULT_FOLDS
}

fn default_reps() -> usize {
    DEFAULT_REPS
}

pub fn fractions(v: Option<[f64; 3]>) -> ServiceResult<GroupFractions> {
    match v {
        Some([a, b, c]) => Ok(GroupFractions::new(a, b, c)?),
        None => Ok(GroupFractions::default()),
    }
}

pub fn parse_service(text: &str) -> ServiceResult<Service> {
    text.parse::<Service>().map_err(ServiceError::validation)
}

pub fn train(registry: &StrategyRegistry, records: &RecordSet, req: &TrainRequest) -> ServiceResult<TrainedArtifact> {
    let strategy = registry.get(&req.kind)?;
    let mut opts = PipelineOptions::new(req.seed);
    opts.service = req.service;
    opts.tuning = req.grid;
    opts.cv = Some(CvPlan::new(req.folds, req.reps)?);
    opts.fractions = fractions(req.fractions)?;
    Ok(train_model(records, strategy.as_ref(), &opts)?)
}

/// Records the artifact applies to: its service only, if it has one.
pub fn scope(artifact: &TrainedArtifact, records: &RecordSet) -> RecordSet {
    match artifact.service {
        Some(s) => records.filter_service(s),
        None => records.clone(),
    }
}

/// `(record_id, probability, label)` for every in-scope record.
pub fn score_labelled(artifact: &TrainedArtifact, records: &RecordSet) -> ServiceResult<Vec<(u64, f64, u8)>> {
    let records = scope(artifact, records);
    if records.is_empty() {
        return Err(ServiceError::validation("no records for the model's service"));
    }
    Ok(artifact
        .score_records(&records)?
        .into_iter()
        .zip(records.labels())
        .map(|((id, p), y)| (id, p, y))
        .collect())
}
