//! End-to-end training: split, bin, encode, fit or tune, and score the
//! held-out set.

use serde::{Deserialize, Serialize};

use crate::dataset::{
    class_weights, fit_bins, split, DesignMatrix, EncodeOptions, FeatureSchema, RecordSet, Service, Variable,
    DEFAULT_MAX_BINS, DEFAULT_MIN_LEAF_FRACTION,
};
use crate::error::{Error, Result};
use crate::evaluation::{auroc, evaluate_policy, CutoffPolicy, CvPlan, CvReport, GroupFractions, InterventionMetrics};
use crate::model::Scorer;
use crate::strategy::{FittedModel, GridMode, ModelKind, ModelStrategy};

pub const ARTIFACT_SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_TRAIN_FRACTION: f64 = 0.7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineOptions {
    pub seed: u64,
    pub train_fraction: f64,
    pub service: Option<Service>,
    /// Overrides the family's default variable list.
    pub variables: Option<Vec<Variable>>,
    pub interactions: Vec<(Variable, Variable)>,
    pub max_bins: usize,
    pub min_leaf_fraction: f64,
    /// Hyperparameter search; `None` fits the family defaults.
    pub tuning: Option<GridMode>,
    /// Cross-validation plan for tuning and for the reported CV AUROC.
    pub cv: Option<CvPlan>,
    pub fractions: GroupFractions,
}

impl PipelineOptions {
    pub fn new(seed: u64) -> Self {
        PipelineOptions {
            seed,
            train_fraction: DEFAULT_TRAIN_FRACTION,
            service: None,
            variables: None,
            interactions: Vec::new(),
            max_bins: DEFAULT_MAX_BINS,
            min_leaf_fraction: DEFAULT_MIN_LEAF_FRACTION,
            tuning: None,
            cv: None,
            fractions: GroupFractions::default(),
        }
    }

    fn encode_options(&self, strategy: &dyn ModelStrategy) -> EncodeOptions {
        let mut opts = strategy.encode_options();
        if let Some(v) = &self.variables {
            opts.variables = v.clone();
        }
        opts.interactions = self.interactions.clone();
        opts
    }
}

/// Ranking and intervention-group quality of a scored record set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub n_records: usize,
    pub auroc: f64,
    pub coverage: f64,
    pub risk: f64,
    pub policy: CutoffPolicy,
    pub metrics: InterventionMetrics,
}

pub fn evaluate_scores(scored: &[(u64, f64, u8)], fractions: GroupFractions) -> Result<Evaluation> {
    let scores: Vec<f64> = scored.iter().map(|s| s.1).collect();
    let labels: Vec<u8> = scored.iter().map(|s| s.2).collect();
    let a = auroc(&scores, &labels)?;
    let (policy, metrics) = evaluate_policy(scored, fractions)?;
    Ok(Evaluation {
        n_records: scored.len(),
        auroc: a,
        coverage: metrics.coverage,
        risk: metrics.risk,
        policy,
        metrics,
    })
}

/// A trained model with everything needed to score new records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedArtifact {
    pub schema_version: u32,
    pub kind: ModelKind,
    pub service: Option<Service>,
    pub seed: u64,
    pub hyperparameters: serde_json::Value,
    pub cv_report: Option<CvReport>,
    pub test_metrics: Evaluation,
    pub model: FittedModel,
}

impl TrainedArtifact {
    pub fn feature_schema(&self) -> &FeatureSchema {
        self.model.feature_schema()
    }

    pub fn encode(&self, records: &RecordSet) -> Result<DesignMatrix> {
        self.feature_schema().encode(records)
    }

    /// `(record_id, probability)` in record order.
    pub fn score_records(&self, records: &RecordSet) -> Result<Vec<(u64, f64)>> {
        let x = self.encode(records)?;
        let p = self.model.score_matrix(&x)?;
        Ok(x.row_ids().iter().copied().zip(p).collect())
    }

    pub fn evaluate(&self, records: &RecordSet, fractions: GroupFractions) -> Result<Evaluation> {
        let scored: Vec<(u64, f64, u8)> = self
            .score_records(records)?
            .into_iter()
            .zip(records.labels())
            .map(|((id, p), y)| (id, p, y))
            .collect();
        evaluate_scores(&scored, fractions)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut de = serde_json::Deserializer::from_str(text);
        de.disable_recursion_limit();
        let artifact = TrainedArtifact::deserialize(&mut de)?;
        de.end()?;
        if artifact.schema_version != ARTIFACT_SCHEMA_VERSION {
            return Err(Error::Schema(format!(
                "artifact schema version {} (expected {ARTIFACT_SCHEMA_VERSION})",
                artifact.schema_version
            )));
        }
        Ok(artifact)
    }
}

/// Train `strategy` on a stratified split of `records`, with bins and
/// levels learned from the training part only, and evaluate on the rest.
pub fn train_model(records: &RecordSet, strategy: &dyn ModelStrategy, opts: &PipelineOptions) -> Result<TrainedArtifact> {
    let records = match opts.service {
        Some(s) => records.filter_service(s),
        None => records.clone(),
    };
    if records.is_empty() {
        return Err(Error::Validation("no records for the requested service".into()));
    }
    let (train, test) = split(&records, opts.train_fraction, true, opts.seed)?;
    let bins = fit_bins(&train, opts.max_bins, opts.min_leaf_fraction)?;
    let schema = FeatureSchema::fit(&train, &bins, &opts.encode_options(strategy))?;
    let x_train = schema.encode(&train)?;
    let x_test = schema.encode(&test)?;
    let weights = class_weights(x_train.labels())?;

    let (model, cv_report, hyperparameters) = match opts.tuning {
        Some(grid) => {
            let plan = opts.cv.unwrap_or(CvPlan::new(5, 1)?);
            let tuned = strategy.tune(&x_train, weights, grid, plan, opts.seed)?;
            (tuned.model, Some(tuned.report), tuned.hyperparameters)
        }
        None => {
            let report = match opts.cv {
                Some(plan) => Some(strategy.cross_validate(&x_train, weights, plan, opts.seed)?),
                None => None,
            };
            let model = strategy.fit(&x_train, weights, opts.seed)?;
            (model, report, strategy.default_hyperparameters(x_train.width()))
        }
    };

    let p = model.score_matrix(&x_test)?;
    let scored: Vec<(u64, f64, u8)> = x_test
        .row_ids()
        .iter()
        .zip(p)
        .zip(x_test.labels())
        .map(|((&id, p), &y)| (id, p, y))
        .collect();
    let test_metrics = evaluate_scores(&scored, opts.fractions)?;
    Ok(TrainedArtifact {
        schema_version: ARTIFACT_SCHEMA_VERSION,
        kind: strategy.kind(),
        service: opts.service,
        seed: opts.seed,
        hyperparameters,
        cv_report,
        test_metrics,
        model,
    })
}
