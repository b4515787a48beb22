//! Model families behind one trait, looked up by name.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dataset::{ClassWeights, DesignMatrix, EncodeOptions, FeatureSchema};
use crate::error::{Error, Result};
use crate::evaluation::{cross_validate, CvPlan, CvReport};
use crate::forest::{fit_forest, grid_search_rf_with, ForestModel, ForestParams, RfGrid};
use crate::linear::{
    fit_l1_logistic_traced, penalty_lambdas, penalty_path_with, select_penalty, FittedLinearModel, SolverOptions,
    DEFAULT_SELECTION_DELTA,
};
use crate::model::Scorer;
use crate::neural::{fit_mlp, grid_search_nn_with, MlpModel, NnCell, NnGrid, TrainConfig};

pub const DEFAULT_LAMBDA: f64 = 0.01;
pub const DEFAULT_NN_ITERATIONS: usize = 800;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Linear,
    Forest,
    Mlp,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Linear => "linear",
            ModelKind::Forest => "forest",
            ModelKind::Mlp => "mlp",
        }
    }

    /// Short tag used in comparison tables.
    pub fn tag(self) -> &'static str {
        match self {
            ModelKind::Linear => "LASSO",
            ModelKind::Forest => "RF",
            ModelKind::Mlp => "NN",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridMode {
    Fast,
    Full,
}

impl FromStr for GridMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fast" => Ok(GridMode::Fast),
            "full" => Ok(GridMode::Full),
            other => Err(Error::Parameter(format!("grid must be fast or full, got {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "model", rename_all = "snake_case")]
pub enum FittedModel {
    Linear(FittedLinearModel),
    Forest(ForestModel),
    Mlp(MlpModel),
}

impl FittedModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            FittedModel::Linear(_) => ModelKind::Linear,
            FittedModel::Forest(_) => ModelKind::Forest,
            FittedModel::Mlp(_) => ModelKind::Mlp,
        }
    }

    pub fn feature_schema(&self) -> &FeatureSchema {
        match self {
            FittedModel::Linear(m) => &m.feature_schema,
            FittedModel::Forest(m) => &m.feature_schema,
            FittedModel::Mlp(m) => &m.feature_schema,
        }
    }

    pub fn as_mlp(&self) -> Option<&MlpModel> {
        match self {
            FittedModel::Mlp(m) => Some(m),
            _ => None,
        }
    }
}

impl Scorer for FittedModel {
    fn width(&self) -> usize {
        match self {
            FittedModel::Linear(m) => m.width(),
            FittedModel::Forest(m) => m.width(),
            FittedModel::Mlp(m) => m.width(),
        }
    }

    fn score_row(&self, row: &[f64]) -> f64 {
        match self {
            FittedModel::Linear(m) => m.score_row(row),
            FittedModel::Forest(m) => m.score_row(row),
            FittedModel::Mlp(m) => m.score_row(row),
        }
    }
}

/// Result of hyperparameter selection followed by a refit on all rows.
#[derive(Debug, Clone)]
pub struct Tuned {
    pub model: FittedModel,
    pub report: CvReport,
    pub hyperparameters: serde_json::Value,
}

pub trait ModelStrategy: Send + Sync {
    fn name(&self) -> &'static str;

    fn kind(&self) -> ModelKind;

    /// One-hot layout this family trains on.
    fn encode_options(&self) -> EncodeOptions;

    fn default_hyperparameters(&self, width: usize) -> serde_json::Value;

    /// Fit with the family's default hyperparameters.
    fn fit(&self, x: &DesignMatrix, weights: ClassWeights, seed: u64) -> Result<FittedModel>;

    /// Cross-validated AUROC of the default hyperparameters.
    fn cross_validate(&self, x: &DesignMatrix, weights: ClassWeights, plan: CvPlan, seed: u64) -> Result<CvReport> {
        cross_validate(|train, s| self.fit(train, weights, s), x, plan, seed, self.kind().tag())
    }

    /// Pick hyperparameters by cross-validation, then refit on all of `x`.
    fn tune(&self, x: &DesignMatrix, weights: ClassWeights, grid: GridMode, plan: CvPlan, seed: u64) -> Result<Tuned>;
}

pub struct LinearStrategy;

impl LinearStrategy {
    fn fit_lambda(x: &DesignMatrix, weights: ClassWeights, lambda: f64) -> Result<FittedLinearModel> {
        Ok(fit_l1_logistic_traced(x, lambda, weights, &SolverOptions::default(), None)?.0)
    }
}

impl ModelStrategy for LinearStrategy {
    fn name(&self) -> &'static str {
        "linear"
    }

    fn kind(&self) -> ModelKind {
        ModelKind::Linear
    }

    fn encode_options(&self) -> EncodeOptions {
        EncodeOptions {
            drop_reference: true,
            ..EncodeOptions::default()
        }
    }

    fn default_hyperparameters(&self, _width: usize) -> serde_json::Value {
        serde_json::json!({ "lambda": DEFAULT_LAMBDA })
    }

    fn fit(&self, x: &DesignMatrix, weights: ClassWeights, _seed: u64) -> Result<FittedModel> {
        Ok(FittedModel::Linear(Self::fit_lambda(x, weights, DEFAULT_LAMBDA)?))
    }

    fn tune(&self, x: &DesignMatrix, weights: ClassWeights, _grid: GridMode, plan: CvPlan, seed: u64) -> Result<Tuned> {
        let path = penalty_path_with(x, weights, plan, seed, &penalty_lambdas(), &SolverOptions::default())?;
        let lambda = select_penalty(&path, DEFAULT_SELECTION_DELTA)?;
        let report = cross_validate(|train, _| Self::fit_lambda(train, weights, lambda), x, plan, seed, "LASSO")?;
        Ok(Tuned {
            model: FittedModel::Linear(Self::fit_lambda(x, weights, lambda)?),
            report,
            hyperparameters: serde_json::json!({ "lambda": lambda }),
        })
    }
}

pub struct ForestStrategy;

impl ModelStrategy for ForestStrategy {
    fn name(&self) -> &'static str {
        "forest"
    }

    fn kind(&self) -> ModelKind {
        ModelKind::Forest
    }

    fn encode_options(&self) -> EncodeOptions {
        EncodeOptions::default()
    }

    fn default_hyperparameters(&self, _width: usize) -> serde_json::Value {
        serde_json::to_value(ForestParams::default()).expect("params serialize")
    }

    fn fit(&self, x: &DesignMatrix, weights: ClassWeights, seed: u64) -> Result<FittedModel> {
        Ok(FittedModel::Forest(fit_forest(x, weights, &ForestParams::default(), seed)?))
    }

    fn tune(&self, x: &DesignMatrix, weights: ClassWeights, grid: GridMode, plan: CvPlan, seed: u64) -> Result<Tuned> {
        let grid = match grid {
            GridMode::Fast => RfGrid::fast(),
            GridMode::Full => RfGrid::full(),
        };
        let outcome = grid_search_rf_with(x, weights, &grid, plan, seed)?;
        Ok(Tuned {
            model: FittedModel::Forest(fit_forest(x, weights, &outcome.best, seed)?),
            report: outcome.report,
            hyperparameters: serde_json::to_value(outcome.best)?,
        })
    }
}

pub struct MlpStrategy;

impl MlpStrategy {
    /// Hidden width `N` (inside the searched range `N/2..2N`).
    pub fn default_cell(width: usize) -> NnCell {
        NnCell {
            hidden: width.max(1),
            n_iterations: DEFAULT_NN_ITERATIONS,
        }
    }
}

impl ModelStrategy for MlpStrategy {
    fn name(&self) -> &'static str {
        "mlp"
    }

    fn kind(&self) -> ModelKind {
        ModelKind::Mlp
    }

    fn encode_options(&self) -> EncodeOptions {
        EncodeOptions::default()
    }

    fn default_hyperparameters(&self, width: usize) -> serde_json::Value {
        serde_json::to_value(Self::default_cell(width)).expect("cell serializes")
    }

    fn fit(&self, x: &DesignMatrix, weights: ClassWeights, seed: u64) -> Result<FittedModel> {
        let cell = Self::default_cell(x.width());
        Ok(FittedModel::Mlp(fit_mlp(x, cell.hidden, &TrainConfig::new(cell.n_iterations, weights), seed)?))
    }

    fn tune(&self, x: &DesignMatrix, weights: ClassWeights, grid: GridMode, plan: CvPlan, seed: u64) -> Result<Tuned> {
        let grid = match grid {
            GridMode::Fast => NnGrid::fast(x.width()),
            GridMode::Full => NnGrid::full(x.width()),
        };
        let outcome = grid_search_nn_with(x, weights, &grid, plan, seed)?;
        let best = outcome.best;
        Ok(Tuned {
            model: FittedModel::Mlp(fit_mlp(x, best.hidden, &best.train_config(weights), seed)?),
            report: outcome.report,
            hyperparameters: serde_json::to_value(best)?,
        })
    }
}

/// Strategies by name, with short aliases.
#[derive(Clone, Default)]
pub struct StrategyRegistry {
    strategies: BTreeMap<String, Arc<dyn ModelStrategy>>,
    aliases: BTreeMap<String, String>,
}

impl StrategyRegistry {
    pub fn with_defaults() -> Self {
        let mut r = StrategyRegistry::default();
        r.register(Arc::new(LinearStrategy), &["lr", "lasso"]);
        r.register(Arc::new(ForestStrategy), &["rf"]);
        r.register(Arc::new(MlpStrategy), &["nn"]);
        r
    }

    pub fn register(&mut self, strategy: Arc<dyn ModelStrategy>, aliases: &[&str]) {
        let name = strategy.name().to_string();
        for a in aliases {
            self.aliases.insert((*a).to_string(), name.clone());
        }
        self.strategies.insert(name, strategy);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn ModelStrategy>> {
        let key = name.trim().to_ascii_lowercase();
        let canonical = self.aliases.get(&key).unwrap_or(&key);
        self.strategies
            .get(canonical)
            .cloned()
            .ok_or_else(|| Error::UnknownStrategy(name.to_string()))
    }

    pub fn for_kind(&self, kind: ModelKind) -> Result<Arc<dyn ModelStrategy>> {
        self.get(kind.name())
    }

    pub fn names(&self) -> Vec<&str> {
        self.strategies.keys().map(String::as_str).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lookup_by_name_and_alias() {
        let r = StrategyRegistry::with_defaults();
        assert_eq!(r.names(), vec!["forest", "linear", "mlp"]);
        assert_eq!(r.get("nn").unwrap().kind(), ModelKind::Mlp);
        assert_eq!(r.get("RF").unwrap().kind(), ModelKind::Forest);
        assert_eq!(r.get("lr").unwrap().kind(), ModelKind::Linear);
        assert!(matches!(r.get("svm"), Err(Error::UnknownStrategy(_))));
    }

    #[test]
    fn linear_drops_reference_levels() {
        let r = StrategyRegistry::with_defaults();
        assert!(r.get("linear").unwrap().encode_options().drop_reference);
        assert!(!r.get("forest").unwrap().encode_options().drop_reference);
        assert!(!r.get("mlp").unwrap().encode_options().drop_reference);
    }
}
