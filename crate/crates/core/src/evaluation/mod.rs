//! Ranking metrics, repeated cross-validation, cut-off tuning and model
//! comparison.

mod auroc;
mod compare;
mod cv;
mod grid;
mod policy;

pub use auroc::auroc;
pub use compare::{compare_models, split_tag, ComparisonRow, ComparisonTable};
pub use grid::{pick_best, GridCell, GridOutcome};
pub use cv::{cross_validate, cv_splits, mean_std, stratified_folds, CvPlan, CvReport, CvSplit};
pub use policy::{
    assign_groups, coverage_risk, evaluate_policy, tune_cutoffs, tune_cutoffs_positional, CutoffPolicy, Group,
    GroupFractions, InterventionMetrics, Threshold,
};
