//! Repeated stratified k-fold cross-validation.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::auroc::auroc;
use crate::dataset::DesignMatrix;
use crate::error::{Error, Result};
use crate::model::Scorer;
use crate::rng::{derive_seed, substream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CvPlan {
    pub folds: usize,
    pub repetitions: usize,
}

impl Default for CvPlan {
    /// 10-fold cross-validation repeated 10 times.
    fn default() -> Self {
        CvPlan {
            folds: 10,
            repetitions: 10,
        }
    }
}

impl CvPlan {
    pub fn new(folds: usize, repetitions: usize) -> Result<Self> {
        if folds < 2 || repetitions < 1 {
            return Err(Error::Parameter(format!(
                "need folds >= 2 and repetitions >= 1, got {folds} x {repetitions}"
            )));
        }
        Ok(CvPlan { folds, repetitions })
    }

    pub fn n_scores(&self) -> usize {
        self.folds * self.repetitions
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub model_tag: String,
    pub folds: usize,
    pub repetitions: usize,
    /// Repetition-major: index `r * folds + f`.
    pub fold_scores: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

impl CvReport {
    pub fn from_scores(model_tag: impl Into<String>, plan: CvPlan, fold_scores: Vec<f64>) -> Self {
        let (mean, std) = mean_std(&fold_scores);
        CvReport {
            model_tag: model_tag.into(),
            folds: plan.folds,
            repetitions: plan.repetitions,
            fold_scores,
            mean,
            std,
        }
    }
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CvSplit {
    pub repetition: usize,
    pub fold: usize,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    /// Seed handed to the trainer for this cell.
    pub seed: u64,
}

/// Fold index per row. Each class is shuffled and dealt round-robin so
/// every fold gets its share of both classes.
pub fn stratified_folds(labels: &[u8], folds: usize, rng: &mut impl rand::Rng) -> Vec<usize> {
    let mut assignment = vec![0; labels.len()];
    let mut dealt = 0;
    for class in [0u8, 1] {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        members.shuffle(rng);
        for i in members {
            assignment[i] = dealt % folds;
            dealt += 1;
        }
    }
    assignment
}

/// All (repetition, fold) train/test index sets. Repetition `r` shuffles
/// with its own substream of `seed`.
pub fn cv_splits(labels: &[u8], plan: CvPlan, seed: u64) -> Result<Vec<CvSplit>> {
    if labels.len() < 2 * plan.folds {
        return Err(Error::Parameter(format!(
            "{} rows cannot fill {} folds of at least 2",
            labels.len(),
            plan.folds
        )));
    }
    let mut out = Vec::with_capacity(plan.n_scores());
    for r in 0..plan.repetitions {
        let mut rng = substream(seed, r as u64);
        let assignment = stratified_folds(labels, plan.folds, &mut rng);
        for f in 0..plan.folds {
            let (test, train): (Vec<usize>, Vec<usize>) =
                (0..labels.len()).partition(|&i| assignment[i] == f);
            out.push(CvSplit {
                repetition: r,
                fold: f,
                train,
                test,
                seed: derive_seed(seed, r as u64, f as u64),
            });
        }
    }
    Ok(out)
}

/// Out-of-fold AUROC for every (repetition, fold). The trainer receives
/// the training rows and a per-cell seed.
pub fn cross_validate<F, S>(trainer: F, x: &DesignMatrix, plan: CvPlan, seed: u64, model_tag: &str) -> Result<CvReport>
where
    F: Fn(&DesignMatrix, u64) -> Result<S> + Sync,
    S: Scorer,
{
    let splits = cv_splits(x.labels(), plan, seed)?;
    let scores = splits
        .par_iter()
        .map(|s| {
            let wrap = |e: Error| Error::Fold {
                repetition: s.repetition,
                fold: s.fold,
                source: Box::new(e),
            };
            let model = trainer(&x.subset(&s.train), s.seed).map_err(wrap)?;
            let test = x.subset(&s.test);
            let predicted = model.score_matrix(&test).map_err(wrap)?;
            auroc(&predicted, test.labels()).map_err(wrap)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(CvReport::from_scores(model_tag, plan, scores))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ConstantScorer;

    fn toy(n: usize) -> DesignMatrix {
        let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64]).collect();
        let labels = (0..n).map(|i| u8::from(i % 3 == 0)).collect();
        DesignMatrix::from_rows(&rows, labels).unwrap()
    }

    #[test]
    fn constant_trainer_scores_half_everywhere() {
        let x = toy(60);
        let report = cross_validate(|_, _| Ok(ConstantScorer::new(1, 0.3)), &x, CvPlan::default(), 4, "const").unwrap();
        assert_eq!(report.fold_scores.len(), 100);
        assert!(report.fold_scores.iter().all(|&s| s == 0.5));
        assert_eq!(report.std, 0.0);
    }

    #[test]
    fn deterministic_per_seed() {
        let x = toy(80);
        let trainer = |train: &DesignMatrix, _seed: u64| {
            // score = distance from the training mean of positives
            let pos: Vec<f64> = train.rows().zip(train.labels()).filter(|(_, &y)| y == 1).map(|(r, _)| r[0]).collect();
            let m = pos.iter().sum::<f64>() / pos.len() as f64;
            Ok(crate::model::FnScorer::new(1, move |r: &[f64]| -(r[0] - m).abs()))
        };
        let a = cross_validate(trainer, &x, CvPlan::new(5, 3).unwrap(), 11, "t").unwrap();
        let b = cross_validate(trainer, &x, CvPlan::new(5, 3).unwrap(), 11, "t").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.fold_scores.len(), 15);
    }

    #[test]
    fn folds_are_stratified_and_disjoint() {
        let labels: Vec<u8> = (0..53).map(|i| u8::from(i % 4 == 0)).collect();
        let splits = cv_splits(&labels, CvPlan::new(5, 2).unwrap(), 0).unwrap();
        for rep in 0..2 {
            let mut seen = vec![0; labels.len()];
            for s in splits.iter().filter(|s| s.repetition == rep) {
                for &i in &s.test {
                    seen[i] += 1;
                }
                let pos = s.test.iter().filter(|&&i| labels[i] == 1).count();
                assert!((2..=3).contains(&pos), "fold has {pos} positives");
                assert_eq!(s.train.len() + s.test.len(), labels.len());
            }
            assert!(seen.iter().all(|&c| c == 1));
        }
    }

    #[test]
    fn trainer_failure_names_the_fold() {
        let x = toy(40);
        let err = cross_validate(
            |_, _| -> Result<ConstantScorer> { Err(Error::Parameter("boom".into())) },
            &x,
            CvPlan::new(4, 1).unwrap(),
            0,
            "bad",
        )
        .unwrap_err();
        assert!(matches!(err, Error::Fold { repetition: 0, fold: 0, .. }));
    }

    #[test]
    fn mean_std_recomputes() {
        let r = CvReport::from_scores("x", CvPlan::new(2, 2).unwrap(), vec![0.5, 0.7, 0.6, 0.8]);
        let (m, s) = mean_std(&r.fold_scores);
        assert!((r.mean - m).abs() < 1e-12 && (r.std - s).abs() < 1e-12);
        assert!((r.mean - 0.65).abs() < 1e-12);
    }
}
