//! L1-penalized weighted logistic regression.
//!
//! Minimizes `(1/n) sum_i w_i logloss(y_i, sigmoid(b0 + b'x_i)) + lambda |b|_1`
//! with the intercept unpenalized, by accelerated proximal gradient with a
//! monotone safeguard and backtracking.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{ClassWeights, DesignMatrix, FeatureSchema, WeightedPatterns};
use crate::error::{Error, Result};
use crate::evaluation::{auroc, cv_splits, mean_std, CvPlan};
use crate::model::Scorer;

pub const LINEAR_SCHEMA_VERSION: u32 = 1;

/// Default AUROC slack when picking the sparsest near-best penalty.
pub const DEFAULT_SELECTION_DELTA: f64 = 0.005;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Relative objective change that counts as converged.
    pub tol: f64,
    pub max_iter: usize,
    /// Largest allowed violation of the subgradient optimality conditions.
    pub kkt_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-7,
            max_iter: 10_000,
            kkt_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedLinearModel {
    pub schema_version: u32,
    pub feature_schema: FeatureSchema,
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub penalty_lambda: f64,
}

impl FittedLinearModel {
    pub fn n_nonzero(&self) -> usize {
        self.coefficients.iter().filter(|b| **b != 0.0).count()
    }

    pub fn logit(&self, row: &[f64]) -> f64 {
        self.intercept + dot(&self.coefficients, row)
    }

    pub fn predict_proba(&self, row: &[f64]) -> Result<f64> {
        self.predict(row)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: FittedLinearModel = serde_json::from_str(text)?;
        if model.coefficients.len() != model.feature_schema.width {
            return Err(Error::Dimension {
                expected: model.feature_schema.width,
                actual: model.coefficients.len(),
            });
        }
        Ok(model)
    }
}

impl Scorer for FittedLinearModel {
    fn width(&self) -> usize {
        self.coefficients.len()
    }

    fn score_row(&self, row: &[f64]) -> f64 {
        sigmoid(self.logit(row))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(z))` without overflow.
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Per-iteration record of a solve.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolverTrace {
    /// Penalized objective after each iteration (index 0 is the start).
    pub objectives: Vec<f64>,
    pub iterations: usize,
    pub kkt_violation: f64,
}

/// The smooth part of the objective over compressed patterns.
struct Problem<'a> {
    pats: &'a WeightedPatterns,
    inv_n: f64,
}

impl Problem<'_> {
    fn logits(&self, b0: f64, b: &[f64], z: &mut [f64]) {
        for (p, zp) in z.iter_mut().enumerate() {
            *zp = b0 + self.pats.dot(p, b);
        }
    }

    fn loss(&self, z: &[f64]) -> f64 {
        let mut total = 0.0;
        for (p, &zp) in z.iter().enumerate() {
            total += self.pats.pos_mass(p) * softplus(-zp) + self.pats.neg_mass(p) * softplus(zp);
        }
        total * self.inv_n
    }

    /// Gradient of the smooth loss; returns the intercept component.
    fn gradient(&self, z: &[f64], g: &mut [f64]) -> f64 {
        g.iter_mut().for_each(|v| *v = 0.0);
        let mut g0 = 0.0;
        for (p, &zp) in z.iter().enumerate() {
            let pos = self.pats.pos_mass(p);
            let r = sigmoid(zp) * (pos + self.pats.neg_mass(p)) - pos;
            if r == 0.0 {
                continue;
            }
            g0 += r;
            for (j, v) in self.pats.entries(p) {
                g[j] += r * v;
            }
        }
        for v in g.iter_mut() {
            *v *= self.inv_n;
        }
        g0 * self.inv_n
    }

    /// Upper bound on the Lipschitz constant of the gradient.
    fn lipschitz_bound(&self) -> f64 {
        let mut total = 0.0;
        for p in 0..self.pats.n_patterns() {
            let sq: f64 = self.pats.entries(p).map(|(_, v)| v * v).sum();
            total += (self.pats.pos_mass(p) + self.pats.neg_mass(p)) * (1.0 + sq);
        }
        (0.25 * total * self.inv_n).max(1e-12)
    }
}

/// Largest violation of the optimality conditions at `(g0, g)`.
fn kkt_violation(g0: f64, g: &[f64], b: &[f64], lambda: f64) -> f64 {
    let mut worst = g0.abs();
    for (&gj, &bj) in g.iter().zip(b) {
        let v = if bj == 0.0 {
            (gj.abs() - lambda).max(0.0)
        } else {
            (gj + lambda * bj.signum()).abs()
        };
        worst = worst.max(v);
    }
    worst
}

fn l1(b: &[f64]) -> f64 {
    b.iter().map(|v| v.abs()).sum()
}

/// Intercept-only optimum: `logit` of the weighted no-show share.
fn null_intercept(pats: &WeightedPatterns) -> Result<f64> {
    let pos: f64 = (0..pats.n_patterns()).map(|p| pats.pos_mass(p)).sum();
    let neg: f64 = (0..pats.n_patterns()).map(|p| pats.neg_mass(p)).sum();
    if pos <= 0.0 || neg <= 0.0 {
        return Err(Error::Validation("logistic fit needs both outcome classes".into()));
    }
    Ok((pos / neg).ln())
}

#[derive(Debug, Clone)]
struct Solution {
    b0: f64,
    b: Vec<f64>,
    trace: SolverTrace,
}

/// Smallest penalty at which every coefficient is zero.
fn lambda_max(problem: &Problem<'_>, b0_null: f64) -> f64 {
    let width = problem.pats.width();
    let z = vec![b0_null; problem.pats.n_patterns()];
    let mut g = vec![0.0; width];
    problem.gradient(&z, &mut g);
    g.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn solve(pats: &WeightedPatterns, lambda: f64, opts: &SolverOptions, start: Option<(f64, &[f64])>) -> Result<Solution> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Parameter(format!("penalty must be positive, got {lambda}")));
    }
    if pats.n_patterns() == 0 {
        return Err(Error::Validation("empty design matrix".into()));
    }
    let width = pats.width();
    let problem = Problem {
        pats,
        inv_n: 1.0 / pats.total_count(),
    };
    let b0_null = null_intercept(pats)?;

    let n_pat = pats.n_patterns();
    let mut z = vec![0.0; n_pat];
    let mut g = vec![0.0; width];

    // Above the critical penalty the all-zero vector is optimal outright.
    if lambda >= lambda_max(&problem, b0_null) {
        let b = vec![0.0; width];
        problem.logits(b0_null, &b, &mut z);
        let f = problem.loss(&z);
        let g0 = problem.gradient(&z, &mut g);
        return Ok(Solution {
            b0: b0_null,
            b,
            trace: SolverTrace {
                objectives: vec![f],
                iterations: 0,
                kkt_violation: kkt_violation(g0, &g, &vec![0.0; width], lambda),
            },
        });
    }

    let (mut x0, mut x) = match start {
        Some((b0, b)) if b.len() == width => (b0, b.to_vec()),
        _ => (b0_null, vec![0.0; width]),
    };
    problem.logits(x0, &x, &mut z);
    let mut fx = problem.loss(&z) + lambda * l1(&x);
    let mut objectives = vec![fx];

    let mut y0 = x0;
    let mut y = x.clone();
    let mut t = 1.0f64;
    let mut step = 1.0 / problem.lipschitz_bound();
    let mut zy = vec![0.0; n_pat];
    let mut gy = vec![0.0; width];
    let mut c = vec![0.0; width];
    let mut zc = vec![0.0; n_pat];
    let mut last_kkt = f64::INFINITY;

    for iter in 1..=opts.max_iter {
        problem.logits(y0, &y, &mut zy);
        let fy = problem.loss(&zy);
        let gy0 = problem.gradient(&zy, &mut gy);

        // Backtracking on the quadratic upper model around y.
        let (c0, fc) = loop {
            let c0 = y0 - step * gy0;
            for j in 0..width {
                c[j] = soft_threshold(y[j] - step * gy[j], step * lambda);
            }
            problem.logits(c0, &c, &mut zc);
            let fc = problem.loss(&zc);
            let mut lin = gy0 * (c0 - y0);
            let mut sq = (c0 - y0).powi(2);
            for j in 0..width {
                let d = c[j] - y[j];
                lin += gy[j] * d;
                sq += d * d;
            }
            if fc <= fy + lin + sq / (2.0 * step) + 1e-15 * fy.abs() || step < 1e-20 {
                break (c0, fc);
            }
            step *= 0.5;
        };
        let fc_total = fc + lambda * l1(&c);

        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let prev_f = fx;
        if fc_total <= fx {
            // y <- c + (t - 1)/t_next (c - x)
            let m = (t - 1.0) / t_next;
            y0 = c0 + m * (c0 - x0);
            for j in 0..width {
                y[j] = c[j] + m * (c[j] - x[j]);
            }
            x0 = c0;
            x.copy_from_slice(&c);
            fx = fc_total;
            t = t_next;
        } else {
            // Monotone safeguard: keep x and restart the momentum there.
            y0 = x0;
            y.copy_from_slice(&x);
            t = 1.0;
        }
        objectives.push(fx);

        let rel = (prev_f - fx).abs() / fx.abs().max(1.0);
        if rel < opts.tol {
            problem.logits(x0, &x, &mut z);
            let g0 = problem.gradient(&z, &mut g);
            last_kkt = kkt_violation(g0, &g, &x, lambda);
            if last_kkt <= opts.kkt_tol {
                return Ok(Solution {
                    b0: x0,
                    b: x,
                    trace: SolverTrace {
                        objectives,
                        iterations: iter,
                        kkt_violation: last_kkt,
                    },
                });
            }
        }
    }
    log::debug!("l1 logistic stopped at max_iter with kkt violation {last_kkt}");
    Err(Error::Convergence {
        iterations: opts.max_iter,
        last_objective: fx,
    })
}

/// Fit at one penalty with default solver options apart from `tol` and
/// `max_iter`.
pub fn fit_l1_logistic(
    x: &DesignMatrix,
    lambda: f64,
    weights: ClassWeights,
    tol: f64,
    max_iter: usize,
) -> Result<FittedLinearModel> {
    let opts = SolverOptions {
        tol,
        max_iter,
        ..SolverOptions::default()
    };
    fit_l1_logistic_traced(x, lambda, weights, &opts, None).map(|(m, _)| m)
}

/// Fit with full options, optionally warm-started from another model,
/// returning the per-iteration trace.
pub fn fit_l1_logistic_traced(
    x: &DesignMatrix,
    lambda: f64,
    weights: ClassWeights,
    opts: &SolverOptions,
    warm: Option<&FittedLinearModel>,
) -> Result<(FittedLinearModel, SolverTrace)> {
    if x.n_rows() == 0 {
        return Err(Error::Validation("empty design matrix".into()));
    }
    let pats = WeightedPatterns::from_design(x, weights);
    let sol = solve(&pats, lambda, opts, warm.map(|m| (m.intercept, m.coefficients.as_slice())))?;
    let model = FittedLinearModel {
        schema_version: LINEAR_SCHEMA_VERSION,
        feature_schema: x.schema().clone(),
        intercept: sol.b0,
        coefficients: sol.b,
        penalty_lambda: lambda,
    };
    Ok((model, sol.trace))
}

/// Fits at every penalty in `lambdas`, warm-starting from the sparser
/// neighbour. Output order follows `lambdas`.
pub fn fit_path(
    x: &DesignMatrix,
    weights: ClassWeights,
    lambdas: &[f64],
    opts: &SolverOptions,
) -> Result<Vec<FittedLinearModel>> {
    let pats = WeightedPatterns::from_design(x, weights);
    let sols = solve_path(&pats, lambdas, opts)?;
    Ok(lambdas
        .iter()
        .zip(sols)
        .map(|(&lambda, sol)| FittedLinearModel {
            schema_version: LINEAR_SCHEMA_VERSION,
            feature_schema: x.schema().clone(),
            intercept: sol.b0,
            coefficients: sol.b,
            penalty_lambda: lambda,
        })
        .collect())
}

fn solve_path(pats: &WeightedPatterns, lambdas: &[f64], opts: &SolverOptions) -> Result<Vec<Solution>> {
    let mut order: Vec<usize> = (0..lambdas.len()).collect();
    order.sort_by(|&a, &b| lambdas[b].total_cmp(&lambdas[a]));
    let mut out: Vec<Option<Solution>> = vec![None; lambdas.len()];
    let mut prev: Option<(f64, Vec<f64>)> = None;
    for i in order {
        let lambda = lambdas[i];
        let sol = solve(pats, lambda, opts, prev.as_ref().map(|(b0, b)| (*b0, b.as_slice()))).map_err(|e| {
            Error::PathCell {
                lambda,
                source: Box::new(e),
            }
        })?;
        prev = Some((sol.b0, sol.b.clone()));
        out[i] = Some(sol);
    }
    Ok(out.into_iter().map(|s| s.expect("every lambda solved")).collect())
}

/// Thirty penalties: ten equally spaced values in each of (0, 0.1],
/// (0.1, 1] and (1, 10], each interval ending at its upper bound.
pub fn penalty_lambdas() -> Vec<f64> {
    let mut out = Vec::with_capacity(30);
    for (lo, hi) in [(0.0, 0.1), (0.1, 1.0), (1.0, 10.0)] {
        let step = (hi - lo) / 10.0;
        for k in 1..=10 {
            // Round to kill representation noise such as 0.30000000000000004.
            let v: f64 = lo + step * k as f64;
            out.push((v * 1e9).round() / 1e9);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathEntry {
    pub lambda: f64,
    pub mean_cv_auroc: f64,
    pub std_cv_auroc: f64,
    /// Mean count of nonzero coefficients over the CV fits.
    pub n_nonzero: f64,
    /// Worst optimality-condition violation among the CV fits.
    pub max_kkt_violation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltyPath {
    pub entries: Vec<PathEntry>,
}

/// Cross-validated AUROC and sparsity for each of the thirty penalties.
pub fn penalty_path(x: &DesignMatrix, weights: ClassWeights, cv_folds: usize, seed: u64) -> Result<PenaltyPath> {
    penalty_path_with(
        x,
        weights,
        CvPlan::new(cv_folds, 1)?,
        seed,
        &penalty_lambdas(),
        &SolverOptions::default(),
    )
}

pub fn penalty_path_with(
    x: &DesignMatrix,
    weights: ClassWeights,
    plan: CvPlan,
    seed: u64,
    lambdas: &[f64],
    opts: &SolverOptions,
) -> Result<PenaltyPath> {
    if lambdas.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Parameter("penalties must be strictly increasing".into()));
    }
    let splits = cv_splits(x.labels(), plan, seed)?;
    // One row per split: (auroc, nonzero, kkt) per lambda.
    let cells: Vec<Vec<(f64, usize, f64)>> = splits
        .par_iter()
        .map(|s| {
            let train = x.subset(&s.train);
            let test = x.subset(&s.test);
            let pats = WeightedPatterns::from_design(&train, weights);
            let sols = solve_path(&pats, lambdas, opts)?;
            sols.into_iter()
                .zip(lambdas)
                .map(|(sol, &lambda)| {
                    let scores: Vec<f64> = test.rows().map(|r| sigmoid(sol.b0 + dot(&sol.b, r))).collect();
                    let a = auroc(&scores, test.labels()).map_err(|e| Error::PathCell {
                        lambda,
                        source: Box::new(e),
                    })?;
                    let nz = sol.b.iter().filter(|v| **v != 0.0).count();
                    Ok((a, nz, sol.trace.kkt_violation))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let entries = lambdas
        .iter()
        .enumerate()
        .map(|(i, &lambda)| {
            let aurocs: Vec<f64> = cells.iter().map(|c| c[i].0).collect();
            let (mean, std) = mean_std(&aurocs);
            PathEntry {
                lambda,
                mean_cv_auroc: mean,
                std_cv_auroc: std,
                n_nonzero: cells.iter().map(|c| c[i].1 as f64).sum::<f64>() / cells.len() as f64,
                max_kkt_violation: cells.iter().map(|c| c[i].2).fold(0.0, f64::max),
            }
        })
        .collect();
    Ok(PenaltyPath { entries })
}

/// The sparsest penalty whose mean AUROC is within `delta` of the best;
/// ties go to the larger penalty.
pub fn select_penalty(path: &PenaltyPath, delta: f64) -> Result<f64> {
    let best = path
        .entries
        .iter()
        .map(|e| e.mean_cv_auroc)
        .fold(f64::NEG_INFINITY, f64::max);
    path.entries
        .iter()
        .filter(|e| e.mean_cv_auroc >= best - delta)
        .min_by(|a, b| a.n_nonzero.total_cmp(&b.n_nonzero).then(b.lambda.total_cmp(&a.lambda)))
        .map(|e| e.lambda)
        .ok_or_else(|| Error::Parameter("empty penalty path".into()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OddsRatioRow {
    pub column_name: String,
    /// Mean coefficient on the no-show logit.
    pub mean_coefficient: f64,
    /// `exp(mean_coefficient)`: odds of a no-show against the reference level.
    pub odds_ratio: f64,
    /// `exp(-mean_coefficient)`: odds of attending against the reference
    /// level, so values below 1 flag higher no-show odds.
    pub show_odds_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OddsRatioTable {
    pub rows: Vec<OddsRatioRow>,
}

impl OddsRatioTable {
    pub fn get(&self, column_name: &str) -> Option<&OddsRatioRow> {
        self.rows.iter().find(|r| r.column_name == column_name)
    }

    /// Rows keyed by column name.
    pub fn by_name(&self) -> BTreeMap<&str, &OddsRatioRow> {
        self.rows.iter().map(|r| (r.column_name.as_str(), r)).collect()
    }
}

/// Average coefficients over several fits sharing one schema.
pub fn odds_ratios(models: &[FittedLinearModel]) -> Result<OddsRatioTable> {
    let first = models
        .first()
        .ok_or_else(|| Error::Validation("no models to average".into()))?;
    for m in &models[1..] {
        if m.feature_schema != first.feature_schema {
            return Err(Error::Schema("models were fitted on different feature schemas".into()));
        }
    }
    let names = first.feature_schema.column_names();
    let k = models.len() as f64;
    let rows = names
        .into_iter()
        .enumerate()
        .map(|(j, column_name)| {
            let mean = models.iter().map(|m| m.coefficients[j]).sum::<f64>() / k;
            OddsRatioRow {
                column_name,
                mean_coefficient: mean,
                odds_ratio: mean.exp(),
                show_odds_ratio: (-mean).exp(),
            }
        })
        .collect();
    Ok(OddsRatioTable { rows })
}

/// Coefficients from every fold fit of a repeated CV at one penalty.
pub fn cv_fits(
    x: &DesignMatrix,
    lambda: f64,
    weights: ClassWeights,
    plan: CvPlan,
    seed: u64,
    opts: &SolverOptions,
) -> Result<Vec<FittedLinearModel>> {
    let splits = cv_splits(x.labels(), plan, seed)?;
    splits
        .par_iter()
        .map(|s| {
            fit_l1_logistic_traced(&x.subset(&s.train), lambda, weights, opts, None)
                .map(|(m, _)| m)
                .map_err(|e| Error::Fold {
                    repetition: s.repetition,
                    fold: s.fold,
                    source: Box::new(e),
                })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn matrix(rows: &[Vec<f64>], labels: &[u8]) -> DesignMatrix {
        DesignMatrix::from_rows(rows, labels.to_vec()).unwrap()
    }

    fn noisy_1d(n: usize, seed: u64) -> DesignMatrix {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..n {
            let v: f64 = rng.random_range(-2.0..2.0);
            rows.push(vec![v]);
            labels.push(u8::from(rng.random::<f64>() < sigmoid(1.5 * v - 0.3)));
        }
        matrix(&rows, &labels)
    }

    #[test]
    fn lambda_grid_has_thirty_increasing_values() {
        let l = penalty_lambdas();
        assert_eq!(l.len(), 30);
        assert_eq!(l[0], 0.01);
        assert_eq!(l[9], 0.1);
        assert_eq!(l[10], 0.19);
        assert_eq!(l[19], 1.0);
        assert_eq!(l[20], 1.9);
        assert_eq!(l[29], 10.0);
        assert!(l.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn dominant_penalty_zeroes_everything() {
        let x = noisy_1d(200, 1);
        let w = ClassWeights::new(0.8, 1.7).unwrap();
        let m = fit_l1_logistic(&x, 10.0, w, 1e-7, 10_000).unwrap();
        assert_eq!(m.n_nonzero(), 0);
        let pos = x.labels().iter().filter(|&&y| y == 1).count() as f64 * 1.7;
        let neg = x.labels().iter().filter(|&&y| y == 0).count() as f64 * 0.8;
        let base = pos / (pos + neg);
        assert!((m.intercept - (base / (1.0 - base)).ln()).abs() < 1e-12);
    }

    #[test]
    fn separable_direction_is_recovered() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 / 10.0 - 1.0]).collect();
        let labels: Vec<u8> = (0..20).map(|i| u8::from(i < 10)).collect();
        let m = fit_l1_logistic(&matrix(&rows, &labels), 0.001, ClassWeights::UNIT, 1e-7, 10_000).unwrap();
        assert!(m.coefficients[0] < 0.0);
    }

    #[test]
    fn unit_weights_match_default() {
        let x = noisy_1d(150, 2);
        let a = fit_l1_logistic(&x, 0.02, ClassWeights::UNIT, 1e-7, 10_000).unwrap();
        let b = fit_l1_logistic(&x, 0.02, ClassWeights::new(1.0, 1.0).unwrap(), 1e-7, 10_000).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn objective_never_increases() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let rows: Vec<Vec<f64>> = (0..300)
            .map(|_| (0..6).map(|_| f64::from(rng.random::<bool>())).collect())
            .collect();
        let labels: Vec<u8> = rows
            .iter()
            .map(|r| u8::from(rng.random::<f64>() < sigmoid(r[0] - r[1] + 0.5 * r[2] - 0.5)))
            .collect();
        let x = matrix(&rows, &labels);
        let (_, trace) = fit_l1_logistic_traced(&x, 0.005, ClassWeights::UNIT, &SolverOptions::default(), None).unwrap();
        assert!(trace.iterations > 1);
        assert!(trace.objectives.windows(2).all(|w| w[1] <= w[0]));
        assert!(trace.kkt_violation <= 1e-6);
    }

    #[test]
    fn convergence_error_carries_objective() {
        let x = noisy_1d(100, 4);
        let opts = SolverOptions {
            max_iter: 2,
            ..SolverOptions::default()
        };
        match fit_l1_logistic_traced(&x, 0.001, ClassWeights::UNIT, &opts, None) {
            Err(Error::Convergence { iterations: 2, last_objective }) => assert!(last_objective.is_finite()),
            other => panic!("expected convergence error, got {other:?}"),
        }
    }

    #[test]
    fn predictions_follow_the_logistic_link() {
        let mut m = FittedLinearModel {
            schema_version: LINEAR_SCHEMA_VERSION,
            feature_schema: FeatureSchema::raw(2),
            intercept: 0.0,
            coefficients: vec![0.0, 0.0],
            penalty_lambda: 1.0,
        };
        assert_eq!(m.predict_proba(&[1.0, 1.0]).unwrap(), 0.5);
        m.intercept = (0.29f64 / 0.71).ln();
        assert!((m.predict_proba(&[0.0, 3.0]).unwrap() - 0.29).abs() < 1e-15);
        m.coefficients[1] = 0.7;
        assert!(m.predict_proba(&[0.0, 2.0]).unwrap() > m.predict_proba(&[0.0, 1.0]).unwrap());
        assert!(matches!(m.predict_proba(&[1.0]), Err(Error::Dimension { expected: 2, actual: 1 })));
    }

    fn entry(lambda: f64, auc: f64, nz: f64) -> PathEntry {
        PathEntry {
            lambda,
            mean_cv_auroc: auc,
            std_cv_auroc: 0.0,
            n_nonzero: nz,
            max_kkt_violation: 0.0,
        }
    }

    #[test]
    fn selection_rule() {
        let single = PenaltyPath { entries: vec![entry(0.3, 0.7, 4.0)] };
        assert_eq!(select_penalty(&single, 0.005).unwrap(), 0.3);
        let path = PenaltyPath {
            entries: vec![entry(0.01, 0.80, 40.0), entry(1.0, 0.796, 12.0)],
        };
        assert_eq!(select_penalty(&path, 0.005).unwrap(), 1.0);
        let tie = PenaltyPath {
            entries: vec![entry(0.1, 0.80, 12.0), entry(1.0, 0.80, 12.0)],
        };
        assert_eq!(select_penalty(&tie, 0.005).unwrap(), 1.0);
    }

    #[test]
    fn odds_ratio_basics() {
        let model = |b: f64| FittedLinearModel {
            schema_version: LINEAR_SCHEMA_VERSION,
            feature_schema: FeatureSchema::raw(1),
            intercept: 0.0,
            coefficients: vec![b],
            penalty_lambda: 0.1,
        };
        let t = odds_ratios(&[model(0.0)]).unwrap();
        assert_eq!(t.rows[0].odds_ratio, 1.0);
        let t = odds_ratios(&[model(2f64.ln())]).unwrap();
        assert!((t.rows[0].odds_ratio - 2.0).abs() < 1e-15);
        // log-space mean equals the geometric mean of the per-model ratios
        let bs = [0.3, -0.1, 0.75, 0.2];
        let t = odds_ratios(&bs.map(model)).unwrap();
        let geo = bs.iter().map(|b| b.exp()).product::<f64>().powf(0.25);
        assert!((t.rows[0].odds_ratio - geo).abs() < 1e-12);
        let other = FittedLinearModel {
            feature_schema: FeatureSchema::raw(2),
            coefficients: vec![0.0, 0.0],
            ..model(0.0)
        };
        assert!(odds_ratios(&[model(0.1), other]).is_err());
    }

    #[test]
    fn json_round_trip_is_exact() {
        let x = noisy_1d(120, 5);
        let m = fit_l1_logistic(&x, 0.013, ClassWeights::UNIT, 1e-7, 10_000).unwrap();
        let back = FittedLinearModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(m, back);
        let v: serde_json::Value = serde_json::from_str(&m.to_json().unwrap()).unwrap();
        for key in ["schema_version", "feature_schema", "intercept", "coefficients", "penalty_lambda"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
    }

    #[test]
    fn path_is_monotone_in_sparsity() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let rows: Vec<Vec<f64>> = (0..400)
            .map(|_| (0..8).map(|_| f64::from(rng.random::<bool>())).collect())
            .collect();
        let labels: Vec<u8> = rows
            .iter()
            .map(|r| u8::from(rng.random::<f64>() < sigmoid(0.9 * r[0] - 0.7 * r[3] - 0.2)))
            .collect();
        let x = matrix(&rows, &labels);
        let path = penalty_path(&x, ClassWeights::UNIT, 5, 1).unwrap();
        assert_eq!(path.entries.len(), 30);
        for w in path.entries.windows(2) {
            assert!(w[1].n_nonzero <= w[0].n_nonzero + 1e-12);
        }
        assert!(path.entries.iter().all(|e| e.max_kkt_violation <= 1e-6));
    }
}
