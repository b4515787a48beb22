//! One-hidden-layer network: relu hidden units, sigmoid output, weighted
//! binary cross-entropy.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::descent::{descend, FlatObjective};
use crate::dataset::{ClassWeights, DesignMatrix, FeatureSchema, WeightedPatterns};
use crate::error::{Error, Result};
use crate::evaluation::{auroc, cv_splits, pick_best, CvPlan, CvReport, GridCell, GridOutcome};
use crate::linear::{sigmoid, softplus};
use crate::model::Scorer;
use crate::rng::substream;

pub const MLP_SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_LEARNING_RATE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchMode {
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub n_iterations: usize,
    pub learning_rate: f64,
    pub batch_mode: BatchMode,
    pub weights: ClassWeights,
}

impl TrainConfig {
    pub fn new(n_iterations: usize, weights: ClassWeights) -> Self {
        TrainConfig {
            n_iterations,
            learning_rate: DEFAULT_LEARNING_RATE,
            batch_mode: BatchMode::Full,
            weights,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub schema_version: u32,
    #[serde(rename = "N")]
    pub n_inputs: usize,
    #[serde(rename = "H")]
    pub hidden: usize,
    /// `H x N`, row-major.
    #[serde(rename = "W1")]
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    #[serde(rename = "W2")]
    pub w2: Vec<f64>,
    pub b2: f64,
    pub hidden_activation: Activation,
    pub seed: u64,
    pub train_config: Option<TrainConfig>,
    pub feature_schema: FeatureSchema,
}

/// Every intermediate of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    pub hidden_pre: Vec<f64>,
    pub hidden_post: Vec<f64>,
    pub output_pre: f64,
    pub probability: f64,
}

/// Uniform in `+-sqrt(6 / (fan_in + fan_out))`, zero biases.
pub fn init_mlp(n_inputs: usize, hidden: usize, seed: u64) -> Result<MlpModel> {
    init_mlp_with_schema(FeatureSchema::raw(n_inputs), hidden, seed)
}

pub fn init_mlp_with_schema(schema: FeatureSchema, hidden: usize, seed: u64) -> Result<MlpModel> {
    let n = schema.width;
    if n == 0 || hidden == 0 {
        return Err(Error::Parameter(format!("network needs N >= 1 and H >= 1, got {n} and {hidden}")));
    }
    let mut rng = substream(seed, 0);
    let a1 = (6.0 / (n + hidden) as f64).sqrt();
    let w1 = (0..hidden * n).map(|_| rng.random_range(-a1..a1)).collect();
    let a2 = (6.0 / (hidden + 1) as f64).sqrt();
    let w2 = (0..hidden).map(|_| rng.random_range(-a2..a2)).collect();
    Ok(MlpModel {
        schema_version: MLP_SCHEMA_VERSION,
        n_inputs: n,
        hidden,
        w1,
        b1: vec![0.0; hidden],
        w2,
        b2: 0.0,
        hidden_activation: Activation::Relu,
        seed,
        train_config: None,
        feature_schema: schema,
    })
}

impl MlpModel {
    pub fn forward(&self, x: &[f64]) -> Result<Forward> {
        self.check_width(x.len())?;
        Ok(self.forward_unchecked(x))
    }

    pub(crate) fn forward_unchecked(&self, x: &[f64]) -> Forward {
        let n = self.n_inputs;
        let hidden_pre: Vec<f64> = (0..self.hidden)
            .map(|h| {
                let w = &self.w1[h * n..(h + 1) * n];
                self.b1[h] + w.iter().zip(x).filter(|(_, v)| **v != 0.0).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect();
        let hidden_post: Vec<f64> = hidden_pre.iter().map(|z| z.max(0.0)).collect();
        let output_pre = self.b2 + hidden_post.iter().zip(&self.w2).map(|(a, w)| a * w).sum::<f64>();
        Forward {
            hidden_pre,
            hidden_post,
            output_pre,
            probability: sigmoid(output_pre),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.w1.iter().chain(&self.b1).chain(&self.w2).all(|v| v.is_finite()) && self.b2.is_finite()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: MlpModel = serde_json::from_str(text)?;
        if m.w1.len() != m.hidden * m.n_inputs || m.b1.len() != m.hidden || m.w2.len() != m.hidden {
            return Err(Error::Validation("network weight shapes do not match N and H".into()));
        }
        if m.feature_schema.width != m.n_inputs {
            return Err(Error::Dimension {
                expected: m.n_inputs,
                actual: m.feature_schema.width,
            });
        }
        Ok(m)
    }

    /// Flat parameters `[W1^T (N x H), b1, W2, b2]`.
    fn to_flat(&self) -> Vec<f64> {
        let (n, h) = (self.n_inputs, self.hidden);
        let mut theta = Vec::with_capacity(n * h + 2 * h + 1);
        for j in 0..n {
            for k in 0..h {
                theta.push(self.w1[k * n + j]);
            }
        }
        theta.extend_from_slice(&self.b1);
        theta.extend_from_slice(&self.w2);
        theta.push(self.b2);
        theta
    }

    fn with_flat(&self, theta: &[f64]) -> MlpModel {
        let (n, h) = (self.n_inputs, self.hidden);
        let mut m = self.clone();
        for j in 0..n {
            for k in 0..h {
                m.w1[k * n + j] = theta[j * h + k];
            }
        }
        m.b1.copy_from_slice(&theta[n * h..n * h + h]);
        m.w2.copy_from_slice(&theta[n * h + h..n * h + 2 * h]);
        m.b2 = theta[n * h + 2 * h];
        m
    }
}

impl Scorer for MlpModel {
    fn width(&self) -> usize {
        self.n_inputs
    }

    fn score_row(&self, row: &[f64]) -> f64 {
        self.forward_unchecked(row).probability
    }
}

/// Loss over sparse weighted patterns with parameters `[W1^T, b1, W2, b2]`.
pub(crate) struct PatternObjective<'a> {
    pats: &'a WeightedPatterns,
    n: usize,
    h: usize,
    inv_count: f64,
}

impl<'a> PatternObjective<'a> {
    pub(crate) fn new(pats: &'a WeightedPatterns, hidden: usize) -> Self {
        PatternObjective {
            pats,
            n: pats.width(),
            h: hidden,
            inv_count: 1.0 / pats.total_count(),
        }
    }
}

pub(crate) struct PatternCache {
    /// Hidden pre-activations, `P x H`.
    z: Vec<f64>,
    out: Vec<f64>,
}

impl FlatObjective for PatternObjective<'_> {
    type Cache = PatternCache;

    fn n_params(&self) -> usize {
        self.n * self.h + 2 * self.h + 1
    }

    fn evaluate(&self, theta: &[f64]) -> (f64, PatternCache) {
        let (n, h) = (self.n, self.h);
        let (w1t, rest) = theta.split_at(n * h);
        let (b1, rest) = rest.split_at(h);
        let (w2, b2) = (&rest[..h], rest[h]);
        let np = self.pats.n_patterns();
        let mut z = vec![0.0; np * h];
        let mut out = vec![0.0; np];
        let mut loss = 0.0;
        for p in 0..np {
            let zp = &mut z[p * h..(p + 1) * h];
            zp.copy_from_slice(b1);
            for (j, v) in self.pats.entries(p) {
                for (acc, w) in zp.iter_mut().zip(&w1t[j * h..(j + 1) * h]) {
                    *acc += v * w;
                }
            }
            let o = b2 + zp.iter().zip(w2).map(|(a, w)| a.max(0.0) * w).sum::<f64>();
            out[p] = o;
            loss += self.pats.pos_mass(p) * softplus(-o) + self.pats.neg_mass(p) * softplus(o);
        }
        (loss * self.inv_count, PatternCache { z, out })
    }

    fn gradient(&self, theta: &[f64], cache: &PatternCache, grad: &mut [f64]) {
        let (n, h) = (self.n, self.h);
        let w2 = &theta[n * h + h..n * h + 2 * h];
        grad.iter_mut().for_each(|g| *g = 0.0);
        let (gw1t, rest) = grad.split_at_mut(n * h);
        let (gb1, rest) = rest.split_at_mut(h);
        let (gw2, gb2) = rest.split_at_mut(h);
        let mut dh = vec![0.0; h];
        for p in 0..self.pats.n_patterns() {
            let pos = self.pats.pos_mass(p);
            let d = (sigmoid(cache.out[p]) * (pos + self.pats.neg_mass(p)) - pos) * self.inv_count;
            gb2[0] += d;
            let zp = &cache.z[p * h..(p + 1) * h];
            for k in 0..h {
                if zp[k] > 0.0 {
                    gw2[k] += d * zp[k];
                    dh[k] = d * w2[k];
                } else {
                    dh[k] = 0.0;
                }
                gb1[k] += dh[k];
            }
            for (j, v) in self.pats.entries(p) {
                for (g, d) in gw1t[j * h..(j + 1) * h].iter_mut().zip(&dh) {
                    *g += v * d;
                }
            }
        }
    }
}

/// Gradient of the training loss in the model's own layout.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGradient {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

/// Mean weighted cross-entropy `(1/n) sum w_i bce(y_i, p_i)` and its gradient.
pub fn loss_and_gradient(model: &MlpModel, x: &DesignMatrix, weights: ClassWeights) -> Result<(f64, MlpGradient)> {
    model.check_width(x.width())?;
    let pats = WeightedPatterns::from_design(x, weights);
    let obj = PatternObjective::new(&pats, model.hidden);
    let theta = model.to_flat();
    let (loss, cache) = obj.evaluate(&theta);
    let mut g = vec![0.0; obj.n_params()];
    obj.gradient(&theta, &cache, &mut g);
    let shaped = model.with_flat(&g);
    Ok((
        loss,
        MlpGradient {
            w1: shaped.w1,
            b1: shaped.b1,
            w2: shaped.w2,
            b2: shaped.b2,
        },
    ))
}

pub fn loss(model: &MlpModel, x: &DesignMatrix, weights: ClassWeights) -> Result<f64> {
    model.check_width(x.width())?;
    let pats = WeightedPatterns::from_design(x, weights);
    Ok(PatternObjective::new(&pats, model.hidden).evaluate(&model.to_flat()).0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trained {
    pub model: MlpModel,
    /// Loss before training followed by the loss after each iteration.
    pub loss_trace: Vec<f64>,
}

fn check_trainable(x: &DesignMatrix, config: &TrainConfig) -> Result<()> {
    if x.n_rows() == 0 {
        return Err(Error::Validation("empty design matrix".into()));
    }
    let pos = x.labels().iter().filter(|&&y| y == 1).count();
    if pos == 0 || pos == x.n_rows() {
        return Err(Error::Validation("network training needs both outcome classes".into()));
    }
    if !(config.learning_rate >= 0.0 && config.learning_rate.is_finite()) {
        return Err(Error::Parameter(format!("learning rate {} is invalid", config.learning_rate)));
    }
    Ok(())
}

fn run_descent(
    model: &MlpModel,
    x: &DesignMatrix,
    config: &TrainConfig,
    on_iteration: impl FnMut(usize, &[f64]),
) -> Result<(Vec<f64>, Vec<f64>)> {
    model.check_width(x.width())?;
    check_trainable(x, config)?;
    let pats = WeightedPatterns::from_design(x, config.weights);
    let obj = PatternObjective::new(&pats, model.hidden);
    let mut theta = model.to_flat();
    let trace = descend(&obj, &mut theta, config.learning_rate, config.n_iterations, on_iteration)?;
    Ok((theta, trace))
}

/// Train for exactly `config.n_iterations` full-batch steps. The input
/// model is left untouched.
pub fn train(model: &MlpModel, x: &DesignMatrix, config: &TrainConfig) -> Result<Trained> {
    let (theta, loss_trace) = run_descent(model, x, config, |_, _| {})?;
    let mut trained = model.with_flat(&theta);
    trained.train_config = Some(*config);
    Ok(Trained {
        model: trained,
        loss_trace,
    })
}

/// Train once up to `config.n_iterations`, returning a snapshot at each
/// requested iteration count (in the order given) and the loss trace.
pub fn train_with_checkpoints(
    model: &MlpModel,
    x: &DesignMatrix,
    config: &TrainConfig,
    checkpoints: &[usize],
) -> Result<(Vec<MlpModel>, Vec<f64>)> {
    if let Some(&c) = checkpoints.iter().find(|&&c| c > config.n_iterations) {
        return Err(Error::Parameter(format!(
            "checkpoint {c} beyond {} iterations",
            config.n_iterations
        )));
    }
    let snapshot = |k: usize, theta: &[f64]| {
        let mut m = model.with_flat(theta);
        m.train_config = Some(TrainConfig {
            n_iterations: k,
            ..*config
        });
        m
    };
    let mut snaps: Vec<Option<MlpModel>> = checkpoints
        .iter()
        .map(|&c| (c == 0).then(|| snapshot(0, &model.to_flat())))
        .collect();
    let (_, trace) = run_descent(model, x, config, |k, theta| {
        for (slot, &c) in snaps.iter_mut().zip(checkpoints) {
            if c == k {
                *slot = Some(snapshot(k, theta));
            }
        }
    })?;
    Ok((snaps.into_iter().map(|s| s.expect("every checkpoint reached")).collect(), trace))
}

/// Initialize with `seed` and train on `x`.
pub fn fit_mlp(x: &DesignMatrix, hidden: usize, config: &TrainConfig, seed: u64) -> Result<MlpModel> {
    let init = init_mlp_with_schema(x.schema().clone(), hidden, seed)?;
    Ok(train(&init, x, config)?.model)
}

/// Ten hidden widths evenly spaced (rounded) over `[ceil(N/2), 2N]`,
/// duplicates removed.
pub fn hidden_grid(n_inputs: usize) -> Vec<usize> {
    let lo = n_inputs.div_ceil(2).max(1);
    let hi = (2 * n_inputs).max(lo);
    let mut out: Vec<usize> = (0..10)
        .map(|k| (lo as f64 + (hi - lo) as f64 * k as f64 / 9.0).round() as usize)
        .collect();
    out.dedup();
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NnGrid {
    pub hidden: Vec<usize>,
    pub iterations: Vec<usize>,
}

impl NnGrid {
    /// Ten hidden widths by sixteen iteration counts (100..1600 step 100).
    pub fn full(n_inputs: usize) -> Self {
        NnGrid {
            hidden: hidden_grid(n_inputs),
            iterations: (1..=16).map(|k| 100 * k).collect(),
        }
    }

    pub fn fast(n_inputs: usize) -> Self {
        let h = hidden_grid(n_inputs);
        let mut hidden = vec![h[0], h[h.len() / 2], h[h.len() - 1]];
        hidden.dedup();
        NnGrid {
            hidden,
            iterations: vec![100, 200, 400, 800],
        }
    }

    pub fn cells(&self) -> Vec<NnCell> {
        self.hidden
            .iter()
            .flat_map(|&hidden| self.iterations.iter().map(move |&n_iterations| NnCell { hidden, n_iterations }))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.hidden.len() * self.iterations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NnCell {
    pub hidden: usize,
    pub n_iterations: usize,
}

impl NnCell {
    pub fn train_config(&self, weights: ClassWeights) -> TrainConfig {
        TrainConfig::new(self.n_iterations, weights)
    }
}

fn nn_preference(a: &NnCell, b: &NnCell) -> std::cmp::Ordering {
    a.hidden.cmp(&b.hidden).then(a.n_iterations.cmp(&b.n_iterations))
}

pub fn grid_search_nn(x: &DesignMatrix, weights: ClassWeights, cv_folds: usize, seed: u64) -> Result<GridOutcome<NnCell>> {
    grid_search_nn_with(x, weights, &NnGrid::full(x.width()), CvPlan::new(cv_folds, 1)?, seed)
}

/// Grid search scored by mean CV AUROC. Training is deterministic, so each
/// (width, fold) network is trained once to the largest iteration count
/// and scored at every smaller count along the way.
pub fn grid_search_nn_with(
    x: &DesignMatrix,
    weights: ClassWeights,
    grid: &NnGrid,
    plan: CvPlan,
    seed: u64,
) -> Result<GridOutcome<NnCell>> {
    if grid.is_empty() {
        return Err(Error::Parameter("empty network grid".into()));
    }
    let splits = cv_splits(x.labels(), plan, seed)?;
    let mut iters = grid.iterations.clone();
    iters.sort_unstable();
    iters.dedup();
    let max_iter = *iters.last().expect("non-empty grid");
    let jobs: Vec<(usize, usize)> = (0..grid.hidden.len())
        .flat_map(|h| (0..splits.len()).map(move |s| (h, s)))
        .collect();
    let results: Vec<std::result::Result<Vec<f64>, String>> = jobs
        .par_iter()
        .map(|&(h, s)| {
            let split = &splits[s];
            let run = || -> Result<Vec<f64>> {
                let train_x = x.subset(&split.train);
                let test_x = x.subset(&split.test);
                let init = init_mlp_with_schema(x.schema().clone(), grid.hidden[h], split.seed)?;
                let (snaps, _) = train_with_checkpoints(&init, &train_x, &TrainConfig::new(max_iter, weights), &iters)?;
                snaps
                    .iter()
                    .map(|m| auroc(&m.score_matrix(&test_x)?, test_x.labels()))
                    .collect()
            };
            run().map_err(|e| e.to_string())
        })
        .collect();

    let cells = grid
        .cells()
        .into_iter()
        .map(|cell| {
            let h = grid.hidden.iter().position(|&v| v == cell.hidden).expect("width enumerated");
            let k = iters.binary_search(&cell.n_iterations).expect("count enumerated");
            let mut scores = Vec::with_capacity(splits.len());
            let mut error = None;
            for s in 0..splits.len() {
                match &results[h * splits.len() + s] {
                    Ok(v) => scores.push(v[k]),
                    Err(e) => {
                        error = Some(format!("repetition {}, fold {}: {e}", splits[s].repetition, splits[s].fold));
                        break;
                    }
                }
            }
            if let Some(e) = &error {
                log::warn!("network grid cell {cell:?} failed: {e}");
            }
            GridCell {
                params: cell,
                report: error
                    .is_none()
                    .then(|| CvReport::from_scores(format!("NN H={} it={}", cell.hidden, cell.n_iterations), plan, scores)),
                error,
            }
        })
        .collect();
    pick_best(cells, nn_preference)
}
