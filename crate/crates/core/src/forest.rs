//! Class-weighted random forest on Gini impurity.

use std::collections::HashMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{ClassWeights, DesignMatrix, FeatureSchema};
use crate::error::{Error, Result};
use crate::evaluation::{auroc, cv_splits, pick_best, CvPlan, CvReport, GridCell, GridOutcome};
use crate::model::Scorer;
use crate::rng::substream;

pub const FOREST_SCHEMA_VERSION: u32 = 1;

/// Gini impurity `1 - p0^2 - p1^2` of a pair of class masses.
pub fn gini(show_mass: f64, no_show_mass: f64) -> Result<f64> {
    let total = show_mass + no_show_mass;
    if !(total > 0.0) || show_mass < 0.0 || no_show_mass < 0.0 {
        return Err(Error::Criterion(format!(
            "masses ({show_mass}, {no_show_mass}) have no positive total"
        )));
    }
    let (p0, p1) = (show_mass / total, no_show_mass / total);
    Ok(1.0 - p0 * p0 - p1 * p1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeNode {
    /// Rows with `x[column] <= threshold` go left.
    Split {
        column: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf { show_mass: f64, no_show_mass: f64 },
}

impl TreeNode {
    pub fn leaf_of(&self, row: &[f64]) -> (f64, f64) {
        let mut node = self;
        loop {
            match node {
                TreeNode::Split {
                    column,
                    threshold,
                    left,
                    right,
                } => node = if row[*column] <= *threshold { left } else { right },
                TreeNode::Leaf { show_mass, no_show_mass } => return (*show_mass, *no_show_mass),
            }
        }
    }

    /// Weighted no-show share of the leaf reached by `row`.
    pub fn predict(&self, row: &[f64]) -> f64 {
        let (s, p) = self.leaf_of(row);
        p / (s + p)
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
            TreeNode::Leaf { .. } => 0,
        }
    }

    pub fn n_leaves(&self) -> usize {
        match self {
            TreeNode::Split { left, right, .. } => left.n_leaves() + right.n_leaves(),
            TreeNode::Leaf { .. } => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Informative columns examined per split.
    pub mtry: usize,
    pub min_samples_leaf_frac: f64,
    pub min_impurity_decrease: f64,
}

impl ForestParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 || self.mtry == 0 {
            return Err(Error::Parameter("n_trees and mtry must be positive".into()));
        }
        if !(self.min_samples_leaf_frac > 0.0 && self.min_samples_leaf_frac <= 1.0) {
            return Err(Error::Parameter(format!(
                "min_samples_leaf_frac {} outside (0, 1]",
                self.min_samples_leaf_frac
            )));
        }
        if !(self.min_impurity_decrease >= 0.0 && self.min_impurity_decrease.is_finite()) {
            return Err(Error::Parameter(format!(
                "min_impurity_decrease {} must be non-negative",
                self.min_impurity_decrease
            )));
        }
        Ok(())
    }
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            mtry: 6,
            min_samples_leaf_frac: 1e-3,
            min_impurity_decrease: 1e-5,
        }
    }
}

/// Distinct training rows with their bootstrap counts and class masses.
struct TrainData {
    width: usize,
    values: Vec<f64>,
    count: Vec<u32>,
    pos: Vec<f64>,
    neg: Vec<f64>,
    binary: Vec<bool>,
}

impl TrainData {
    fn build(x: &DesignMatrix, weights: ClassWeights, multiplicity: Option<&[u32]>) -> Self {
        let width = x.width();
        let mut lookup: HashMap<Vec<u64>, usize> = HashMap::new();
        let mut data = TrainData {
            width,
            values: Vec::new(),
            count: Vec::new(),
            pos: Vec::new(),
            neg: Vec::new(),
            binary: vec![true; width],
        };
        for (i, row) in x.rows().enumerate() {
            let m = multiplicity.map_or(1, |m| m[i]);
            if m == 0 {
                continue;
            }
            let key: Vec<u64> = row.iter().map(|v| v.to_bits()).collect();
            let p = *lookup.entry(key).or_insert_with(|| {
                data.values.extend_from_slice(row);
                data.count.push(0);
                data.pos.push(0.0);
                data.neg.push(0.0);
                data.count.len() - 1
            });
            data.count[p] += m;
            if x.labels()[i] == 1 {
                data.pos[p] += f64::from(m) * weights.w_no_show;
            } else {
                data.neg[p] += f64::from(m) * weights.w_show;
            }
        }
        for (j, flag) in data.binary.iter_mut().enumerate() {
            *flag = (0..data.count.len()).all(|p| {
                let v = data.values[p * width + j];
                v == 0.0 || v == 1.0
            });
        }
        data
    }

    fn value(&self, p: usize, j: usize) -> f64 {
        self.values[p * self.width + j]
    }
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    column: usize,
    threshold: f64,
    decrease: f64,
}

impl Candidate {
    fn beats(&self, other: &Option<Candidate>) -> bool {
        match other {
            None => true,
            Some(o) => {
                self.decrease > o.decrease
                    || (self.decrease == o.decrease
                        && (self.column < o.column || (self.column == o.column && self.threshold < o.threshold)))
            }
        }
    }
}

struct Grower<'a> {
    data: &'a TrainData,
    mtry: usize,
    min_leaf: u64,
    min_decrease: f64,
    root_mass: f64,
}

/// `W_t * G_t` from class masses.
fn weighted_impurity(pos: f64, neg: f64) -> f64 {
    let w = pos + neg;
    if w > 0.0 {
        2.0 * pos * neg / w
    } else {
        0.0
    }
}

impl Grower<'_> {
    fn totals(&self, idx: &[usize]) -> (f64, f64, u64) {
        idx.iter().fold((0.0, 0.0, 0), |(p, n, c), &i| {
            (p + self.data.pos[i], n + self.data.neg[i], c + u64::from(self.data.count[i]))
        })
    }

    fn grow(&self, idx: &mut [usize], rng: &mut ChaCha8Rng, cols: &mut [usize]) -> TreeNode {
        let (pos, neg, cnt) = self.totals(idx);
        let leaf = TreeNode::Leaf {
            show_mass: neg,
            no_show_mass: pos,
        };
        if pos == 0.0 || neg == 0.0 || cnt < 2 * self.min_leaf {
            return leaf;
        }
        let Some(best) = self.best_split(idx, (pos, neg, cnt), rng, cols) else {
            return leaf;
        };
        if !(best.decrease > 0.0 && best.decrease >= self.min_decrease) {
            return leaf;
        }
        let mut split_at = 0;
        for k in 0..idx.len() {
            if self.data.value(idx[k], best.column) <= best.threshold {
                idx.swap(k, split_at);
                split_at += 1;
            }
        }
        let (l, r) = idx.split_at_mut(split_at);
        let left = self.grow(l, rng, cols);
        let right = self.grow(r, rng, cols);
        TreeNode::Split {
            column: best.column,
            threshold: best.threshold,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    fn best_split(
        &self,
        idx: &[usize],
        (pos, neg, cnt): (f64, f64, u64),
        rng: &mut ChaCha8Rng,
        cols: &mut [usize],
    ) -> Option<Candidate> {
        let parent = weighted_impurity(pos, neg);
        let mut best: Option<Candidate> = None;
        let mut informative = 0;
        let width = cols.len();
        let mut sorted: Vec<(f64, f64, f64, u64)> = Vec::new();
        // Lazy Fisher-Yates: draw columns until `mtry` non-constant ones have been examined.
        for k in 0..width {
            if informative >= self.mtry {
                break;
            }
            let pick = rng.random_range(k..width);
            cols.swap(k, pick);
            let j = cols[k];
            let mut consider = |threshold: f64, lp: f64, ln: f64, lc: u64| {
                let rc = cnt - lc;
                if lc < self.min_leaf || rc < self.min_leaf {
                    return;
                }
                let child = weighted_impurity(lp, ln) + weighted_impurity(pos - lp, neg - ln);
                let cand = Candidate {
                    column: j,
                    threshold,
                    decrease: (parent - child) / self.root_mass,
                };
                if cand.beats(&best) {
                    best = Some(cand);
                }
            };
            if self.data.binary[j] {
                let (mut zp, mut zn, mut zc) = (0.0, 0.0, 0u64);
                let mut ones = 0usize;
                for &i in idx {
                    if self.data.value(i, j) == 0.0 {
                        zp += self.data.pos[i];
                        zn += self.data.neg[i];
                        zc += u64::from(self.data.count[i]);
                    } else {
                        ones += 1;
                    }
                }
                if ones == 0 || ones == idx.len() {
                    continue;
                }
                informative += 1;
                consider(0.5, zp, zn, zc);
            } else {
                sorted.clear();
                sorted.extend(
                    idx.iter()
                        .map(|&i| (self.data.value(i, j), self.data.pos[i], self.data.neg[i], u64::from(self.data.count[i]))),
                );
                sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
                if sorted[0].0 == sorted[sorted.len() - 1].0 {
                    continue;
                }
                informative += 1;
                let (mut lp, mut ln, mut lc) = (0.0, 0.0, 0u64);
                for w in 0..sorted.len() - 1 {
                    lp += sorted[w].1;
                    ln += sorted[w].2;
                    lc += sorted[w].3;
                    if sorted[w].0 < sorted[w + 1].0 {
                        consider(0.5 * (sorted[w].0 + sorted[w + 1].0), lp, ln, lc);
                    }
                }
            }
        }
        best
    }
}

/// Options for a single tree beyond the forest parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeOptions {
    pub bootstrap: bool,
}

impl Default for TreeOptions {
    fn default() -> Self {
        TreeOptions { bootstrap: true }
    }
}

fn effective_mtry(mtry: usize, width: usize) -> usize {
    if mtry > width {
        log::warn!("mtry {mtry} exceeds the {width} available columns; using {width}");
        width
    } else {
        mtry
    }
}

/// Grow one tree. With bootstrapping the sample has `n` draws with
/// replacement taken from `rng` before growing.
pub fn fit_tree(
    x: &DesignMatrix,
    weights: ClassWeights,
    params: &ForestParams,
    rng: &mut ChaCha8Rng,
    options: TreeOptions,
) -> Result<TreeNode> {
    params.validate()?;
    let n = x.n_rows();
    if n == 0 {
        return Err(Error::Validation("empty design matrix".into()));
    }
    if x.width() == 0 {
        return Err(Error::Validation("design matrix has no columns".into()));
    }
    let mtry = effective_mtry(params.mtry, x.width());
    let multiplicity = options.bootstrap.then(|| {
        let mut m = vec![0u32; n];
        for _ in 0..n {
            m[rng.random_range(0..n)] += 1;
        }
        m
    });
    let data = TrainData::build(x, weights, multiplicity.as_deref());
    Ok(grow_tree(&data, params, mtry, n, rng))
}

fn grow_tree(data: &TrainData, params: &ForestParams, mtry: usize, n: usize, rng: &mut ChaCha8Rng) -> TreeNode {
    let min_leaf = ((params.min_samples_leaf_frac * n as f64 - 1e-9).ceil() as u64).max(1);
    let root_mass: f64 = data.pos.iter().sum::<f64>() + data.neg.iter().sum::<f64>();
    let grower = Grower {
        data,
        mtry,
        min_leaf,
        min_decrease: params.min_impurity_decrease,
        root_mass,
    };
    let mut idx: Vec<usize> = (0..data.count.len()).collect();
    let mut cols: Vec<usize> = (0..data.width).collect();
    grower.grow(&mut idx, rng, &mut cols)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub schema_version: u32,
    pub feature_schema: FeatureSchema,
    pub params: ForestParams,
    pub seed: u64,
    pub trees: Vec<TreeNode>,
}

impl ForestModel {
    pub fn predict_proba(&self, row: &[f64]) -> Result<f64> {
        self.predict(row)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        // Trees have no depth cap, so lift the parser's nesting limit.
        let mut de = serde_json::Deserializer::from_str(text);
        de.disable_recursion_limit();
        let model = ForestModel::deserialize(&mut de)?;
        de.end()?;
        if model.trees.len() != model.params.n_trees {
            return Err(Error::Validation(format!(
                "forest lists {} trees but n_trees is {}",
                model.trees.len(),
                model.params.n_trees
            )));
        }
        Ok(model)
    }
}

impl Scorer for ForestModel {
    fn width(&self) -> usize {
        self.feature_schema.width
    }

    fn score_row(&self, row: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(row)).sum::<f64>() / self.trees.len() as f64
    }
}

/// Train `params.n_trees` trees; tree `i` draws from substream `(seed, i)`.
pub fn fit_forest(x: &DesignMatrix, weights: ClassWeights, params: &ForestParams, seed: u64) -> Result<ForestModel> {
    params.validate()?;
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, i as u64);
            fit_tree(x, weights, params, &mut rng, TreeOptions::default())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ForestModel {
        schema_version: FOREST_SCHEMA_VERSION,
        feature_schema: x.schema().clone(),
        params: *params,
        seed,
        trees,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RfGrid {
    pub n_trees: Vec<usize>,
    pub mtry: Vec<usize>,
    pub min_samples_leaf_frac: Vec<f64>,
    pub min_impurity_decrease: Vec<f64>,
}

const POWERS: [f64; 5] = [1e-2, 1e-3, 1e-4, 1e-5, 1e-6];

impl RfGrid {
    /// 50..1000 trees in steps of 50, mtry in {2, 6, 8, 10}, and
    /// 1e-2..1e-6 for both the leaf fraction and the impurity decrease.
    pub fn full() -> Self {
        RfGrid {
            n_trees: (1..=20).map(|k| 50 * k).collect(),
            mtry: vec![2, 6, 8, 10],
            min_samples_leaf_frac: POWERS.to_vec(),
            min_impurity_decrease: POWERS.to_vec(),
        }
    }

    /// A small sub-grid for quick runs.
    pub fn fast() -> Self {
        RfGrid {
            n_trees: vec![50, 100],
            mtry: vec![2, 6],
            min_samples_leaf_frac: vec![1e-2, 1e-3],
            min_impurity_decrease: vec![1e-4, 1e-6],
        }
    }

    pub fn cells(&self) -> Vec<ForestParams> {
        let mut out = Vec::new();
        for &n_trees in &self.n_trees {
            for &mtry in &self.mtry {
                for &min_samples_leaf_frac in &self.min_samples_leaf_frac {
                    for &min_impurity_decrease in &self.min_impurity_decrease {
                        out.push(ForestParams {
                            n_trees,
                            mtry,
                            min_samples_leaf_frac,
                            min_impurity_decrease,
                        });
                    }
                }
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.n_trees.len() * self.mtry.len() * self.min_samples_leaf_frac.len() * self.min_impurity_decrease.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Fewer trees first, then larger minimum leaf.
fn rf_preference(a: &ForestParams, b: &ForestParams) -> std::cmp::Ordering {
    a.n_trees
        .cmp(&b.n_trees)
        .then(b.min_samples_leaf_frac.total_cmp(&a.min_samples_leaf_frac))
        .then(a.mtry.cmp(&b.mtry))
        .then(b.min_impurity_decrease.total_cmp(&a.min_impurity_decrease))
}

/// Full-grid search scored by mean cross-validated AUROC over `cv_folds`
/// folds.
pub fn grid_search_rf(
    x: &DesignMatrix,
    weights: ClassWeights,
    cv_folds: usize,
    seed: u64,
) -> Result<GridOutcome<ForestParams>> {
    grid_search_rf_with(x, weights, &RfGrid::full(), CvPlan::new(cv_folds, 1)?, seed)
}

/// Grid search on an explicit grid and CV plan. Tree `i` of a fold's
/// forest does not depend on the forest size, so each (mtry, leaf,
/// impurity) configuration grows the largest forest once per fold and
/// scores every size as a prefix.
pub fn grid_search_rf_with(
    x: &DesignMatrix,
    weights: ClassWeights,
    grid: &RfGrid,
    plan: CvPlan,
    seed: u64,
) -> Result<GridOutcome<ForestParams>> {
    if grid.is_empty() {
        return Err(Error::Parameter("empty forest grid".into()));
    }
    let splits = cv_splits(x.labels(), plan, seed)?;
    let mut sizes = grid.n_trees.clone();
    sizes.sort_unstable();
    sizes.dedup();
    let max_trees = *sizes.last().expect("non-empty grid");

    let mut configs = Vec::new();
    for &mtry in &grid.mtry {
        for &leaf in &grid.min_samples_leaf_frac {
            for &imp in &grid.min_impurity_decrease {
                configs.push(ForestParams {
                    n_trees: max_trees,
                    mtry,
                    min_samples_leaf_frac: leaf,
                    min_impurity_decrease: imp,
                });
            }
        }
    }
    let jobs: Vec<(usize, usize)> = (0..configs.len())
        .flat_map(|c| (0..splits.len()).map(move |s| (c, s)))
        .collect();
    // AUROC per forest size for every (config, split).
    let results: Vec<std::result::Result<Vec<f64>, String>> = jobs
        .par_iter()
        .map(|&(c, s)| {
            let split = &splits[s];
            let train = x.subset(&split.train);
            let test = x.subset(&split.test);
            let run = || -> Result<Vec<f64>> {
                let mut sums = vec![0.0; test.n_rows()];
                let mut out = Vec::with_capacity(sizes.len());
                let mut next = 0;
                for i in 0..max_trees {
                    let mut rng = substream(split.seed, i as u64);
                    let tree = fit_tree(&train, weights, &configs[c], &mut rng, TreeOptions::default())?;
                    for (acc, row) in sums.iter_mut().zip(test.rows()) {
                        *acc += tree.predict(row);
                    }
                    while next < sizes.len() && sizes[next] == i + 1 {
                        let scores: Vec<f64> = sums.iter().map(|v| v / (i + 1) as f64).collect();
                        out.push(auroc(&scores, test.labels())?);
                        next += 1;
                    }
                }
                Ok(out)
            };
            run().map_err(|e| e.to_string())
        })
        .collect();

    let mut cells = Vec::with_capacity(grid.len());
    for params in grid.cells() {
        let c = configs
            .iter()
            .position(|p| {
                p.mtry == params.mtry
                    && p.min_samples_leaf_frac == params.min_samples_leaf_frac
                    && p.min_impurity_decrease == params.min_impurity_decrease
            })
            .expect("config enumerated");
        let k = sizes.binary_search(&params.n_trees).expect("size enumerated");
        let mut scores = Vec::with_capacity(splits.len());
        let mut error = None;
        for s in 0..splits.len() {
            match &results[c * splits.len() + s] {
                Ok(v) => scores.push(v[k]),
                Err(e) => {
                    error = Some(format!("repetition {}, fold {}: {e}", splits[s].repetition, splits[s].fold));
                    break;
                }
            }
        }
        if let Some(e) = &error {
            log::warn!("forest grid cell {params:?} failed: {e}");
        }
        cells.push(GridCell {
            params,
            report: error.is_none().then(|| CvReport::from_scores(format!("RF {params:?}"), plan, scores)),
            error,
        });
    }
    pick_best(cells, rf_preference)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn params(mtry: usize, leaf: f64) -> ForestParams {
        ForestParams {
            n_trees: 1,
            mtry,
            min_samples_leaf_frac: leaf,
            min_impurity_decrease: 0.0,
        }
    }

    #[test]
    fn gini_values() {
        assert_eq!(gini(5.0, 5.0).unwrap(), 0.5);
        assert_eq!(gini(10.0, 0.0).unwrap(), 0.0);
        assert!((gini(7.0, 3.0).unwrap() - 0.42).abs() < 1e-15);
        assert!(matches!(gini(0.0, 0.0), Err(Error::Criterion(_))));
    }

    #[test]
    fn pure_labels_give_one_leaf() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![f64::from(i % 2)]).collect();
        let x = DesignMatrix::from_rows(&rows, vec![1; 10]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let t = fit_tree(&x, ClassWeights::UNIT, &params(1, 0.01), &mut rng, TreeOptions::default()).unwrap();
        assert!(matches!(t, TreeNode::Leaf { .. }));
    }

    #[test]
    fn predictive_column_gives_a_stump() {
        let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![f64::from(i % 3 == 0), f64::from(i % 2)]).collect();
        let labels: Vec<u8> = (0..40).map(|i| (i % 2) as u8).collect();
        let x = DesignMatrix::from_rows(&rows, labels).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let t = fit_tree(&x, ClassWeights::UNIT, &params(2, 0.01), &mut rng, TreeOptions { bootstrap: false }).unwrap();
        match t {
            TreeNode::Split { column, left, right, .. } => {
                assert_eq!(column, 1);
                assert!(matches!(*left, TreeNode::Leaf { .. }));
                assert!(matches!(*right, TreeNode::Leaf { .. }));
            }
            _ => panic!("expected a split"),
        }
    }

    #[test]
    fn half_leaf_fraction_blocks_unbalanced_splits() {
        let rows: Vec<Vec<f64>> = (0..21).map(|i| vec![f64::from(i < 5)]).collect();
        let labels: Vec<u8> = (0..21).map(|i| u8::from(i < 5)).collect();
        let x = DesignMatrix::from_rows(&rows, labels).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let t = fit_tree(&x, ClassWeights::UNIT, &params(1, 0.5), &mut rng, TreeOptions { bootstrap: false }).unwrap();
        assert!(matches!(t, TreeNode::Leaf { .. }));
    }

    #[test]
    fn leaf_masses_average() {
        let leaf = TreeNode::Leaf {
            show_mass: 1.0,
            no_show_mass: 3.0,
        };
        let forest = ForestModel {
            schema_version: FOREST_SCHEMA_VERSION,
            feature_schema: FeatureSchema::raw(1),
            params: ForestParams { n_trees: 2, ..params(1, 0.1) },
            seed: 0,
            trees: vec![leaf.clone(), leaf],
        };
        assert_eq!(forest.predict_proba(&[0.0]).unwrap(), 0.75);
    }

    #[test]
    fn oversized_mtry_is_clamped() {
        let rows: Vec<Vec<f64>> = (0..30).map(|i| vec![f64::from(i % 2), f64::from(i % 3 == 0)]).collect();
        let labels: Vec<u8> = (0..30).map(|i| u8::from(i % 2 == 0 || i % 5 == 0)).collect();
        let x = DesignMatrix::from_rows(&rows, labels).unwrap();
        let p = ForestParams {
            n_trees: 3,
            mtry: 10,
            ..ForestParams::default()
        };
        let f = fit_forest(&x, ClassWeights::UNIT, &p, 1).unwrap();
        assert_eq!(f.trees.len(), 3);
    }

    #[test]
    fn grid_has_two_thousand_cells() {
        assert_eq!(RfGrid::full().len(), 2000);
        assert_eq!(RfGrid::full().cells().len(), 2000);
    }

    #[test]
    fn tie_rule_prefers_fewer_trees_then_larger_leaves() {
        let a = ForestParams { n_trees: 50, ..ForestParams::default() };
        let b = ForestParams { n_trees: 100, ..ForestParams::default() };
        assert_eq!(rf_preference(&a, &b), std::cmp::Ordering::Less);
        let c = ForestParams { min_samples_leaf_frac: 1e-2, ..a };
        assert_eq!(rf_preference(&c, &a), std::cmp::Ordering::Less);
    }
}
