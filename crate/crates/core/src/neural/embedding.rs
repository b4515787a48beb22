//! Entity embeddings: each categorical level maps to a learned dense
//! vector, trained jointly with the network in place of one-hot inputs.

use std::collections::HashMap;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::descent::{descend, FlatObjective};
use super::mlp::{init_mlp, MlpModel, TrainConfig};
use crate::dataset::{ClassWeights, ColumnSource, DesignMatrix, FeatureSchema};
use crate::error::{Error, Result};
use crate::linear::{sigmoid, softplus};
use crate::model::Scorer;
use crate::rng::substream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingTable {
    pub variable: String,
    pub levels: usize,
    pub dim: usize,
    /// `levels x dim`, row-major.
    pub table: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSpec {
    pub tables: Vec<EmbeddingTable>,
}

/// `min(levels - 1, ceil(levels / 2))`, at least 1.
pub fn default_embedding_dim(levels: usize) -> usize {
    levels.saturating_sub(1).min(levels.div_ceil(2)).max(1)
}

impl EmbeddingSpec {
    /// One table per main variable of `schema`, with `dim_of(levels)`
    /// dimensions and orthonormal-column initialization.
    pub fn for_schema(schema: &FeatureSchema, dim_of: impl Fn(usize) -> usize, seed: u64) -> Result<Self> {
        let layout = CategoricalLayout::from_schema(schema)?;
        let sizes: Vec<(String, usize, usize)> = layout
            .groups
            .iter()
            .map(|g| (g.variable.clone(), g.n_levels, dim_of(g.n_levels)))
            .collect();
        Self::orthogonal(&sizes, seed)
    }

    pub fn default_for_schema(schema: &FeatureSchema, seed: u64) -> Result<Self> {
        Self::for_schema(schema, default_embedding_dim, seed)
    }

    /// Tables from `(variable, levels, dim)` triples.
    pub fn orthogonal(sizes: &[(String, usize, usize)], seed: u64) -> Result<Self> {
        let tables = sizes
            .iter()
            .enumerate()
            .map(|(g, (variable, levels, dim))| {
                let (levels, dim) = (*levels, *dim);
                if levels == 0 || dim == 0 || dim > (levels - 1).max(1) {
                    return Err(Error::Parameter(format!(
                        "embedding of {variable} needs 1 <= dim <= levels - 1, got dim {dim} for {levels} levels"
                    )));
                }
                let mut rng = substream(seed, g as u64);
                let mut cols: Vec<Vec<f64>> = Vec::with_capacity(dim);
                while cols.len() < dim {
                    let mut v: Vec<f64> = (0..levels).map(|_| StandardNormal.sample(&mut rng)).collect();
                    for c in &cols {
                        let proj: f64 = v.iter().zip(c).map(|(a, b)| a * b).sum();
                        v.iter_mut().zip(c).for_each(|(a, b)| *a -= proj * b);
                    }
                    let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
                    if norm > 1e-8 {
                        v.iter_mut().for_each(|a| *a /= norm);
                        cols.push(v);
                    }
                }
                let mut table = vec![0.0; levels * dim];
                for (d, c) in cols.iter().enumerate() {
                    for (l, v) in c.iter().enumerate() {
                        table[l * dim + d] = *v;
                    }
                }
                Ok(EmbeddingTable {
                    variable: variable.clone(),
                    levels,
                    dim,
                    table,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(EmbeddingSpec { tables })
    }

    /// Width of the concatenated embedding vector.
    pub fn input_width(&self) -> usize {
        self.tables.iter().map(|t| t.dim).sum()
    }
}

#[derive(Debug, Clone)]
struct GroupLayout {
    variable: String,
    n_levels: usize,
    /// (active column, level index)
    columns: Vec<(usize, usize)>,
    reference: Option<usize>,
}

/// Where each main variable's levels sit in a one-hot row.
#[derive(Debug, Clone)]
struct CategoricalLayout {
    groups: Vec<GroupLayout>,
}

impl CategoricalLayout {
    fn from_schema(schema: &FeatureSchema) -> Result<Self> {
        let mut groups = Vec::new();
        for &v in &schema.variables {
            let mut g = GroupLayout {
                variable: v.name().to_string(),
                n_levels: 0,
                columns: Vec::new(),
                reference: None,
            };
            let mut active = 0;
            for c in &schema.columns {
                if c.source == (ColumnSource::Main { variable: v }) {
                    if c.drop_reference {
                        g.reference = Some(g.n_levels);
                    } else {
                        g.columns.push((active, g.n_levels));
                    }
                    g.n_levels += 1;
                }
                if !c.drop_reference {
                    active += 1;
                }
            }
            groups.push(g);
        }
        let covered: usize = groups.iter().map(|g| g.columns.len()).sum();
        if groups.is_empty() || covered != schema.width {
            return Err(Error::Schema(
                "embeddings need a schema made only of main categorical variables".into(),
            ));
        }
        Ok(CategoricalLayout { groups })
    }

    fn levels_of(&self, row: &[f64], out: &mut Vec<u32>) -> Result<()> {
        out.clear();
        for g in &self.groups {
            let level = g
                .columns
                .iter()
                .find(|(c, _)| row[*c] != 0.0)
                .map(|&(_, l)| l)
                .or(g.reference)
                .ok_or_else(|| Error::Validation(format!("row has no active level for {}", g.variable)))?;
            out.push(level as u32);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddedMlp {
    pub feature_schema: FeatureSchema,
    pub spec: EmbeddingSpec,
    /// Network over the concatenated embeddings.
    pub mlp: MlpModel,
}

impl EmbeddedMlp {
    fn layout(&self) -> CategoricalLayout {
        CategoricalLayout::from_schema(&self.feature_schema).expect("schema validated at construction")
    }

    fn embed(&self, levels: &[u32], e: &mut [f64]) {
        let mut off = 0;
        for (t, &l) in self.spec.tables.iter().zip(levels) {
            let l = l as usize;
            e[off..off + t.dim].copy_from_slice(&t.table[l * t.dim..(l + 1) * t.dim]);
            off += t.dim;
        }
    }

    /// Concatenated embedding vectors of a one-hot row.
    pub fn embed_row(&self, row: &[f64]) -> Result<Vec<f64>> {
        self.check_width(row.len())?;
        let mut levels = Vec::new();
        self.layout().levels_of(row, &mut levels)?;
        let mut e = vec![0.0; self.spec.input_width()];
        self.embed(&levels, &mut e);
        Ok(e)
    }

    /// Flat parameters: embedding tables, then `[W1 (H x D), b1, W2, b2]`.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut theta: Vec<f64> = self.spec.tables.iter().flat_map(|t| t.table.iter().copied()).collect();
        theta.extend_from_slice(&self.mlp.w1);
        theta.extend_from_slice(&self.mlp.b1);
        theta.extend_from_slice(&self.mlp.w2);
        theta.push(self.mlp.b2);
        theta
    }

    pub fn with_flat_params(&self, theta: &[f64]) -> EmbeddedMlp {
        let mut m = self.clone();
        let mut off = 0;
        for t in &mut m.spec.tables {
            let len = t.table.len();
            t.table.copy_from_slice(&theta[off..off + len]);
            off += len;
        }
        let (d, h) = (m.mlp.n_inputs, m.mlp.hidden);
        m.mlp.w1.copy_from_slice(&theta[off..off + h * d]);
        off += h * d;
        m.mlp.b1.copy_from_slice(&theta[off..off + h]);
        off += h;
        m.mlp.w2.copy_from_slice(&theta[off..off + h]);
        m.mlp.b2 = theta[off + h];
        m
    }
}

impl Scorer for EmbeddedMlp {
    fn width(&self) -> usize {
        self.feature_schema.width
    }

    fn score_row(&self, row: &[f64]) -> f64 {
        let mut levels = Vec::new();
        match self.layout().levels_of(row, &mut levels) {
            Ok(()) => {
                let mut e = vec![0.0; self.spec.input_width()];
                self.embed(&levels, &mut e);
                self.mlp.forward_unchecked(&e).probability
            }
            Err(_) => f64::NAN,
        }
    }
}

/// Distinct level tuples with weighted class masses.
struct LevelPatterns {
    levels: Vec<Vec<u32>>,
    pos: Vec<f64>,
    neg: Vec<f64>,
    count: f64,
}

impl LevelPatterns {
    fn build(x: &DesignMatrix, layout: &CategoricalLayout, weights: ClassWeights) -> Result<Self> {
        let mut lookup: HashMap<Vec<u32>, usize> = HashMap::new();
        let mut out = LevelPatterns {
            levels: Vec::new(),
            pos: Vec::new(),
            neg: Vec::new(),
            count: 0.0,
        };
        let mut key = Vec::new();
        for (row, &y) in x.rows().zip(x.labels()) {
            layout.levels_of(row, &mut key)?;
            let p = match lookup.get(&key) {
                Some(&p) => p,
                None => {
                    out.levels.push(key.clone());
                    out.pos.push(0.0);
                    out.neg.push(0.0);
                    lookup.insert(key.clone(), out.levels.len() - 1);
                    out.levels.len() - 1
                }
            };
            if y == 1 {
                out.pos[p] += weights.w_no_show;
            } else {
                out.neg[p] += weights.w_show;
            }
            out.count += 1.0;
        }
        Ok(out)
    }
}

struct EmbeddedObjective<'a> {
    pats: &'a LevelPatterns,
    /// (offset into theta, levels, dim) per table
    tables: Vec<(usize, usize, usize)>,
    d: usize,
    h: usize,
}

impl<'a> EmbeddedObjective<'a> {
    fn new(pats: &'a LevelPatterns, spec: &EmbeddingSpec, hidden: usize) -> Self {
        let mut off = 0;
        let tables = spec
            .tables
            .iter()
            .map(|t| {
                let entry = (off, t.levels, t.dim);
                off += t.levels * t.dim;
                entry
            })
            .collect();
        EmbeddedObjective {
            pats,
            tables,
            d: spec.input_width(),
            h: hidden,
        }
    }

    fn table_len(&self) -> usize {
        self.tables.iter().map(|(_, l, d)| l * d).sum()
    }

    fn embed(&self, theta: &[f64], levels: &[u32], e: &mut [f64]) {
        let mut pos = 0;
        for (&(off, _, dim), &l) in self.tables.iter().zip(levels) {
            let start = off + l as usize * dim;
            e[pos..pos + dim].copy_from_slice(&theta[start..start + dim]);
            pos += dim;
        }
    }
}

struct EmbeddedCache {
    z: Vec<f64>,
    out: Vec<f64>,
}

impl FlatObjective for EmbeddedObjective<'_> {
    type Cache = EmbeddedCache;

    fn n_params(&self) -> usize {
        self.table_len() + self.h * self.d + 2 * self.h + 1
    }

    fn evaluate(&self, theta: &[f64]) -> (f64, EmbeddedCache) {
        let (d, h) = (self.d, self.h);
        let base = self.table_len();
        let w1 = &theta[base..base + h * d];
        let b1 = &theta[base + h * d..base + h * d + h];
        let w2 = &theta[base + h * d + h..base + h * d + 2 * h];
        let b2 = theta[base + h * d + 2 * h];
        let np = self.pats.levels.len();
        let mut z = vec![0.0; np * h];
        let mut out = vec![0.0; np];
        let mut e = vec![0.0; d];
        let mut loss = 0.0;
        for p in 0..np {
            self.embed(theta, &self.pats.levels[p], &mut e);
            let zp = &mut z[p * h..(p + 1) * h];
            for k in 0..h {
                zp[k] = b1[k] + w1[k * d..(k + 1) * d].iter().zip(&e).map(|(a, b)| a * b).sum::<f64>();
            }
            let o = b2 + zp.iter().zip(w2).map(|(a, w)| a.max(0.0) * w).sum::<f64>();
            out[p] = o;
            loss += self.pats.pos[p] * softplus(-o) + self.pats.neg[p] * softplus(o);
        }
        (loss / self.pats.count, EmbeddedCache { z, out })
    }

    fn gradient(&self, theta: &[f64], cache: &EmbeddedCache, grad: &mut [f64]) {
        let (d, h) = (self.d, self.h);
        let base = self.table_len();
        let w1 = &theta[base..base + h * d];
        let w2 = &theta[base + h * d + h..base + h * d + 2 * h];
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut e = vec![0.0; d];
        let mut dh = vec![0.0; h];
        let mut de = vec![0.0; d];
        for p in 0..self.pats.levels.len() {
            let levels = &self.pats.levels[p];
            self.embed(theta, levels, &mut e);
            let pos = self.pats.pos[p];
            let delta = (sigmoid(cache.out[p]) * (pos + self.pats.neg[p]) - pos) / self.pats.count;
            grad[base + h * d + 2 * h] += delta;
            let zp = &cache.z[p * h..(p + 1) * h];
            de.iter_mut().for_each(|v| *v = 0.0);
            for k in 0..h {
                if zp[k] > 0.0 {
                    grad[base + h * d + h + k] += delta * zp[k];
                    dh[k] = delta * w2[k];
                } else {
                    dh[k] = 0.0;
                    continue;
                }
                grad[base + h * d + k] += dh[k];
                let row = &w1[k * d..(k + 1) * d];
                let grow = &mut grad[base + k * d..base + (k + 1) * d];
                for i in 0..d {
                    grow[i] += dh[k] * e[i];
                    de[i] += row[i] * dh[k];
                }
            }
            let mut pos_e = 0;
            for (&(off, _, dim), &l) in self.tables.iter().zip(levels) {
                let start = off + l as usize * dim;
                for i in 0..dim {
                    grad[start + i] += de[pos_e + i];
                }
                pos_e += dim;
            }
        }
    }
}

/// Loss and flat gradient (layout of [`EmbeddedMlp::flat_params`]).
pub fn embedded_loss_and_gradient(model: &EmbeddedMlp, x: &DesignMatrix, weights: ClassWeights) -> Result<(f64, Vec<f64>)> {
    model.check_width(x.width())?;
    let pats = LevelPatterns::build(x, &model.layout(), weights)?;
    let obj = EmbeddedObjective::new(&pats, &model.spec, model.mlp.hidden);
    let theta = model.flat_params();
    let (loss, cache) = obj.evaluate(&theta);
    let mut g = vec![0.0; obj.n_params()];
    obj.gradient(&theta, &cache, &mut g);
    Ok((loss, g))
}

pub fn embedded_loss(model: &EmbeddedMlp, x: &DesignMatrix, weights: ClassWeights) -> Result<f64> {
    model.check_width(x.width())?;
    let pats = LevelPatterns::build(x, &model.layout(), weights)?;
    let obj = EmbeddedObjective::new(&pats, &model.spec, model.mlp.hidden);
    Ok(obj.evaluate(&model.flat_params()).0)
}

/// Untrained embedded network.
pub fn init_embedded(x_schema: &FeatureSchema, spec: EmbeddingSpec, hidden: usize, seed: u64) -> Result<EmbeddedMlp> {
    let layout = CategoricalLayout::from_schema(x_schema)?;
    if layout.groups.len() != spec.tables.len()
        || layout.groups.iter().zip(&spec.tables).any(|(g, t)| g.n_levels != t.levels)
    {
        return Err(Error::Schema("embedding tables do not match the schema's variables".into()));
    }
    let mlp = init_mlp(spec.input_width(), hidden, seed)?;
    Ok(EmbeddedMlp {
        feature_schema: x_schema.clone(),
        spec,
        mlp,
    })
}

/// Train embedding tables and network jointly by the same full-batch
/// descent as the one-hot network.
pub fn fit_embeddings(
    x: &DesignMatrix,
    spec: EmbeddingSpec,
    hidden: usize,
    config: &TrainConfig,
    seed: u64,
) -> Result<(EmbeddingSpec, EmbeddedMlp)> {
    let init = init_embedded(x.schema(), spec, hidden, seed)?;
    let pos = x.labels().iter().filter(|&&y| y == 1).count();
    if x.n_rows() == 0 || pos == 0 || pos == x.n_rows() {
        return Err(Error::Validation("network training needs both outcome classes".into()));
    }
    let pats = LevelPatterns::build(x, &init.layout(), config.weights)?;
    let obj = EmbeddedObjective::new(&pats, &init.spec, hidden);
    let mut theta = init.flat_params();
    descend(&obj, &mut theta, config.learning_rate, config.n_iterations, |_, _| {})?;
    let mut trained = init.with_flat_params(&theta);
    trained.mlp.train_config = Some(*config);
    Ok((trained.spec.clone(), trained))
}
