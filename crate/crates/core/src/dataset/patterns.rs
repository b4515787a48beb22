//! Weighted sparse row patterns.
//!
//! Categorical design matrices repeat the same row many times. Logistic and
//! cross-entropy losses only depend on each distinct row through its
//! weighted class masses, so the trainers work on the distinct rows.

use std::collections::HashMap;

use super::schema::DesignMatrix;
use super::split::ClassWeights;

#[derive(Debug, Clone)]
pub struct WeightedPatterns {
    width: usize,
    offsets: Vec<usize>,
    indices: Vec<u32>,
    values: Vec<f64>,
    /// Weighted no-show mass per pattern.
    pos_mass: Vec<f64>,
    /// Weighted show mass per pattern.
    neg_mass: Vec<f64>,
    /// Number of records represented.
    total_count: f64,
}

impl WeightedPatterns {
    pub fn from_design(x: &DesignMatrix, weights: ClassWeights) -> Self {
        Self::build(x, weights, None)
    }

    /// Like [`from_design`](Self::from_design), counting row `i` `multiplicity[i]` times.
    pub fn with_multiplicity(x: &DesignMatrix, weights: ClassWeights, multiplicity: &[u32]) -> Self {
        Self::build(x, weights, Some(multiplicity))
    }

    fn build(x: &DesignMatrix, weights: ClassWeights, multiplicity: Option<&[u32]>) -> Self {
        let mut lookup: HashMap<Vec<(u32, u64)>, usize> = HashMap::new();
        let mut out = WeightedPatterns {
            width: x.width(),
            offsets: vec![0],
            indices: Vec::new(),
            values: Vec::new(),
            pos_mass: Vec::new(),
            neg_mass: Vec::new(),
            total_count: 0.0,
        };
        let mut key = Vec::new();
        for (i, row) in x.rows().enumerate() {
            let m = multiplicity.map_or(1, |m| m[i]);
            if m == 0 {
                continue;
            }
            key.clear();
            key.extend(
                row.iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(j, v)| (j as u32, v.to_bits())),
            );
            let p = match lookup.get(&key) {
                Some(&p) => p,
                None => {
                    let p = out.pos_mass.len();
                    for &(j, bits) in &key {
                        out.indices.push(j);
                        out.values.push(f64::from_bits(bits));
                    }
                    out.offsets.push(out.indices.len());
                    out.pos_mass.push(0.0);
                    out.neg_mass.push(0.0);
                    lookup.insert(key.clone(), p);
                    p
                }
            };
            let m = f64::from(m);
            if x.labels()[i] == 1 {
                out.pos_mass[p] += m * weights.w_no_show;
            } else {
                out.neg_mass[p] += m * weights.w_show;
            }
            out.total_count += m;
        }
        out
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn n_patterns(&self) -> usize {
        self.pos_mass.len()
    }

    pub fn total_count(&self) -> f64 {
        self.total_count
    }

    /// Sparse entries `(column, value)` of pattern `p`.
    pub fn entries(&self, p: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.offsets[p], self.offsets[p + 1]);
        self.indices[a..b]
            .iter()
            .zip(&self.values[a..b])
            .map(|(&j, &v)| (j as usize, v))
    }

    pub fn pos_mass(&self, p: usize) -> f64 {
        self.pos_mass[p]
    }

    pub fn neg_mass(&self, p: usize) -> f64 {
        self.neg_mass[p]
    }

    /// Dot product of pattern `p` with a dense vector.
    pub fn dot(&self, p: usize, w: &[f64]) -> f64 {
        self.entries(p).map(|(j, v)| v * w[j]).sum()
    }
}
