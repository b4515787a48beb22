//! Layer-wise relevance propagation for the one-hidden-layer network.
//!
//! The pre-sigmoid logit is redistributed to the inputs with the epsilon
//! rule. Shares attributed to biases and to the stabilizer stay with the
//! layer that absorbed them and are reported separately.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Scorer;
use crate::neural::MlpModel;

pub const LRP_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableRelevance {
    pub variable: String,
    /// Level active in the row, when the schema is categorical.
    pub level: Option<String>,
    pub relevance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelevanceMap {
    pub record_id: Option<u64>,
    pub probability: f64,
    /// The propagated quantity: the output logit.
    pub output_relevance: f64,
    pub column_names: Vec<String>,
    pub per_column: Vec<f64>,
    pub per_variable: Vec<VariableRelevance>,
    /// Relevance kept by the biases and the stabilizer at both layers.
    pub bias_absorbed: f64,
}

impl RelevanceMap {
    /// Sum of the column relevances in column order.
    pub fn total(&self) -> f64 {
        self.per_column.iter().sum()
    }

    /// Sum of the rollup in group order.
    pub fn rollup_total(&self) -> f64 {
        self.per_variable.iter().map(|v| v.relevance).sum()
    }

    pub fn variable(&self, name: &str) -> Option<&VariableRelevance> {
        self.per_variable.iter().find(|v| v.variable == name)
    }
}

fn stabilize(z: f64, eps: f64) -> f64 {
    // sign(0) counts as positive
    if z >= 0.0 {
        z + eps
    } else {
        z - eps
    }
}

/// Relevance of every input column for one row.
pub fn lrp(model: &MlpModel, x: &[f64]) -> Result<RelevanceMap> {
    lrp_with(model, x, LRP_EPSILON, None)
}

pub fn lrp_record(model: &MlpModel, x: &[f64], record_id: u64) -> Result<RelevanceMap> {
    lrp_with(model, x, LRP_EPSILON, Some(record_id))
}

pub fn lrp_with(model: &MlpModel, x: &[f64], eps: f64, record_id: Option<u64>) -> Result<RelevanceMap> {
    let fwd = model.forward(x)?;
    if !fwd.output_pre.is_finite() || fwd.hidden_pre.iter().any(|z| !z.is_finite()) {
        return Err(Error::Propagation("non-finite activation in forward pass".into()));
    }
    let (n, h) = (model.n_inputs, model.hidden);
    let out = fwd.output_pre;

    // Output layer: R_k = a_k w_k / (o + eps sign(o)) * R_o with R_o = o.
    let scale_out = out / stabilize(out, eps);
    let hidden_rel: Vec<f64> = (0..h).map(|k| fwd.hidden_post[k] * model.w2[k] * scale_out).collect();
    let mut absorbed = out - scale_out * (out - model.b2);

    // Hidden layer: R_j = sum_k x_j W1_kj / (z_k + eps sign(z_k)) * R_k.
    let mut per_column = vec![0.0; n];
    for k in 0..h {
        let rk = hidden_rel[k];
        if rk == 0.0 {
            continue;
        }
        let zk = fwd.hidden_pre[k];
        let s = rk / stabilize(zk, eps);
        let row = &model.w1[k * n..(k + 1) * n];
        for j in 0..n {
            if x[j] != 0.0 {
                per_column[j] += x[j] * row[j] * s;
            }
        }
        absorbed += rk - s * (zk - model.b1[k]);
    }
    if per_column.iter().any(|r| !r.is_finite()) {
        return Err(Error::Propagation("non-finite relevance".into()));
    }

    let schema = &model.feature_schema;
    let column_names = schema.column_names();
    let groups = schema.column_groups();
    let levels = schema.decode_row(x).ok();
    let mut per_variable: Vec<VariableRelevance> = Vec::new();
    for (g, r) in groups.iter().zip(&per_column) {
        match per_variable.last_mut() {
            Some(last) if &last.variable == g => last.relevance += r,
            _ => per_variable.push(VariableRelevance {
                variable: g.clone(),
                level: None,
                relevance: *r,
            }),
        }
    }
    if let Some(levels) = levels {
        for (v, level) in levels {
            if let Some(entry) = per_variable.iter_mut().find(|e| e.variable == v.name()) {
                entry.level = Some(level);
            }
        }
    }
    Ok(RelevanceMap {
        record_id,
        probability: fwd.probability,
        output_relevance: out,
        column_names,
        per_column,
        per_variable,
        bias_absorbed: absorbed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapColumn {
    pub record_id: Option<u64>,
    pub probability: f64,
}

/// Patients as columns (highest probability first), variables as rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapTable {
    pub columns: Vec<HeatmapColumn>,
    pub variables: Vec<String>,
    /// `cells[v][c]`: relevance of variable `v` for patient column `c`.
    pub cells: Vec<Vec<f64>>,
}

impl HeatmapTable {
    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["variable".to_string()];
        header.extend(
            self.columns
                .iter()
                .map(|c| c.record_id.map_or_else(String::new, |id| id.to_string())),
        );
        w.write_record(&header)?;
        let mut probs = vec!["probability".to_string()];
        probs.extend(self.columns.iter().map(|c| c.probability.to_string()));
        w.write_record(&probs)?;
        for (v, row) in self.variables.iter().zip(&self.cells) {
            let mut rec = vec![v.clone()];
            rec.extend(row.iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

/// Lay out a cohort's relevance maps; variables that are zero for every
/// patient are left out.
pub fn relevance_heatmap(maps: &[RelevanceMap]) -> Result<HeatmapTable> {
    let first = maps
        .first()
        .ok_or_else(|| Error::Validation("no relevance maps".into()))?;
    let variables: Vec<&str> = first.per_variable.iter().map(|v| v.variable.as_str()).collect();
    for m in maps {
        if m.column_names != first.column_names {
            return Err(Error::Schema("relevance maps come from different feature schemas".into()));
        }
    }
    let mut order: Vec<usize> = (0..maps.len()).collect();
    order.sort_by(|&a, &b| {
        maps[b]
            .probability
            .total_cmp(&maps[a].probability)
            .then(maps[a].record_id.cmp(&maps[b].record_id))
    });
    let mut kept = Vec::new();
    let mut cells = Vec::new();
    for (v, name) in variables.iter().enumerate() {
        let row: Vec<f64> = order.iter().map(|&i| maps[i].per_variable[v].relevance).collect();
        if row.iter().any(|r| *r != 0.0) {
            kept.push(name.to_string());
            cells.push(row);
        }
    }
    Ok(HeatmapTable {
        columns: order
            .iter()
            .map(|&i| HeatmapColumn {
                record_id: maps[i].record_id,
                probability: maps[i].probability,
            })
            .collect(),
        variables: kept,
        cells,
    })
}

/// Explain every row of an encoded cohort.
pub fn explain_rows(model: &MlpModel, rows: &[(u64, &[f64])]) -> Result<Vec<RelevanceMap>> {
    model.check_width(rows.first().map_or(model.n_inputs, |r| r.1.len()))?;
    rows.iter().map(|(id, row)| lrp_record(model, row, *id)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::init_mlp;

    #[test]
    fn zero_input_has_zero_relevance() {
        let m = init_mlp(5, 4, 1).unwrap();
        let r = lrp(&m, &[0.0; 5]).unwrap();
        assert!(r.per_column.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_hidden_layer_by_hand() {
        let mut m = init_mlp(2, 2, 0).unwrap();
        m.w1 = vec![1.0, 0.0, 0.0, 1.0];
        m.w2 = vec![2.0, -1.0];
        let r = lrp(&m, &[1.0, 1.0]).unwrap();
        assert!((r.per_column[0] - 2.0).abs() < 1e-8);
        assert!((r.per_column[1] + 1.0).abs() < 1e-8);
        assert!((r.total() - r.output_relevance).abs() < 1e-8);
    }

    #[test]
    fn biases_are_accounted_for() {
        let mut m = init_mlp(3, 4, 2).unwrap();
        m.b1 = vec![0.3, -0.2, 0.5, 0.1];
        m.b2 = -0.4;
        let r = lrp(&m, &[1.0, 0.0, 1.0]).unwrap();
        assert!((r.total() + r.bias_absorbed - r.output_relevance).abs() < 1e-12);
    }

    fn map(id: u64, p: f64, rel: [f64; 2]) -> RelevanceMap {
        RelevanceMap {
            record_id: Some(id),
            probability: p,
            output_relevance: 0.0,
            column_names: vec!["a".into(), "b".into()],
            per_column: rel.to_vec(),
            per_variable: vec![
                VariableRelevance { variable: "a".into(), level: None, relevance: rel[0] },
                VariableRelevance { variable: "b".into(), level: None, relevance: rel[1] },
            ],
            bias_absorbed: 0.0,
        }
    }

    #[test]
    fn heatmap_layout() {
        let single = relevance_heatmap(&[map(1, 0.4, [0.1, 0.2])]).unwrap();
        assert_eq!(single.columns.len(), 1);
        assert_eq!(single.columns[0].probability, 0.4);
        let maps: Vec<RelevanceMap> = (0..10).map(|i| map(i, (i as f64 * 0.37) % 1.0, [0.5 - i as f64 * 0.1, 0.0])).collect();
        let t = relevance_heatmap(&maps).unwrap();
        assert!(t.columns.windows(2).all(|w| w[0].probability >= w[1].probability));
        assert_eq!(t.columns[0].probability, maps.iter().map(|m| m.probability).fold(0.0, f64::max));
        assert_eq!(t.variables, vec!["a".to_string()]);
        let csv = t.to_csv_string().unwrap();
        assert!(csv.lines().nth(1).unwrap().starts_with("probability,"));
    }
}
