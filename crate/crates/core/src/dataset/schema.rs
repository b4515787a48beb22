//! Feature schema and one-hot design matrices.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::binning::BinSpec;
use super::record::{AppointmentRecord, DayOfWeek, Gender, RecordSet, Service, ZoneIncome};
use crate::error::{Error, Result};

pub const FEATURE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variable {
    Gender,
    Age,
    Zone,
    ZoneIncome,
    LeadTime,
    Month,
    Day,
    Facility,
    Service,
}

impl Variable {
    pub fn name(self) -> &'static str {
        match self {
            Variable::Gender => "gender",
            Variable::Age => "age",
            Variable::Zone => "zone",
            Variable::ZoneIncome => "zone_income",
            Variable::LeadTime => "lead_time",
            Variable::Month => "month",
            Variable::Day => "day",
            Variable::Facility => "facility",
            Variable::Service => "service",
        }
    }

    pub fn is_binned(self) -> bool {
        matches!(self, Variable::Age | Variable::LeadTime)
    }

    /// Fixed level domain for enumerated variables; `None` for binned and
    /// free-text (zone, facility) variables.
    fn fixed_levels(self) -> Option<Vec<String>> {
        fn codes<T: Copy>(all: &[T], code: fn(T) -> &'static str) -> Vec<String> {
            all.iter().map(|&v| code(v).to_string()).collect()
        }
        match self {
            Variable::Gender => Some(codes(Gender::ALL, Gender::code)),
            Variable::ZoneIncome => Some(codes(ZoneIncome::ALL, ZoneIncome::code)),
            Variable::Day => Some(codes(DayOfWeek::ALL, DayOfWeek::code)),
            Variable::Service => Some(codes(Service::ALL, Service::code)),
            Variable::Month => Some((1..=12).map(|m| m.to_string()).collect()),
            _ => None,
        }
    }

    fn level_of(self, record: &AppointmentRecord, bins: &[BinSpec]) -> Result<String> {
        Ok(match self {
            Variable::Gender => record.gender.code().to_string(),
            Variable::Zone => record.zone_id.clone(),
            Variable::ZoneIncome => record.zone_income.code().to_string(),
            Variable::Month => record.month.to_string(),
            Variable::Day => record.day_of_week.code().to_string(),
            Variable::Facility => record.facility_id.clone(),
            Variable::Service => record.service.code().to_string(),
            Variable::Age => find_bins(bins, self)?
                .label_of(i64::from(record.age_years))
                .to_string(),
            Variable::LeadTime => find_bins(bins, self)?
                .label_of(i64::from(record.lead_time_days))
                .to_string(),
        })
    }
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn find_bins(bins: &[BinSpec], variable: Variable) -> Result<&BinSpec> {
    bins.iter()
        .find(|b| b.variable == variable)
        .ok_or_else(|| Error::Parameter(format!("no bins supplied for {variable}")))
}

/// Model inputs used unless a caller narrows them.
pub const DEFAULT_VARIABLES: [Variable; 7] = [
    Variable::Gender,
    Variable::Age,
    Variable::ZoneIncome,
    Variable::LeadTime,
    Variable::Month,
    Variable::Day,
    Variable::Facility,
];

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum ColumnSource {
    Main { variable: Variable },
    Interaction { first: Variable, second: Variable },
    /// Plain numeric input without a categorical origin.
    Raw { name: String },
}

impl ColumnSource {
    /// Name of the group a column rolls up into.
    pub fn group_name(&self) -> String {
        match self {
            ColumnSource::Main { variable } => variable.name().to_string(),
            ColumnSource::Interaction { first, second } => format!("{first}:{second}"),
            ColumnSource::Raw { name } => name.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub source: ColumnSource,
    pub level: String,
    pub drop_reference: bool,
}

impl ColumnSpec {
    pub fn name(&self) -> String {
        match &self.source {
            ColumnSource::Main { variable } => format!("{variable}={}", self.level),
            ColumnSource::Interaction { first, second } => {
                let (a, b) = self.level.split_once(':').unwrap_or((&self.level, ""));
                format!("{first}={a}:{second}={b}")
            }
            ColumnSource::Raw { name } => name.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodeOptions {
    pub variables: Vec<Variable>,
    pub drop_reference: bool,
    pub interactions: Vec<(Variable, Variable)>,
}

impl Default for EncodeOptions {
    fn default() -> Self {
        EncodeOptions {
            variables: DEFAULT_VARIABLES.to_vec(),
            drop_reference: false,
            interactions: Vec::new(),
        }
    }
}

/// Ordered feature columns. Dropped reference levels stay listed with
/// `drop_reference = true` but take no column in the design matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub schema_version: u32,
    pub variables: Vec<Variable>,
    pub bins: Vec<BinSpec>,
    pub columns: Vec<ColumnSpec>,
    pub width: usize,
    pub interaction_terms: Vec<(Variable, Variable)>,
}

struct VariableLevels {
    levels: Vec<String>,
    reference: Option<usize>,
}

impl FeatureSchema {
    /// Derive levels from (training) records. Enumerated variables always
    /// get their full domain; zone and facility get the observed levels.
    pub fn fit(records: &RecordSet, bins: &[BinSpec], options: &EncodeOptions) -> Result<Self> {
        let mut variables = Vec::new();
        for &v in &options.variables {
            if variables.contains(&v) {
                return Err(Error::Parameter(format!("variable {v} listed twice")));
            }
            variables.push(v);
        }
        for &(a, b) in &options.interactions {
            if a == b {
                return Err(Error::Parameter(format!("interaction of {a} with itself")));
            }
        }
        let mut needed: Vec<Variable> = variables.clone();
        for &(a, b) in &options.interactions {
            for v in [a, b] {
                if !needed.contains(&v) {
                    needed.push(v);
                }
            }
        }
        let mut used_bins = Vec::new();
        for &v in &needed {
            if v.is_binned() {
                used_bins.push(find_bins(bins, v)?.clone());
            }
        }

        let mut level_info: HashMap<Variable, VariableLevels> = HashMap::new();
        for &v in &needed {
            let levels = match v.fixed_levels() {
                Some(levels) => levels,
                None if v.is_binned() => find_bins(bins, v)?.labels.clone(),
                None => {
                    let mut seen = BTreeSet::new();
                    for r in records.iter() {
                        seen.insert(v.level_of(r, bins)?);
                    }
                    seen.into_iter().collect()
                }
            };
            let reference = if options.drop_reference {
                let mut counts = vec![0usize; levels.len()];
                let index: HashMap<&str, usize> =
                    levels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
                for r in records.iter() {
                    if let Some(&i) = index.get(v.level_of(r, bins)?.as_str()) {
                        counts[i] += 1;
                    }
                }
                // Most frequent level; ties go to the lexicographically smallest name.
                (0..levels.len()).max_by(|&a, &b| {
                    counts[a]
                        .cmp(&counts[b])
                        .then_with(|| levels[b].cmp(&levels[a]))
                })
            } else {
                None
            };
            level_info.insert(v, VariableLevels { levels, reference });
        }

        let mut columns = Vec::new();
        for &v in &variables {
            let info = &level_info[&v];
            for (i, level) in info.levels.iter().enumerate() {
                columns.push(ColumnSpec {
                    source: ColumnSource::Main { variable: v },
                    level: level.clone(),
                    drop_reference: info.reference == Some(i),
                });
            }
        }
        for &(a, b) in &options.interactions {
            let (ia, ib) = (&level_info[&a], &level_info[&b]);
            for (i, la) in ia.levels.iter().enumerate() {
                if ia.reference == Some(i) {
                    continue;
                }
                for (j, lb) in ib.levels.iter().enumerate() {
                    if ib.reference == Some(j) {
                        continue;
                    }
                    columns.push(ColumnSpec {
                        source: ColumnSource::Interaction { first: a, second: b },
                        level: format!("{la}:{lb}"),
                        drop_reference: false,
                    });
                }
            }
        }
        let width = columns.iter().filter(|c| !c.drop_reference).count();
        let schema = FeatureSchema {
            schema_version: FEATURE_SCHEMA_VERSION,
            variables,
            bins: used_bins,
            columns,
            width,
            interaction_terms: options.interactions.clone(),
        };
        let names: BTreeSet<String> = schema.columns.iter().map(ColumnSpec::name).collect();
        debug_assert_eq!(names.len(), schema.columns.len());
        Ok(schema)
    }

    /// Schema for plain numeric inputs named `x0..x{width-1}`.
    pub fn raw(width: usize) -> Self {
        FeatureSchema {
            schema_version: FEATURE_SCHEMA_VERSION,
            variables: Vec::new(),
            bins: Vec::new(),
            columns: (0..width)
                .map(|i| ColumnSpec {
                    source: ColumnSource::Raw { name: format!("x{i}") },
                    level: String::new(),
                    drop_reference: false,
                })
                .collect(),
            width,
            interaction_terms: Vec::new(),
        }
    }

    pub fn active_columns(&self) -> impl Iterator<Item = &ColumnSpec> {
        self.columns.iter().filter(|c| !c.drop_reference)
    }

    pub fn column_names(&self) -> Vec<String> {
        self.active_columns().map(ColumnSpec::name).collect()
    }

    /// Rollup group of every active column, in column order.
    pub fn column_groups(&self) -> Vec<String> {
        self.active_columns().map(|c| c.source.group_name()).collect()
    }

    /// Levels of a main variable in schema order, with the reference index.
    pub fn levels(&self, variable: Variable) -> Option<(Vec<&str>, Option<usize>)> {
        let cols: Vec<&ColumnSpec> = self
            .columns
            .iter()
            .filter(|c| c.source == ColumnSource::Main { variable })
            .collect();
        if cols.is_empty() {
            return None;
        }
        let reference = cols.iter().position(|c| c.drop_reference);
        Some((cols.iter().map(|c| c.level.as_str()).collect(), reference))
    }

    fn lookup(&self) -> HashMap<(ColumnSource, &str), usize> {
        let mut map = HashMap::new();
        for (i, c) in self.active_columns().enumerate() {
            map.insert((c.source.clone(), c.level.as_str()), i);
        }
        map
    }

    fn check_level(&self, variable: Variable, level: &str) -> Result<()> {
        let known = self
            .columns
            .iter()
            .any(|c| c.level == level && c.source == ColumnSource::Main { variable })
            || (!self.variables.contains(&variable)
                && self.interaction_terms.iter().any(|&(a, b)| a == variable || b == variable));
        if known {
            Ok(())
        } else {
            Err(Error::Encoding {
                variable: variable.to_string(),
                level: level.to_string(),
            })
        }
    }

    pub fn encode_record(&self, record: &AppointmentRecord) -> Result<Vec<f64>> {
        let lookup = self.lookup();
        let mut row = vec![0.0; self.width];
        self.fill_row(record, &lookup, &mut row)?;
        Ok(row)
    }

    fn fill_row(
        &self,
        record: &AppointmentRecord,
        lookup: &HashMap<(ColumnSource, &str), usize>,
        row: &mut [f64],
    ) -> Result<()> {
        for &v in &self.variables {
            let level = v.level_of(record, &self.bins)?;
            self.check_level(v, &level)?;
            if let Some(&i) = lookup.get(&(ColumnSource::Main { variable: v }, level.as_str())) {
                row[i] = 1.0;
            }
        }
        for &(a, b) in &self.interaction_terms {
            let la = a.level_of(record, &self.bins)?;
            let lb = b.level_of(record, &self.bins)?;
            let key = format!("{la}:{lb}");
            let source = ColumnSource::Interaction { first: a, second: b };
            if let Some(&i) = lookup.get(&(source, key.as_str())) {
                row[i] = 1.0;
            }
        }
        Ok(())
    }

    pub fn encode(&self, records: &RecordSet) -> Result<DesignMatrix> {
        let lookup = self.lookup();
        let mut data = vec![0.0; records.len() * self.width];
        for (r, chunk) in records.iter().zip(data.chunks_mut(self.width.max(1))) {
            if self.width > 0 {
                self.fill_row(r, &lookup, chunk)?;
            }
        }
        DesignMatrix::from_flat(
            data,
            self.width,
            records.labels(),
            records.iter().map(|r| r.record_id).collect(),
            Arc::new(self.clone()),
        )
    }

    /// Recover the level of every main variable from an encoded row. A
    /// variable with no active column set decodes to its reference level.
    pub fn decode_row(&self, row: &[f64]) -> Result<Vec<(Variable, String)>> {
        if row.len() != self.width {
            return Err(Error::Dimension {
                expected: self.width,
                actual: row.len(),
            });
        }
        let mut out = Vec::with_capacity(self.variables.len());
        for &v in &self.variables {
            let source = ColumnSource::Main { variable: v };
            let mut found = None;
            let mut reference = None;
            let mut active = 0usize;
            for c in &self.columns {
                if c.source == source {
                    if c.drop_reference {
                        reference = Some(c.level.clone());
                    } else if row[active] != 0.0 {
                        found = Some(c.level.clone());
                    }
                }
                if !c.drop_reference {
                    active += 1;
                }
            }
            let level = found.or(reference).ok_or_else(|| {
                Error::Validation(format!("row has no active level for {v}"))
            })?;
            out.push((v, level));
        }
        Ok(out)
    }

    /// For each main variable, the index of the row's level within the
    /// variable's full level list.
    pub fn level_indices(&self, row: &[f64]) -> Result<Vec<usize>> {
        let decoded = self.decode_row(row)?;
        decoded
            .iter()
            .map(|(v, level)| {
                let (levels, _) = self.levels(*v).expect("decoded variable is in schema");
                Ok(levels.iter().position(|l| l == level).expect("decoded level is known"))
            })
            .collect()
    }
}

/// Fit a schema on `records` and encode them with the default variables.
pub fn encode(
    records: &RecordSet,
    bins: &[BinSpec],
    drop_reference: bool,
    interactions: &[(Variable, Variable)],
) -> Result<DesignMatrix> {
    let options = EncodeOptions {
        drop_reference,
        interactions: interactions.to_vec(),
        ..EncodeOptions::default()
    };
    encode_with(records, bins, &options)
}

pub fn encode_with(records: &RecordSet, bins: &[BinSpec], options: &EncodeOptions) -> Result<DesignMatrix> {
    FeatureSchema::fit(records, bins, options)?.encode(records)
}

/// Dense row-major `n x width` matrix with labels (1 = no-show).
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    data: Vec<f64>,
    width: usize,
    labels: Vec<u8>,
    row_ids: Vec<u64>,
    schema: Arc<FeatureSchema>,
}

impl DesignMatrix {
    pub fn from_flat(
        data: Vec<f64>,
        width: usize,
        labels: Vec<u8>,
        row_ids: Vec<u64>,
        schema: Arc<FeatureSchema>,
    ) -> Result<Self> {
        if data.len() != labels.len() * width {
            return Err(Error::Dimension {
                expected: labels.len() * width,
                actual: data.len(),
            });
        }
        if row_ids.len() != labels.len() {
            return Err(Error::Validation(format!(
                "{} row ids for {} labels",
                row_ids.len(),
                labels.len()
            )));
        }
        if schema.width != width {
            return Err(Error::Dimension {
                expected: schema.width,
                actual: width,
            });
        }
        if let Some(bad) = labels.iter().find(|&&y| y > 1) {
            return Err(Error::Validation(format!("label {bad} is not 0/1")));
        }
        Ok(DesignMatrix {
            data,
            width,
            labels,
            row_ids,
            schema,
        })
    }

    /// Matrix of plain numeric rows with a raw schema and ids `0..n`.
    pub fn from_rows(rows: &[Vec<f64>], labels: Vec<u8>) -> Result<Self> {
        let width = rows.first().map_or(0, Vec::len);
        if let Some(r) = rows.iter().find(|r| r.len() != width) {
            return Err(Error::Dimension {
                expected: width,
                actual: r.len(),
            });
        }
        let ids = (0..rows.len() as u64).collect();
        Self::from_flat(rows.concat(), width, labels, ids, Arc::new(FeatureSchema::raw(width)))
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.width..(i + 1) * self.width]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.n_rows()).map(move |i| self.row(i))
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn row_ids(&self) -> &[u64] {
        &self.row_ids
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn shared_schema(&self) -> Arc<FeatureSchema> {
        Arc::clone(&self.schema)
    }

    pub fn subset(&self, positions: &[usize]) -> DesignMatrix {
        let mut data = Vec::with_capacity(positions.len() * self.width);
        for &i in positions {
            data.extend_from_slice(self.row(i));
        }
        DesignMatrix {
            data,
            width: self.width,
            labels: positions.iter().map(|&i| self.labels[i]).collect(),
            row_ids: positions.iter().map(|&i| self.row_ids[i]).collect(),
            schema: Arc::clone(&self.schema),
        }
    }
}
