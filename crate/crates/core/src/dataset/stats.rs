//! Descriptive statistics: marginal no-show rates and Cramer's V.

use std::collections::BTreeMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use super::binning::BinSpec;
use super::record::{Outcome, RecordSet, Service};
use super::schema::Variable;
use crate::error::{Error, Result};

/// Cramer's V between two categorical sequences.
pub fn cramers_v<A, B>(feature_levels: &[A], outcomes: &[B]) -> Result<f64>
where
    A: Ord + Hash,
    B: Ord + Hash,
{
    if feature_levels.len() != outcomes.len() {
        return Err(Error::Parameter(format!(
            "length mismatch: {} vs {}",
            feature_levels.len(),
            outcomes.len()
        )));
    }
    if feature_levels.len() < 2 {
        return Err(Error::Parameter("need at least two observations".into()));
    }
    let mut rows: BTreeMap<&A, usize> = BTreeMap::new();
    let mut cols: BTreeMap<&B, usize> = BTreeMap::new();
    for a in feature_levels {
        let next = rows.len();
        rows.entry(a).or_insert(next);
    }
    for b in outcomes {
        let next = cols.len();
        cols.entry(b).or_insert(next);
    }
    let mut table = vec![vec![0u64; cols.len()]; rows.len()];
    for (a, b) in feature_levels.iter().zip(outcomes) {
        table[rows[a]][cols[b]] += 1;
    }
    Ok(cramers_v_table(&table))
}

/// Cramer's V from a contingency table. Tables with a single row or
/// column (after removing empty ones) give 0.
pub fn cramers_v_table(table: &[Vec<u64>]) -> f64 {
    let row_tot: Vec<f64> = table.iter().map(|r| r.iter().sum::<u64>() as f64).collect();
    let n_cols = table.first().map_or(0, Vec::len);
    let col_tot: Vec<f64> = (0..n_cols)
        .map(|j| table.iter().map(|r| r[j]).sum::<u64>() as f64)
        .collect();
    let n: f64 = row_tot.iter().sum();
    let r = row_tot.iter().filter(|&&t| t > 0.0).count();
    let c = col_tot.iter().filter(|&&t| t > 0.0).count();
    if r < 2 || c < 2 || n == 0.0 {
        return 0.0;
    }
    let mut chi2 = 0.0;
    for (i, row) in table.iter().enumerate() {
        for (j, &obs) in row.iter().enumerate() {
            let expected = row_tot[i] * col_tot[j] / n;
            if expected > 0.0 {
                let d = obs as f64 - expected;
                chi2 += d * d / expected;
            }
        }
    }
    let k = (r.min(c) - 1) as f64;
    (chi2 / (n * k)).sqrt().min(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    /// `None` for the all-services total.
    pub service: Option<Service>,
    pub level: String,
    pub n_show: usize,
    pub n_no_show: usize,
    pub rate: f64,
}

/// No-show counts and rates per level of `group_by`, for each service and
/// overall. Age and lead time are grouped by `bins`, defaulting to the
/// reporting bands.
pub fn marginal_rates(records: &RecordSet, group_by: Variable, bins: Option<&BinSpec>) -> Result<Vec<RateRow>> {
    if records.is_empty() {
        return Err(Error::Validation("no records".into()));
    }
    let default_bins = match group_by {
        Variable::Age => Some(BinSpec::reporting_age_bands()),
        Variable::LeadTime => Some(BinSpec::reporting_lead_time_bands()),
        _ => None,
    };
    let bins = bins.or(default_bins.as_ref());
    let level = |r: &super::record::AppointmentRecord| -> (usize, String) {
        match group_by {
            Variable::Gender => (r.gender as usize, r.gender.code().into()),
            Variable::ZoneIncome => (r.zone_income as usize, r.zone_income.code().into()),
            Variable::Day => (r.day_of_week as usize, r.day_of_week.code().into()),
            Variable::Month => (r.month as usize, r.month.to_string()),
            Variable::Service => (r.service as usize, r.service.code().into()),
            Variable::Zone => (0, r.zone_id.clone()),
            Variable::Facility => (0, r.facility_id.clone()),
            Variable::Age | Variable::LeadTime => {
                let b = bins.expect("binned variable has bins");
                let v = if group_by == Variable::Age {
                    i64::from(r.age_years)
                } else {
                    i64::from(r.lead_time_days)
                };
                let i = b.bin_index(v);
                (i, b.labels[i].clone())
            }
        }
    };

    let mut counts: BTreeMap<(Option<Service>, (usize, String)), (usize, usize)> = BTreeMap::new();
    for r in records.iter() {
        let key = level(r);
        for service in [Some(r.service), None] {
            let e = counts.entry((service, key.clone())).or_default();
            match r.outcome {
                Outcome::Show => e.0 += 1,
                Outcome::NoShow => e.1 += 1,
            }
        }
    }
    let mut rows: Vec<RateRow> = counts
        .into_iter()
        .map(|((service, (_, level)), (n_show, n_no_show))| RateRow {
            service,
            level,
            n_show,
            n_no_show,
            rate: n_no_show as f64 / (n_show + n_no_show) as f64,
        })
        .collect();
    // Services first in enum order, totals last.
    rows.sort_by_key(|r| r.service.map_or(usize::MAX, |s| s as usize));
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::record::{AppointmentRecord, DayOfWeek, Gender, ZoneIncome};

    #[test]
    fn independence_gives_zero() {
        assert_eq!(cramers_v_table(&[vec![5, 5], vec![5, 5]]), 0.0);
    }

    #[test]
    fn perfect_association_gives_one() {
        assert_eq!(cramers_v_table(&[vec![10, 0], vec![0, 10]]), 1.0);
    }

    #[test]
    fn thirty_ten_table() {
        // chi2 by hand: expected 20 per cell, (10^2/20) * 4 = 20, n = 80.
        let chi2: f64 = 4.0 * 10.0_f64.powi(2) / 20.0;
        let expected = (chi2 / 80.0).sqrt();
        assert!((expected - 0.5).abs() < 1e-15);
        assert!((cramers_v_table(&[vec![30, 10], vec![10, 30]]) - expected).abs() < 1e-12);
    }

    #[test]
    fn single_level_gives_zero() {
        assert_eq!(cramers_v(&["a", "a", "a"], &[0, 1, 0]).unwrap(), 0.0);
    }

    #[test]
    fn symmetric_and_relabel_invariant() {
        let a = ["x", "y", "y", "z", "x", "z", "z", "y"];
        let b = [1, 0, 0, 1, 1, 0, 1, 0];
        let v1 = cramers_v(&a, &b).unwrap();
        let v2 = cramers_v(&b, &a).unwrap();
        assert!((v1 - v2).abs() < 1e-12);
        let relabeled: Vec<&str> = a.iter().map(|s| match *s { "x" => "q", "y" => "a", _ => "m" }).collect();
        assert!((cramers_v(&relabeled, &b).unwrap() - v1).abs() < 1e-12);
    }

    fn rec(id: u64, gender: Gender, lead: u32, outcome: Outcome) -> AppointmentRecord {
        AppointmentRecord {
            record_id: id,
            gender,
            age_years: 30,
            zone_id: "Z".into(),
            zone_income: ZoneIncome::Low,
            service: Service::OH,
            facility_id: "F".into(),
            lead_time_days: lead,
            month: 1,
            day_of_week: DayOfWeek::Mon,
            outcome,
        }
    }

    #[test]
    fn all_show_rates_are_zero() {
        let set = RecordSet::new((0..10).map(|i| rec(i, Gender::Male, 3, Outcome::Show)).collect()).unwrap();
        let rows = marginal_rates(&set, Variable::Gender, None).unwrap();
        assert!(rows.iter().all(|r| r.rate == 0.0));
    }

    #[test]
    fn published_oral_health_women_rate() {
        // 8,457 show / 3,475 no-show rounds to 29%.
        let mut recs = Vec::new();
        let mut id = 0;
        for (n, outcome) in [(8457, Outcome::Show), (3475, Outcome::NoShow)] {
            for _ in 0..n {
                recs.push(rec(id, Gender::Female, 5, outcome));
                id += 1;
            }
        }
        let set = RecordSet::new(recs).unwrap();
        let rows = marginal_rates(&set, Variable::Gender, None).unwrap();
        let oh = rows.iter().find(|r| r.service == Some(Service::OH) && r.level == "F").unwrap();
        assert_eq!((oh.n_show, oh.n_no_show), (8457, 3475));
        assert_eq!((oh.rate * 100.0).round(), 29.0);
    }

    #[test]
    fn published_short_lead_time_rate() {
        // 20,057 show / 6,285 no-show in the 0-15 day band rounds to 24%.
        let mut recs = Vec::new();
        let mut id = 0;
        for (n, outcome) in [(20057, Outcome::Show), (6285, Outcome::NoShow)] {
            for i in 0..n {
                recs.push(rec(id, Gender::Female, (i % 15) as u32, outcome));
                id += 1;
            }
        }
        recs.push(rec(id, Gender::Male, 61, Outcome::NoShow));
        let set = RecordSet::new(recs).unwrap();
        let rows = marginal_rates(&set, Variable::LeadTime, None).unwrap();
        let total = rows.iter().find(|r| r.service.is_none() && r.level == "<15").unwrap();
        assert_eq!((total.rate * 100.0).round(), 24.0);
        assert!(rows.iter().any(|r| r.level == ">=60" && r.rate == 1.0));
    }
}
