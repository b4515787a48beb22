//! Zone income classification from socioeconomic strata shares.

use std::collections::BTreeMap;
use std::io::Read;

use super::record::ZoneIncome;
use crate::error::{Error, Result};

const SUM_TOLERANCE: f64 = 1e-9;

/// A zone is low-income when the two lowest strata hold at least half of
/// its population.
pub fn classify_zone_income(strata_shares: &[f64]) -> Result<ZoneIncome> {
    if strata_shares.len() < 2 {
        return Err(Error::Validation(format!(
            "need at least two strata shares, got {}",
            strata_shares.len()
        )));
    }
    if let Some(bad) = strata_shares.iter().find(|s| !s.is_finite() || **s < 0.0) {
        return Err(Error::Validation(format!("invalid stratum share {bad}")));
    }
    let total: f64 = strata_shares.iter().sum();
    if (total - 1.0).abs() > SUM_TOLERANCE {
        return Err(Error::Validation(format!(
            "strata shares sum to {total}, expected 1"
        )));
    }
    let lowest_two = strata_shares[0] + strata_shares[1];
    // Shares like 0.3 + 0.2 land a hair under 0.5 in binary floating point.
    if lowest_two >= 0.5 - SUM_TOLERANCE {
        Ok(ZoneIncome::Low)
    } else {
        Ok(ZoneIncome::Medium)
    }
}

/// Strata shares per zone, read from `zone_id,stratum1_share,...,stratum6_share`.
#[derive(Debug, Clone, Default)]
pub struct ZoneStrata {
    zones: BTreeMap<String, Vec<f64>>,
}

impl ZoneStrata {
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers()?.clone();
        let expected: Vec<String> = std::iter::once("zone_id".to_string())
            .chain((1..=6).map(|i| format!("stratum{i}_share")))
            .collect();
        if headers.iter().map(str::trim).ne(expected.iter().map(String::as_str)) {
            return Err(Error::Schema(format!(
                "zone strata header must be {}",
                expected.join(",")
            )));
        }
        let mut zones = BTreeMap::new();
        for row in rdr.records() {
            let row = row?;
            let id = row.get(0).unwrap_or("").trim().to_string();
            let shares = (1..=6)
                .map(|i| {
                    let s = row.get(i).unwrap_or("").trim();
                    s.parse::<f64>()
                        .map_err(|_| Error::Validation(format!("zone {id}: bad share {s:?}")))
                })
                .collect::<Result<Vec<f64>>>()?;
            classify_zone_income(&shares)?;
            zones.insert(id, shares);
        }
        Ok(ZoneStrata { zones })
    }

    pub fn shares(&self, zone_id: &str) -> Option<&[f64]> {
        self.zones.get(zone_id).map(Vec::as_slice)
    }
}
