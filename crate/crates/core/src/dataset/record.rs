//! Appointment records and CSV ingestion.

use std::collections::HashSet;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::zone::{classify_zone_income, ZoneStrata};
use crate::error::{Error, Result};

pub const MAX_AGE_YEARS: u32 = 120;
pub const MAX_LEAD_TIME_DAYS: u32 = 1000;

/// Column order of the appointment CSV.
pub const CSV_COLUMNS: [&str; 11] = [
    "record_id",
    "gender",
    "age_years",
    "zone_id",
    "zone_income",
    "service",
    "facility_id",
    "lead_time_days",
    "month",
    "day_of_week",
    "outcome",
];

macro_rules! csv_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $code:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $code)] $variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            /// Code used in CSV files and feature column names.
            pub fn code(self) -> &'static str {
                match self {
                    $($name::$variant => $code),+
                }
            }
        }

        impl FromStr for $name {
            type Err = String;

            fn from_str(s: &str) -> std::result::Result<Self, String> {
                match s.trim() {
                    $($code => Ok($name::$variant),)+
                    other => Err(format!(
                        "invalid {} {:?} (expected one of {})",
                        stringify!($name),
                        other,
                        [$($code),+].join(", ")
                    )),
                }
            }
        }
    };
}

csv_enum!(Gender { Female => "F", Male => "M" });
csv_enum!(ZoneIncome { Low => "low", Medium => "medium" });
csv_enum!(
    /// The four primary-care services studied.
    Service { OH => "OH", GD => "GD", YAP => "YAP", SP => "SP" }
);
csv_enum!(DayOfWeek {
    Sun => "SUN",
    Mon => "MON",
    Tue => "TUE",
    Wed => "WED",
    Thu => "THU",
    Fri => "FRI",
    Sat => "SAT",
});
csv_enum!(Outcome { Show => "show", NoShow => "no_show" });

impl fmt::Display for Service {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Report label; the CSV code for growth & development is "GD".
        let label = match self {
            Service::GD => "G&D",
            other => other.code(),
        };
        f.write_str(label)
    }
}

impl Outcome {
    /// 1 for no-show (the positive class), 0 for show.
    pub fn label(self) -> u8 {
        match self {
            Outcome::Show => 0,
            Outcome::NoShow => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AppointmentRecord {
    pub record_id: u64,
    pub gender: Gender,
    pub age_years: u32,
    pub zone_id: String,
    pub zone_income: ZoneIncome,
    pub service: Service,
    pub facility_id: String,
    pub lead_time_days: u32,
    pub month: u8,
    pub day_of_week: DayOfWeek,
    pub outcome: Outcome,
}

impl AppointmentRecord {
    pub fn validate(&self) -> Result<()> {
        if self.age_years > MAX_AGE_YEARS {
            return Err(Error::Validation(format!(
                "age_years {} exceeds {MAX_AGE_YEARS}",
                self.age_years
            )));
        }
        if self.lead_time_days > MAX_LEAD_TIME_DAYS {
            return Err(Error::Validation(format!(
                "lead_time_days {} exceeds {MAX_LEAD_TIME_DAYS}",
                self.lead_time_days
            )));
        }
        if !(1..=12).contains(&self.month) {
            return Err(Error::Validation(format!(
                "month {} outside 1-12",
                self.month
            )));
        }
        if self.zone_id.trim().is_empty() {
            return Err(Error::Validation("empty zone_id".into()));
        }
        if self.facility_id.trim().is_empty() {
            return Err(Error::Validation("empty facility_id".into()));
        }
        Ok(())
    }
}

/// Validated collection of appointments with unique record ids.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<AppointmentRecord>", into = "Vec<AppointmentRecord>")]
pub struct RecordSet {
    records: Vec<AppointmentRecord>,
}

impl TryFrom<Vec<AppointmentRecord>> for RecordSet {
    type Error = Error;

    fn try_from(records: Vec<AppointmentRecord>) -> Result<Self> {
        RecordSet::new(records)
    }
}

impl From<RecordSet> for Vec<AppointmentRecord> {
    fn from(set: RecordSet) -> Self {
        set.records
    }
}

impl RecordSet {
    pub fn new(records: Vec<AppointmentRecord>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(records.len());
        for r in &records {
            r.validate()?;
            if !seen.insert(r.record_id) {
                return Err(Error::Validation(format!(
                    "duplicate record_id {}",
                    r.record_id
                )));
            }
        }
        Ok(RecordSet { records })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[AppointmentRecord] {
        &self.records
    }

    pub fn iter(&self) -> std::slice::Iter<'_, AppointmentRecord> {
        self.records.iter()
    }

    pub fn labels(&self) -> Vec<u8> {
        self.records.iter().map(|r| r.outcome.label()).collect()
    }

    pub fn get(&self, record_id: u64) -> Option<&AppointmentRecord> {
        self.records.iter().find(|r| r.record_id == record_id)
    }

    /// Subset by positions; positions must be distinct.
    pub fn select(&self, positions: &[usize]) -> RecordSet {
        RecordSet {
            records: positions.iter().map(|&i| self.records[i].clone()).collect(),
        }
    }

    pub fn filter_service(&self, service: Service) -> RecordSet {
        RecordSet {
            records: self
                .records
                .iter()
                .filter(|r| r.service == service)
                .cloned()
                .collect(),
        }
    }

    pub fn no_show_rate(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        let positives = self.records.iter().filter(|r| r.outcome == Outcome::NoShow).count();
        positives as f64 / self.records.len() as f64
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(CSV_COLUMNS)?;
        for r in &self.records {
            w.write_record([
                r.record_id.to_string(),
                r.gender.code().to_string(),
                r.age_years.to_string(),
                r.zone_id.clone(),
                r.zone_income.code().to_string(),
                r.service.code().to_string(),
                r.facility_id.clone(),
                r.lead_time_days.to_string(),
                r.month.to_string(),
                r.day_of_week.code().to_string(),
                r.outcome.code().to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }
}

/// A row that failed validation during ingestion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowReject {
    /// 1-based line number in the file (the header is line 1).
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct Ingested {
    pub records: RecordSet,
    pub rejects: Vec<RowReject>,
}

pub fn ingest_csv(path: impl AsRef<Path>) -> Result<Ingested> {
    let file = std::fs::File::open(path)?;
    ingest_reader(file, None)
}

/// Ingest with a zone-strata table used to fill an empty `zone_income` field.
pub fn ingest_csv_with_strata(
    path: impl AsRef<Path>,
    strata_path: impl AsRef<Path>,
) -> Result<Ingested> {
    let strata = ZoneStrata::from_csv(std::fs::File::open(strata_path)?)?;
    ingest_reader(std::fs::File::open(path)?, Some(&strata))
}

pub fn ingest_reader<R: Read>(reader: R, strata: Option<&ZoneStrata>) -> Result<Ingested> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let found: Vec<&str> = headers.iter().map(str::trim).collect();
    if found != CSV_COLUMNS {
        let missing: Vec<&str> = CSV_COLUMNS
            .iter()
            .copied()
            .filter(|c| !found.contains(c))
            .collect();
        return Err(Error::Schema(if missing.is_empty() {
            format!(
                "header must be exactly {:?}, found {:?}",
                CSV_COLUMNS.join(","),
                found.join(",")
            )
        } else {
            format!("missing required column(s): {}", missing.join(", "))
        }));
    }

    let mut records = Vec::new();
    let mut rejects = Vec::new();
    let mut seen = HashSet::new();
    for row in rdr.records() {
        let row = match row {
            Ok(row) => row,
            Err(e) => {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                rejects.push(RowReject {
                    line,
                    reason: e.to_string(),
                });
                continue;
            }
        };
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        match parse_row(&row, strata) {
            Ok(rec) => {
                if !seen.insert(rec.record_id) {
                    rejects.push(RowReject {
                        line,
                        reason: format!("duplicate record_id {}", rec.record_id),
                    });
                } else {
                    records.push(rec);
                }
            }
            Err(reason) => rejects.push(RowReject { line, reason }),
        }
    }
    Ok(Ingested {
        records: RecordSet { records },
        rejects,
    })
}

fn parse_row(
    row: &csv::StringRecord,
    strata: Option<&ZoneStrata>,
) -> std::result::Result<AppointmentRecord, String> {
    if row.len() != CSV_COLUMNS.len() {
        return Err(format!(
            "expected {} fields, found {}",
            CSV_COLUMNS.len(),
            row.len()
        ));
    }
    let field = |i: usize| row.get(i).unwrap_or("").trim();
    fn int<T: FromStr>(name: &str, s: &str) -> std::result::Result<T, String> {
        if s.is_empty() {
            return Err(format!("missing value for {name}"));
        }
        s.parse::<T>()
            .map_err(|_| format!("invalid integer for {name}: {s:?}"))
    }
    fn non_empty(name: &str, s: &str) -> std::result::Result<String, String> {
        if s.is_empty() {
            Err(format!("missing value for {name}"))
        } else {
            Ok(s.to_string())
        }
    }

    let zone_id = non_empty("zone_id", field(3))?;
    let zone_income = match field(4) {
        "" => match strata.and_then(|s| s.shares(&zone_id)) {
            Some(shares) => classify_zone_income(shares).map_err(|e| e.to_string())?,
            None => return Err("missing value for zone_income".into()),
        },
        s => s.parse()?,
    };
    let record = AppointmentRecord {
        record_id: int("record_id", field(0))?,
        gender: field(1).parse()?,
        age_years: int("age_years", field(2))?,
        zone_id,
        zone_income,
        service: field(5).parse()?,
        facility_id: non_empty("facility_id", field(6))?,
        lead_time_days: int("lead_time_days", field(7))?,
        month: int("month", field(8))?,
        day_of_week: field(9).parse()?,
        outcome: field(10).parse()?,
    };
    record.validate().map_err(|e| e.to_string())?;
    Ok(record)
}
