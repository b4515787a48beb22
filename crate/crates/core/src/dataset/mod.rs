//! Appointment records, coarse classing, encoding, descriptive statistics,
//! and train/test splitting.

mod binning;
mod patterns;
mod record;
mod schema;
mod split;
mod stats;
mod zone;

pub use binning::{
    coarse_class, fit_bins, BinSpec, BIN_SCHEMA_VERSION, DEFAULT_MAX_BINS, DEFAULT_MIN_LEAF_FRACTION,
};
pub use patterns::WeightedPatterns;
pub use record::{
    ingest_csv, ingest_csv_with_strata, ingest_reader, AppointmentRecord, DayOfWeek, Gender, Ingested, Outcome,
    RecordSet, RowReject, Service, ZoneIncome, CSV_COLUMNS, MAX_AGE_YEARS, MAX_LEAD_TIME_DAYS,
};
pub use schema::{
    encode, encode_with, ColumnSource, ColumnSpec, DesignMatrix, EncodeOptions, FeatureSchema, Variable,
    DEFAULT_VARIABLES, FEATURE_SCHEMA_VERSION,
};
pub use split::{class_weights, split, ClassWeights};
pub use stats::{cramers_v, cramers_v_table, marginal_rates, RateRow};
pub use zone::{classify_zone_income, ZoneStrata};
