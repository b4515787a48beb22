//! Synthetic appointment populations with a known true logit.
//!
//! Features are drawn independently from per-service level frequencies; the
//! outcome is Bernoulli with probability sigmoid(true logit). Effects are
//! keyed `variable=level` using the feature variable names (`gender=F`,
//! `day=SUN`, `age=20-29`, ...). Age and lead-time levels are the labels of
//! the generator's bands.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{
    AppointmentRecord, DayOfWeek, Gender, Outcome, RecordSet, Service, Variable, ZoneIncome,
    MAX_AGE_YEARS, MAX_LEAD_TIME_DAYS,
};
use crate::error::{Error, Result};
use crate::evaluation::auroc;
use crate::linear::sigmoid;
use crate::rng::substream;

const FREQ_TOLERANCE: f64 = 1e-9;
const SHARD_SIZE: usize = 4096;

/// Integer band `low..=high` drawn uniformly once chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub label: String,
    pub low: u32,
    pub high: u32,
    pub freq: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoneLevel {
    pub zone_id: String,
    pub income: ZoneIncome,
    pub freq: f64,
}

/// Level frequencies of every variable within one service.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Marginals {
    pub gender: BTreeMap<Gender, f64>,
    pub age_bands: Vec<Band>,
    pub lead_bands: Vec<Band>,
    pub zones: Vec<ZoneLevel>,
    pub facilities: BTreeMap<String, f64>,
    pub months: BTreeMap<u8, f64>,
    pub days: BTreeMap<DayOfWeek, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceSpec {
    pub service: Service,
    pub share: f64,
    pub marginals: Marginals,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionEffect {
    pub first: String,
    pub second: String,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub n: usize,
    pub seed: u64,
    pub services: Vec<ServiceSpec>,
    pub true_intercept: f64,
    #[serde(default)]
    pub true_coefficients: BTreeMap<String, f64>,
    #[serde(default)]
    pub interaction_effects: Vec<InteractionEffect>,
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn band(label: &str, low: u32, high: u32, freq: f64) -> Band {
    Band { label: label.to_string(), low, high, freq }
}

fn uniform_map<K: Ord + Clone>(keys: &[K]) -> BTreeMap<K, f64> {
    let f = 1.0 / keys.len() as f64;
    keys.iter().map(|k| (k.clone(), f)).collect()
}

pub const AGE_BANDS: [(&str, u32, u32); 7] = [
    ("0-9", 0, 9),
    ("10-19", 10, 19),
    ("20-29", 20, 29),
    ("30-39", 30, 39),
    ("40-49", 40, 49),
    ("50-59", 50, 59),
    ("60+", 60, 95),
];

pub const LEAD_BANDS: [(&str, u32, u32); 4] = [
    ("0-14", 0, 14),
    ("15-29", 15, 29),
    ("30-59", 30, 59),
    ("60+", 60, 180),
];

impl Marginals {
    /// Every level equally likely; ten zones alternating low/medium income
    /// and five facilities.
    pub fn uniform() -> Marginals {
        let bands = |spec: &[(&str, u32, u32)]| {
            let f = 1.0 / spec.len() as f64;
            spec.iter().map(|(l, lo, hi)| band(l, *lo, *hi, f)).collect()
        };
        let zones = (1..=10)
            .map(|i| ZoneLevel {
                zone_id: format!("Z{i:02}"),
                income: if i % 2 == 1 { ZoneIncome::Low } else { ZoneIncome::Medium },
                freq: 0.1,
            })
            .collect();
        let facilities: Vec<String> = (1..=5).map(|i| format!("F{i:02}")).collect();
        Marginals {
            gender: uniform_map(Gender::ALL),
            age_bands: bands(&AGE_BANDS),
            lead_bands: bands(&LEAD_BANDS),
            zones,
            facilities: uniform_map(&facilities),
            months: uniform_map(&(1..=12).collect::<Vec<u8>>()),
            days: uniform_map(DayOfWeek::ALL),
        }
    }

    fn validate(&self, service: Service) -> Result<()> {
        let ctx = |what: &str| format!("{service} {what}");
        check_freqs(&ctx("gender"), self.gender.values().copied())?;
        check_freqs(&ctx("months"), self.months.values().copied())?;
        check_freqs(&ctx("days"), self.days.values().copied())?;
        check_freqs(&ctx("facilities"), self.facilities.values().copied())?;
        check_freqs(&ctx("zones"), self.zones.iter().map(|z| z.freq))?;
        check_freqs(&ctx("age bands"), self.age_bands.iter().map(|b| b.freq))?;
        check_freqs(&ctx("lead bands"), self.lead_bands.iter().map(|b| b.freq))?;
        if let Some(m) = self.months.keys().find(|m| !(1..=12).contains(*m)) {
            return Err(Error::Spec(format!("{service}: month {m} outside 1-12")));
        }
        for (bands, max, what) in [
            (&self.age_bands, MAX_AGE_YEARS, "age"),
            (&self.lead_bands, MAX_LEAD_TIME_DAYS, "lead time"),
        ] {
            for b in bands {
                if b.low > b.high || b.high > max {
                    return Err(Error::Spec(format!(
                        "{service}: {what} band {} has range {}..={}",
                        b.label, b.low, b.high
                    )));
                }
            }
        }
        Ok(())
    }
}

fn check_freqs(what: &str, freqs: impl Iterator<Item = f64>) -> Result<()> {
    let mut total = 0.0;
    let mut count = 0;
    for f in freqs {
        if !f.is_finite() || f < 0.0 {
            return Err(Error::Spec(format!("{what}: invalid frequency {f}")));
        }
        total += f;
        count += 1;
    }
    if count == 0 {
        return Err(Error::Spec(format!("{what}: no levels")));
    }
    if (total - 1.0).abs() > FREQ_TOLERANCE {
        return Err(Error::Spec(format!("{what}: frequencies sum to {total}")));
    }
    Ok(())
}

fn known_variable(name: &str) -> bool {
    [
        Variable::Gender,
        Variable::Age,
        Variable::Zone,
        Variable::ZoneIncome,
        Variable::LeadTime,
        Variable::Month,
        Variable::Day,
        Variable::Facility,
        Variable::Service,
    ]
    .iter()
    .any(|v| v.name() == name)
}

impl GeneratorSpec {
    /// One Oral Health population with uniform levels, base rate 29% and no
    /// effects.
    pub fn uniform(n: usize, seed: u64) -> GeneratorSpec {
        GeneratorSpec {
            n,
            seed,
            services: vec![ServiceSpec {
                service: Service::OH,
                share: 1.0,
                marginals: Marginals::uniform(),
            }],
            true_intercept: logit(0.29),
            true_coefficients: BTreeMap::new(),
            interaction_effects: Vec::new(),
        }
    }

    pub fn from_json(text: &str) -> Result<GeneratorSpec> {
        let spec: GeneratorSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Level labels each variable can take anywhere in the spec.
    fn level_domain(&self) -> HashMap<&'static str, BTreeSet<String>> {
        let mut d: HashMap<&'static str, BTreeSet<String>> = HashMap::new();
        for s in &self.services {
            let m = &s.marginals;
            d.entry("service").or_default().insert(s.service.code().into());
            d.entry("gender").or_default().extend(m.gender.keys().map(|g| g.code().to_string()));
            d.entry("age").or_default().extend(m.age_bands.iter().map(|b| b.label.clone()));
            d.entry("lead_time").or_default().extend(m.lead_bands.iter().map(|b| b.label.clone()));
            d.entry("zone").or_default().extend(m.zones.iter().map(|z| z.zone_id.clone()));
            d.entry("zone_income").or_default().extend(m.zones.iter().map(|z| z.income.code().to_string()));
            d.entry("facility").or_default().extend(m.facilities.keys().cloned());
            d.entry("month").or_default().extend(m.months.keys().map(u8::to_string));
            d.entry("day").or_default().extend(m.days.keys().map(|d| d.code().to_string()));
        }
        d
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Spec("n must be positive".into()));
        }
        if self.services.is_empty() {
            return Err(Error::Spec("no services".into()));
        }
        let mut seen = BTreeSet::new();
        for s in &self.services {
            if !seen.insert(s.service) {
                return Err(Error::Spec(format!("service {} listed twice", s.service)));
            }
            s.marginals.validate(s.service)?;
        }
        check_freqs("service mix", self.services.iter().map(|s| s.share))?;
        if !self.true_intercept.is_finite() {
            return Err(Error::Spec("intercept is not finite".into()));
        }
        let domain = self.level_domain();
        let check_key = |key: &str, beta: f64| -> Result<()> {
            if !beta.is_finite() {
                return Err(Error::Spec(format!("effect {key} is not finite")));
            }
            let (var, level) = key
                .split_once('=')
                .ok_or_else(|| Error::Spec(format!("effect key {key:?} is not variable=level")))?;
            if !known_variable(var) {
                return Err(Error::Spec(format!("unknown variable in effect key {key:?}")));
            }
            if !domain.get(var).is_some_and(|d| d.contains(level)) {
                return Err(Error::Spec(format!("level {level:?} of {var} never generated")));
            }
            Ok(())
        };
        for (k, b) in &self.true_coefficients {
            check_key(k, *b)?;
        }
        for e in &self.interaction_effects {
            check_key(&e.first, e.beta)?;
            check_key(&e.second, e.beta)?;
        }
        Ok(())
    }
}

struct Sampler<T> {
    values: Vec<T>,
    index: WeightedIndex<f64>,
}

impl<T: Clone> Sampler<T> {
    fn new(pairs: impl Iterator<Item = (T, f64)>) -> Result<Self> {
        let (values, weights): (Vec<T>, Vec<f64>) = pairs.unzip();
        let index = WeightedIndex::new(weights).map_err(|e| Error::Spec(e.to_string()))?;
        Ok(Sampler { values, index })
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> &T {
        &self.values[self.index.sample(rng)]
    }
}

struct ServiceSampler {
    service: Service,
    gender: Sampler<Gender>,
    age: Sampler<Band>,
    lead: Sampler<Band>,
    zone: Sampler<ZoneLevel>,
    facility: Sampler<String>,
    month: Sampler<u8>,
    day: Sampler<DayOfWeek>,
    age_bands: Vec<Band>,
    lead_bands: Vec<Band>,
}

/// A validated spec with lookup tables for sampling and the true logit.
struct Compiled {
    services: Vec<ServiceSampler>,
    mix: WeightedIndex<f64>,
    intercept: f64,
    effects: HashMap<String, f64>,
    interactions: Vec<(String, String, f64)>,
}

fn band_of<'a>(bands: &'a [Band], value: u32) -> Option<&'a Band> {
    bands.iter().find(|b| b.low <= value && value <= b.high)
}

impl Compiled {
    fn new(spec: &GeneratorSpec) -> Result<Compiled> {
        spec.validate()?;
        let services = spec
            .services
            .iter()
            .map(|s| {
                let m = &s.marginals;
                Ok(ServiceSampler {
                    service: s.service,
                    gender: Sampler::new(m.gender.iter().map(|(k, f)| (*k, *f)))?,
                    age: Sampler::new(m.age_bands.iter().map(|b| (b.clone(), b.freq)))?,
                    lead: Sampler::new(m.lead_bands.iter().map(|b| (b.clone(), b.freq)))?,
                    zone: Sampler::new(m.zones.iter().map(|z| (z.clone(), z.freq)))?,
                    facility: Sampler::new(m.facilities.iter().map(|(k, f)| (k.clone(), *f)))?,
                    month: Sampler::new(m.months.iter().map(|(k, f)| (*k, *f)))?,
                    day: Sampler::new(m.days.iter().map(|(k, f)| (*k, *f)))?,
                    age_bands: m.age_bands.clone(),
                    lead_bands: m.lead_bands.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mix = WeightedIndex::new(spec.services.iter().map(|s| s.share))
            .map_err(|e| Error::Spec(e.to_string()))?;
        Ok(Compiled {
            services,
            mix,
            intercept: spec.true_intercept,
            effects: spec.true_coefficients.iter().map(|(k, v)| (k.clone(), *v)).collect(),
            interactions: spec
                .interaction_effects
                .iter()
                .map(|e| (e.first.clone(), e.second.clone(), e.beta))
                .collect(),
        })
    }

    fn active_keys(&self, r: &AppointmentRecord) -> Result<Vec<String>> {
        let s = self
            .services
            .iter()
            .find(|s| s.service == r.service)
            .ok_or_else(|| Error::Spec(format!("service {} not in spec", r.service)))?;
        let age = band_of(&s.age_bands, r.age_years)
            .ok_or_else(|| Error::Spec(format!("age {} outside every band", r.age_years)))?;
        let lead = band_of(&s.lead_bands, r.lead_time_days)
            .ok_or_else(|| Error::Spec(format!("lead time {} outside every band", r.lead_time_days)))?;
        Ok(vec![
            format!("gender={}", r.gender.code()),
            format!("age={}", age.label),
            format!("zone={}", r.zone_id),
            format!("zone_income={}", r.zone_income.code()),
            format!("lead_time={}", lead.label),
            format!("month={}", r.month),
            format!("day={}", r.day_of_week.code()),
            format!("facility={}", r.facility_id),
            format!("service={}", r.service.code()),
        ])
    }

    fn logit_of(&self, keys: &[String]) -> f64 {
        let mut eta = self.intercept;
        for k in keys {
            if let Some(b) = self.effects.get(k) {
                eta += b;
            }
        }
        for (a, b, beta) in &self.interactions {
            if keys.contains(a) && keys.contains(b) {
                eta += beta;
            }
        }
        eta
    }

    fn draw<R: Rng>(&self, record_id: u64, rng: &mut R) -> AppointmentRecord {
        let s = &self.services[self.mix.sample(rng)];
        let gender = *s.gender.draw(rng);
        let age = s.age.draw(rng);
        let age_years = rng.random_range(age.low..=age.high);
        let zone = s.zone.draw(rng).clone();
        let lead = s.lead.draw(rng);
        let lead_time_days = rng.random_range(lead.low..=lead.high);
        let month = *s.month.draw(rng);
        let day_of_week = *s.day.draw(rng);
        let facility_id = s.facility.draw(rng).clone();
        let keys = [
            format!("gender={}", gender.code()),
            format!("age={}", age.label),
            format!("zone={}", zone.zone_id),
            format!("zone_income={}", zone.income.code()),
            format!("lead_time={}", lead.label),
            format!("month={month}"),
            format!("day={}", day_of_week.code()),
            format!("facility={facility_id}"),
            format!("service={}", s.service.code()),
        ];
        let p = sigmoid(self.logit_of(&keys));
        let outcome = if rng.random::<f64>() < p { Outcome::NoShow } else { Outcome::Show };
        AppointmentRecord {
            record_id,
            gender,
            age_years,
            zone_id: zone.zone_id,
            zone_income: zone.income,
            service: s.service,
            facility_id,
            lead_time_days,
            month,
            day_of_week,
            outcome,
        }
    }
}

/// Draw `spec.n` records with ids `1..=n`. Shards of fixed size each own a
/// random substream, so the output depends only on the spec.
pub fn generate(spec: &GeneratorSpec) -> Result<RecordSet> {
    let compiled = Compiled::new(spec)?;
    let n_shards = spec.n.div_ceil(SHARD_SIZE);
    let shards: Vec<Vec<AppointmentRecord>> = (0..n_shards)
        .into_par_iter()
        .map(|shard| {
            let mut rng = substream(spec.seed, shard as u64);
            let start = shard * SHARD_SIZE;
            let end = (start + SHARD_SIZE).min(spec.n);
            (start..end).map(|i| compiled.draw(i as u64 + 1, &mut rng)).collect()
        })
        .collect();
    RecordSet::new(shards.into_iter().flatten().collect())
}

/// True logit of one record under `spec`.
pub fn true_logit(spec: &GeneratorSpec, record: &AppointmentRecord) -> Result<f64> {
    let compiled = Compiled::new(spec)?;
    Ok(compiled.logit_of(&compiled.active_keys(record)?))
}

/// True no-show probability of every record, in record order.
pub fn true_probabilities(spec: &GeneratorSpec, records: &RecordSet) -> Result<Vec<f64>> {
    let compiled = Compiled::new(spec)?;
    records
        .iter()
        .map(|r| Ok(sigmoid(compiled.logit_of(&compiled.active_keys(r)?))))
        .collect()
}

/// AUROC of the true probabilities on `records`: the best any scorer can
/// reach on this sample in expectation.
pub fn bayes_auroc(spec: &GeneratorSpec, records: &RecordSet) -> Result<f64> {
    let p = true_probabilities(spec, records)?;
    auroc(&p, &records.labels())
}

/// Per-service appointment counts of the two-year descriptive table:
/// `(level, show, no_show)` for gender, age band and lead-time band.
pub struct ServiceCounts {
    pub service: Service,
    pub gender: [(Gender, u32, u32); 2],
    pub age: [(usize, u32, u32); 7],
    pub lead: [(usize, u32, u32); 4],
}

impl ServiceCounts {
    /// Age-band counts rescaled so each outcome column sums to the gender
    /// totals. The published young-adult age columns fall 212 no-shows
    /// short of the gender and lead-time rows.
    pub fn reconciled_age(&self) -> [(usize, u32, u32); 7] {
        let show: u32 = self.gender.iter().map(|g| g.1).sum();
        let no_show: u32 = self.gender.iter().map(|g| g.2).sum();
        let s = largest_remainder(&self.age.map(|a| a.1), show);
        let ns = largest_remainder(&self.age.map(|a| a.2), no_show);
        std::array::from_fn(|i| (self.age[i].0, s[i], ns[i]))
    }
}

/// Scale `counts` to sum to `total`, rounding by largest remainder.
fn largest_remainder(counts: &[u32; 7], total: u32) -> [u32; 7] {
    let sum: u32 = counts.iter().sum();
    if sum == total || sum == 0 {
        return *counts;
    }
    let exact: Vec<f64> = counts.iter().map(|&c| f64::from(c) * f64::from(total) / f64::from(sum)).collect();
    let mut out: [u32; 7] = std::array::from_fn(|i| exact[i].floor() as u32);
    let mut order: Vec<usize> = (0..7).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    let short = total - out.iter().sum::<u32>();
    for &i in order.iter().take(short as usize) {
        out[i] += 1;
    }
    out
}

pub const REFERENCE_COUNTS: [ServiceCounts; 4] = [
    ServiceCounts {
        service: Service::OH,
        gender: [(Gender::Female, 8457, 3475), (Gender::Male, 7482, 3199)],
        age: [
            (0, 1659, 638),
            (1, 2860, 1186),
            (2, 1467, 789),
            (3, 2316, 1058),
            (4, 2964, 1209),
            (5, 2093, 791),
            (6, 2580, 1003),
        ],
        lead: [(0, 7689, 2259), (1, 2079, 1061), (2, 1503, 785), (3, 4668, 2569)],
    },
    ServiceCounts {
        service: Service::GD,
        gender: [(Gender::Female, 2629, 965), (Gender::Male, 2650, 999)],
        age: [(0, 5197, 1918), (1, 82, 46), (2, 0, 0), (3, 0, 0), (4, 0, 0), (5, 0, 0), (6, 0, 0)],
        lead: [(0, 3329, 929), (1, 754, 453), (2, 373, 166), (3, 823, 416)],
    },
    ServiceCounts {
        service: Service::YAP,
        gender: [(Gender::Female, 4078, 1946), (Gender::Male, 4035, 2065)],
        age: [(0, 0, 0), (1, 5856, 2530), (2, 2092, 1178), (3, 165, 91), (4, 0, 0), (5, 0, 0), (6, 0, 0)],
        lead: [(0, 4969, 2029), (1, 902, 562), (2, 488, 299), (3, 1754, 1121)],
    },
    ServiceCounts {
        service: Service::SP,
        gender: [(Gender::Female, 3294, 1067), (Gender::Male, 5365, 1605)],
        age: [(0, 0, 0), (1, 0, 0), (2, 0, 0), (3, 0, 0), (4, 1294, 425), (5, 3232, 1014), (6, 4133, 1233)],
        lead: [(0, 4070, 1068), (1, 1013, 434), (2, 901, 309), (3, 2675, 861)],
    },
];

/// Deterministic cohort whose gender, age-band and lead-band counts per
/// service and outcome match the reference counts exactly. Other fields
/// cycle through fixed levels.
pub fn reference_cohort() -> RecordSet {
    let mut records = Vec::new();
    let mut id = 1u64;
    for sc in &REFERENCE_COUNTS {
        for outcome in [Outcome::Show, Outcome::NoShow] {
            let pick = |show: u32, no_show: u32| if outcome == Outcome::Show { show } else { no_show };
            let genders: Vec<Gender> = sc
                .gender
                .iter()
                .flat_map(|&(g, s, ns)| std::iter::repeat_n(g, pick(s, ns) as usize))
                .collect();
            let ages: Vec<u32> = sc
                .reconciled_age()
                .iter()
                .flat_map(|&(b, s, ns)| {
                    let (_, lo, hi) = AGE_BANDS[b];
                    (0..pick(s, ns)).map(move |i| lo + i % (hi - lo + 1))
                })
                .collect();
            let leads: Vec<u32> = sc
                .lead
                .iter()
                .flat_map(|&(b, s, ns)| {
                    let (_, lo, hi) = LEAD_BANDS[b];
                    (0..pick(s, ns)).map(move |i| lo + i % (hi - lo + 1))
                })
                .collect();
            assert_eq!(genders.len(), ages.len());
            assert_eq!(genders.len(), leads.len());
            for (i, ((gender, age_years), lead_time_days)) in genders.into_iter().zip(ages).zip(leads).enumerate() {
                let zone = i % 10 + 1;
                records.push(AppointmentRecord {
                    record_id: id,
                    gender,
                    age_years,
                    zone_id: format!("Z{zone:02}"),
                    zone_income: if zone % 2 == 1 { ZoneIncome::Low } else { ZoneIncome::Medium },
                    service: sc.service,
                    facility_id: format!("F{:02}", i % 5 + 1),
                    lead_time_days,
                    month: (i % 12) as u8 + 1,
                    day_of_week: DayOfWeek::ALL[i % 7],
                    outcome,
                });
                id += 1;
            }
        }
    }
    RecordSet::new(records).expect("reference cohort is valid")
}

/// Generator whose per-service gender, age and lead-time frequencies and
/// no-show rates follow the reference counts. Effects are fitted by
/// iterative proportional fitting on the logit scale so that the expected
/// marginal rates match.
pub fn reference_spec(n: usize, seed: u64) -> GeneratorSpec {
    let total: u32 = REFERENCE_COUNTS.iter().flat_map(|s| s.gender).map(|(_, a, b)| a + b).sum();
    let mut services = Vec::new();
    let mut coefficients = BTreeMap::new();
    let mut interactions = Vec::new();
    for sc in &REFERENCE_COUNTS {
        let n_s: u32 = sc.gender.iter().map(|(_, a, b)| a + b).sum();
        let gender: Vec<(String, f64, f64)> = sc
            .gender
            .iter()
            .map(|&(g, s, ns)| (g.code().to_string(), f64::from(s + ns) / f64::from(n_s), f64::from(ns) / f64::from(s + ns)))
            .collect();
        let bands = |counts: &[(usize, u32, u32)], defs: &[(&str, u32, u32)]| -> Vec<(String, u32, u32, f64, f64)> {
            counts
                .iter()
                .filter(|(_, s, ns)| s + ns > 0)
                .map(|&(b, s, ns)| {
                    let (label, lo, hi) = defs[b];
                    (label.to_string(), lo, hi, f64::from(s + ns) / f64::from(n_s), f64::from(ns) / f64::from(s + ns))
                })
                .collect()
        };
        let ages = bands(&sc.reconciled_age(), &AGE_BANDS);
        let leads = bands(&sc.lead, &LEAD_BANDS);

        let fitted = fit_margins(
            &[
                gender.iter().map(|g| (g.1, g.2)).collect(),
                ages.iter().map(|a| (a.3, a.4)).collect(),
                leads.iter().map(|l| (l.3, l.4)).collect(),
            ],
        );
        let service_key = format!("service={}", sc.service.code());
        coefficients.insert(service_key.clone(), fitted.0);
        let names = [
            gender.iter().map(|g| format!("gender={}", g.0)).collect::<Vec<_>>(),
            ages.iter().map(|a| format!("age={}", a.0)).collect(),
            leads.iter().map(|l| format!("lead_time={}", l.0)).collect(),
        ];
        for (var_names, betas) in names.iter().zip(&fitted.1) {
            for (key, beta) in var_names.iter().zip(betas) {
                interactions.push(InteractionEffect {
                    first: service_key.clone(),
                    second: key.clone(),
                    beta: *beta,
                });
            }
        }

        let mut marginals = Marginals::uniform();
        marginals.gender = sc
            .gender
            .iter()
            .zip(&gender)
            .map(|(&(g, _, _), (_, f, _))| (g, *f))
            .collect();
        marginals.age_bands = ages.iter().map(|a| band(&a.0, a.1, a.2, a.3)).collect();
        marginals.lead_bands = leads.iter().map(|l| band(&l.0, l.1, l.2, l.3)).collect();
        services.push(ServiceSpec {
            service: sc.service,
            share: f64::from(n_s) / f64::from(total),
            marginals,
        });
    }
    GeneratorSpec {
        n,
        seed,
        services,
        true_intercept: 0.0,
        true_coefficients: coefficients,
        interaction_effects: interactions,
    }
}

/// Main-effect logits (offset, per-variable effects) whose expected rates
/// match `margins[v][level] = (frequency, target rate)` under independent
/// variables.
fn fit_margins(margins: &[Vec<(f64, f64)>]) -> (f64, Vec<Vec<f64>>) {
    let mut betas: Vec<Vec<f64>> = margins.iter().map(|m| vec![0.0; m.len()]).collect();
    let cells = cartesian(&margins.iter().map(Vec::len).collect::<Vec<_>>());
    let weight = |cell: &[usize]| -> f64 { cell.iter().enumerate().map(|(v, &l)| margins[v][l].0).product() };
    let eta = |betas: &[Vec<f64>], cell: &[usize]| -> f64 { cell.iter().enumerate().map(|(v, &l)| betas[v][l]).sum() };
    for _ in 0..500 {
        let mut moved = 0.0f64;
        for v in 0..margins.len() {
            for l in 0..margins[v].len() {
                let (mut mass, mut rate) = (0.0, 0.0);
                for cell in cells.iter().filter(|c| c[v] == l) {
                    let w = weight(cell);
                    mass += w;
                    rate += w * sigmoid(eta(&betas, cell));
                }
                let step = logit(margins[v][l].1) - logit(rate / mass);
                betas[v][l] += step;
                moved = moved.max(step.abs());
            }
        }
        if moved < 1e-12 {
            break;
        }
    }
    // Center each variable's effects so the offset carries the level.
    let mut offset = 0.0;
    for b in &mut betas {
        let mean = b.iter().sum::<f64>() / b.len() as f64;
        b.iter_mut().for_each(|x| *x -= mean);
        offset += mean;
    }
    (offset, betas)
}

fn cartesian(sizes: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for &k in sizes {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (0..k).map(move |i| {
                    let mut c = prefix.clone();
                    c.push(i);
                    c
                })
            })
            .collect();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_records() {
        let spec = GeneratorSpec::uniform(10_000, 5);
        assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
        let other = GeneratorSpec::uniform(10_000, 6);
        assert_ne!(generate(&spec).unwrap(), generate(&other).unwrap());
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut spec = GeneratorSpec::uniform(100, 1);
        spec.services[0].marginals.gender.insert(Gender::Female, 0.7);
        assert!(matches!(generate(&spec), Err(Error::Spec(_))));

        let mut spec = GeneratorSpec::uniform(100, 1);
        spec.true_coefficients.insert("day=XYZ".into(), 1.0);
        assert!(matches!(spec.validate(), Err(Error::Spec(_))));

        let mut spec = GeneratorSpec::uniform(100, 1);
        spec.true_coefficients.insert("gender=F".into(), f64::NAN);
        assert!(spec.validate().is_err());
    }

    #[test]
    fn no_effects_gives_half() {
        let spec = GeneratorSpec::uniform(2000, 3);
        let r = generate(&spec).unwrap();
        assert_eq!(bayes_auroc(&spec, &r).unwrap(), 0.5);
    }

    #[test]
    fn reference_cohort_matches_counts() {
        let c = reference_cohort();
        assert_eq!(c.len(), 53_311);
        let no_show = c.labels().iter().filter(|&&l| l == 1).count();
        assert_eq!(no_show, 15_321);
    }

    #[test]
    fn reference_spec_calibration() {
        let spec = reference_spec(1000, 0);
        spec.validate().unwrap();
        let shares: f64 = spec.services.iter().map(|s| s.share).sum();
        assert!((shares - 1.0).abs() < 1e-12);
        // Expected Oral Health female rate under independence.
        let c = Compiled::new(&spec).unwrap();
        let oh = &spec.services[0].marginals;
        let mut rate = 0.0;
        for a in &oh.age_bands {
            for l in &oh.lead_bands {
                let keys = vec![
                    "gender=F".to_string(),
                    format!("age={}", a.label),
                    format!("lead_time={}", l.label),
                    "service=OH".to_string(),
                ];
                rate += a.freq * l.freq * sigmoid(c.logit_of(&keys));
            }
        }
        assert!((rate - 3475.0 / 11932.0).abs() < 1e-9, "{rate}");
    }

    #[test]
    fn json_round_trip() {
        let spec = reference_spec(500, 9);
        let back = GeneratorSpec::from_json(&spec.to_json().unwrap()).unwrap();
        assert_eq!(generate(&spec).unwrap(), generate(&back).unwrap());
    }
}
