//! Cut-off tuning into intervention groups and coverage/risk metrics.
//!
//! Patients are ranked by score; group A takes the lowest-risk share, group
//! C the highest. Coverage is the share of all no-shows that land in C and
//! risk the share that land in A.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const FRACTION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Group {
    A,
    B,
    C,
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Group::A => "A",
            Group::B => "B",
            Group::C => "C",
        })
    }
}

impl std::str::FromStr for Group {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "A" | "a" => Ok(Group::A),
            "B" | "b" => Ok(Group::B),
            "C" | "c" => Ok(Group::C),
            other => Err(Error::Validation(format!("unknown group {other:?}"))),
        }
    }
}

/// Target population shares of groups A, B and C.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 3]", into = "[f64; 3]")]
pub struct GroupFractions {
    a: f64,
    b: f64,
    c: f64,
}

impl Default for GroupFractions {
    fn default() -> Self {
        GroupFractions { a: 0.3, b: 0.4, c: 0.3 }
    }
}

impl GroupFractions {
    pub fn new(a: f64, b: f64, c: f64) -> Result<Self> {
        for f in [a, b, c] {
            if !f.is_finite() || f < 0.0 {
                return Err(Error::Policy(format!("fraction {f} must be finite and non-negative")));
            }
        }
        let sum = a + b + c;
        if (sum - 1.0).abs() > FRACTION_TOLERANCE {
            return Err(Error::Policy(format!("fractions sum to {sum}, expected 1")));
        }
        Ok(GroupFractions { a, b, c })
    }

    /// Parse `"a,b,c"`.
    pub fn parse(text: &str) -> Result<Self> {
        let parts = text
            .split(',')
            .map(|p| {
                p.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Policy(format!("bad fraction {p:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        match parts.as_slice() {
            &[a, b, c] => Self::new(a, b, c),
            _ => Err(Error::Policy(format!("expected three fractions, got {}", parts.len()))),
        }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.a, self.b, self.c]
    }

    /// Exact group sizes for `n` patients: `|A| = ceil(f_A n)` and
    /// `|A| + |B| = ceil((f_A + f_B) n)`.
    pub fn group_sizes(&self, n: usize) -> [usize; 3] {
        let nf = n as f64;
        // The slack absorbs products like 0.7 * 10 = 7.000000000000001.
        let ceil = |x: f64| ((x - 1e-9).ceil().max(0.0) as usize).min(n);
        let n_a = ceil(self.a * nf);
        let n_ab = ceil((self.a + self.b) * nf).max(n_a);
        [n_a, n_ab - n_a, n - n_ab]
    }
}

impl TryFrom<[f64; 3]> for GroupFractions {
    type Error = Error;

    fn try_from(v: [f64; 3]) -> Result<Self> {
        GroupFractions::new(v[0], v[1], v[2])
    }
}

impl From<GroupFractions> for [f64; 3] {
    fn from(f: GroupFractions) -> Self {
        f.as_array()
    }
}

/// A boundary on the (score, record_id) order. Ties in score are split by
/// record id so group sizes come out exact.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub score: f64,
    pub record_id: u64,
}

impl Threshold {
    fn at_or_below(&self, score: f64, record_id: u64) -> bool {
        match score.total_cmp(&self.score) {
            std::cmp::Ordering::Less => false,
            std::cmp::Ordering::Greater => true,
            std::cmp::Ordering::Equal => record_id >= self.record_id,
        }
    }
}

/// Two thresholds realizing the group fractions on a scored cohort:
/// keys below `t1` go to A, keys in `[t1, t2)` to B, keys at or above `t2`
/// to C. A missing threshold lies above every score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutoffPolicy {
    pub fractions: GroupFractions,
    pub t1: Option<Threshold>,
    pub t2: Option<Threshold>,
    pub group_sizes: [usize; 3],
}

impl CutoffPolicy {
    /// Group of a scored patient.
    pub fn group_of(&self, score: f64, record_id: u64) -> Group {
        if self.t2.is_some_and(|t| t.at_or_below(score, record_id)) {
            Group::C
        } else if self.t1.is_some_and(|t| t.at_or_below(score, record_id)) {
            Group::B
        } else {
            Group::A
        }
    }

    /// Group of a new patient by score alone; boundary scores go up.
    pub fn group_of_score(&self, score: f64) -> Group {
        if self.t2.is_some_and(|t| score >= t.score) {
            Group::C
        } else if self.t1.is_some_and(|t| score >= t.score) {
            Group::B
        } else {
            Group::A
        }
    }
}

fn sorted_keys(scores: &[(u64, f64)]) -> Result<Vec<(f64, u64)>> {
    if let Some((id, s)) = scores.iter().find(|(_, s)| s.is_nan()) {
        return Err(Error::Policy(format!("record {id} has score {s}")));
    }
    let mut keys: Vec<(f64, u64)> = scores.iter().map(|&(id, s)| (s, id)).collect();
    keys.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Ok(keys)
}

/// Choose thresholds so the groups hold exactly the ceiling-rule sizes.
pub fn tune_cutoffs(scores: &[(u64, f64)], fractions: GroupFractions) -> Result<CutoffPolicy> {
    if scores.is_empty() {
        return Err(Error::Policy("no scores to tune on".into()));
    }
    let keys = sorted_keys(scores)?;
    let sizes = fractions.group_sizes(keys.len());
    let at = |i: usize| {
        keys.get(i).map(|&(score, record_id)| Threshold { score, record_id })
    };
    Ok(CutoffPolicy {
        fractions,
        t1: at(sizes[0]),
        t2: at(sizes[0] + sizes[1]),
        group_sizes: sizes,
    })
}

/// Tune on plain scores, using positions as record ids.
pub fn tune_cutoffs_positional(scores: &[f64], fractions: GroupFractions) -> Result<CutoffPolicy> {
    let keyed: Vec<(u64, f64)> = scores.iter().enumerate().map(|(i, &s)| (i as u64, s)).collect();
    tune_cutoffs(&keyed, fractions)
}

pub fn assign_groups(scores: &[(u64, f64)], policy: &CutoffPolicy) -> BTreeMap<u64, Group> {
    scores
        .iter()
        .map(|&(id, s)| (id, policy.group_of(s, id)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterventionMetrics {
    /// No-shows in C over all no-shows.
    pub coverage: f64,
    /// No-shows in A over all no-shows.
    pub risk: f64,
    pub group_sizes: [usize; 3],
    pub no_show_counts: [usize; 3],
    pub total_no_shows: usize,
}

pub fn coverage_risk(groups: &BTreeMap<u64, Group>, labels: &BTreeMap<u64, u8>) -> Result<InterventionMetrics> {
    let mut sizes = [0usize; 3];
    let mut no_shows = [0usize; 3];
    for (id, &g) in groups {
        let y = *labels
            .get(id)
            .ok_or_else(|| Error::Metric(format!("record {id} has no label")))?;
        sizes[g as usize] += 1;
        if y == 1 {
            no_shows[g as usize] += 1;
        }
    }
    let total: usize = no_shows.iter().sum();
    if total == 0 {
        return Err(Error::Metric("no no-shows among grouped records".into()));
    }
    Ok(InterventionMetrics {
        coverage: no_shows[2] as f64 / total as f64,
        risk: no_shows[0] as f64 / total as f64,
        group_sizes: sizes,
        no_show_counts: no_shows,
        total_no_shows: total,
    })
}

/// Tune, assign and measure in one pass over a labelled scored cohort.
pub fn evaluate_policy(
    scored: &[(u64, f64, u8)],
    fractions: GroupFractions,
) -> Result<(CutoffPolicy, InterventionMetrics)> {
    let scores: Vec<(u64, f64)> = scored.iter().map(|&(id, s, _)| (id, s)).collect();
    let labels: BTreeMap<u64, u8> = scored.iter().map(|&(id, _, y)| (id, y)).collect();
    let policy = tune_cutoffs(&scores, fractions)?;
    let groups = assign_groups(&scores, &policy);
    let metrics = coverage_risk(&groups, &labels)?;
    Ok((policy, metrics))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;

    fn keyed(scores: &[f64]) -> Vec<(u64, f64)> {
        scores.iter().enumerate().map(|(i, &s)| (i as u64, s)).collect()
    }

    fn sizes_of(groups: &BTreeMap<u64, Group>) -> [usize; 3] {
        let mut s = [0; 3];
        for g in groups.values() {
            s[*g as usize] += 1;
        }
        s
    }

    #[test]
    fn ten_distinct_scores_split_three_four_three() {
        let scores = keyed(&[0.5, 0.1, 0.9, 0.3, 0.7, 0.2, 0.8, 0.4, 0.6, 0.0]);
        let policy = tune_cutoffs(&scores, GroupFractions::default()).unwrap();
        let groups = assign_groups(&scores, &policy);
        assert_eq!(sizes_of(&groups), [3, 4, 3]);
        assert!(policy.t1.unwrap().score <= policy.t2.unwrap().score);
    }

    #[test]
    fn ceiling_rule_on_published_cohort_size() {
        let f = GroupFractions::default();
        assert_eq!(f.group_sizes(53_311), [15_994, 21_324, 15_993]);
        // ceil(0.3 * 53311) = 15994 and ceil(0.7 * 53311) = 37318
        assert_eq!((0.3f64 * 53_311.0).ceil() as usize, 15_994);
        assert_eq!((0.7f64 * 53_311.0).ceil() as usize, 37_318);
    }

    #[test]
    fn all_equal_scores_still_exact() {
        let scores = keyed(&[0.42; 10]);
        let policy = tune_cutoffs(&scores, GroupFractions::default()).unwrap();
        assert_eq!(sizes_of(&assign_groups(&scores, &policy)), [3, 4, 3]);
    }

    #[test]
    fn boundary_conventions() {
        let scores = keyed(&[0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0]);
        let policy = tune_cutoffs(&scores, GroupFractions::default()).unwrap();
        let t1 = policy.t1.unwrap();
        let t2 = policy.t2.unwrap();
        assert_eq!(policy.group_of(0.05, 99), Group::A);
        assert_eq!(policy.group_of(t2.score, t2.record_id), Group::C);
        assert_eq!(policy.group_of_score(t2.score), Group::C);
        assert_eq!(policy.group_of_score(t1.score), Group::B);
    }

    #[test]
    fn assignment_ignores_input_order() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let scores: Vec<(u64, f64)> = (0..200).map(|i| (i, (i % 17) as f64 / 17.0)).collect();
        let policy = tune_cutoffs(&scores, GroupFractions::default()).unwrap();
        let mut shuffled = scores.clone();
        shuffled.shuffle(&mut rng);
        let policy2 = tune_cutoffs(&shuffled, GroupFractions::default()).unwrap();
        assert_eq!(policy, policy2);
        assert_eq!(assign_groups(&scores, &policy), assign_groups(&shuffled, &policy));
    }

    #[test]
    fn fraction_sum_violation() {
        assert!(matches!(GroupFractions::new(0.3, 0.3, 0.3), Err(Error::Policy(_))));
        assert!(GroupFractions::parse("0.3,0.4,0.3").is_ok());
        assert!(GroupFractions::parse("0.3,0.4").is_err());
    }

    #[test]
    fn perfect_scores_cover_everything() {
        // prevalence 25%: every no-show ranks inside the top 30%.
        let scored: Vec<(u64, f64, u8)> = (0..100).map(|i| {
            let y = u8::from(i % 4 == 0);
            (i, f64::from(y), y)
        }).collect();
        let (_, m) = evaluate_policy(&scored, GroupFractions::default()).unwrap();
        assert_eq!(m.coverage, 1.0);
        assert_eq!(m.risk, 0.0);
    }

    #[test]
    fn everyone_in_b_gives_zero_metrics() {
        let scored: Vec<(u64, f64, u8)> = (0..20).map(|i| (i, i as f64, (i % 2) as u8)).collect();
        let (policy, m) = evaluate_policy(&scored, GroupFractions::new(0.0, 1.0, 0.0).unwrap()).unwrap();
        assert_eq!(policy.group_sizes, [0, 20, 0]);
        assert_eq!((m.coverage, m.risk), (0.0, 0.0));
    }

    #[test]
    fn zero_no_shows_is_an_error() {
        let scored: Vec<(u64, f64, u8)> = (0..5).map(|i| (i, i as f64, 0)).collect();
        assert!(matches!(evaluate_policy(&scored, GroupFractions::default()), Err(Error::Metric(_))));
    }

    proptest! {
        #[test]
        fn realized_sizes_match_ceiling_rule(
            scores in prop::collection::vec(0u8..6, 1..300),
            a in 0.0f64..1.0, b_share in 0.0f64..1.0,
        ) {
            let b = (1.0 - a) * b_share;
            let f = GroupFractions::new(a, b, 1.0 - a - b).unwrap();
            let keyed: Vec<(u64, f64)> = scores.iter().enumerate().map(|(i, &s)| (i as u64 * 7 % 1000, f64::from(s))).collect();
            let mut ids: Vec<u64> = keyed.iter().map(|k| k.0).collect();
            ids.sort(); ids.dedup();
            prop_assume!(ids.len() == keyed.len());
            let policy = tune_cutoffs(&keyed, f).unwrap();
            let groups = assign_groups(&keyed, &policy);
            prop_assert_eq!(sizes_of(&groups), f.group_sizes(keyed.len()));
            // monotone: higher score never lands in a lower group
            for &(i, si) in &keyed {
                for &(j, sj) in &keyed {
                    if si > sj {
                        prop_assert!(groups[&i] >= groups[&j]);
                    }
                }
            }
        }

        #[test]
        fn shares_partition_no_shows(
            data in prop::collection::vec((0.0f64..1.0, 0u8..2), 5..200),
        ) {
            prop_assume!(data.iter().any(|d| d.1 == 1));
            let scored: Vec<(u64, f64, u8)> = data.iter().enumerate().map(|(i, &(s, y))| (i as u64, s, y)).collect();
            let (_, m) = evaluate_policy(&scored, GroupFractions::default()).unwrap();
            prop_assert_eq!(m.no_show_counts.iter().sum::<usize>(), m.total_no_shows);
            let b = m.no_show_counts[1] as f64 / m.total_no_shows as f64;
            prop_assert!((m.coverage + m.risk + b - 1.0).abs() < 1e-15);
        }

        #[test]
        fn coverage_monotone_in_group_c_share(
            data in prop::collection::vec((0.0f64..1.0, 0u8..2), 5..200),
            c1 in 0.0f64..1.0, c2 in 0.0f64..1.0,
        ) {
            prop_assume!(data.iter().any(|d| d.1 == 1));
            let scored: Vec<(u64, f64, u8)> = data.iter().enumerate().map(|(i, &(s, y))| (i as u64, s, y)).collect();
            let (lo, hi) = if c1 <= c2 { (c1, c2) } else { (c2, c1) };
            let a = 0.2 * (1.0 - hi);
            let f_lo = GroupFractions::new(a, 1.0 - a - lo, lo).unwrap();
            let f_hi = GroupFractions::new(a, 1.0 - a - hi, hi).unwrap();
            let (_, m_lo) = evaluate_policy(&scored, f_lo).unwrap();
            let (_, m_hi) = evaluate_policy(&scored, f_hi).unwrap();
            prop_assert!(m_hi.coverage >= m_lo.coverage);
        }
    }
}
